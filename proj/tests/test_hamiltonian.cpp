#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>

#include "bbmix/hamiltonian.hpp"
#include "bbmix/spho.hpp"

using namespace bbmix;
using hamiltonian::SymmetricSparse;
using hamiltonian::Triplet;

namespace {

interaction::PairTensor zero_tensor(int n_modes) {
  return interaction::effective_pair_tensor(0.0, n_modes, 0);
}

Eigen::VectorXd lowest_eigs(const SymmetricSparse& h) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.to_dense());
  return es.eigenvalues();
}

}  // namespace

TEST_CASE("sparse container fundamentals") {
  // Entries given in both triangles with duplicates and one cancelling pair.
  std::vector<Triplet> ts{{0, 0, 2.0}, {1, 0, 0.5}, {0, 1, 0.25}, {2, 1, -1.0},
                          {3, 3, 4.0}, {2, 3, 1.5},  {3, 2, -1.5}, {1, 1, 1.0}};
  const auto m = SymmetricSparse::from_triplets(4, ts);
  CHECK(m.dim() == 4);
  const Eigen::MatrixXd d = m.to_dense();
  CHECK(d(0, 0) == 2.0);
  CHECK(d(0, 1) == 0.75);  // duplicate summed across triangles
  CHECK(d(1, 0) == 0.75);
  CHECK(d(2, 3) == 0.0);   // exact cancellation dropped
  CHECK(d(1, 2) == -1.0);
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd x(4);
  x << 1.0, -2.0, 0.5, 3.0;
  CHECK((m.apply(x) - d * x).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(m.quadratic_form(x.data()) ==
        doctest::Approx(x.dot(d * x)).epsilon(1e-14));

  Eigen::VectorXcd z(4);
  z << std::complex<double>(1.0, 0.5), std::complex<double>(0.0, -1.0),
      std::complex<double>(2.0, 0.0), std::complex<double>(-0.5, 0.25);
  CHECK(m.expectation(z) ==
        doctest::Approx((z.adjoint() * d * z)(0).real()).epsilon(1e-14));

  CHECK(m.max_abs() == 4.0);
  CHECK(m.norm_inf() == doctest::Approx(4.0));

  CHECK_THROWS_AS(SymmetricSparse::from_triplets(0, {}), std::invalid_argument);
  CHECK_THROWS_AS(SymmetricSparse::from_triplets(2, {{0, 5, 1.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(m.apply(Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("noninteracting Hamiltonian is the diagonal of state energies") {
  const auto basis = fock::enumerate_basis(2, 2, 8.0, fock::Parity::even);
  const auto z = zero_tensor(basis.meta().n_modes);
  const auto h = hamiltonian::assemble_hamiltonian(basis, z, z, z);
  CHECK(h.nnz() == basis.size());
  const Eigen::MatrixXd d = h.to_dense();
  for (std::int64_t s = 0; s < basis.size(); ++s)
    CHECK(d(s, s) == basis.energy(s));
  CHECK((d - Eigen::MatrixXd(d.diagonal().asDiagonal())).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("weak-coupling slope matches first-order perturbation theory") {
  // <00|delta(x1-x2)|00> = 1/sqrt(2 pi); independent of the transformation
  // and renormalization machinery.
  const double g = 1e-4, slope_exact = 1.0 / std::sqrt(2.0 * M_PI);
  const auto bare = interaction::bare_pair_tensor(g, 13);
  const auto zero = zero_tensor(13);

  const auto mixed = fock::enumerate_basis(1, 1, 13.0, fock::Parity::even,
                                           fock::Truncation::total);
  REQUIRE(mixed.meta().n_modes == 13);
  const auto h_ab = hamiltonian::assemble_hamiltonian(mixed, zero, zero, bare);
  const double e0_ab = lowest_eigs(h_ab)[0];
  CHECK(std::abs((e0_ab - 1.0) / g - slope_exact) <= 1e-5);

  // Two identical bosons: (1/2) W <a+a+aa> = W0000 gives the same slope.
  const auto same = fock::enumerate_basis(2, 0, 13.5, fock::Parity::even,
                                          fock::Truncation::total);
  REQUIRE(same.meta().n_modes == 13);
  const auto h_aa = hamiltonian::assemble_hamiltonian(same, bare, zero, zero);
  const double e0_aa = lowest_eigs(h_aa)[0];
  CHECK(std::abs((e0_aa - 1.0) / g - slope_exact) <= 1e-5);
}

TEST_CASE("distinguishable pair reproduces the exact ladder spectrum") {
  // With the renormalized tensor covering the full pair budget, the 1+1
  // problem separates exactly: interacting even relative levels plus free odd
  // ones, shifted by every center-of-mass mode.
  const double g = 5.0;
  const int cap = 14;
  const auto basis = fock::enumerate_basis(1, 1, cap + 1.0, fock::Parity::both,
                                           fock::Truncation::total);
  REQUIRE(basis.size() == (cap + 1) * (cap + 2) / 2);
  const auto w = interaction::effective_pair_tensor(g, basis.meta().n_modes, cap);
  const auto z = zero_tensor(basis.meta().n_modes);
  const auto h = hamiltonian::assemble_hamiltonian(basis, z, z, w);
  const Eigen::VectorXd eigs = lowest_eigs(h);

  std::vector<double> expected;
  for (int big_n = 0; big_n <= cap; ++big_n)
    for (int n_rel = 0; n_rel + big_n <= cap; ++n_rel) {
      if (n_rel % 2 == 0)
        expected.push_back(big_n + 0.5 +
                           interaction::relative_energy_exact(g, n_rel / 2));
      else
        expected.push_back(big_n + 0.5 + n_rel + 0.5);
    }
  std::sort(expected.begin(), expected.end());
  REQUIRE(std::int64_t(expected.size()) == basis.size());
  for (std::int64_t i = 0; i < basis.size(); ++i)
    CHECK(eigs[i] == doctest::Approx(expected[i]).epsilon(1e-10));
}

TEST_CASE("intra- and inter-component routes agree for two particles") {
  const double g = 5.0;
  const int cap = 12;
  const auto w = interaction::effective_pair_tensor(g, cap + 1, cap);
  const auto z = zero_tensor(cap + 1);

  const auto pair_ab = fock::enumerate_basis(1, 1, cap + 1.0, fock::Parity::even,
                                             fock::Truncation::total);
  const auto pair_aa = fock::enumerate_basis(2, 0, cap + 1.5, fock::Parity::even,
                                             fock::Truncation::total);
  REQUIRE(pair_ab.meta().n_modes == cap + 1);
  REQUIRE(pair_aa.meta().n_modes == cap + 1);

  const double e_ab =
      lowest_eigs(hamiltonian::assemble_hamiltonian(pair_ab, z, z, w))[0];
  const double e_aa =
      lowest_eigs(hamiltonian::assemble_hamiltonian(pair_aa, w, z, z))[0];
  const double exact = 0.5 + interaction::relative_energy_exact(g, 0);
  CHECK(e_ab == doctest::Approx(exact).epsilon(1e-12));
  CHECK(e_aa == doctest::Approx(exact).epsilon(1e-12));
}

TEST_CASE("parity superselection on a mixed-parity basis") {
  const auto basis = fock::enumerate_basis(2, 2, 8.0, fock::Parity::both);
  const int n = basis.meta().n_modes;
  const auto w = interaction::effective_pair_tensor(3.0, n, 7);
  const auto h = hamiltonian::assemble_hamiltonian(basis, w, w, w);
  for (std::int64_t c = 0; c < basis.size(); ++c)
    for (std::int64_t p = h.col_start()[c]; p < h.col_start()[c + 1]; ++p)
      CHECK(fock::state_parity(basis.state(h.rows()[p])) ==
            fock::state_parity(basis.state(c)));
}

TEST_CASE("component exchange symmetry at equal intra couplings") {
  const auto basis = fock::enumerate_basis(2, 2, 8.0, fock::Parity::even);
  const int n = basis.meta().n_modes;
  const auto w_same = interaction::effective_pair_tensor(3.0, n, 7);
  const auto w_ab = interaction::effective_pair_tensor(1.7, n, 7);
  const auto h = hamiltonian::assemble_hamiltonian(basis, w_same, w_same, w_ab);

  std::vector<std::int64_t> swap_idx(basis.size());
  for (std::int64_t s = 0; s < basis.size(); ++s) {
    const auto& st = basis.state(s);
    const auto t = basis.find(st.b, st.a);
    REQUIRE(t.has_value());
    swap_idx[s] = *t;
  }
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd x(basis.size());
  for (std::int64_t s = 0; s < basis.size(); ++s) x[s] = gauss(rng);
  Eigen::VectorXd hx = h.apply(x), px(basis.size()), hpx(basis.size());
  for (std::int64_t s = 0; s < basis.size(); ++s) px[swap_idx[s]] = x[s];
  hpx = h.apply(px);
  for (std::int64_t s = 0; s < basis.size(); ++s)
    CHECK(hpx[swap_idx[s]] == doctest::Approx(hx[s]).epsilon(1e-12));
}

TEST_CASE("assembly is deterministic") {
  const auto basis = fock::enumerate_basis(2, 2, 7.0, fock::Parity::even);
  const int n = basis.meta().n_modes;
  const auto w = interaction::effective_pair_tensor(2.2, n, 6);
  const auto z = zero_tensor(n);
  const auto h1 = hamiltonian::assemble_hamiltonian(basis, w, z, w);
  const auto h2 = hamiltonian::assemble_hamiltonian(basis, w, z, w);
  CHECK(h1.values() == h2.values());
  CHECK(h1.rows() == h2.rows());
  CHECK(h1.col_start() == h2.col_start());
}

TEST_CASE("trap operator on a single particle is x^2/2 exactly") {
  const auto basis = fock::enumerate_basis(1, 0, 9.5, fock::Parity::both,
                                           fock::Truncation::total);
  const auto u = hamiltonian::trap_operator(basis);
  const Eigen::MatrixXd d = u.to_dense();
  for (std::int64_t r = 0; r < basis.size(); ++r) {
    int mr = 0;
    while (!basis.state(r).a[mr]) ++mr;
    for (std::int64_t c = 0; c < basis.size(); ++c) {
      int mc = 0;
      while (!basis.state(c).a[mc]) ++mc;
      CHECK(d(r, c) == 0.5 * spho::x_squared_element(mr, mc));
    }
  }
}

TEST_CASE("trap diagonal is half the state energy for Fock states") {
  const auto basis = fock::enumerate_basis(2, 2, 8.0, fock::Parity::even);
  const auto u = hamiltonian::trap_operator(basis);
  const Eigen::MatrixXd d = u.to_dense();
  for (std::int64_t s = 0; s < basis.size(); ++s)
    CHECK(d(s, s) == doctest::Approx(0.5 * basis.energy(s)).epsilon(1e-14));
}

TEST_CASE("number operator is a multiple of the identity") {
  const auto basis = fock::enumerate_basis(2, 1, 8.0, fock::Parity::even);
  const auto num = hamiltonian::one_body_operator(
      basis, [](int i, int j) { return i == j ? 1.0 : 0.0; });
  CHECK(num.nnz() == basis.size());
  const Eigen::MatrixXd d = num.to_dense();
  CHECK((d - 3.0 * Eigen::MatrixXd::Identity(basis.size(), basis.size()))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("one-body density matrices against direct matrix elements") {
  const auto basis = fock::enumerate_basis(1, 1, 5.0, fock::Parity::even);
  const int n = basis.meta().n_modes;
  const auto w = interaction::effective_pair_tensor(5.0, n, 4);
  const auto z = zero_tensor(n);
  const auto h = hamiltonian::assemble_hamiltonian(basis, z, z, w);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.to_dense());
  const Eigen::VectorXd ground = es.eigenvectors().col(0);

  const hamiltonian::OneBodyMoveTable tab_a(basis, hamiltonian::Component::a);
  const Eigen::MatrixXd rho = tab_a.density_matrix(ground);
  CHECK(rho.trace() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK((rho - rho.transpose()).cwiseAbs().maxCoeff() <= 1e-15);

  // Direct evaluation: <psi|a+_i a_j|psi> by explicit occupation algebra.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double ref = 0.0;
      for (std::int64_t s = 0; s < basis.size(); ++s) {
        const auto& st = basis.state(s);
        if (!st.a[j]) continue;
        fock::Occ occ = st.a;
        double amp = std::sqrt(double(occ[j]));
        --occ[j];
        amp *= std::sqrt(double(occ[i] + 1));
        ++occ[i];
        const auto t = basis.find(occ, st.b);
        if (t) ref += ground[*t] * amp * ground[s];
      }
      CHECK(rho(i, j) == doctest::Approx(ref).epsilon(1e-12));
    }

  // Complex state: Hermitian with component trace preserved.
  Eigen::VectorXcd psi(basis.size());
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss;
  for (std::int64_t s = 0; s < basis.size(); ++s)
    psi[s] = std::complex<double>(gauss(rng), gauss(rng));
  psi.normalize();
  const Eigen::MatrixXcd rho_c = tab_a.density_matrix(psi);
  CHECK(rho_c.trace().real() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(std::abs(rho_c.trace().imag()) <= 1e-14);
  CHECK((rho_c - rho_c.adjoint()).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("argument validation") {
  const auto basis = fock::enumerate_basis(1, 1, 4.0, fock::Parity::even);
  const auto wrong = interaction::effective_pair_tensor(1.0, 3, 2);
  const auto ok = zero_tensor(basis.meta().n_modes);
  CHECK_THROWS_AS(hamiltonian::assemble_hamiltonian(basis, wrong, ok, ok),
                  std::invalid_argument);
  const hamiltonian::OneBodyMoveTable tab(basis, hamiltonian::Component::b);
  const Eigen::VectorXd bad = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(tab.density_matrix(bad), std::invalid_argument);
}
