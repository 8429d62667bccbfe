#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "bbmix/diag.hpp"
#include "bbmix/eth.hpp"
#include "bbmix/fock.hpp"
#include "bbmix/interaction.hpp"

using namespace bbmix;

namespace {

Eigen::VectorXd normal_samples(std::int64_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd x(n);
  for (std::int64_t i = 0; i < n; ++i) x[i] = gauss(rng);
  return x;
}

struct SmallSystem {
  fock::BasisTable basis;
  hamiltonian::SymmetricSparse h;
  diag::SpectrumResult spec;
};

SmallSystem make_system(double g_a, double g_b, double g_ab, double e_max) {
  auto basis = fock::enumerate_basis(2, 2, e_max, fock::Parity::even);
  const int n = basis.meta().n_modes;
  const int cap = 2 * basis.meta().cap_a;
  const auto wa = interaction::effective_pair_tensor(g_a, n, cap);
  const auto wb = interaction::effective_pair_tensor(g_b, n, cap);
  const auto wab = interaction::effective_pair_tensor(g_ab, n, cap);
  auto h = hamiltonian::assemble_hamiltonian(basis, wa, wb, wab);
  auto spec = diag::diagonalize_full(h);
  return {std::move(basis), std::move(h), std::move(spec)};
}

}  // namespace

TEST_CASE("kurtosis estimator against analytic references") {
  const auto gauss = normal_samples(100000, 7);
  CHECK(std::abs(eth::kurtosis(gauss) - 3.0) <= 0.1);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd u(100000);
  for (std::int64_t i = 0; i < u.size(); ++i) u[i] = unif(rng);
  CHECK(std::abs(eth::kurtosis(u) - 1.8) <= 0.05);  // exact value 9/5

  // Laplace tails are heavier than normal; uniform is lighter: the
  // estimator must order them (kurtosis 6 > 3 > 1.8).
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution coin;
  Eigen::VectorXd lap(100000);
  for (std::int64_t i = 0; i < lap.size(); ++i)
    lap[i] = (coin(rng) ? 1.0 : -1.0) * expo(rng);
  CHECK(eth::kurtosis(lap) > eth::kurtosis(gauss));
  CHECK(eth::kurtosis(gauss) > eth::kurtosis(u));

  CHECK_THROWS_AS(eth::kurtosis(Eigen::VectorXd::Ones(5000)),
                  std::runtime_error);
  CHECK_THROWS_AS(eth::kurtosis(normal_samples(999, 1)),
                  std::invalid_argument);
}

TEST_CASE("observable matrix: selection rule and virial diagonal") {
  const auto sys = make_system(0.0, 0.0, 0.0, 8.0);
  const auto trap = hamiltonian::trap_operator(sys.basis);
  const std::int64_t d = sys.spec.energies.size();
  const auto obs =
      eth::observable_matrix(sys.spec, trap, {0, d - 1});

  CHECK((obs.elements - obs.elements.transpose()).cwiseAbs().maxCoeff() <=
        1e-10);
  // Noninteracting eigenstates: <m|x^2/2|m> = E_m / 2 (virial theorem) and
  // the off-diagonal couples only states exactly two quanta apart.
  for (std::int64_t m = 0; m < d; ++m)
    CHECK(obs.elements(m, m) ==
          doctest::Approx(0.5 * obs.energies[m]).epsilon(1e-12));
  for (std::int64_t m = 0; m < d; ++m)
    for (std::int64_t n = m + 1; n < d; ++n)
      if (std::abs(obs.elements(m, n)) > 1e-10)
        CHECK(std::abs(obs.energies[n] - obs.energies[m]) ==
              doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("observable matrix windows and validation") {
  const auto sys = make_system(1.0, 0.5, 2.0, 7.0);
  const auto trap = hamiltonian::trap_operator(sys.basis);
  const std::int64_t d = sys.spec.energies.size();
  REQUIRE(d > 12);
  const auto full = eth::observable_matrix(sys.spec, trap, {0, d - 1});
  const auto sub = eth::observable_matrix(sys.spec, trap, {5, 12});
  CHECK(sub.elements.rows() == 8);
  CHECK((sub.elements - full.elements.block(5, 5, 8, 8))
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
  CHECK((sub.energies - full.energies.segment(5, 8)).cwiseAbs().maxCoeff() ==
        0.0);

  CHECK_THROWS_AS(eth::observable_matrix(sys.spec, trap, {0, d}),
                  std::invalid_argument);
  CHECK_THROWS_AS(eth::observable_matrix(sys.spec, trap, {-1, 3}),
                  std::invalid_argument);
  CHECK_THROWS_AS(eth::observable_matrix(sys.spec, trap, {7, 3}),
                  std::invalid_argument);

  const auto other = fock::enumerate_basis(1, 1, 5.0, fock::Parity::even);
  const auto wrong = hamiltonian::trap_operator(other);
  CHECK_THROWS_AS(eth::observable_matrix(sys.spec, wrong, {0, 3}),
                  std::invalid_argument);
}

TEST_CASE("band profile pairs") {
  const auto sys = make_system(2.0, 2.0, 1.0, 7.0);
  const auto trap = hamiltonian::trap_operator(sys.basis);
  const auto two = eth::observable_matrix(sys.spec, trap, {3, 4});
  const auto prof2 = eth::offdiag_band_profile(two);
  CHECK(prof2.omega.size() == 1);
  CHECK(prof2.omega[0] ==
        doctest::Approx(std::abs(two.energies[1] - two.energies[0])));
  CHECK(prof2.magnitude[0] == doctest::Approx(std::abs(two.elements(0, 1))));

  const auto win = eth::observable_matrix(sys.spec, trap, {0, 9});
  const auto prof = eth::offdiag_band_profile(win);
  CHECK(prof.omega.size() == 45);
  CHECK(prof.omega.minCoeff() >= 0.0);
  CHECK(prof.magnitude.minCoeff() >= 0.0);
  const auto flat = eth::offdiag_elements(win);
  CHECK(flat.size() == 45);
  CHECK(std::abs(flat[0]) == doctest::Approx(prof.magnitude[0]));

  const auto one = eth::observable_matrix(sys.spec, trap, {2, 2});
  CHECK_THROWS_AS(eth::offdiag_band_profile(one), std::invalid_argument);
}

TEST_CASE("sector weights against explicit product-state construction") {
  // Exchange-symmetric, non-interacting across components: eigenstates are
  // products of identical one-component problems, and the symmetric /
  // antisymmetric combinations have w > 0 / w == 0 exactly.
  const double g = 2.5;
  const auto mix = fock::enumerate_basis(2, 2, 8.0, fock::Parity::even);
  const auto comp = fock::enumerate_basis(2, 0, 8.0, fock::Parity::even);
  const int n = mix.meta().n_modes;
  REQUIRE(comp.meta().n_modes == n);
  const auto w = interaction::effective_pair_tensor(g, n, 2 * mix.meta().cap_a);
  const auto z = interaction::effective_pair_tensor(0.0, n, 0);
  const auto hc = hamiltonian::assemble_hamiltonian(comp, w, z, z);
  const auto comp_spec = diag::diagonalize_full(hc);

  const fock::Occ empty(std::size_t(n), 0);
  const auto embed = [&](int i, int j, double sign) {
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(mix.size());
    for (std::int64_t s = 0; s < mix.size(); ++s) {
      const auto& st = mix.state(s);
      const auto ia = comp.find(st.a, empty);
      const auto ib = comp.find(st.b, empty);
      if (!ia || !ib) continue;
      psi[s] = comp_spec.vectors(*ia, i) * comp_spec.vectors(*ib, j) +
               sign * comp_spec.vectors(*ia, j) * comp_spec.vectors(*ib, i);
    }
    psi.normalize();
    return psi;
  };

  // Pack the constructed vectors as a fake spectrum for the filter.
  diag::SpectrumResult constructed;
  constructed.vectors.resize(mix.size(), 3);
  constructed.vectors.col(0) = embed(0, 0, 0.0);   // identical pair
  constructed.vectors.col(1) = embed(0, 1, 1.0);   // symmetric combination
  constructed.vectors.col(2) = embed(0, 1, -1.0);  // antisymmetric
  constructed.energies = Eigen::VectorXd::Zero(3);

  const auto lab = eth::sector_filter(constructed, mix, 1e-8);
  CHECK(lab.weight[0] > 0.1);
  CHECK(lab.weight[1] > 1e-4);
  CHECK(lab.weight[2] == 0.0);  // exact cancellation on diagonal Fock states
  CHECK(lab.retained[0] == 1);
  CHECK(lab.retained[1] == 1);
  CHECK(lab.retained[2] == 0);
  CHECK(lab.removed_count == 1);
}

TEST_CASE("sector filter on an exchange-symmetric interacting spectrum") {
  const auto sys = make_system(3.7, 3.7, 2.3, 8.0);
  const auto lab = eth::sector_filter(sys.spec, sys.basis);
  const std::int64_t d = sys.spec.energies.size();

  // Both exchange sectors are macroscopic.
  CHECK(lab.removed_count > d / 5);
  CHECK(lab.removed_count < 4 * d / 5);
  CHECK(lab.removed_fraction ==
        doctest::Approx(double(lab.removed_count) / double(d)));

  // Removed states have (numerically) zero diagonal support, kept ones not.
  for (std::int64_t m = 0; m < d; ++m) {
    if (lab.retained[std::size_t(m)])
      CHECK(lab.weight[m] >= 1e-8);
    else
      CHECK(lab.weight[m] < 1e-8);
  }

  // Idempotence: filtering the filtered spectrum removes nothing.
  const auto filtered = eth::apply_filter(sys.spec, lab);
  CHECK(filtered.energies.size() == d - lab.removed_count);
  const auto again = eth::sector_filter(filtered, sys.basis);
  CHECK(again.removed_count == 0);

  // Threshold sweep: removed fraction monotone nonincreasing in threshold.
  double prev = 1.0;
  for (const double thr : {1e-2, 1e-4, 1e-8, 1e-12, 0.0}) {
    const auto l = eth::sector_filter(sys.spec, sys.basis, thr);
    CHECK(l.removed_fraction <= prev + 1e-15);
    prev = l.removed_fraction;
  }

  const auto asym = fock::enumerate_basis(2, 1, 6.0, fock::Parity::even);
  CHECK_THROWS_AS(eth::sector_filter(sys.spec, asym, 1e-8),
                  std::invalid_argument);
}

TEST_CASE("exchange-sector removal eliminates the symmetry-forced zeros") {
  const auto sys = make_system(3.0, 3.0, 1.7, 8.0);
  const auto trap = hamiltonian::trap_operator(sys.basis);
  const std::int64_t d = sys.spec.energies.size();
  const auto full = eth::observable_matrix(sys.spec, trap, {0, d - 1});
  const auto lab = eth::sector_filter(sys.spec, sys.basis);
  REQUIRE(lab.removed_count > 0);
  REQUIRE(lab.removed_count < d);

  // An exchange-symmetric observable cannot couple the two exchange
  // sectors, so every cross-sector element is a numerical zero.  These
  // pairs are the source of the spurious delta peak at zero element size.
  double max_cross = 0.0;
  for (std::int64_t m = 0; m < d; ++m)
    for (std::int64_t k = m + 1; k < d; ++k)
      if (lab.retained[std::size_t(m)] != lab.retained[std::size_t(k)])
        max_cross = std::max(max_cross, std::abs(full.elements(m, k)));
  CHECK(max_cross < 1e-9);

  // Filtering removes exactly those pairs: the filtered observable matrix
  // is the retained-retained sub-block of the full one.
  const auto filtered = eth::apply_filter(sys.spec, lab);
  const auto after = eth::observable_matrix(
      filtered, trap, {0, filtered.energies.size() - 1});
  std::int64_t p = 0;
  double max_dev = 0.0;
  for (std::int64_t m = 0; m < d; ++m) {
    if (!lab.retained[std::size_t(m)]) continue;
    std::int64_t q = 0;
    for (std::int64_t k = 0; k < d; ++k) {
      if (!lab.retained[std::size_t(k)]) continue;
      max_dev = std::max(
          max_dev, std::abs(after.elements(p, q) - full.elements(m, k)));
      ++q;
    }
    ++p;
  }
  CHECK(max_dev <= 1e-12);

  // Within the kept sector, adjacent levels have genuine couplings.
  Eigen::VectorXd adjacent(after.elements.rows() - 1);
  for (std::int64_t m = 0; m + 1 < after.elements.rows(); ++m)
    adjacent[m] = std::abs(after.elements(m, m + 1));
  std::sort(adjacent.data(), adjacent.data() + adjacent.size());
  CHECK(adjacent[adjacent.size() / 2] > 1e-6);
}

TEST_CASE("gaussian fit on normal and non-normal samples") {
  const auto x = normal_samples(50000, 23);
  const Eigen::VectorXd scaled = 2.5 * x.array() - 0.7;
  const auto fit = eth::gaussian_fit(scaled);
  CHECK(std::abs(fit.mean + 0.7) <= 0.05);
  CHECK(std::abs(fit.stddev - 2.5) <= 0.05);
  CHECK(fit.residual < 0.01);

  CHECK_THROWS_AS(eth::gaussian_fit(Eigen::VectorXd::Zero(2000)),
                  std::runtime_error);
  CHECK_THROWS_AS(eth::gaussian_fit(normal_samples(500, 2)),
                  std::invalid_argument);
}

TEST_CASE("csv and json exports") {
  const auto sys = make_system(1.0, 1.0, 1.0, 6.0);
  const auto trap = hamiltonian::trap_operator(sys.basis);
  const auto obs = eth::observable_matrix(sys.spec, trap, {0, 5});
  eth::export_observable_csv("eth_obs.csv", obs);
  std::ifstream is("eth_obs.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "m,n,e_m,e_n,o_mn");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 21);  // 6 diagonal + 15 upper-triangle entries
  is.close();
  std::remove("eth_obs.csv");

  eth::EthSummary s;
  s.kurtosis = 3.25;
  s.inverse_kurtosis = 1.0 / 3.25;
  s.removed_fraction = 0.5;
  s.window = {2600, 2800};
  s.threshold = 1e-8;
  const auto j = eth::summary_to_json(s);
  CHECK(j.find("\"kurtosis\":3.25") != std::string::npos);
  CHECK(j.find("\"window_lo\":2600") != std::string::npos);
}
