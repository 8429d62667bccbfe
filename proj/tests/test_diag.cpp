#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

#include "bbmix/diag.hpp"
#include "bbmix/fock.hpp"
#include "bbmix/interaction.hpp"

using namespace bbmix;
using hamiltonian::SymmetricSparse;
using hamiltonian::Triplet;

namespace {

SymmetricSparse random_symmetric(int dim, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  std::vector<Triplet> ts;
  for (int i = 0; i < dim; ++i) {
    ts.push_back({i, i, gauss(rng)});
    for (int j = i + 1; j < dim; ++j)
      if (unif(rng) < density) ts.push_back({i, j, gauss(rng)});
  }
  return SymmetricSparse::from_triplets(dim, ts);
}

void check_sign_convention(const Eigen::MatrixXd& v) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index best = 0;
    double mag = std::abs(v(0, c));
    for (Eigen::Index r = 1; r < v.rows(); ++r)
      if (std::abs(v(r, c)) > mag) {
        mag = std::abs(v(r, c));
        best = r;
      }
    CHECK(v(best, c) > 0.0);
  }
}

std::string temp_path(const char* name) {
  return std::string("diag_test_") + name + ".spectrum";
}

}  // namespace

TEST_CASE("identity and exchange matrices") {
  std::vector<Triplet> id;
  for (int i = 0; i < 4; ++i) id.push_back({i, i, 1.0});
  const auto r = diag::diagonalize_full(SymmetricSparse::from_triplets(4, id));
  for (int i = 0; i < 4; ++i) CHECK(r.energies[i] == 1.0);
  CHECK((r.vectors - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(r.meta.max_residual == 0.0);
  CHECK(r.meta.max_ortho_defect == 0.0);

  const auto x =
      diag::diagonalize_full(SymmetricSparse::from_triplets(2, {{0, 1, 1.0}}));
  CHECK(x.energies[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(x.energies[1] == doctest::Approx(1.0).epsilon(1e-15));
  check_sign_convention(x.vectors);
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(x.vectors(0, 0)) == doctest::Approx(s));
  CHECK(x.vectors(0, 0) * x.vectors(1, 0) < 0.0);
  CHECK(x.vectors(0, 1) * x.vectors(1, 1) > 0.0);
}

TEST_CASE("noninteracting Hamiltonian returns sorted state energies exactly") {
  const auto basis = fock::enumerate_basis(2, 2, 8.0, fock::Parity::even);
  const auto z =
      interaction::effective_pair_tensor(0.0, basis.meta().n_modes, 0);
  const auto h = hamiltonian::assemble_hamiltonian(basis, z, z, z);
  const auto r = diag::diagonalize_full(h);
  std::vector<double> ref(std::size_t(basis.size()));
  for (std::int64_t s = 0; s < basis.size(); ++s) ref[s] = basis.energy(s);
  std::sort(ref.begin(), ref.end());
  for (std::int64_t s = 0; s < basis.size(); ++s)
    CHECK(r.energies[s] == ref[s]);
}

TEST_CASE("dense full decomposition meets its contract on a random matrix") {
  const auto h = random_symmetric(60, 0.3, 17);
  const auto r = diag::diagonalize_full(h);
  CHECK(r.meta.dim == 60);
  CHECK(r.meta.count == 60);
  CHECK(r.meta.norm_h == h.norm_inf());
  CHECK(r.meta.max_residual <= 1e-8 * r.meta.norm_h);
  CHECK(r.meta.max_ortho_defect <= 1e-8);
  for (int i = 1; i < 60; ++i) CHECK(r.energies[i] >= r.energies[i - 1]);
  check_sign_convention(r.vectors);

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.to_dense());
  for (int i = 0; i < 60; ++i)
    CHECK(r.energies[i] == doctest::Approx(es.eigenvalues()[i]).epsilon(1e-12));
}

TEST_CASE("interacting pair spectrum agrees with an independent dense solver") {
  const auto basis = fock::enumerate_basis(1, 1, 10.0, fock::Parity::both,
                                           fock::Truncation::total);
  const auto w = interaction::effective_pair_tensor(
      3.0, basis.meta().n_modes, basis.meta().cap_total);
  const auto z =
      interaction::effective_pair_tensor(0.0, basis.meta().n_modes, 0);
  const auto h = hamiltonian::assemble_hamiltonian(basis, z, z, w);
  const auto r = diag::diagonalize_full(h);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.to_dense());
  for (std::int64_t i = 0; i < basis.size(); ++i)
    CHECK(r.energies[i] == doctest::Approx(es.eigenvalues()[i]).epsilon(1e-11));
}

TEST_CASE("lowest-k dense path matches the full decomposition") {
  const auto h = random_symmetric(80, 0.4, 29);
  const auto full = diag::diagonalize_full(h);
  const auto low = diag::diagonalize_lowest(h, 7);
  CHECK(low.meta.count == 7);
  CHECK(low.meta.max_residual <= 1e-8 * low.meta.norm_h);
  CHECK(low.meta.max_ortho_defect <= 1e-8);
  for (int i = 0; i < 7; ++i) {
    CHECK(low.energies[i] == doctest::Approx(full.energies[i]).epsilon(1e-12));
    CHECK((low.vectors.col(i) - full.vectors.col(i)).cwiseAbs().maxCoeff() <=
          1e-8);
  }
}

TEST_CASE("lowest-k iterative path converges on a larger operator") {
  const auto h = random_symmetric(300, 0.05, 41);
  diag::DiagOptions opts;
  opts.dense_cap = 10;  // force the iterative path
  const auto low = diag::diagonalize_lowest(h, 5, {}, opts);
  CHECK(low.meta.count == 5);
  CHECK(low.meta.max_residual <= 1e-8 * low.meta.norm_h);
  CHECK(low.meta.max_ortho_defect <= 1e-8);
  const auto full = diag::diagonalize_full(h);
  for (int i = 0; i < 5; ++i)
    CHECK(low.energies[i] ==
          doctest::Approx(full.energies[i]).epsilon(1e-10));
  check_sign_convention(low.vectors);
}

TEST_CASE("iterative non-convergence reports the achieved residual") {
  const auto h = random_symmetric(200, 0.1, 53);
  diag::DiagOptions opts;
  opts.dense_cap = 10;
  opts.max_iterations = 3;
  CHECK_THROWS_WITH_AS(diag::diagonalize_lowest(h, 3, {}, opts),
                       doctest::Contains("achieved residual"),
                       std::runtime_error);
}

TEST_CASE("dimension cap and argument validation") {
  const auto h = random_symmetric(12, 0.5, 3);
  diag::DiagOptions opts;
  opts.dim_cap = 10;
  CHECK_THROWS_AS(diag::diagonalize_full(h, {}, opts), std::invalid_argument);
  CHECK_THROWS_AS(diag::diagonalize_lowest(h, 0), std::invalid_argument);
  CHECK_THROWS_AS(diag::diagonalize_lowest(h, 13), std::invalid_argument);
}

TEST_CASE("spectrum files round-trip bitwise") {
  const auto h = random_symmetric(40, 0.3, 71);
  diag::Provenance prov;
  prov.couplings = {1.25, -0.0, 17.303370665383274};
  prov.basis_checksum = 0xDEADBEEFCAFEF00DULL;
  const auto r = diag::diagonalize_full(h, prov);
  const auto path = temp_path("roundtrip");
  diag::save_spectrum(r, path);
  const auto back = diag::load_spectrum(path, prov.basis_checksum);
  REQUIRE(back.energies.size() == r.energies.size());
  REQUIRE(back.vectors.rows() == r.vectors.rows());
  CHECK(std::memcmp(back.energies.data(), r.energies.data(),
                    std::size_t(r.energies.size()) * sizeof(double)) == 0);
  CHECK(std::memcmp(back.vectors.data(), r.vectors.data(),
                    std::size_t(r.vectors.size()) * sizeof(double)) == 0);
  CHECK(back.meta.provenance.couplings.g_a == 1.25);
  CHECK(std::signbit(back.meta.provenance.couplings.g_b));
  CHECK(back.meta.provenance.couplings.g_ab == 17.303370665383274);
  CHECK(back.meta.provenance.basis_checksum == prov.basis_checksum);
  CHECK(back.meta.norm_h == r.meta.norm_h);
  CHECK(back.meta.max_residual == r.meta.max_residual);
  CHECK(back.meta.max_ortho_defect == r.meta.max_ortho_defect);

  diag::SpectrumResult verified = back;
  diag::verify_spectrum(h, verified);
  CHECK(verified.meta.max_residual <= 1e-8 * verified.meta.norm_h);
  std::remove(path.c_str());
}

TEST_CASE("tampered, mismatched, and malformed files are refused") {
  const auto h = random_symmetric(20, 0.4, 97);
  diag::Provenance prov;
  prov.basis_checksum = 42;
  const auto r = diag::diagonalize_full(h, prov);
  const auto path = temp_path("tamper");
  diag::save_spectrum(r, path);

  SUBCASE("wrong expected basis checksum") {
    CHECK_THROWS_WITH_AS(diag::load_spectrum(path, 43),
                         doctest::Contains("different basis"),
                         std::runtime_error);
  }
  SUBCASE("payload byte flip") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    std::string line;
    std::getline(f, line);
    const auto pos = std::streamoff(line.size()) + 1 + 64;
    f.seekg(pos);
    char b = 0;
    f.read(&b, 1);
    b = char(b ^ 0x40);
    f.seekp(pos);
    f.write(&b, 1);
    f.close();
    CHECK_THROWS_WITH_AS(diag::load_spectrum(path),
                         doctest::Contains("checksum"), std::runtime_error);
  }
  SUBCASE("truncated payload") {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(all.data(), std::streamsize(all.size() - 100));
    out.close();
    CHECK_THROWS_WITH_AS(diag::load_spectrum(path),
                         doctest::Contains("truncated"), std::runtime_error);
  }
  SUBCASE("future version") {
    std::ofstream out(path, std::ios::trunc);
    out << R"({"format":"bbmix-spectrum","version":99,"dim":1,"count":1})"
        << "\n";
    out.close();
    CHECK_THROWS_WITH_AS(diag::load_spectrum(path),
                         doctest::Contains("version"), std::runtime_error);
  }
  SUBCASE("not a spectrum file") {
    std::ofstream out(path, std::ios::trunc);
    out << "just some text\n";
    out.close();
    CHECK_THROWS_AS(diag::load_spectrum(path), std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(diag::load_spectrum("does_not_exist.spectrum"),
                    std::runtime_error);
  }
  std::remove(path.c_str());
}

TEST_CASE("verify_spectrum rejects a spectrum from a different operator") {
  const auto h1 = random_symmetric(30, 0.4, 5);
  const auto h2 = random_symmetric(30, 0.4, 6);
  auto r = diag::diagonalize_full(h1);
  CHECK_THROWS_AS(diag::verify_spectrum(h2, r), std::runtime_error);
  const auto h3 = random_symmetric(31, 0.4, 7);
  CHECK_THROWS_AS(diag::verify_spectrum(h3, r), std::invalid_argument);
}
