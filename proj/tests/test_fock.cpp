#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bbmix/fock.hpp"

using namespace bbmix::fock;

TEST_CASE("state bookkeeping") {
  const FockState s{{0, 2}, {1, 0, 0, 1}};
  CHECK(quanta(s.a) == 2);
  CHECK(quanta(s.b) == 3);
  CHECK(particles(s.a) == 2);
  CHECK(particles(s.b) == 2);
  CHECK(state_energy(s) == 7.0);
  CHECK(state_parity(s) == Parity::odd);
}

TEST_CASE("one-plus-one basis matches an independent brute force") {
  const auto basis = enumerate_basis(1, 1, 5.0, Parity::even);
  // Each particle alone: E = m + 1/2 <= 5 so m <= 4; even total quanta.
  std::int64_t count = 0;
  for (int ma = 0; ma <= 4; ++ma)
    for (int mb = 0; mb <= 4; ++mb) {
      if ((ma + mb) % 2 != 0) continue;
      ++count;
      FockState s{Occ(basis.meta().n_modes, 0), Occ(basis.meta().n_modes, 0)};
      s.a[ma] = 1;
      s.b[mb] = 1;
      REQUIRE(basis.find(s).has_value());
    }
  CHECK(basis.size() == count);
  CHECK(basis.size() == 13);
  CHECK(basis.meta().n_modes == 5);
  CHECK(basis.energy(0) == 1.0);
}

TEST_CASE("absent states are not found") {
  const auto basis = enumerate_basis(1, 1, 5.0, Parity::even);
  FockState odd{Occ(5, 0), Occ(5, 0)};
  odd.a[4] = 1;
  odd.b[1] = 1;  // odd total quanta
  CHECK(!basis.find(odd).has_value());
}

TEST_CASE("ordering is by energy with lexicographic tie-break") {
  const auto basis = enumerate_basis(2, 2, 12.0, Parity::even);
  for (std::int64_t i = 1; i < basis.size(); ++i) {
    const double de = basis.energy(i) - basis.energy(i - 1);
    CHECK(de >= 0.0);
    if (de == 0.0) {
      const auto &p = basis.state(i - 1), &q = basis.state(i);
      CHECK(p.a <= q.a);
      if (p.a == q.a) CHECK(p.b < q.b);
    }
  }
}

TEST_CASE("per-component truncation dimensions for production systems") {
  const auto even = enumerate_basis(2, 2, 20.0, Parity::even);
  CHECK(even.size() == 6050);
  CHECK(even.meta().n_modes == 20);
  CHECK(even.meta().cap_a == 19);
  const auto odd = enumerate_basis(2, 2, 20.0, Parity::odd);
  CHECK(odd.size() == 6050);
  const auto both = enumerate_basis(2, 2, 20.0, Parity::both);
  CHECK(both.size() == 12100);
  const auto large = enumerate_basis(3, 3, 21.0, Parity::even);
  CHECK(large.size() == 49460);
}

TEST_CASE("counting scan agrees with enumeration") {
  for (const auto trunc : {Truncation::per_component, Truncation::total})
    for (const double e : {6.0, 8.5, 11.0}) {
      const auto pts = dimension_scan(2, 2, Parity::even, e, e, 1.0, trunc);
      REQUIRE(pts.size() == 1);
      const auto basis = enumerate_basis(2, 2, e, Parity::even, trunc);
      CHECK(pts[0].dim == basis.size());
    }
}

TEST_CASE("scan is monotone and finds the production cutoff") {
  const auto pts = dimension_scan(2, 2, Parity::even, 4.0, 26.0, 1.0);
  for (std::size_t i = 1; i < pts.size(); ++i) CHECK(pts[i].dim >= pts[i - 1].dim);
  bool hit = false;
  for (const auto& p : pts) hit |= (p.dim == 6050 && p.e_max == 20.0);
  CHECK(hit);
}

TEST_CASE("total-energy truncation yields the rotation-invariant counts") {
  // With a shared energy budget the even-sector dimension skips from 5440 to
  // 6936 between consecutive integer cutoffs; record the actual staircase.
  const auto pts = dimension_scan(2, 2, Parity::even, 4.0, 44.0, 1.0,
                                  Truncation::total);
  bool saw_5440 = false, saw_6936 = false;
  for (const auto& p : pts) {
    CHECK(p.dim != 6050);
    saw_5440 |= p.dim == 5440;
    saw_6936 |= p.dim == 6936;
  }
  CHECK(saw_5440);
  CHECK(saw_6936);
}

TEST_CASE("checksums are stable and sensitive") {
  const auto b1 = enumerate_basis(2, 2, 10.0, Parity::even);
  const auto b2 = enumerate_basis(2, 2, 10.0, Parity::even);
  const auto b3 = enumerate_basis(2, 2, 11.0, Parity::even);
  CHECK(b1.checksum() == b2.checksum());
  CHECK(b1.checksum() != b3.checksum());
}

TEST_CASE("single-component edge case") {
  const auto basis = enumerate_basis(1, 0, 3.5, Parity::even);
  CHECK(basis.size() == 2);  // modes 0 and 2
  for (std::int64_t i = 0; i < basis.size(); ++i)
    CHECK(particles(basis.state(i).b) == 0);
}

TEST_CASE("jsonl export round-trips") {
  const auto basis = enumerate_basis(1, 1, 4.0, Parity::even);
  std::ostringstream os;
  export_jsonl(basis, os);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  const auto header = nlohmann::json::parse(line);
  CHECK(header.at("dimension").get<std::int64_t>() == basis.size());
  CHECK(header.at("checksum").get<std::uint64_t>() == basis.checksum());
  std::int64_t n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("index").get<std::int64_t>() == n);
    const auto occ = j.at("occ_a").get<std::vector<int>>();
    CHECK(int(occ.size()) == basis.meta().n_modes);
    ++n;
  }
  CHECK(n == basis.size());
}

TEST_CASE("invalid arguments and empty truncations") {
  CHECK_THROWS_AS(enumerate_basis(0, 0, 10.0, Parity::even), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_basis(-1, 2, 10.0, Parity::even), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_basis(1, 1, std::nan(""), Parity::even),
                  std::invalid_argument);
  CHECK_THROWS_AS(enumerate_basis(1, 1, 0.4, Parity::even), std::runtime_error);
  CHECK_THROWS_AS(dimension_scan(1, 1, Parity::even, 2.0, 4.0, 0.0),
                  std::invalid_argument);
}
