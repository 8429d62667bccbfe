#include "bbmix/fock.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace bbmix::fock {

namespace {

std::string state_key(const FockState& s) {
  std::string key;
  key.reserve(s.a.size() + s.b.size());
  key.append(reinterpret_cast<const char*>(s.a.data()), s.a.size());
  key.append(reinterpret_cast<const char*>(s.b.data()), s.b.size());
  return key;
}

// All occupation vectors over n_modes modes with n particles and at most
// max_quanta excitation quanta, highest mode filled first.
void enumerate_component(int mode, int n_left, int q_left, Occ& occ,
                         std::vector<Occ>& out) {
  if (mode == 0) {
    occ[0] = std::uint8_t(n_left);
    out.push_back(occ);
    occ[0] = 0;
    return;
  }
  for (int k = 0; k <= n_left && k * mode <= q_left; ++k) {
    occ[mode] = std::uint8_t(k);
    enumerate_component(mode - 1, n_left - k, q_left - k * mode, occ, out);
  }
  occ[mode] = 0;
}

std::vector<Occ> component_states(int n, int max_quanta, int n_modes) {
  std::vector<Occ> out;
  Occ occ(n_modes, 0);
  if (n == 0) {
    out.push_back(occ);
    return out;
  }
  enumerate_component(n_modes - 1, n, max_quanta, occ, out);
  return out;
}

// Number of occupation vectors with n particles and exactly q quanta
// (= partitions of q into at most n parts), for counting-only scans.
std::vector<std::int64_t> quanta_histogram(int n, int max_quanta) {
  std::vector<std::int64_t> ways(max_quanta + 1, 0);
  ways[0] = 1;
  for (int part = 1; part <= n; ++part)
    for (int q = part; q <= max_quanta; ++q) ways[q] += ways[q - part];
  return ways;
}

struct Caps {
  int cap_a, cap_b, cap_total, n_modes;
};

Caps caps_for(int n_a, int n_b, double e_max, Truncation trunc) {
  const auto cap = [&](double budget) {
    const double q = std::floor(budget);
    if (q < 0.0) return -1;
    return int(q);
  };
  Caps c{};
  if (trunc == Truncation::per_component) {
    c.cap_a = n_a > 0 ? cap(e_max - 0.5 * n_a) : 0;
    c.cap_b = n_b > 0 ? cap(e_max - 0.5 * n_b) : 0;
    c.cap_total = std::max(c.cap_a, 0) + std::max(c.cap_b, 0);
  } else {
    c.cap_total = cap(e_max - 0.5 * (n_a + n_b));
    c.cap_a = n_a > 0 ? c.cap_total : 0;
    c.cap_b = n_b > 0 ? c.cap_total : 0;
  }
  c.n_modes = std::max({c.cap_a, c.cap_b, 0}) + 1;
  return c;
}

void check_args(int n_a, int n_b, double e_max) {
  if (n_a < 0 || n_b < 0 || n_a + n_b == 0)
    throw std::invalid_argument("particle numbers must be >= 0 with N_A+N_B > 0");
  if (!std::isfinite(e_max)) throw std::invalid_argument("e_max must be finite");
}

bool parity_ok(int total_quanta, Parity p) {
  if (p == Parity::both) return true;
  const bool even = (total_quanta % 2) == 0;
  return even == (p == Parity::even);
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

int quanta(const Occ& occ) {
  int q = 0;
  for (std::size_t m = 0; m < occ.size(); ++m) q += int(m) * occ[m];
  return q;
}

int particles(const Occ& occ) {
  int n = 0;
  for (const auto k : occ) n += k;
  return n;
}

double state_energy(const FockState& s) {
  return quanta(s.a) + 0.5 * particles(s.a) + quanta(s.b) + 0.5 * particles(s.b);
}

Parity state_parity(const FockState& s) {
  return ((quanta(s.a) + quanta(s.b)) % 2 == 0) ? Parity::even : Parity::odd;
}

const char* to_string(Parity p) {
  switch (p) {
    case Parity::even: return "even";
    case Parity::odd: return "odd";
    default: return "both";
  }
}

const char* to_string(Truncation t) {
  return t == Truncation::per_component ? "per_component" : "total";
}

BasisTable::BasisTable(BasisMeta meta, std::vector<FockState> states)
    : meta_(meta), states_(std::move(states)) {
  if (states_.empty()) throw std::runtime_error("basis has no states");
  for (const auto& s : states_) {
    if (int(s.a.size()) != meta_.n_modes || int(s.b.size()) != meta_.n_modes)
      throw std::invalid_argument("occupation length differs from n_modes");
    if (particles(s.a) != meta_.n_a || particles(s.b) != meta_.n_b)
      throw std::invalid_argument("state particle number differs from metadata");
  }
  std::sort(states_.begin(), states_.end(),
            [](const FockState& x, const FockState& y) {
              return std::make_tuple(state_energy(x), std::cref(x.a),
                                     std::cref(x.b)) <
                     std::make_tuple(state_energy(y), std::cref(y.a),
                                     std::cref(y.b));
            });
  index_.reserve(states_.size() * 2);
  for (std::int64_t i = 0; i < std::int64_t(states_.size()); ++i) {
    if (!index_.emplace(state_key(states_[i]), i).second)
      throw std::invalid_argument("duplicate state in basis");
  }

  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](const void* p, std::size_t n) { h = fnv1a(p, n, h); };
  mix(&meta_.n_a, sizeof meta_.n_a);
  mix(&meta_.n_b, sizeof meta_.n_b);
  mix(&meta_.e_max, sizeof meta_.e_max);
  const int pv = int(meta_.parity), tv = int(meta_.truncation);
  mix(&pv, sizeof pv);
  mix(&tv, sizeof tv);
  mix(&meta_.n_modes, sizeof meta_.n_modes);
  for (const auto& s : states_) {
    mix(s.a.data(), s.a.size());
    mix(s.b.data(), s.b.size());
  }
  checksum_ = h;
}

double BasisTable::energy(std::int64_t idx) const {
  return state_energy(states_.at(idx));
}

std::optional<std::int64_t> BasisTable::find(const FockState& s) const {
  return find(s.a, s.b);
}

std::optional<std::int64_t> BasisTable::find(const Occ& a, const Occ& b) const {
  std::string key;
  key.reserve(a.size() + b.size());
  key.append(reinterpret_cast<const char*>(a.data()), a.size());
  key.append(reinterpret_cast<const char*>(b.data()), b.size());
  const auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

BasisTable enumerate_basis(int n_a, int n_b, double e_max, Parity parity,
                           Truncation trunc) {
  check_args(n_a, n_b, e_max);
  const Caps caps = caps_for(n_a, n_b, e_max, trunc);
  if ((n_a > 0 && caps.cap_a < 0) || (n_b > 0 && caps.cap_b < 0) ||
      (trunc == Truncation::total && caps.cap_total < 0))
    throw std::runtime_error("truncation admits no states");

  const auto as = component_states(n_a, std::max(caps.cap_a, 0), caps.n_modes);
  const auto bs = component_states(n_b, std::max(caps.cap_b, 0), caps.n_modes);
  std::vector<FockState> states;
  for (const auto& a : as) {
    const int qa = quanta(a);
    for (const auto& b : bs) {
      const int qb = quanta(b);
      if (trunc == Truncation::total && qa + qb > caps.cap_total) continue;
      if (!parity_ok(qa + qb, parity)) continue;
      states.push_back({a, b});
    }
  }
  if (states.empty()) throw std::runtime_error("truncation admits no states");

  BasisMeta meta;
  meta.n_a = n_a;
  meta.n_b = n_b;
  meta.e_max = e_max;
  meta.parity = parity;
  meta.truncation = trunc;
  meta.n_modes = caps.n_modes;
  meta.cap_a = std::max(caps.cap_a, 0);
  meta.cap_b = std::max(caps.cap_b, 0);
  meta.cap_total = std::max(caps.cap_total, 0);
  return BasisTable(std::move(meta), std::move(states));
}

std::vector<DimensionPoint> dimension_scan(int n_a, int n_b, Parity parity,
                                           double e_lo, double e_hi, double step,
                                           Truncation trunc) {
  check_args(n_a, n_b, e_lo);
  if (!std::isfinite(e_hi) || !(step > 0.0))
    throw std::invalid_argument("bad scan range");

  std::vector<DimensionPoint> out;
  for (double e = e_lo; e <= e_hi + 1e-12; e += step) {
    const Caps caps = caps_for(n_a, n_b, e, trunc);
    std::int64_t dim = 0;
    if ((n_a == 0 || caps.cap_a >= 0) && (n_b == 0 || caps.cap_b >= 0) &&
        (trunc == Truncation::per_component || caps.cap_total >= 0)) {
      const auto ha = quanta_histogram(n_a, std::max(caps.cap_a, 0));
      const auto hb = quanta_histogram(n_b, std::max(caps.cap_b, 0));
      for (int qa = 0; qa < int(ha.size()); ++qa) {
        if (ha[qa] == 0) continue;
        int qb_max = int(hb.size()) - 1;
        if (trunc == Truncation::total)
          qb_max = std::min(qb_max, caps.cap_total - qa);
        for (int qb = 0; qb <= qb_max; ++qb)
          if (parity_ok(qa + qb, parity)) dim += ha[qa] * hb[qb];
      }
    }
    out.push_back({e, dim});
  }
  return out;
}

void export_jsonl(const BasisTable& basis, std::ostream& os) {
  nlohmann::json header{
      {"kind", "fock_basis"},
      {"n_a", basis.meta().n_a},
      {"n_b", basis.meta().n_b},
      {"e_max", basis.meta().e_max},
      {"parity", to_string(basis.meta().parity)},
      {"truncation", to_string(basis.meta().truncation)},
      {"n_modes", basis.meta().n_modes},
      {"dimension", basis.size()},
      {"checksum", basis.checksum()},
  };
  os << header.dump() << '\n';
  for (std::int64_t i = 0; i < basis.size(); ++i) {
    const auto& s = basis.state(i);
    nlohmann::json line{
        {"index", i},
        {"occ_a", std::vector<int>(s.a.begin(), s.a.end())},
        {"occ_b", std::vector<int>(s.b.begin(), s.b.end())},
        {"energy", state_energy(s)},
        {"parity", to_string(state_parity(s))},
    };
    os << line.dump() << '\n';
  }
}

}  // namespace bbmix::fock
