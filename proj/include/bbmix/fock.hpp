#pragma once
// Two-component bosonic Fock basis on harmonic-oscillator modes: energy
// truncation (per-component or total), spatial-parity restriction,
// deterministic enumeration and ordering, O(1) lookup, dimension scans,
// and JSONL export.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace bbmix::fock {

enum class Parity { even, odd, both };

// per_component: each component's noninteracting energy E_sigma <= e_max.
// total: the state's total noninteracting energy E_A + E_B <= e_max.
enum class Truncation { per_component, total };

using Occ = std::vector<std::uint8_t>;  // occ[m] bosons in mode m

struct FockState {
  Occ a, b;
  bool operator==(const FockState&) const = default;
};

int quanta(const Occ& occ);
int particles(const Occ& occ);
// Noninteracting energy including zero-point: sum_sigma (q_sigma + N_sigma/2).
double state_energy(const FockState& s);
// Spatial parity of the product state: even iff total quanta is even.
Parity state_parity(const FockState& s);

const char* to_string(Parity p);
const char* to_string(Truncation t);

struct BasisMeta {
  int n_a = 0, n_b = 0;
  double e_max = 0.0;
  Parity parity = Parity::even;
  Truncation truncation = Truncation::per_component;
  int n_modes = 0;            // modes 0 .. n_modes-1
  int cap_a = 0, cap_b = 0;   // per-component quanta caps implied by e_max
  int cap_total = 0;          // total quanta cap implied by e_max
};

// Immutable ordered basis: states sorted by (energy, occ_a, occ_b) with
// lexicographic occupation tie-break, plus a hash index for lookup.
class BasisTable {
 public:
  BasisTable(BasisMeta meta, std::vector<FockState> states);

  const BasisMeta& meta() const { return meta_; }
  std::int64_t size() const { return std::int64_t(states_.size()); }
  const FockState& state(std::int64_t idx) const { return states_.at(idx); }
  const std::vector<FockState>& states() const { return states_; }
  double energy(std::int64_t idx) const;
  std::optional<std::int64_t> find(const FockState& s) const;
  std::optional<std::int64_t> find(const Occ& a, const Occ& b) const;
  // Order-sensitive FNV-1a over metadata and occupations; stable across runs.
  std::uint64_t checksum() const { return checksum_; }

 private:
  BasisMeta meta_;
  std::vector<FockState> states_;
  std::unordered_map<std::string, std::int64_t> index_;
  std::uint64_t checksum_ = 0;
};

// Enumerate the truncated two-component basis.  Throws std::invalid_argument
// for bad arguments and std::runtime_error if the truncation admits no state.
BasisTable enumerate_basis(int n_a, int n_b, double e_max, Parity parity,
                           Truncation trunc = Truncation::per_component);

struct DimensionPoint {
  double e_max;
  std::int64_t dim;
};

// Counting-only scan of dimension versus e_max over [e_lo, e_hi] inclusive.
std::vector<DimensionPoint> dimension_scan(
    int n_a, int n_b, Parity parity, double e_lo, double e_hi, double step,
    Truncation trunc = Truncation::per_component);

// One JSON header line (metadata, dimension, checksum) then one JSON line per
// state: index, occupations, energy, parity.
void export_jsonl(const BasisTable& basis, std::ostream& os);

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed);

}  // namespace bbmix::fock
