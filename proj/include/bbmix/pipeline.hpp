#pragma once
// Reproducible run driver: config schema, stage orchestration
// (spectrum -> stats -> eth -> quench), spectrum caching, manifest and
// report generation.
//
// A run is described by a single JSON config validated against a strict
// schema (unknown keys, wrong types, and out-of-range values are rejected
// before any compute).  Every defaulted field is materialized into an
// effective config persisted next to the outputs, so a run is reproducible
// from its own artifacts.  Spectra are cached on disk keyed by basis
// checksum, coupling strengths, and solver settings; a cache hit skips
// diagonalization and is recorded in the manifest.  All numeric artifacts
// are written with deterministic ordering and fixed formatting: identical
// configs produce bitwise-identical CSV/JSON outputs.
//
// Failure classes map to distinct process exit codes: config/schema errors,
// cache corruption, stage failures, and I/O problems are separated so batch
// drivers can react to each.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbmix/fock.hpp"

namespace bbmix::pipeline {

// Process exit codes for the command-line driver.
enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,  // unexpected failure
  exit_config = 2,    // schema violation or unusable configuration
  exit_cache = 3,     // cache corruption or provenance mismatch
  exit_stage = 4,     // a pipeline stage failed on valid inputs
  exit_io = 5,        // filesystem problems, lock contention, missing files
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SystemConfig {
  int n_a = 0;
  int n_b = 0;
  double e_max = 0.0;  // resolved from target_dimension when that is given
  std::optional<std::int64_t> target_dimension;
  fock::Parity parity = fock::Parity::even;
  fock::Truncation truncation = fock::Truncation::per_component;
};

struct SyntheticConfig {
  std::string kind;  // "poisson" | "wigner" | "brody"
  std::int64_t n = 0;
  double beta = 0.0;  // used by kind "brody"
};

struct StatsConfig {
  double discard_low = 0.05;
  double discard_high = 0.0;
  int poly_degree = 10;
  int hist_bins = 25;
  std::optional<SyntheticConfig> synthetic;
};

struct EthConfig {
  std::int64_t window_lo = 2600;
  std::int64_t window_hi = 2800;
  bool sector_filter = true;  // effective only when N_A == N_B
  double threshold = 1e-8;
  bool export_elements = false;
};

enum class SectorMode { split, both, even };

struct ProfileConfig {
  bool enable = false;
  double x_lo = -6.0, x_hi = 6.0, x_step = 0.05;
  std::vector<double> times;  // trajectory sample times; required when enabled
  bool momentum = false;
  double k_lo = -5.0, k_hi = 5.0, k_step = 0.05;
};

struct QuenchConfig {
  SectorMode sector_mode = SectorMode::split;
  std::string b_construction = "fock_superposition";
  // The initial A-state superposes the pair configurations |1_i 1_{S-i}>
  // for 2i < S with equal weights; S = 19 is the production state and
  // smaller odd S scale the same construction to low cutoffs.
  int a_pair_sum = 19;
  double t0 = 0.0, t1 = 400.0, dt = 0.1;
  double delta_e = 2.0;
  double drop_tol = 1e-12;
  double var_t0 = 100.0, var_t1 = 400.0;
  ProfileConfig profiles;
};

struct CacheConfig {
  std::string dir;  // default: "<output_dir>/cache"
  enum class Policy { use, refresh, off } policy = Policy::use;
};

struct SolverConfig {
  double check_tol = 1e-8;
  std::int64_t dim_cap = 10000;
};

struct ScanConfig {
  double e_lo = 2.0, e_hi = 24.0, step = 0.5;
};

struct RunConfig {
  bool has_system = false;
  SystemConfig system;
  bool has_couplings = false;
  std::vector<double> g_a{}, g_b{}, g_ab{};  // axes; size > 1 forms a grid
  std::vector<std::string> stages;
  StatsConfig stats;
  EthConfig eth;
  QuenchConfig quench;
  ScanConfig scan;
  std::string output_dir;
  CacheConfig cache;
  SolverConfig solver;
  int threads = 1;
  std::uint64_t seed = 12345;
};

// Command-line values that take precedence over the config document; the
// effective config reflects them.
struct CliOverrides {
  std::optional<std::string> output_dir;
  std::optional<std::string> cache_dir;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

// Parse and schema-validate a config document.  Throws ConfigError naming
// the offending key on any violation; nothing is written to disk.
RunConfig parse_config(const std::string& json_text,
                       const CliOverrides& overrides = {});
RunConfig load_config(const std::string& path,
                      const CliOverrides& overrides = {});

// The fully-defaulted configuration as a JSON document.
std::string effective_config_json(const RunConfig& c);

// Executes the requested stages for every coupling point and returns the
// manifest path.  The output directory is created, owned exclusively via a
// lock file for the duration of the run, and left with the effective
// config, per-stage artifacts, and a manifest listing each artifact with
// its checksum.
std::string run_pipeline(const RunConfig& c);

// Renders a human-readable summary of a manifest: per-point scalars with
// their settings, stages marked absent when not run, and an artifact audit
// that flags checksum mismatches and missing files.  Throws IoError when
// the manifest cannot be read.
std::string report(const std::string& manifest_path);

// Dimension-versus-cutoff table over the configured scan range; writes
// dimension_scan.csv when an output directory is configured.  Returns the
// table as text and marks the first cutoff matching the target dimension
// when one is requested.
std::string scan_dimensions(const RunConfig& c);

// Filename-safe canonical tag for one coupling point.
std::string point_tag(double g_a, double g_b, double g_ab);

// Checksum of a file's bytes (64-bit FNV-1a), as used by the manifest.
std::uint64_t file_checksum(const std::string& path);

}  // namespace bbmix::pipeline
