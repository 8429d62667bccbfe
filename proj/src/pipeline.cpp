#include "bbmix/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include <Eigen/Dense>
#include <json.hpp>

#include "bbmix/diag.hpp"
#include "bbmix/eth.hpp"
#include "bbmix/hamiltonian.hpp"
#include "bbmix/interaction.hpp"
#include "bbmix/quench.hpp"
#include "bbmix/spectral.hpp"

namespace bbmix::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

[[noreturn]] void fail_cfg(const std::string& msg) {
  throw ConfigError("config: " + msg);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Schema-checked JSON access.  Every accessor reports the full key path of
// the offending entry.

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail_cfg(path + " must be an object");
}

void require_known_keys(const json& j, const std::string& path,
                        std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      fail_cfg("unknown key " + (path.empty() ? it.key() : path + "." +
                                                                it.key()));
  }
}

double get_num(const json& j, const std::string& path) {
  if (!j.is_number()) fail_cfg(path + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail_cfg(path + " must be finite");
  return v;
}

std::int64_t get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail_cfg(path + " must be an integer");
  return j.get<std::int64_t>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail_cfg(path + " must be a boolean");
  return j.get<bool>();
}

std::string get_str(const json& j, const std::string& path) {
  if (!j.is_string()) fail_cfg(path + " must be a string");
  return j.get<std::string>();
}

std::vector<double> get_axis(const json& j, const std::string& path) {
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(get_num(j, path));
    return out;
  }
  if (!j.is_array() || j.empty())
    fail_cfg(path + " must be a number or a nonempty array of numbers");
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(get_num(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

fock::Parity parse_parity(const std::string& s) {
  if (s == "even") return fock::Parity::even;
  if (s == "odd") return fock::Parity::odd;
  if (s == "both") return fock::Parity::both;
  fail_cfg("system.parity must be one of even, odd, both (got \"" + s +
           "\")");
}

const char* parity_name(fock::Parity p) {
  switch (p) {
    case fock::Parity::even: return "even";
    case fock::Parity::odd: return "odd";
    default: return "both";
  }
}

fock::Truncation parse_truncation(const std::string& s) {
  if (s == "per_component") return fock::Truncation::per_component;
  if (s == "total") return fock::Truncation::total;
  fail_cfg("system.truncation must be per_component or total (got \"" + s +
           "\")");
}

const char* truncation_name(fock::Truncation t) {
  return t == fock::Truncation::per_component ? "per_component" : "total";
}

SectorMode parse_sector_mode(const std::string& s) {
  if (s == "split") return SectorMode::split;
  if (s == "both") return SectorMode::both;
  if (s == "even") return SectorMode::even;
  fail_cfg("quench.sector_mode must be one of split, both, even (got \"" +
           s + "\")");
}

const char* sector_mode_name(SectorMode m) {
  switch (m) {
    case SectorMode::split: return "split";
    case SectorMode::both: return "both";
    default: return "even";
  }
}

CacheConfig::Policy parse_cache_policy(const std::string& s) {
  if (s == "use") return CacheConfig::Policy::use;
  if (s == "refresh") return CacheConfig::Policy::refresh;
  if (s == "off") return CacheConfig::Policy::off;
  fail_cfg("cache.policy must be one of use, refresh, off (got \"" + s +
           "\")");
}

const char* cache_policy_name(CacheConfig::Policy p) {
  switch (p) {
    case CacheConfig::Policy::use: return "use";
    case CacheConfig::Policy::refresh: return "refresh";
    default: return "off";
  }
}

// ---------------------------------------------------------------------------
// Filesystem helpers.

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(text.data(), std::streamsize(text.size()));
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

// Exclusive ownership of an output directory for the duration of a run.
class LockFile {
 public:
  explicit LockFile(const std::string& path) : path_(path) {
    const int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST)
        throw IoError("output directory is locked by another run (" + path +
                      " exists; remove it if that run is gone)");
      throw IoError("cannot create lock file " + path + ": " +
                    std::strerror(errno));
    }
    ::close(fd);
  }
  ~LockFile() { std::remove(path_.c_str()); }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::string path_;
};

// ---------------------------------------------------------------------------
// Spectrum cache.

std::uint64_t chained_hash(std::uint64_t h, const void* data,
                           std::size_t n) {
  return fock::fnv1a(data, n, h);
}

std::uint64_t spectrum_key(std::uint64_t basis_checksum,
                           const hamiltonian::Couplings& g,
                           const SolverConfig& s) {
  std::uint64_t h = kFnvOffset;
  h = chained_hash(h, &basis_checksum, sizeof basis_checksum);
  h = chained_hash(h, &g.g_a, sizeof g.g_a);
  h = chained_hash(h, &g.g_b, sizeof g.g_b);
  h = chained_hash(h, &g.g_ab, sizeof g.g_ab);
  h = chained_hash(h, &s.check_tol, sizeof s.check_tol);
  h = chained_hash(h, &s.dim_cap, sizeof s.dim_cap);
  return h;
}

struct SpectrumFetch {
  diag::SpectrumResult spec;
  bool cache_hit = false;
};

SpectrumFetch fetch_spectrum(const fock::BasisTable& basis,
                             const hamiltonian::Couplings& g,
                             const CacheConfig& cache,
                             const SolverConfig& solver) {
  std::string file;
  if (cache.policy != CacheConfig::Policy::off) {
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(
                      spectrum_key(basis.checksum(), g, solver)));
    file = cache.dir + "/spectrum_" + hex + ".bin";
  }

  if (cache.policy == CacheConfig::Policy::use && !file.empty() &&
      fs::exists(file)) {
    diag::SpectrumResult r;
    try {
      r = diag::load_spectrum(file, basis.checksum());
    } catch (const std::exception& e) {
      throw CacheError("cache file " + file + ": " + e.what());
    }
    const auto& pg = r.meta.provenance.couplings;
    if (std::memcmp(&pg.g_a, &g.g_a, sizeof(double)) != 0 ||
        std::memcmp(&pg.g_b, &g.g_b, sizeof(double)) != 0 ||
        std::memcmp(&pg.g_ab, &g.g_ab, sizeof(double)) != 0)
      throw CacheError("cache file " + file +
                       " holds different coupling strengths");
    return {std::move(r), true};
  }

  const int n = basis.meta().n_modes;
  const int cap = basis.meta().cap_a + basis.meta().cap_b;
  const auto wa = interaction::effective_pair_tensor(g.g_a, n, cap);
  const auto wb = interaction::effective_pair_tensor(g.g_b, n, cap);
  const auto wab = interaction::effective_pair_tensor(g.g_ab, n, cap);
  const auto h = hamiltonian::assemble_hamiltonian(basis, wa, wb, wab);
  diag::DiagOptions opts;
  opts.dim_cap = solver.dim_cap;
  opts.dense_cap = solver.dim_cap;
  opts.check_tol = solver.check_tol;
  auto spec =
      diag::diagonalize_full(h, diag::Provenance{g, basis.checksum()});

  if (cache.policy != CacheConfig::Policy::off && !file.empty()) {
    const std::string tmp = file + ".tmp";
    diag::save_spectrum(spec, tmp);
    std::error_code ec;
    fs::rename(tmp, file, ec);
    if (ec) throw IoError("cannot move spectrum into cache: " + ec.message());
  }
  return {std::move(spec), false};
}

// ---------------------------------------------------------------------------
// Stage guard: foreign exceptions become StageError with stage context.

template <typename F>
auto stage_guard(const char* stage, const std::string& tag, F&& f) {
  try {
    return f();
  } catch (ConfigError&) {
    throw;
  } catch (CacheError&) {
    throw;
  } catch (IoError&) {
    throw;
  } catch (StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(std::string("stage ") + stage + " (" + tag +
                     "): " + e.what());
  }
}

bool has_stage(const RunConfig& c, const char* name) {
  for (const auto& s : c.stages)
    if (s == name) return true;
  return false;
}

// Strict upper triangle of the retained-by-retained sub-block, row-major.
Eigen::VectorXd retained_offdiag(const Eigen::MatrixXd& elements,
                                 const std::vector<std::int64_t>& idx) {
  const std::int64_t k = std::int64_t(idx.size());
  Eigen::VectorXd out(k * (k - 1) / 2);
  std::int64_t p = 0;
  for (std::int64_t m = 0; m < k; ++m)
    for (std::int64_t n = m + 1; n < k; ++n)
      out[p++] = elements(idx[std::size_t(m)], idx[std::size_t(n)]);
  return out;
}

Eigen::VectorXd make_grid(double lo, double hi, double step) {
  const std::int64_t n = std::int64_t(std::round((hi - lo) / step)) + 1;
  Eigen::VectorXd g(n);
  for (std::int64_t p = 0; p < n; ++p) g[p] = lo + double(p) * step;
  return g;
}

}  // namespace

std::string point_tag(double g_a, double g_b, double g_ab) {
  return "gA" + fmt_short(g_a) + "_gB" + fmt_short(g_b) + "_gAB" +
         fmt_short(g_ab);
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for checksum: " + path);
  std::uint64_t h = kFnvOffset;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    const std::streamsize got = is.gcount();
    if (got > 0) h = chained_hash(h, buf, std::size_t(got));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Config parsing.

RunConfig parse_config(const std::string& json_text,
                       const CliOverrides& overrides) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    fail_cfg(std::string("not valid JSON: ") + e.what());
  }
  require_object(j, "config root");
  require_known_keys(j, "",
                     {"system", "couplings", "stages", "stats", "eth",
                      "quench", "scan", "output_dir", "cache", "solver",
                      "threads", "seed"});

  RunConfig c;

  // --- stages (optional at parse; run requires a nonempty list) -------
  if (j.contains("stages")) {
    if (!j["stages"].is_array() || j["stages"].empty())
      fail_cfg("stages must be a nonempty array");
    std::set<std::string> seen;
    for (const auto& s : j["stages"]) {
      const std::string name = get_str(s, "stages[]");
      if (name != "spectrum" && name != "stats" && name != "eth" &&
          name != "quench")
        fail_cfg("stages entry \"" + name +
                 "\" is not one of spectrum, stats, eth, quench");
      if (!seen.insert(name).second)
        fail_cfg("stages entry \"" + name + "\" is repeated");
      c.stages.push_back(name);
    }
  }

  // --- system ---------------------------------------------------------
  if (j.contains("system")) {
    const json& js = j["system"];
    require_object(js, "system");
    require_known_keys(js, "system",
                       {"n_a", "n_b", "e_max", "target_dimension", "parity",
                        "truncation"});
    c.has_system = true;
    if (!js.contains("n_a") || !js.contains("n_b"))
      fail_cfg("system.n_a and system.n_b are required");
    const std::int64_t na = get_int(js["n_a"], "system.n_a");
    const std::int64_t nb = get_int(js["n_b"], "system.n_b");
    if (na < 0 || nb < 0 || na + nb < 1 || na > 16 || nb > 16)
      fail_cfg("system particle numbers must be >= 0 with at least one "
               "particle and at most 16 per component");
    c.system.n_a = int(na);
    c.system.n_b = int(nb);
    if (js.contains("parity"))
      c.system.parity = parse_parity(get_str(js["parity"], "system.parity"));
    if (js.contains("truncation"))
      c.system.truncation =
          parse_truncation(get_str(js["truncation"], "system.truncation"));
    const bool has_emax = js.contains("e_max");
    const bool has_target = js.contains("target_dimension");
    if (has_emax == has_target)
      fail_cfg("system needs exactly one of e_max or target_dimension");
    if (has_emax) {
      c.system.e_max = get_num(js["e_max"], "system.e_max");
      if (c.system.e_max <= 0.0 || c.system.e_max > 1000.0)
        fail_cfg("system.e_max must be in (0, 1000]");
    } else {
      const std::int64_t target =
          get_int(js["target_dimension"], "system.target_dimension");
      if (target < 1 || target > 1000000000)
        fail_cfg("system.target_dimension must be in [1, 1e9]");
      c.system.target_dimension = target;
      const auto rows =
          fock::dimension_scan(c.system.n_a, c.system.n_b, c.system.parity,
                               1.0, 60.0, 0.5, c.system.truncation);
      bool found = false;
      for (const auto& r : rows)
        if (r.dim == target) {
          c.system.e_max = r.e_max;
          found = true;
          break;
        }
      if (!found)
        fail_cfg("system.target_dimension " + std::to_string(target) +
                 " is not reached exactly by any cutoff in [1, 60]");
    }
  }

  // --- couplings ------------------------------------------------------
  if (j.contains("couplings")) {
    const json& jc = j["couplings"];
    require_object(jc, "couplings");
    require_known_keys(jc, "couplings", {"g_a", "g_b", "g_ab"});
    for (const char* k : {"g_a", "g_b", "g_ab"})
      if (!jc.contains(k))
        fail_cfg(std::string("couplings.") + k + " is required");
    c.has_couplings = true;
    c.g_a = get_axis(jc["g_a"], "couplings.g_a");
    c.g_b = get_axis(jc["g_b"], "couplings.g_b");
    c.g_ab = get_axis(jc["g_ab"], "couplings.g_ab");
  }

  // --- stats ----------------------------------------------------------
  if (j.contains("stats")) {
    const json& jt = j["stats"];
    require_object(jt, "stats");
    require_known_keys(jt, "stats",
                       {"discard_low", "discard_high", "poly_degree",
                        "hist_bins", "synthetic"});
    if (jt.contains("discard_low"))
      c.stats.discard_low = get_num(jt["discard_low"], "stats.discard_low");
    if (jt.contains("discard_high"))
      c.stats.discard_high =
          get_num(jt["discard_high"], "stats.discard_high");
    if (c.stats.discard_low < 0.0 || c.stats.discard_low >= 0.5 ||
        c.stats.discard_high < 0.0 || c.stats.discard_high >= 0.5)
      fail_cfg("stats discard fractions must lie in [0, 0.5)");
    if (jt.contains("poly_degree")) {
      const std::int64_t d = get_int(jt["poly_degree"], "stats.poly_degree");
      if (d < 3 || d > 20) fail_cfg("stats.poly_degree must be in [3, 20]");
      c.stats.poly_degree = int(d);
    }
    if (jt.contains("hist_bins")) {
      const std::int64_t b = get_int(jt["hist_bins"], "stats.hist_bins");
      if (b < 5 || b > 200) fail_cfg("stats.hist_bins must be in [5, 200]");
      c.stats.hist_bins = int(b);
    }
    if (jt.contains("synthetic")) {
      const json& sy = jt["synthetic"];
      require_object(sy, "stats.synthetic");
      require_known_keys(sy, "stats.synthetic", {"kind", "n", "beta"});
      SyntheticConfig sc;
      if (!sy.contains("kind") || !sy.contains("n"))
        fail_cfg("stats.synthetic.kind and stats.synthetic.n are required");
      sc.kind = get_str(sy["kind"], "stats.synthetic.kind");
      if (sc.kind != "poisson" && sc.kind != "wigner" && sc.kind != "brody")
        fail_cfg("stats.synthetic.kind must be poisson, wigner, or brody");
      sc.n = get_int(sy["n"], "stats.synthetic.n");
      if (sc.n < 1000 || sc.n > 100000000)
        fail_cfg("stats.synthetic.n must be in [1000, 1e8]");
      if (sc.kind == "brody") {
        if (!sy.contains("beta"))
          fail_cfg("stats.synthetic.beta is required for kind brody");
        sc.beta = get_num(sy["beta"], "stats.synthetic.beta");
      } else {
        sc.beta = sc.kind == "wigner" ? 1.0 : 0.0;
        if (sy.contains("beta"))
          sc.beta = get_num(sy["beta"], "stats.synthetic.beta");
      }
      if (sc.beta < 0.0 || sc.beta > 1.2)
        fail_cfg("stats.synthetic.beta must be in [0, 1.2]");
      c.stats.synthetic = sc;
    }
  }

  // --- eth ------------------------------------------------------------
  if (j.contains("eth")) {
    const json& je = j["eth"];
    require_object(je, "eth");
    require_known_keys(je, "eth",
                       {"window", "sector_filter", "threshold",
                        "export_elements"});
    if (je.contains("window")) {
      const json& w = je["window"];
      if (!w.is_array() || w.size() != 2)
        fail_cfg("eth.window must be an array [lo, hi]");
      c.eth.window_lo = get_int(w[0], "eth.window[0]");
      c.eth.window_hi = get_int(w[1], "eth.window[1]");
    }
    if (c.eth.window_lo < 0 || c.eth.window_hi <= c.eth.window_lo)
      fail_cfg("eth.window must satisfy 0 <= lo < hi");
    if (je.contains("sector_filter"))
      c.eth.sector_filter = get_bool(je["sector_filter"],
                                     "eth.sector_filter");
    if (je.contains("threshold")) {
      c.eth.threshold = get_num(je["threshold"], "eth.threshold");
      if (c.eth.threshold <= 0.0 || c.eth.threshold >= 1.0)
        fail_cfg("eth.threshold must lie in (0, 1)");
    }
    if (je.contains("export_elements"))
      c.eth.export_elements =
          get_bool(je["export_elements"], "eth.export_elements");
  }

  // --- quench ---------------------------------------------------------
  if (j.contains("quench")) {
    const json& jq = j["quench"];
    require_object(jq, "quench");
    require_known_keys(jq, "quench",
                       {"sector_mode", "b_construction", "a_pair_sum", "t0",
                        "t1", "dt", "delta_e", "drop_tol", "var_t0",
                        "var_t1", "profiles"});
    if (jq.contains("sector_mode"))
      c.quench.sector_mode =
          parse_sector_mode(get_str(jq["sector_mode"], "quench.sector_mode"));
    if (jq.contains("b_construction")) {
      c.quench.b_construction =
          get_str(jq["b_construction"], "quench.b_construction");
      if (c.quench.b_construction != "fock_superposition" &&
          c.quench.b_construction != "literal_symmetrized")
        fail_cfg("quench.b_construction must be fock_superposition or "
                 "literal_symmetrized");
    }
    if (jq.contains("a_pair_sum")) {
      const std::int64_t s = get_int(jq["a_pair_sum"], "quench.a_pair_sum");
      if (s < 1 || s > 59 || s % 2 == 0)
        fail_cfg("quench.a_pair_sum must be an odd integer in [1, 59]");
      c.quench.a_pair_sum = int(s);
    }
    if (jq.contains("t0")) c.quench.t0 = get_num(jq["t0"], "quench.t0");
    if (jq.contains("t1")) c.quench.t1 = get_num(jq["t1"], "quench.t1");
    if (jq.contains("dt")) c.quench.dt = get_num(jq["dt"], "quench.dt");
    if (c.quench.t0 < 0.0 || c.quench.t1 <= c.quench.t0 ||
        c.quench.dt <= 0.0)
      fail_cfg("quench time grid needs 0 <= t0 < t1 and dt > 0");
    if ((c.quench.t1 - c.quench.t0) / c.quench.dt > 5e6)
      fail_cfg("quench time grid exceeds 5e6 samples");
    if (jq.contains("delta_e")) {
      c.quench.delta_e = get_num(jq["delta_e"], "quench.delta_e");
      if (c.quench.delta_e <= 0.0)
        fail_cfg("quench.delta_e must be positive");
    }
    if (jq.contains("drop_tol")) {
      c.quench.drop_tol = get_num(jq["drop_tol"], "quench.drop_tol");
      if (c.quench.drop_tol < 0.0 || c.quench.drop_tol >= 1.0)
        fail_cfg("quench.drop_tol must lie in [0, 1)");
    }
    if (jq.contains("var_t0"))
      c.quench.var_t0 = get_num(jq["var_t0"], "quench.var_t0");
    if (jq.contains("var_t1"))
      c.quench.var_t1 = get_num(jq["var_t1"], "quench.var_t1");
    if (!(c.quench.var_t0 < c.quench.var_t1) ||
        c.quench.var_t0 < c.quench.t0 || c.quench.var_t1 > c.quench.t1)
      fail_cfg("quench variance window [var_t0, var_t1] must be ordered and "
               "lie inside [t0, t1]");
    if (jq.contains("profiles")) {
      const json& jp = jq["profiles"];
      require_object(jp, "quench.profiles");
      require_known_keys(jp, "quench.profiles",
                         {"enable", "x_lo", "x_hi", "x_step", "times",
                          "momentum", "k_lo", "k_hi", "k_step"});
      auto& p = c.quench.profiles;
      if (jp.contains("enable"))
        p.enable = get_bool(jp["enable"], "quench.profiles.enable");
      if (jp.contains("x_lo"))
        p.x_lo = get_num(jp["x_lo"], "quench.profiles.x_lo");
      if (jp.contains("x_hi"))
        p.x_hi = get_num(jp["x_hi"], "quench.profiles.x_hi");
      if (jp.contains("x_step"))
        p.x_step = get_num(jp["x_step"], "quench.profiles.x_step");
      if (jp.contains("momentum"))
        p.momentum = get_bool(jp["momentum"], "quench.profiles.momentum");
      if (jp.contains("k_lo"))
        p.k_lo = get_num(jp["k_lo"], "quench.profiles.k_lo");
      if (jp.contains("k_hi"))
        p.k_hi = get_num(jp["k_hi"], "quench.profiles.k_hi");
      if (jp.contains("k_step"))
        p.k_step = get_num(jp["k_step"], "quench.profiles.k_step");
      if (jp.contains("times")) {
        const json& ts = jp["times"];
        if (!ts.is_array())
          fail_cfg("quench.profiles.times must be an array");
        for (std::size_t i = 0; i < ts.size(); ++i)
          p.times.push_back(get_num(
              ts[i], "quench.profiles.times[" + std::to_string(i) + "]"));
      }
      if (p.x_step <= 0.0 || p.x_hi <= p.x_lo || p.k_step <= 0.0 ||
          p.k_hi <= p.k_lo)
        fail_cfg("quench.profiles grids need lo < hi and positive steps");
      if (p.enable && p.times.empty())
        fail_cfg("quench.profiles.times must be nonempty when profiles are "
                 "enabled");
      for (const double t : p.times)
        if (t < 0.0) fail_cfg("quench.profiles.times must be nonnegative");
    }
  }

  // --- scan -----------------------------------------------------------
  if (j.contains("scan")) {
    const json& jsc = j["scan"];
    require_object(jsc, "scan");
    require_known_keys(jsc, "scan", {"e_lo", "e_hi", "step"});
    if (jsc.contains("e_lo")) c.scan.e_lo = get_num(jsc["e_lo"], "scan.e_lo");
    if (jsc.contains("e_hi")) c.scan.e_hi = get_num(jsc["e_hi"], "scan.e_hi");
    if (jsc.contains("step")) c.scan.step = get_num(jsc["step"], "scan.step");
    if (c.scan.e_lo <= 0.0 || c.scan.e_hi < c.scan.e_lo ||
        c.scan.step <= 0.0)
      fail_cfg("scan range needs 0 < e_lo <= e_hi and step > 0");
  }

  // --- output / cache / solver / misc --------------------------------
  if (j.contains("output_dir"))
    c.output_dir = get_str(j["output_dir"], "output_dir");
  if (j.contains("cache")) {
    const json& jc = j["cache"];
    require_object(jc, "cache");
    require_known_keys(jc, "cache", {"dir", "policy"});
    if (jc.contains("dir")) c.cache.dir = get_str(jc["dir"], "cache.dir");
    if (jc.contains("policy"))
      c.cache.policy =
          parse_cache_policy(get_str(jc["policy"], "cache.policy"));
  }
  if (j.contains("solver")) {
    const json& jv = j["solver"];
    require_object(jv, "solver");
    require_known_keys(jv, "solver", {"check_tol", "dim_cap"});
    if (jv.contains("check_tol")) {
      c.solver.check_tol = get_num(jv["check_tol"], "solver.check_tol");
      if (c.solver.check_tol <= 0.0 || c.solver.check_tol > 1e-2)
        fail_cfg("solver.check_tol must lie in (0, 1e-2]");
    }
    if (jv.contains("dim_cap")) {
      c.solver.dim_cap = get_int(jv["dim_cap"], "solver.dim_cap");
      if (c.solver.dim_cap < 1) fail_cfg("solver.dim_cap must be positive");
    }
  }
  if (j.contains("threads")) {
    const std::int64_t t = get_int(j["threads"], "threads");
    if (t < 1 || t > 256) fail_cfg("threads must be in [1, 256]");
    c.threads = int(t);
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer() ||
        (!j["seed"].is_number_unsigned() &&
         j["seed"].get<std::int64_t>() < 0))
      fail_cfg("seed must be a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }

  // --- overrides ------------------------------------------------------
  if (overrides.output_dir) c.output_dir = *overrides.output_dir;
  if (overrides.cache_dir) c.cache.dir = *overrides.cache_dir;
  if (overrides.threads) {
    if (*overrides.threads < 1 || *overrides.threads > 256)
      fail_cfg("threads must be in [1, 256]");
    c.threads = *overrides.threads;
  }
  if (overrides.seed) c.seed = *overrides.seed;
  if (c.cache.dir.empty())
    c.cache.dir =
        c.output_dir.empty() ? "cache" : c.output_dir + "/cache";

  // --- cross-field rules ----------------------------------------------
  const bool synthetic_stats = c.stats.synthetic.has_value();
  if (synthetic_stats) {
    if (c.stages != std::vector<std::string>{"stats"})
      fail_cfg("stats.synthetic requires stages == [\"stats\"]");
    if (c.has_system || c.has_couplings)
      fail_cfg("stats.synthetic replaces the physical system; remove the "
               "system and couplings blocks");
  }
  const bool grid =
      c.g_a.size() > 1 || c.g_b.size() > 1 || c.g_ab.size() > 1;
  if (grid && has_stage(c, "quench"))
    fail_cfg("coupling grids do not support the quench stage; run quench "
             "points individually");

  return c;
}

RunConfig load_config(const std::string& path, const CliOverrides& o) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), o);
}

std::string effective_config_json(const RunConfig& c) {
  json j;
  if (c.has_system) {
    j["system"] = {{"n_a", c.system.n_a},
                   {"n_b", c.system.n_b},
                   {"e_max", c.system.e_max},
                   {"parity", parity_name(c.system.parity)},
                   {"truncation", truncation_name(c.system.truncation)}};
  }
  if (c.has_couplings)
    j["couplings"] = {{"g_a", c.g_a}, {"g_b", c.g_b}, {"g_ab", c.g_ab}};
  j["stages"] = c.stages;
  j["stats"] = {{"discard_low", c.stats.discard_low},
                {"discard_high", c.stats.discard_high},
                {"poly_degree", c.stats.poly_degree},
                {"hist_bins", c.stats.hist_bins}};
  if (c.stats.synthetic)
    j["stats"]["synthetic"] = {{"kind", c.stats.synthetic->kind},
                               {"n", c.stats.synthetic->n},
                               {"beta", c.stats.synthetic->beta}};
  j["eth"] = {{"window", {c.eth.window_lo, c.eth.window_hi}},
              {"sector_filter", c.eth.sector_filter},
              {"threshold", c.eth.threshold},
              {"export_elements", c.eth.export_elements}};
  j["quench"] = {
      {"sector_mode", sector_mode_name(c.quench.sector_mode)},
      {"b_construction", c.quench.b_construction},
      {"a_pair_sum", c.quench.a_pair_sum},
      {"t0", c.quench.t0},
      {"t1", c.quench.t1},
      {"dt", c.quench.dt},
      {"delta_e", c.quench.delta_e},
      {"drop_tol", c.quench.drop_tol},
      {"var_t0", c.quench.var_t0},
      {"var_t1", c.quench.var_t1},
      {"profiles",
       {{"enable", c.quench.profiles.enable},
        {"x_lo", c.quench.profiles.x_lo},
        {"x_hi", c.quench.profiles.x_hi},
        {"x_step", c.quench.profiles.x_step},
        {"times", c.quench.profiles.times},
        {"momentum", c.quench.profiles.momentum},
        {"k_lo", c.quench.profiles.k_lo},
        {"k_hi", c.quench.profiles.k_hi},
        {"k_step", c.quench.profiles.k_step}}}};
  j["scan"] = {{"e_lo", c.scan.e_lo},
               {"e_hi", c.scan.e_hi},
               {"step", c.scan.step}};
  j["output_dir"] = c.output_dir;
  j["cache"] = {{"dir", c.cache.dir},
                {"policy", cache_policy_name(c.cache.policy)}};
  j["solver"] = {{"check_tol", c.solver.check_tol},
                 {"dim_cap", c.solver.dim_cap}};
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Run orchestration.

namespace {

// Per-run mutable state shared by the stage executors.
struct Runner {
  const RunConfig& cfg;
  std::string out;
  std::vector<std::string> artifacts;  // relative paths, creation order
  std::vector<std::string> brody_rows, kurt_rows;

  explicit Runner(const RunConfig& c) : cfg(c), out(c.output_dir) {}

  void emit(const std::string& rel, const std::string& text) {
    write_text(out + "/" + rel, text);
    artifacts.push_back(rel);
  }

  std::string grid_row(const hamiltonian::Couplings& g,
                       const std::string& rest) const {
    return fmt(g.g_a) + "," + fmt(g.g_b) + "," + fmt(g.g_ab) + "," + rest +
           "\n";
  }

  // ---- stats --------------------------------------------------------
  json stats_stage(const std::string& tag, const hamiltonian::Couplings& g,
                   const diag::SpectrumResult* spec) {
    json out_j;
    Eigen::VectorXd samples;
    if (cfg.stats.synthetic) {
      const auto& sy = *cfg.stats.synthetic;
      samples = spectral::brody_spacing_samples(sy.n, sy.beta, cfg.seed);
      out_j["synthetic"] = {{"kind", sy.kind},
                            {"n", sy.n},
                            {"beta", sy.beta},
                            {"seed", cfg.seed}};
    } else {
      spectral::UnfoldOptions uo;
      uo.discard_low = cfg.stats.discard_low;
      uo.discard_high = cfg.stats.discard_high;
      uo.poly_degree = cfg.stats.poly_degree;
      const auto u = spectral::unfold(spec->energies, uo);
      samples = spectral::spacings(u);
      out_j["unfold"] = {{"poly_degree", u.poly_degree},
                         {"discard_low", u.discard_low},
                         {"discard_high", u.discard_high},
                         {"mean_spacing", u.mean_spacing}};
    }

    const auto fit =
        spectral::brody_fit_histogram(samples, cfg.stats.hist_bins, 4.0);
    const bool fitted = fit.outcome == spectral::BrodyOutcome::fitted;
    out_j["estimator"] = "histogram";
    out_j["outcome"] = fitted ? "fitted" : "not_fittable";
    out_j["beta"] = fit.beta;
    out_j["b"] = fit.b;
    out_j["residual"] = fit.residual;
    out_j["sample_count"] = fit.sample_count;
    out_j["zeros_dropped"] = fit.zeros_dropped;
    out_j["spacing_variance"] = fit.spacing_variance;
    const auto mle = spectral::brody_fit_mle(samples);
    if (mle.outcome == spectral::BrodyOutcome::fitted) {
      out_j["beta_mle"] = mle.beta;
      out_j["log_likelihood"] = mle.log_likelihood;
    } else {
      out_j["beta_mle"] = nullptr;
      out_j["log_likelihood"] = nullptr;
    }

    const auto hist =
        spectral::spacing_histogram(samples, cfg.stats.hist_bins, 4.0);
    std::ostringstream hcsv;
    hcsv << "bin_lo,bin_hi,density,count,brody,poisson,wigner\n";
    for (std::int64_t b = 0; b < hist.density.size(); ++b) {
      const double mid = 0.5 * (hist.edges[b] + hist.edges[b + 1]);
      hcsv << fmt(hist.edges[b]) << "," << fmt(hist.edges[b + 1]) << ","
           << fmt(hist.density[b]) << "," << hist.counts[b] << ","
           << fmt(fitted ? spectral::brody_pdf(fit.beta, mid)
                         : std::numeric_limits<double>::quiet_NaN())
           << "," << fmt(spectral::poisson_pdf(mid)) << ","
           << fmt(spectral::wigner_dyson_pdf(mid)) << "\n";
    }
    emit("spacing_hist_" + tag + ".csv", hcsv.str());

    std::ostringstream scsv;
    scsv << "index,spacing\n";
    for (std::int64_t i = 0; i < samples.size(); ++i)
      scsv << i << "," << fmt(samples[i]) << "\n";
    emit("spacings_" + tag + ".csv", scsv.str());

    emit("stats_" + tag + ".json", out_j.dump(2) + "\n");
    out_j["artifacts"] = {"stats_" + tag + ".json",
                          "spacing_hist_" + tag + ".csv",
                          "spacings_" + tag + ".csv"};
    brody_rows.push_back(grid_row(
        g, fmt(fitted ? fit.beta : std::numeric_limits<double>::quiet_NaN()) +
               "," + (fitted ? "fitted" : "not_fittable") + "," +
               fmt(fit.spacing_variance)));
    return out_j;
  }

  // ---- eth ----------------------------------------------------------
  json eth_stage(const std::string& tag, const hamiltonian::Couplings& g,
                 const fock::BasisTable& basis,
                 const diag::SpectrumResult& spec,
                 const hamiltonian::SymmetricSparse& trap) {
    if (cfg.eth.window_hi >= spec.meta.count)
      throw StageError("stage eth (" + tag + "): window [" +
                       std::to_string(cfg.eth.window_lo) + ", " +
                       std::to_string(cfg.eth.window_hi) +
                       "] leaves the spectrum of " +
                       std::to_string(spec.meta.count) + " states");
    const eth::Window w{cfg.eth.window_lo, cfg.eth.window_hi};
    const auto obs = eth::observable_matrix(spec, trap, w);
    const auto off = eth::offdiag_elements(obs);
    const double kurt = eth::kurtosis(off);
    const auto gauss = eth::gaussian_fit(off);

    json out_j;
    out_j["window_lo"] = w.lo;
    out_j["window_hi"] = w.hi;
    out_j["n_offdiag"] = off.size();
    out_j["kurtosis"] = kurt;
    out_j["inverse_kurtosis"] = 1.0 / kurt;
    out_j["gaussian_mean"] = gauss.mean;
    out_j["gaussian_stddev"] = gauss.stddev;
    out_j["gaussian_residual"] = gauss.residual;

    const bool filter_applies =
        cfg.eth.sector_filter &&
        basis.meta().n_a == basis.meta().n_b;
    json jf;
    jf["applied"] = filter_applies;
    jf["threshold"] = cfg.eth.threshold;
    if (filter_applies) {
      const auto lab = eth::sector_filter(spec, basis, cfg.eth.threshold);
      jf["removed_count"] = lab.removed_count;
      jf["removed_fraction"] = lab.removed_fraction;
      std::vector<std::int64_t> idx;  // retained rows inside the window
      for (std::int64_t m = w.lo; m <= w.hi; ++m)
        if (lab.retained[std::size_t(m)]) idx.push_back(m - w.lo);
      jf["window_retained"] = std::int64_t(idx.size());
      if (std::int64_t(idx.size()) * (std::int64_t(idx.size()) - 1) / 2 >=
          1000) {
        const auto roff = retained_offdiag(obs.elements, idx);
        const double rk = eth::kurtosis(roff);
        jf["retained_kurtosis"] = rk;
        jf["retained_inverse_kurtosis"] = 1.0 / rk;
      } else {
        jf["retained_kurtosis"] = nullptr;
        jf["retained_inverse_kurtosis"] = nullptr;
      }

      // Remove-and-recompute protocol: drop the filtered states from the
      // spectrum, then rerun the same windowed analysis on what remains.
      // The window indices therefore address the retained ordering.
      std::vector<std::int64_t> keep;
      for (std::int64_t m = 0; m < spec.meta.count; ++m)
        if (lab.retained[std::size_t(m)]) keep.push_back(m);
      if (std::int64_t(keep.size()) > w.hi) {
        const std::int64_t olo = keep[std::size_t(w.lo)];
        const std::int64_t ohi = keep[std::size_t(w.hi)];
        const auto obs2 = eth::observable_matrix(spec, trap, {olo, ohi});
        std::vector<std::int64_t> ridx;
        for (std::int64_t a = w.lo; a <= w.hi; ++a)
          ridx.push_back(keep[std::size_t(a)] - olo);
        const auto roff2 = retained_offdiag(obs2.elements, ridx);
        const double rk2 = eth::kurtosis(roff2);
        jf["recomputed_kurtosis"] = rk2;
        jf["recomputed_inverse_kurtosis"] = 1.0 / rk2;
        jf["recomputed_window"] = {olo, ohi};
      } else {
        jf["recomputed_kurtosis"] = nullptr;
        jf["recomputed_inverse_kurtosis"] = nullptr;
        jf["recomputed_window"] = nullptr;
      }
    }
    out_j["filter"] = jf;

    const auto band = eth::offdiag_band_profile(obs);
    std::ostringstream bcsv;
    bcsv << "omega,magnitude\n";
    for (std::int64_t i = 0; i < band.omega.size(); ++i)
      bcsv << fmt(band.omega[i]) << "," << fmt(band.magnitude[i]) << "\n";
    emit("offdiag_band_" + tag + ".csv", bcsv.str());

    if (cfg.eth.export_elements) {
      const std::string rel = "observable_elements_" + tag + ".csv";
      eth::export_observable_csv(out + "/" + rel, obs);
      artifacts.push_back(rel);
    }
    emit("eth_" + tag + ".json", out_j.dump(2) + "\n");

    kurt_rows.push_back(grid_row(g, fmt(1.0 / kurt)));
    return out_j;
  }

  // ---- quench -------------------------------------------------------
  json quench_stage(const std::string& tag, const hamiltonian::Couplings& g,
                    json& cache_log) {
    const auto& qc = cfg.quench;
    const auto& sysc = cfg.system;

    fock::BasisTable work_basis =
        fock::enumerate_basis(sysc.n_a, sysc.n_b, sysc.e_max,
                              qc.sector_mode == SectorMode::even
                                  ? fock::Parity::even
                                  : fock::Parity::both,
                              sysc.truncation);
    diag::SpectrumResult spec;
    if (qc.sector_mode == SectorMode::split) {
      const auto be = fock::enumerate_basis(sysc.n_a, sysc.n_b, sysc.e_max,
                                            fock::Parity::even,
                                            sysc.truncation);
      const auto bo = fock::enumerate_basis(sysc.n_a, sysc.n_b, sysc.e_max,
                                            fock::Parity::odd,
                                            sysc.truncation);
      auto fe = fetch_spectrum(be, g, cfg.cache, cfg.solver);
      cache_log.push_back({{"label", "quench_even"}, {"hit", fe.cache_hit}});
      auto fo = fetch_spectrum(bo, g, cfg.cache, cfg.solver);
      cache_log.push_back({{"label", "quench_odd"}, {"hit", fo.cache_hit}});
      spec = quench::merge_sector_spectra(work_basis, be, fe.spec, bo,
                                          fo.spec);
    } else {
      auto f = fetch_spectrum(work_basis, g, cfg.cache, cfg.solver);
      cache_log.push_back(
          {{"label", qc.sector_mode == SectorMode::even ? "quench_even_only"
                                                        : "quench_both"},
           {"hit", f.cache_hit}});
      spec = std::move(f.spec);
    }

    quench::InitialStateSpec state_spec = quench::default_quench_spec(
        qc.b_construction == "literal_symmetrized"
            ? quench::BConstruction::literal_symmetrized
            : quench::BConstruction::fock_superposition);
    state_spec.a_terms.clear();
    for (int i = 0; 2 * i < qc.a_pair_sum; ++i)
      state_spec.a_terms.push_back({i, qc.a_pair_sum - i, 1.0});
    const Eigen::VectorXd psi =
        quench::build_initial_state(state_spec, work_basis);
    double e_ini = 0.0;
    for (std::int64_t s = 0; s < psi.size(); ++s)
      if (psi[s] != 0.0) e_ini += psi[s] * psi[s] * work_basis.energy(s);

    const auto ov = quench::overlaps(psi, spec);
    const auto trap = hamiltonian::trap_operator(work_basis);
    const auto times = quench::uniform_times(qc.t0, qc.t1, qc.dt);

    quench::QuenchRecord rec;
    rec.couplings = g;
    rec.sector_mode = sector_mode_name(qc.sector_mode);
    rec.b_construction = qc.b_construction;
    rec.e_initial = e_ini;
    rec.completeness = ov.completeness;
    rec.delta_e = qc.delta_e;
    rec.times = times;
    rec.overlaps = ov.c;
    rec.density_de_me = std::numeric_limits<double>::quiet_NaN();

    {
      const auto obs = eth::observable_matrix(
          spec, trap, {0, spec.meta.count - 1});
      const Eigen::VectorXd diag_u = obs.elements.diagonal();
      rec.u_de = quench::diagonal_ensemble(ov.c, diag_u);
      rec.e_mid = (ov.c.array().square() * spec.energies.array()).sum();
      const auto me = quench::microcanonical_ensemble(
          spec, diag_u, {rec.e_mid, qc.delta_e});
      rec.u_me = me.value;
      rec.n_mc = me.n_mc;

      auto series = quench::evolve_expectation(obs, ov.c, spec.energies,
                                               times, qc.drop_tol);
      rec.dropped_mass = series.dropped_mass;
      rec.drop_warning = series.drop_warning;
      rec.potential_series = series.values;

      const auto met = quench::thermalization_metrics(
          series, rec.u_de, rec.u_me, qc.var_t0, qc.var_t1);
      rec.variance = met.variance;
      rec.de_me_deviation = met.de_me_deviation;
      rec.de_me_defined = met.de_me_defined;
      rec.delta_series = met.delta_series;

      if (qc.profiles.enable) {
        const auto& pc = qc.profiles;
        const auto xg = make_grid(pc.x_lo, pc.x_hi, pc.x_step);
        const hamiltonian::OneBodyMoveTable tb(work_basis,
                                               hamiltonian::Component::b);
        Eigen::VectorXd w_de = ov.c.array().square();
        for (std::int64_t m = 0; m < w_de.size(); ++m)
          if (w_de[m] < 1e-16) w_de[m] = 0.0;
        const Eigen::MatrixXd rho_de =
            quench::averaged_density_matrix(spec, tb, w_de);
        Eigen::VectorXd w_me = Eigen::VectorXd::Zero(ov.c.size());
        for (const auto m : me.members) w_me[m] = 1.0 / double(me.n_mc);
        const Eigen::MatrixXd rho_me =
            quench::averaged_density_matrix(spec, tb, w_me);
        const auto n_de = quench::density_from_matrix(rho_de, xg);
        const auto n_me = quench::density_from_matrix(rho_me, xg);

        rec.profile_times =
            Eigen::Map<const Eigen::VectorXd>(pc.times.data(),
                                              std::int64_t(pc.times.size()));
        Eigen::MatrixXd traj(xg.size(), rec.profile_times.size());
        for (std::int64_t q = 0; q < rec.profile_times.size(); ++q)
          traj.col(q) = quench::density_profile(
              tb, quench::state_at(spec, ov.c, rec.profile_times[q]), xg);
        const auto dev =
            quench::profile_deviations(xg, traj, n_me, n_de);
        rec.density_deviation = dev.integrated;
        rec.density_de_me = dev.de_me_integrated;

        std::ostringstream pcsv;
        pcsv << "x,density_de,density_me\n";
        for (std::int64_t p = 0; p < xg.size(); ++p)
          pcsv << fmt(xg[p]) << "," << fmt(n_de[p]) << "," << fmt(n_me[p])
               << "\n";
        emit("density_de_me_" + tag + ".csv", pcsv.str());

        const std::string st_rel = "density_spacetime_" + tag + ".bin";
        quench::save_spacetime(out + "/" + st_rel, xg, rec.profile_times,
                               traj);
        artifacts.push_back(st_rel);

        Eigen::VectorXd mom_dev;
        if (pc.momentum) {
          const auto kg = make_grid(pc.k_lo, pc.k_hi, pc.k_step);
          const hamiltonian::OneBodyMoveTable ta(work_basis,
                                                 hamiltonian::Component::a);
          const Eigen::MatrixXd rho_me_a =
              quench::averaged_density_matrix(spec, ta, w_me);
          Eigen::MatrixXd rho_me_tot = rho_me_a + rho_me;
          const auto nk_me = quench::momentum_from_matrix(
              rho_me_tot.cast<std::complex<double>>(), kg);
          const Eigen::MatrixXd rho_de_a =
              quench::averaged_density_matrix(spec, ta, w_de);
          Eigen::MatrixXd rho_de_tot = rho_de_a + rho_de;
          const auto nk_de = quench::momentum_from_matrix(
              rho_de_tot.cast<std::complex<double>>(), kg);
          Eigen::MatrixXd ktraj(kg.size(), rec.profile_times.size());
          for (std::int64_t q = 0; q < rec.profile_times.size(); ++q)
            ktraj.col(q) = quench::momentum_profile(
                ta, tb, quench::state_at(spec, ov.c, rec.profile_times[q]),
                kg);
          const auto kdev =
              quench::profile_deviations(kg, ktraj, nk_me, nk_de);
          mom_dev = kdev.integrated;
          std::ostringstream kcsv;
          kcsv << "k,momentum_de,momentum_me\n";
          for (std::int64_t p = 0; p < kg.size(); ++p)
            kcsv << fmt(kg[p]) << "," << fmt(nk_de[p]) << ","
                 << fmt(nk_me[p]) << "\n";
          emit("momentum_de_me_" + tag + ".csv", kcsv.str());
        }
        rec.momentum_deviation = mom_dev;

        std::ostringstream dcsv;
        dcsv << "t,density_deviation";
        if (pc.momentum) dcsv << ",momentum_deviation";
        dcsv << "\n";
        for (std::int64_t q = 0; q < rec.profile_times.size(); ++q) {
          dcsv << fmt(rec.profile_times[q]) << ","
               << fmt(rec.density_deviation[q]);
          if (pc.momentum) dcsv << "," << fmt(mom_dev[q]);
          dcsv << "\n";
        }
        emit("profile_deviation_" + tag + ".csv", dcsv.str());
      }
    }

    std::uint64_t sc = kFnvOffset;
    sc = chained_hash(sc, &g.g_a, sizeof g.g_a);
    sc = chained_hash(sc, &g.g_b, sizeof g.g_b);
    sc = chained_hash(sc, &g.g_ab, sizeof g.g_ab);
    const double tgrid[3] = {qc.t0, qc.t1, qc.dt};
    sc = chained_hash(sc, tgrid, sizeof tgrid);
    sc = chained_hash(sc, &qc.delta_e, sizeof qc.delta_e);
    sc = chained_hash(sc, &qc.a_pair_sum, sizeof qc.a_pair_sum);
    const auto bc = work_basis.checksum();
    sc = chained_hash(sc, &bc, sizeof bc);
    sc = chained_hash(sc, rec.sector_mode.data(), rec.sector_mode.size());
    sc = chained_hash(sc, rec.b_construction.data(),
                      rec.b_construction.size());
    rec.settings_checksum = sc;

    emit("quench_" + tag + ".json", quench::record_to_json(rec));
    const std::string series_rel = "quench_series_" + tag + ".csv";
    quench::export_series_csv(out + "/" + series_rel, rec);
    artifacts.push_back(series_rel);

    json out_j;
    out_j["sector_mode"] = rec.sector_mode;
    out_j["e_initial"] = rec.e_initial;
    out_j["completeness"] = rec.completeness;
    out_j["e_mid"] = rec.e_mid;
    out_j["n_mc"] = rec.n_mc;
    out_j["u_de"] = rec.u_de;
    out_j["u_me"] = rec.u_me;
    out_j["variance"] = rec.variance;
    out_j["de_me_deviation"] = rec.de_me_deviation;
    out_j["de_me_defined"] = rec.de_me_defined;
    if (qc.profiles.enable) out_j["density_de_me"] = rec.density_de_me;
    out_j["dim"] = spec.meta.dim;
    return out_j;
  }
};

}  // namespace

std::string run_pipeline(const RunConfig& c) {
  if (c.output_dir.empty())
    throw ConfigError("config: output_dir is required to run");
  if (c.stages.empty())
    throw ConfigError("config: stages must be a nonempty list to run");
  if (!c.stats.synthetic) {
    if (!c.has_system)
      throw ConfigError("config: system is required for the given stages");
    if (!c.has_couplings)
      throw ConfigError(
          "config: couplings are required for the given stages");
  }
  ::setenv("OPENBLAS_NUM_THREADS", std::to_string(c.threads).c_str(), 1);
  ::setenv("OMP_NUM_THREADS", std::to_string(c.threads).c_str(), 1);

  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec)
    throw IoError("cannot create output directory " + c.output_dir + ": " +
                  ec.message());
  if (c.cache.policy != CacheConfig::Policy::off) {
    fs::create_directories(c.cache.dir, ec);
    if (ec)
      throw IoError("cannot create cache directory " + c.cache.dir + ": " +
                    ec.message());
  }

  LockFile lock(c.output_dir + "/.lock");
  Runner r(c);
  r.emit("effective_config.json", effective_config_json(c));

  json points = json::array();

  if (c.stats.synthetic) {
    json pt;
    pt["tag"] = "synthetic";
    pt["stages"]["stats"] =
        stage_guard("stats", "synthetic",
                    [&] { return r.stats_stage("synthetic", {}, nullptr); });
    points.push_back(pt);
  } else {
    const bool need_primary = has_stage(c, "spectrum") ||
                              has_stage(c, "stats") || has_stage(c, "eth");
    std::optional<fock::BasisTable> basis;
    std::optional<hamiltonian::SymmetricSparse> trap;
    if (need_primary) {
      basis = fock::enumerate_basis(c.system.n_a, c.system.n_b,
                                    c.system.e_max, c.system.parity,
                                    c.system.truncation);
      if (has_stage(c, "eth")) trap = hamiltonian::trap_operator(*basis);
    }

    for (const double ga : c.g_a)
      for (const double gb : c.g_b)
        for (const double gab : c.g_ab) {
          const hamiltonian::Couplings g{ga, gb, gab};
          const std::string tag = point_tag(ga, gb, gab);
          json pt;
          pt["tag"] = tag;
          pt["g_a"] = ga;
          pt["g_b"] = gb;
          pt["g_ab"] = gab;
          json cache_log = json::array();

          std::optional<diag::SpectrumResult> spec;
          if (need_primary) {
            auto f = stage_guard("spectrum", tag, [&] {
              return fetch_spectrum(*basis, g, c.cache, c.solver);
            });
            cache_log.push_back(
                {{"label", "primary"}, {"hit", f.cache_hit}});
            spec = std::move(f.spec);
            pt["dim"] = spec->meta.dim;
            pt["basis_checksum"] = basis->checksum();
          }

          if (has_stage(c, "spectrum")) {
            std::ostringstream ecsv;
            ecsv << "m,energy\n";
            for (std::int64_t m = 0; m < spec->energies.size(); ++m)
              ecsv << m << "," << fmt(spec->energies[m]) << "\n";
            r.emit("energies_" + tag + ".csv", ecsv.str());
            pt["stages"]["spectrum"] = {
                {"count", spec->energies.size()},
                {"max_residual", spec->meta.max_residual},
                {"max_ortho_defect", spec->meta.max_ortho_defect}};
          }
          if (has_stage(c, "stats"))
            pt["stages"]["stats"] = stage_guard("stats", tag, [&] {
              return r.stats_stage(tag, g, &*spec);
            });
          if (has_stage(c, "eth"))
            pt["stages"]["eth"] = stage_guard("eth", tag, [&] {
              return r.eth_stage(tag, g, *basis, *spec, *trap);
            });
          spec.reset();
          if (has_stage(c, "quench"))
            pt["stages"]["quench"] = stage_guard("quench", tag, [&] {
              return r.quench_stage(tag, g, cache_log);
            });

          pt["spectrum_cache"] = cache_log;
          points.push_back(pt);
        }

    if (has_stage(c, "stats")) {
      std::string csv = "g_a,g_b,g_ab,beta,outcome,spacing_variance\n";
      for (const auto& row : r.brody_rows) csv += row;
      r.emit("brody_grid.csv", csv);
    }
    if (has_stage(c, "eth")) {
      std::string csv = "g_a,g_b,g_ab,inverse_kurtosis\n";
      for (const auto& row : r.kurt_rows) csv += row;
      r.emit("inverse_kurtosis_grid.csv", csv);
    }
  }

  json manifest;
  manifest["format"] = "bbmix-manifest";
  manifest["version"] = 1;
  manifest["effective_config"] = json::parse(effective_config_json(c));
  manifest["points"] = points;
  json arts = json::array();
  for (const auto& rel : r.artifacts) {
    const std::string full = c.output_dir + "/" + rel;
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(file_checksum(full)));
    arts.push_back({{"path", rel},
                    {"bytes", std::int64_t(fs::file_size(full))},
                    {"checksum", std::string(hex)}});
  }
  manifest["artifacts"] = arts;
  const std::string manifest_path = c.output_dir + "/manifest.json";
  write_text(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

// ---------------------------------------------------------------------------
// Report.

namespace {

std::string scalar_or(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return "n/a";
  if (j[key].is_boolean()) return j[key].get<bool>() ? "yes" : "no";
  if (j[key].is_string()) return j[key].get<std::string>();
  if (j[key].is_number_integer())
    return std::to_string(j[key].get<std::int64_t>());
  return fmt_short(j[key].get<double>());
}

}  // namespace

std::string report(const std::string& manifest_path) {
  std::ifstream is(manifest_path, std::ios::binary);
  if (!is) throw IoError("cannot read manifest: " + manifest_path);
  std::ostringstream ss;
  ss << is.rdbuf();
  json m;
  try {
    m = json::parse(ss.str());
  } catch (const std::exception& e) {
    throw IoError("manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!m.is_object() || m.value("format", "") != "bbmix-manifest")
    throw IoError("file is not a manifest: " + manifest_path);

  std::ostringstream r;
  r << "manifest: " << manifest_path << "\n";
  const auto& cfgj = m["effective_config"];
  r << "stages:";
  for (const auto& s : cfgj["stages"]) r << " " << s.get<std::string>();
  r << "\n";

  for (const auto& pt : m["points"]) {
    r << "point " << pt.value("tag", "?");
    if (pt.contains("dim")) r << " (dim " << pt["dim"].get<std::int64_t>()
                              << ")";
    r << "\n";
    if (pt.contains("spectrum_cache"))
      for (const auto& cl : pt["spectrum_cache"])
        r << "  spectrum " << cl.value("label", "?") << ": "
          << (cl.value("hit", false) ? "cache hit" : "computed") << "\n";
    const json stages = pt.value("stages", json::object());
    for (const char* name : {"spectrum", "stats", "eth", "quench"}) {
      if (!stages.contains(name)) {
        r << "  " << name << ": absent\n";
        continue;
      }
      const json& sj = stages[name];
      if (std::string(name) == "spectrum") {
        r << "  spectrum: " << scalar_or(sj, "count")
          << " states, max residual " << scalar_or(sj, "max_residual")
          << "\n";
      } else if (std::string(name) == "stats") {
        r << "  stats: beta=" << scalar_or(sj, "beta") << " ("
          << scalar_or(sj, "outcome")
          << "), spacing_variance=" << scalar_or(sj, "spacing_variance")
          << ", n=" << scalar_or(sj, "sample_count") << "\n";
      } else if (std::string(name) == "eth") {
        r << "  eth: inverse_kurtosis=" << scalar_or(sj, "inverse_kurtosis")
          << " kurtosis=" << scalar_or(sj, "kurtosis") << " window=["
          << scalar_or(sj, "window_lo") << ", " << scalar_or(sj, "window_hi")
          << "]";
        if (sj.contains("filter") && sj["filter"].value("applied", false)) {
          r << "; filter removed "
            << scalar_or(sj["filter"], "removed_fraction")
            << ", retained kurtosis "
            << scalar_or(sj["filter"], "retained_kurtosis")
            << ", recomputed kurtosis "
            << scalar_or(sj["filter"], "recomputed_kurtosis");
        }
        r << "\n";
      } else {
        r << "  quench: n_mc=" << scalar_or(sj, "n_mc")
          << " de_me_deviation=" << scalar_or(sj, "de_me_deviation")
          << " variance=" << scalar_or(sj, "variance")
          << " density_de_me=" << scalar_or(sj, "density_de_me")
          << " completeness=" << scalar_or(sj, "completeness") << " ["
          << scalar_or(sj, "sector_mode") << "]\n";
      }
    }
  }

  const std::string dir =
      fs::path(manifest_path).parent_path().string();
  std::int64_t ok = 0, mismatched = 0, missing = 0;
  for (const auto& a : m.value("artifacts", json::array())) {
    const std::string rel = a.value("path", "");
    const std::string full = dir.empty() ? rel : dir + "/" + rel;
    if (!fs::exists(full)) {
      r << "MISSING " << rel << "\n";
      ++missing;
      continue;
    }
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(file_checksum(full)));
    if (a.value("checksum", "") != std::string(hex)) {
      r << "MISMATCH " << rel << "\n";
      ++mismatched;
    } else {
      ++ok;
    }
  }
  r << "artifacts: " << ok << " ok, " << mismatched << " mismatched, "
    << missing << " missing\n";
  return r.str();
}

// ---------------------------------------------------------------------------
// Dimension scan.

std::string scan_dimensions(const RunConfig& c) {
  if (!c.has_system)
    throw ConfigError("config: scan needs a system block");
  const auto rows = fock::dimension_scan(
      c.system.n_a, c.system.n_b, c.system.parity, c.scan.e_lo, c.scan.e_hi,
      c.scan.step, c.system.truncation);

  std::optional<double> target_emax;
  if (c.system.target_dimension)
    for (const auto& row : rows)
      if (row.dim == *c.system.target_dimension) {
        target_emax = row.e_max;
        break;
      }

  std::ostringstream text, csv;
  text << "e_max  dimension  (" << c.system.n_a << "+" << c.system.n_b
       << " " << parity_name(c.system.parity) << ")\n";
  csv << "e_max,dimension,is_target\n";
  for (const auto& row : rows) {
    const bool hit = target_emax && row.e_max == *target_emax;
    text << fmt_short(row.e_max) << "  " << row.dim << (hit ? "  <- target" : "")
         << "\n";
    csv << fmt(row.e_max) << "," << row.dim << "," << (hit ? 1 : 0) << "\n";
  }
  if (c.system.target_dimension) {
    if (target_emax)
      text << "target dimension " << *c.system.target_dimension
           << " first reached at e_max=" << fmt_short(*target_emax) << "\n";
    else
      text << "target dimension " << *c.system.target_dimension
           << " not reached in the scan range\n";
  }

  if (!c.output_dir.empty()) {
    std::error_code ec;
    fs::create_directories(c.output_dir, ec);
    if (ec)
      throw IoError("cannot create output directory " + c.output_dir + ": " +
                    ec.message());
    write_text(c.output_dir + "/dimension_scan.csv", csv.str());
  }
  return text.str();
}

}  // namespace bbmix::pipeline
