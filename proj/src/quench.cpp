#include "bbmix/quench.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "bbmix/spho.hpp"

namespace bbmix::quench {

namespace {

using Config = std::pair<int, int>;  // ordered (lo, hi) mode pair

// Accumulate duplicate configurations; validates weights are finite.
std::map<Config, double> accumulate_terms(const std::vector<PairTerm>& terms,
                                          const char* which) {
  std::map<Config, double> acc;
  for (const auto& t : terms) {
    if (!std::isfinite(t.weight))
      throw std::invalid_argument(std::string("nonfinite weight in ") + which +
                                  " configuration list");
    acc[{std::min(t.i, t.j), std::max(t.i, t.j)}] += t.weight;
  }
  return acc;
}

// Normalized weights and the component's noninteracting energy.
struct ComponentState {
  std::vector<Config> configs;
  std::vector<double> weights;  // unit 2-norm
  double energy = 0.0;
};

ComponentState reduce_component(const std::vector<PairTerm>& terms,
                                const char* which) {
  ComponentState out;
  double norm2 = 0.0, esum = 0.0;
  for (const auto& [cfg, w] : accumulate_terms(terms, which)) {
    out.configs.push_back(cfg);
    out.weights.push_back(w);
    norm2 += w * w;
    esum += w * w * double(cfg.first + cfg.second + 1);
  }
  if (!out.configs.empty()) {
    if (norm2 <= 0.0)
      throw std::invalid_argument(std::string("zero-norm ") + which +
                                  " configuration list");
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& w : out.weights) w *= inv;
    out.energy = esum / norm2;
  }
  return out;
}

}  // namespace

InitialStateSpec default_quench_spec(BConstruction b) {
  InitialStateSpec spec;
  for (int i = 0; i <= 9; ++i) spec.a_terms.push_back({i, 19 - i, 1.0});
  if (b == BConstruction::fock_superposition) {
    spec.b_terms = {{0, 0, 1.0}, {0, 1, 1.0}};
  } else {
    spec.b_terms = {{0, 0, 2.0}, {0, 1, std::sqrt(2.0)}};
  }
  return spec;
}

double noninteracting_energy(const InitialStateSpec& spec) {
  return reduce_component(spec.a_terms, "component-A").energy +
         reduce_component(spec.b_terms, "component-B").energy;
}

Eigen::VectorXd build_initial_state(const InitialStateSpec& spec,
                                    const fock::BasisTable& basis) {
  const auto& meta = basis.meta();
  const auto check = [&](const ComponentState& comp, int n_sigma, int cap,
                         const char* which) {
    if (n_sigma == 0) {
      if (!comp.configs.empty())
        throw std::invalid_argument(
            std::string(which) +
            " has no particles but carries pair configurations");
      return;
    }
    if (n_sigma != 2)
      throw std::invalid_argument(
          "pair configurations describe two-particle components");
    if (comp.configs.empty())
      throw std::invalid_argument(std::string("empty ") + which +
                                  " configuration list");
    for (const auto& [i, j] : comp.configs) {
      if (i < 0 || j >= meta.n_modes)
        throw std::invalid_argument(std::string(which) +
                                    " mode outside basis truncation");
      if (i + j > cap)
        throw std::invalid_argument(std::string(which) +
                                    " pair energy outside basis truncation");
    }
  };

  const auto comp_a = reduce_component(spec.a_terms, "component-A");
  const auto comp_b = reduce_component(spec.b_terms, "component-B");
  check(comp_a, meta.n_a, meta.cap_a, "component A");
  check(comp_b, meta.n_b, meta.cap_b, "component B");

  const auto occ_of = [&](const Config& cfg) {
    fock::Occ occ(std::size_t(meta.n_modes), 0);
    occ[std::size_t(cfg.first)] += 1;
    occ[std::size_t(cfg.second)] += 1;
    return occ;
  };

  // A zero-particle component is the single empty configuration.
  std::vector<fock::Occ> occ_a, occ_b;
  std::vector<double> w_a, w_b;
  if (comp_a.configs.empty()) {
    occ_a.push_back(fock::Occ(std::size_t(meta.n_modes), 0));
    w_a.push_back(1.0);
  } else {
    for (std::size_t p = 0; p < comp_a.configs.size(); ++p) {
      occ_a.push_back(occ_of(comp_a.configs[p]));
      w_a.push_back(comp_a.weights[p]);
    }
  }
  if (comp_b.configs.empty()) {
    occ_b.push_back(fock::Occ(std::size_t(meta.n_modes), 0));
    w_b.push_back(1.0);
  } else {
    for (std::size_t p = 0; p < comp_b.configs.size(); ++p) {
      occ_b.push_back(occ_of(comp_b.configs[p]));
      w_b.push_back(comp_b.weights[p]);
    }
  }

  Eigen::VectorXd psi = Eigen::VectorXd::Zero(basis.size());
  for (std::size_t pa = 0; pa < occ_a.size(); ++pa)
    for (std::size_t pb = 0; pb < occ_b.size(); ++pb)
      if (const auto row = basis.find(occ_a[pa], occ_b[pb]))
        psi[*row] = w_a[pa] * w_b[pb];

  const double norm = psi.norm();
  if (norm == 0.0)
    throw std::invalid_argument(
        "initial state has no support in this basis");
  switch (spec.policy) {
    case NormPolicy::renormalize:
      psi /= norm;
      break;
    case NormPolicy::keep_weights:
      break;
    case NormPolicy::require_complete:
      if (std::abs(norm - 1.0) > 1e-12)
        throw std::runtime_error(
            "initial state is not fully representable in this basis "
            "(projected norm " +
            std::to_string(norm) + ")");
      break;
  }
  return psi;
}

Overlaps overlaps(const Eigen::VectorXd& state,
                  const diag::SpectrumResult& spectrum) {
  if (state.size() != spectrum.vectors.rows())
    throw std::invalid_argument(
        "state length differs from the eigenvector basis");
  Overlaps out;
  out.c.noalias() = spectrum.vectors.transpose() * state;
  out.completeness = out.c.squaredNorm();
  return out;
}

Eigen::VectorXd uniform_times(double t0, double t1, double step) {
  if (!std::isfinite(t0) || !std::isfinite(t1) || !std::isfinite(step) ||
      step <= 0.0 || t1 < t0)
    throw std::invalid_argument("bad time grid parameters");
  const std::int64_t count =
      std::int64_t(std::floor((t1 - t0) / step + 0.5)) + 1;
  Eigen::VectorXd times(count);
  for (std::int64_t i = 0; i < count; ++i) times[i] = t0 + double(i) * step;
  return times;
}

EvolutionSeries evolve_expectation(const eth::ObservableMatrix& obs,
                                   const Eigen::VectorXd& c,
                                   const Eigen::VectorXd& energies,
                                   const Eigen::VectorXd& times,
                                   double drop_tol) {
  const std::int64_t count = c.size();
  if (energies.size() != count)
    throw std::invalid_argument("overlaps and energies disagree in length");
  if (obs.window.hi >= count)
    throw std::invalid_argument("observable window exceeds the spectrum");
  if (!(drop_tol >= 0.0))
    throw std::invalid_argument("drop tolerance must be >= 0");
  for (std::int64_t q = 0; q < times.size(); ++q)
    if (!std::isfinite(times[q]))
      throw std::invalid_argument("nonfinite time point");
  const std::int64_t lo = obs.window.lo, hi = obs.window.hi;
  const std::int64_t nw = hi - lo + 1;
  for (std::int64_t m = 0; m < nw; ++m)
    if (energies[lo + m] != obs.energies[m])
      throw std::invalid_argument(
          "energies disagree with the observable matrix window");

  EvolutionSeries out;
  out.times = times;
  Eigen::VectorXd cw = Eigen::VectorXd::Zero(nw);
  for (std::int64_t m = 0; m < count; ++m) {
    const double p = c[m] * c[m];
    if (m < lo || m > hi) {
      if (p > drop_tol)
        throw std::invalid_argument(
            "observable window misses an overlap above the drop tolerance");
      out.dropped_mass += p;
    } else if (p < drop_tol) {
      out.dropped_mass += p;
    } else {
      cw[m - lo] = c[m];
    }
  }
  if (out.dropped_mass > 1e-3)
    throw std::runtime_error("dropped overlap mass " +
                             std::to_string(out.dropped_mass) +
                             " exceeds 1e-3; widen the observable window");
  out.drop_warning = out.dropped_mass > 1e-6;
  if (cw.cwiseAbs().maxCoeff() == 0.0)
    throw std::runtime_error("no overlaps above the drop tolerance");

  const Eigen::VectorXd ew = energies.segment(lo, nw);
  const std::int64_t n_t = times.size();
  out.values = Eigen::VectorXd::Zero(n_t);
  const std::int64_t block = std::min<std::int64_t>(std::max<std::int64_t>(
                                 n_t, 1), 256);
  Eigen::MatrixXd phase(nw, block), prod(nw, block);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::int64_t base = 0; base < n_t; base += block) {
      const std::int64_t nb = std::min(block, n_t - base);
      for (std::int64_t q = 0; q < nb; ++q) {
        const double t = times[base + q];
        if (pass == 0)
          phase.col(q).array() = cw.array() * (ew.array() * t).cos();
        else
          phase.col(q).array() = cw.array() * (ew.array() * t).sin();
      }
      prod.leftCols(nb).noalias() = obs.elements * phase.leftCols(nb);
      for (std::int64_t q = 0; q < nb; ++q)
        out.values[base + q] += phase.col(q).dot(prod.col(q));
    }
  }
  return out;
}

double diagonal_ensemble(const Eigen::VectorXd& c,
                         const Eigen::VectorXd& diagonal) {
  if (c.size() != diagonal.size())
    throw std::invalid_argument("overlaps and diagonal disagree in length");
  return (c.array().square() * diagonal.array()).sum();
}

MicrocanonicalResult microcanonical_ensemble(
    const diag::SpectrumResult& spectrum, const Eigen::VectorXd& diagonal,
    const EnsembleWindow& window) {
  if (diagonal.size() != spectrum.energies.size())
    throw std::invalid_argument("diagonal length differs from the spectrum");
  if (!(window.delta_e >= 0.0) || !std::isfinite(window.e_mid))
    throw std::invalid_argument("bad ensemble window");
  MicrocanonicalResult out;
  double acc = 0.0;
  for (std::int64_t m = 0; m < spectrum.energies.size(); ++m) {
    if (std::abs(spectrum.energies[m] - window.e_mid) <= window.delta_e) {
      out.members.push_back(m);
      acc += diagonal[m];
    }
  }
  out.n_mc = std::int64_t(out.members.size());
  if (out.n_mc == 0)
    throw std::runtime_error("microcanonical window contains no eigenstate");
  out.value = acc / double(out.n_mc);
  return out;
}

ThermalizationMetrics thermalization_metrics(const EvolutionSeries& series,
                                             double de, double me, double t0,
                                             double t1) {
  if (!(t1 > t0))
    throw std::invalid_argument("variance window needs t1 > t0");
  if (series.times.size() != series.values.size() || series.times.size() == 0)
    throw std::invalid_argument("malformed series");
  if (series.times.minCoeff() > t0 || series.times.maxCoeff() < t1)
    throw std::invalid_argument("series does not cover the variance window");

  ThermalizationMetrics out;
  out.delta_series = series.values.array() - me;
  double sum = 0.0, sum2 = 0.0;
  for (std::int64_t q = 0; q < series.times.size(); ++q) {
    const double t = series.times[q];
    if (t < t0 || t > t1) continue;
    ++out.window_samples;
    sum += series.values[q];
    sum2 += series.values[q] * series.values[q];
  }
  const double n = double(out.window_samples);
  const double mean = sum / n;
  out.variance = std::max(0.0, sum2 / n - mean * mean);
  if (de == 0.0) {
    out.de_me_defined = false;
    out.de_me_deviation = std::numeric_limits<double>::quiet_NaN();
  } else {
    out.de_me_deviation = std::abs((de - me) / de);
  }
  return out;
}

Eigen::VectorXcd state_at(const diag::SpectrumResult& spectrum,
                          const Eigen::VectorXd& c, double t) {
  if (c.size() != spectrum.vectors.cols())
    throw std::invalid_argument("overlap length differs from the spectrum");
  const Eigen::ArrayXd arg = spectrum.energies.array() * t;
  const Eigen::VectorXd re = (arg.cos() * c.array()).matrix();
  const Eigen::VectorXd im = (-arg.sin() * c.array()).matrix();
  Eigen::VectorXcd out(spectrum.vectors.rows());
  out.real() = spectrum.vectors * re;
  out.imag() = spectrum.vectors * im;
  return out;
}

namespace {

Eigen::VectorXd density_quadratic(const Eigen::MatrixXd& sym,
                                  const Eigen::VectorXd& grid) {
  const int n = int(sym.rows());
  const Eigen::MatrixXd phi = spho::hermite_table(n - 1, grid);
  const Eigen::MatrixXd m = sym * phi;
  Eigen::VectorXd out(grid.size());
  for (std::int64_t p = 0; p < grid.size(); ++p)
    out[p] = phi.col(p).dot(m.col(p));
  return out;
}

}  // namespace

Eigen::VectorXd density_from_matrix(const Eigen::MatrixXcd& rho,
                                    const Eigen::VectorXd& grid) {
  if (rho.rows() != rho.cols())
    throw std::invalid_argument("density matrix must be square");
  // phi^T Im(rho) phi vanishes for the hermitian part; using only Re(rho)
  // realizes Re(phi^T rho phi) exactly.
  return density_quadratic(rho.real(), grid);
}

Eigen::VectorXd density_from_matrix(const Eigen::MatrixXd& rho,
                                    const Eigen::VectorXd& grid) {
  if (rho.rows() != rho.cols())
    throw std::invalid_argument("density matrix must be square");
  return density_quadratic(rho, grid);
}

Eigen::VectorXd density_profile(const hamiltonian::OneBodyMoveTable& table,
                                const Eigen::VectorXcd& state,
                                const Eigen::VectorXd& grid) {
  return density_from_matrix(table.density_matrix(state), grid);
}

Eigen::VectorXd momentum_from_matrix(const Eigen::MatrixXcd& rho_total,
                                     const Eigen::VectorXd& k_grid) {
  if (rho_total.rows() != rho_total.cols())
    throw std::invalid_argument("density matrix must be square");
  const int n = int(rho_total.rows());
  // G_ij = rho_ij conj((-i)^i) (-i)^j; real part carries the quadratic form.
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const std::complex<double> f =
          std::conj(spho::momentum_phase(i)) * spho::momentum_phase(j);
      g(i, j) = (rho_total(i, j) * f).real();
    }
  Eigen::VectorXd out = density_quadratic(g, k_grid);
  const double scale = std::max(1.0, std::abs(rho_total.real().trace()));
  if (out.minCoeff() < -1e-10 * scale)
    throw std::runtime_error(
        "momentum density negative beyond tolerance; density matrix is not "
        "positive semidefinite");
  return out;
}

Eigen::VectorXd momentum_profile(const hamiltonian::OneBodyMoveTable& table_a,
                                 const hamiltonian::OneBodyMoveTable& table_b,
                                 const Eigen::VectorXcd& state,
                                 const Eigen::VectorXd& k_grid) {
  const Eigen::MatrixXcd rho =
      table_a.density_matrix(state) + table_b.density_matrix(state);
  return momentum_from_matrix(rho, k_grid);
}

Eigen::MatrixXd averaged_density_matrix(
    const diag::SpectrumResult& spectrum,
    const hamiltonian::OneBodyMoveTable& table,
    const Eigen::VectorXd& weights) {
  if (weights.size() != spectrum.vectors.cols())
    throw std::invalid_argument("weights length differs from the spectrum");
  Eigen::MatrixXd rho =
      Eigen::MatrixXd::Zero(table.n_modes(), table.n_modes());
  for (std::int64_t m = 0; m < weights.size(); ++m) {
    if (weights[m] == 0.0) continue;
    rho.noalias() +=
        weights[m] * table.density_matrix(Eigen::VectorXd(
                         spectrum.vectors.col(m)));
  }
  return rho;
}

double trapezoid(const Eigen::VectorXd& grid, const Eigen::VectorXd& values) {
  if (grid.size() != values.size() || grid.size() < 2)
    throw std::invalid_argument("trapezoid needs matching grids of >= 2");
  double acc = 0.0;
  for (std::int64_t p = 0; p + 1 < grid.size(); ++p) {
    const double h = grid[p + 1] - grid[p];
    if (!(h > 0.0))
      throw std::invalid_argument("grid must be strictly increasing");
    acc += 0.5 * h * (values[p] + values[p + 1]);
  }
  return acc;
}

ProfileDeviations profile_deviations(const Eigen::VectorXd& grid,
                                     const Eigen::MatrixXd& trajectory,
                                     const Eigen::VectorXd& me_profile,
                                     const Eigen::VectorXd& de_profile) {
  if (trajectory.rows() != grid.size() || me_profile.size() != grid.size() ||
      de_profile.size() != grid.size())
    throw std::invalid_argument("profile grids disagree");
  ProfileDeviations out;
  out.pointwise = (trajectory.colwise() - me_profile).cwiseAbs();
  out.integrated.resize(trajectory.cols());
  for (std::int64_t q = 0; q < trajectory.cols(); ++q)
    out.integrated[q] = trapezoid(grid, out.pointwise.col(q));
  out.de_me_integrated =
      trapezoid(grid, (de_profile - me_profile).cwiseAbs());
  return out;
}

diag::SpectrumResult merge_sector_spectra(const fock::BasisTable& full,
                                          const fock::BasisTable& sector1,
                                          const diag::SpectrumResult& spec1,
                                          const fock::BasisTable& sector2,
                                          const diag::SpectrumResult& spec2) {
  if (sector1.size() != spec1.vectors.rows() ||
      sector2.size() != spec2.vectors.rows())
    throw std::invalid_argument("sector basis and spectrum sizes disagree");
  if (sector1.size() + sector2.size() != full.size())
    throw std::invalid_argument(
        "sector sizes do not add up to the containing basis");
  const auto& c1 = spec1.meta.provenance.couplings;
  const auto& c2 = spec2.meta.provenance.couplings;
  if (std::memcmp(&c1, &c2, sizeof(c1)) != 0)
    throw std::invalid_argument("sector spectra have different couplings");

  const auto row_map = [&](const fock::BasisTable& sector) {
    std::vector<std::int64_t> map(std::size_t(sector.size()));
    for (std::int64_t s = 0; s < sector.size(); ++s) {
      const auto r = full.find(sector.state(s));
      if (!r)
        throw std::invalid_argument(
            "sector state missing from the containing basis");
      map[std::size_t(s)] = *r;
    }
    return map;
  };
  const auto map1 = row_map(sector1);
  const auto map2 = row_map(sector2);
  std::vector<char> seen(std::size_t(full.size()), 0);
  for (const auto r : map1) seen[std::size_t(r)] = 1;
  for (const auto r : map2) {
    if (seen[std::size_t(r)])
      throw std::invalid_argument("sector bases overlap");
    seen[std::size_t(r)] = 1;
  }

  const std::int64_t k1 = spec1.energies.size(), k2 = spec2.energies.size();
  diag::SpectrumResult out;
  out.energies.resize(k1 + k2);
  out.vectors = Eigen::MatrixXd::Zero(full.size(), k1 + k2);
  std::int64_t p1 = 0, p2 = 0, q = 0;
  while (p1 < k1 || p2 < k2) {
    const bool take1 =
        p2 >= k2 || (p1 < k1 && spec1.energies[p1] <= spec2.energies[p2]);
    if (take1) {
      out.energies[q] = spec1.energies[p1];
      for (std::int64_t s = 0; s < sector1.size(); ++s)
        out.vectors(map1[std::size_t(s)], q) = spec1.vectors(s, p1);
      ++p1;
    } else {
      out.energies[q] = spec2.energies[p2];
      for (std::int64_t s = 0; s < sector2.size(); ++s)
        out.vectors(map2[std::size_t(s)], q) = spec2.vectors(s, p2);
      ++p2;
    }
    ++q;
  }

  out.meta.provenance.couplings = c1;
  out.meta.provenance.basis_checksum = full.checksum();
  out.meta.dim = full.size();
  out.meta.count = k1 + k2;
  out.meta.norm_h = std::max(spec1.meta.norm_h, spec2.meta.norm_h);
  out.meta.max_residual =
      std::max(spec1.meta.max_residual, spec2.meta.max_residual);
  out.meta.max_ortho_defect =
      std::max(spec1.meta.max_ortho_defect, spec2.meta.max_ortho_defect);
  return out;
}

std::string record_to_json(const QuenchRecord& r) {
  return nlohmann::json{
      {"g_a", r.couplings.g_a},
      {"g_b", r.couplings.g_b},
      {"g_ab", r.couplings.g_ab},
      {"sector_mode", r.sector_mode},
      {"b_construction", r.b_construction},
      {"e_initial", r.e_initial},
      {"completeness", r.completeness},
      {"dropped_mass", r.dropped_mass},
      {"drop_warning", r.drop_warning},
      {"e_mid", r.e_mid},
      {"delta_e", r.delta_e},
      {"n_mc", r.n_mc},
      {"u_de", r.u_de},
      {"u_me", r.u_me},
      {"variance", r.variance},
      {"de_me_deviation", r.de_me_deviation},
      {"de_me_defined", r.de_me_defined},
      {"density_de_me", r.density_de_me},
      {"series_length", r.times.size()},
      {"profile_series_length", r.profile_times.size()},
      {"overlap_count", r.overlaps.size()},
      {"settings_checksum", r.settings_checksum},
  }
      .dump();
}

void export_series_csv(const std::string& path, const QuenchRecord& r) {
  if (r.potential_series.size() != r.times.size() ||
      r.delta_series.size() != r.times.size())
    throw std::invalid_argument("series lengths differ from the time grid");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.precision(17);
  os << "t,potential,delta\n";
  for (std::int64_t q = 0; q < r.times.size(); ++q)
    os << r.times[q] << ',' << r.potential_series[q] << ','
       << r.delta_series[q] << '\n';
  if (!os) throw std::runtime_error("short write: " + path);
}

namespace {

constexpr std::uint64_t kFnvSeed = 0xcbf29ce484222325ull;

std::uint64_t payload_checksum(const Eigen::VectorXd& grid,
                               const Eigen::VectorXd& times,
                               const Eigen::MatrixXd& values) {
  std::uint64_t h = kFnvSeed;
  h = fock::fnv1a(grid.data(), std::size_t(grid.size()) * sizeof(double), h);
  h = fock::fnv1a(times.data(), std::size_t(times.size()) * sizeof(double),
                  h);
  h = fock::fnv1a(values.data(), std::size_t(values.size()) * sizeof(double),
                  h);
  return h;
}

}  // namespace

void save_spacetime(const std::string& path, const Eigen::VectorXd& grid,
                    const Eigen::VectorXd& times,
                    const Eigen::MatrixXd& values) {
  if (values.rows() != grid.size() || values.cols() != times.size())
    throw std::invalid_argument("array shape disagrees with its axes");
  if (grid.size() < 1 || times.size() < 1)
    throw std::invalid_argument("empty spacetime array");
  nlohmann::json header{
      {"format", "bbmix-spacetime"},
      {"version", 1},
      {"n_x", grid.size()},
      {"n_t", times.size()},
      {"payload_checksum", payload_checksum(grid, times, values)},
  };
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << header.dump() << '\n';
  const auto put = [&os](const double* data, std::int64_t n) {
    os.write(reinterpret_cast<const char*>(data),
             std::streamsize(n) * std::streamsize(sizeof(double)));
  };
  put(grid.data(), grid.size());
  put(times.data(), times.size());
  put(values.data(), values.size());
  if (!os) throw std::runtime_error("short write: " + path);
}

SpacetimeArray load_spacetime(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("missing header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("unparseable header: " + path);
  }
  if (header.value("format", "") != "bbmix-spacetime")
    throw std::runtime_error("not a spacetime array file: " + path);
  if (header.value("version", -1) != 1)
    throw std::runtime_error("unsupported version in: " + path);
  const std::int64_t n_x = header.value("n_x", std::int64_t(-1));
  const std::int64_t n_t = header.value("n_t", std::int64_t(-1));
  if (n_x < 1 || n_t < 1 || n_x > (std::int64_t(1) << 32) ||
      n_t > (std::int64_t(1) << 32))
    throw std::runtime_error("implausible sizes in: " + path);

  SpacetimeArray out;
  out.grid.resize(n_x);
  out.times.resize(n_t);
  out.values.resize(n_x, n_t);
  const auto get = [&is, &path](double* data, std::int64_t n) {
    is.read(reinterpret_cast<char*>(data),
            std::streamsize(n) * std::streamsize(sizeof(double)));
    if (is.gcount() != std::streamsize(n) * std::streamsize(sizeof(double)))
      throw std::runtime_error("truncated payload in: " + path);
  };
  get(out.grid.data(), n_x);
  get(out.times.data(), n_t);
  get(out.values.data(), n_x * n_t);
  is.get();
  if (!is.eof()) throw std::runtime_error("trailing bytes in: " + path);
  const std::uint64_t expect =
      header.value("payload_checksum", std::uint64_t(0));
  if (payload_checksum(out.grid, out.times, out.values) != expect)
    throw std::runtime_error("payload checksum mismatch in: " + path);
  return out;
}

}  // namespace bbmix::quench
