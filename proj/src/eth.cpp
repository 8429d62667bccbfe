#include "bbmix/eth.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bbmix::eth {

namespace {

std::int64_t window_size(const Window& w) { return w.hi - w.lo + 1; }

void check_window(const Window& w, std::int64_t count) {
  if (w.lo < 0 || w.hi >= count || w.lo > w.hi)
    throw std::invalid_argument(
        "eigenstate window [" + std::to_string(w.lo) + ", " +
        std::to_string(w.hi) + "] leaves the spectrum of " +
        std::to_string(count) + " states");
}

}  // namespace

ObservableMatrix observable_matrix(const diag::SpectrumResult& spec,
                                   const hamiltonian::SymmetricSparse& op,
                                   Window w) {
  check_window(w, spec.vectors.cols());
  if (op.dim() != spec.vectors.rows())
    throw std::invalid_argument("operator dimension differs from eigenbasis");
  const std::int64_t nw = window_size(w);

  Eigen::MatrixXd image(spec.vectors.rows(), nw);
  for (std::int64_t c = 0; c < nw; ++c)
    op.matvec(spec.vectors.col(w.lo + c).data(), image.col(c).data());

  ObservableMatrix obs;
  obs.window = w;
  obs.elements.noalias() =
      spec.vectors.middleCols(w.lo, nw).transpose() * image;
  obs.energies = spec.energies.segment(w.lo, nw);

  const double defect =
      (obs.elements - obs.elements.transpose()).cwiseAbs().maxCoeff();
  if (!(defect <= 1e-10))
    throw std::runtime_error(
        "observable matrix asymmetric beyond 1e-10 (defect " +
        std::to_string(defect) + "); operator or eigenbasis is inconsistent");
  return obs;
}

Eigen::VectorXd offdiag_elements(const ObservableMatrix& obs) {
  const std::int64_t n = obs.elements.rows();
  Eigen::VectorXd out(n * (n - 1) / 2);
  std::int64_t p = 0;
  for (std::int64_t m = 0; m < n; ++m)
    for (std::int64_t k = m + 1; k < n; ++k) out[p++] = obs.elements(m, k);
  return out;
}

BandProfile offdiag_band_profile(const ObservableMatrix& obs) {
  const std::int64_t n = obs.elements.rows();
  if (n < 2)
    throw std::invalid_argument("band profile needs a window of >= 2 states");
  BandProfile prof;
  prof.omega.resize(n * (n - 1) / 2);
  prof.magnitude.resize(n * (n - 1) / 2);
  std::int64_t p = 0;
  for (std::int64_t m = 0; m < n; ++m)
    for (std::int64_t k = m + 1; k < n; ++k) {
      prof.omega[p] = std::abs(obs.energies[m] - obs.energies[k]);
      prof.magnitude[p] = std::abs(obs.elements(m, k));
      ++p;
    }
  return prof;
}

double kurtosis(const Eigen::VectorXd& samples) {
  const std::int64_t n = samples.size();
  if (n < 1000)
    throw std::invalid_argument("kurtosis needs at least 1000 samples");
  const double mean = samples.mean();
  const Eigen::ArrayXd centered = samples.array() - mean;
  const double m2 = centered.square().mean();
  const double scale = samples.cwiseAbs().maxCoeff();
  if (m2 <= 1e-28 * scale * scale || m2 == 0.0)
    throw std::runtime_error("kurtosis undefined for zero-variance samples");
  const double m4 = centered.square().square().mean();
  return m4 / (m2 * m2);
}

SectorLabeling sector_filter(const diag::SpectrumResult& spec,
                             const fock::BasisTable& basis,
                             double threshold) {
  if (basis.meta().n_a != basis.meta().n_b)
    throw std::invalid_argument(
        "sector filter needs N_A == N_B (no diagonal Fock states otherwise)");
  if (basis.size() != spec.vectors.rows())
    throw std::invalid_argument("basis size differs from eigenvector length");
  if (!(threshold >= 0.0))
    throw std::invalid_argument("threshold must be >= 0");

  std::vector<std::int64_t> diag_rows;
  for (std::int64_t s = 0; s < basis.size(); ++s) {
    const auto& st = basis.state(s);
    if (st.a == st.b) diag_rows.push_back(s);
  }

  SectorLabeling lab;
  lab.threshold = threshold;
  const std::int64_t count = spec.vectors.cols();
  lab.weight.resize(count);
  lab.retained.assign(std::size_t(count), 1);
  for (std::int64_t m = 0; m < count; ++m) {
    double w = 0.0;
    for (const auto r : diag_rows) {
      const double c = spec.vectors(r, m);
      w += c * c;
    }
    lab.weight[m] = w;
    if (w < threshold) {
      lab.retained[std::size_t(m)] = 0;
      ++lab.removed_count;
    }
  }
  lab.removed_fraction = double(lab.removed_count) / double(count);
  return lab;
}

diag::SpectrumResult apply_filter(const diag::SpectrumResult& spec,
                                  const SectorLabeling& labeling) {
  if (std::int64_t(labeling.retained.size()) != spec.vectors.cols())
    throw std::invalid_argument("labeling size differs from spectrum");
  const std::int64_t kept =
      spec.vectors.cols() - labeling.removed_count;
  if (kept < 1) throw std::runtime_error("sector filter removed every state");

  diag::SpectrumResult out;
  out.meta = spec.meta;
  out.meta.count = kept;
  out.energies.resize(kept);
  out.vectors.resize(spec.vectors.rows(), kept);
  std::int64_t p = 0;
  for (std::int64_t m = 0; m < spec.vectors.cols(); ++m) {
    if (!labeling.retained[std::size_t(m)]) continue;
    out.energies[p] = spec.energies[m];
    out.vectors.col(p) = spec.vectors.col(m);
    ++p;
  }
  return out;
}

GaussianFit gaussian_fit(const Eigen::VectorXd& samples, int n_bins) {
  const std::int64_t n = samples.size();
  if (n < 1000)
    throw std::invalid_argument("Gaussian fit needs at least 1000 samples");
  if (n_bins < 4) throw std::invalid_argument("need at least 4 bins");
  GaussianFit fit;
  fit.mean = samples.mean();
  const Eigen::ArrayXd centered = samples.array() - fit.mean;
  const double var = centered.square().mean();
  const double scale = samples.cwiseAbs().maxCoeff();
  if (var <= 1e-28 * scale * scale || var == 0.0)
    throw std::runtime_error("Gaussian fit undefined for zero-variance samples");
  fit.stddev = std::sqrt(var);

  const double lo = fit.mean - 4.0 * fit.stddev;
  const double width = 8.0 * fit.stddev / double(n_bins);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_bins);
  std::int64_t in_range = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const int k = int(std::floor((samples[i] - lo) / width));
    if (k < 0 || k >= n_bins) continue;
    counts[k] += 1.0;
    ++in_range;
  }
  double acc = 0.0;
  for (int k = 0; k < n_bins; ++k) {
    const double mid = lo + (k + 0.5) * width;
    const double density = counts[k] / (double(n) * width);
    const double ref = std::exp(-0.5 * (mid - fit.mean) * (mid - fit.mean) /
                                var) /
                       (fit.stddev * std::sqrt(2.0 * M_PI));
    acc += (density - ref) * (density - ref);
  }
  fit.residual = std::sqrt(acc / double(n_bins));
  return fit;
}

void export_observable_csv(const std::string& path,
                           const ObservableMatrix& obs) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "m,n,e_m,e_n,o_mn\n";
  os.precision(17);
  const std::int64_t n = obs.elements.rows();
  for (std::int64_t m = 0; m < n; ++m)
    for (std::int64_t k = m; k < n; ++k)
      os << obs.window.lo + m << ',' << obs.window.lo + k << ','
         << obs.energies[m] << ',' << obs.energies[k] << ','
         << obs.elements(m, k) << '\n';
  if (!os) throw std::runtime_error("short write: " + path);
}

std::string summary_to_json(const EthSummary& s) {
  return nlohmann::json{
      {"kurtosis", s.kurtosis},
      {"inverse_kurtosis", s.inverse_kurtosis},
      {"removed_fraction", s.removed_fraction},
      {"window_lo", s.window.lo},
      {"window_hi", s.window.hi},
      {"threshold", s.threshold},
  }
      .dump();
}

}  // namespace bbmix::eth
