#include "bbmix/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace bbmix::spectral {

namespace {

constexpr double kBetaMax = 1.2;
constexpr double kPicketFenceVariance = 0.01;
constexpr double kClusterVariance = 2.0;

// The Brody family's spacing variance lies in [4/pi - 1, 1]; samples far
// outside cannot come from any member.  Below kPicketFenceVariance the
// spectrum is a rigid equally spaced ladder; above kClusterVariance it is
// clustered (near-degenerate multiplets separated by wide gaps).
bool outside_brody_family(double variance) {
  return variance < kPicketFenceVariance || variance > kClusterVariance;
}

void check_beta(double beta) {
  if (!(beta >= 0.0 && beta <= kBetaMax))
    throw std::invalid_argument("Brody parameter outside [0, 1.2]");
}

void check_s(double s) {
  if (!(s >= 0.0)) throw std::invalid_argument("spacing must be >= 0");
}

// Chebyshev design row T_0(t) .. T_d(t).
void cheb_row(double t, int degree, double* row) {
  row[0] = 1.0;
  if (degree >= 1) row[1] = t;
  for (int k = 2; k <= degree; ++k)
    row[k] = 2.0 * t * row[k - 1] - row[k - 2];
}

double sample_variance(const Eigen::VectorXd& s) {
  if (s.size() < 2) return 0.0;
  const double mean = s.mean();
  return (s.array() - mean).square().sum() / double(s.size());
}

// Golden-section maximization of a unimodal function on [lo, hi].
template <typename F>
double golden_max(F&& f, double lo, double hi) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 120 && b - a > 1e-12; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

BrodyFit guarded_fit_shell(const Eigen::VectorXd& s) {
  if (s.size() < 200)
    throw std::invalid_argument("Brody fit needs at least 200 spacings");
  BrodyFit fit;
  fit.sample_count = s.size();
  fit.spacing_variance = sample_variance(s);
  return fit;
}

}  // namespace

UnfoldedSpectrum unfold(const Eigen::VectorXd& energies,
                        const UnfoldOptions& opts) {
  if (opts.poly_degree < 3 || opts.poly_degree > 20)
    throw std::invalid_argument("unfolding polynomial degree must be in 3..20");
  if (!(opts.discard_low >= 0.0 && opts.discard_low < 0.5) ||
      !(opts.discard_high >= 0.0 && opts.discard_high < 0.5))
    throw std::invalid_argument("discard fractions must be in [0, 0.5)");
  const std::int64_t n_raw = energies.size();
  for (std::int64_t i = 1; i < n_raw; ++i)
    if (energies[i] < energies[i - 1])
      throw std::invalid_argument("energies must be sorted ascending");

  const auto n_lo = std::int64_t(opts.discard_low * double(n_raw));
  const auto n_hi = std::int64_t(opts.discard_high * double(n_raw));
  const std::int64_t n = n_raw - n_lo - n_hi;
  if (n < 200)
    throw std::runtime_error(
        "too few levels after discards (need at least 200, have " +
        std::to_string(std::max<std::int64_t>(n, 0)) + ")");
  const auto kept = energies.segment(n_lo, n);
  const double e_lo = kept[0], e_hi = kept[n - 1];
  if (!(e_hi > e_lo))
    throw std::runtime_error("retained spectrum has zero energy span");

  // Least-squares Chebyshev fit of the staircase N(E_i) = i + 1/2.
  const int d = opts.poly_degree;
  Eigen::MatrixXd a(n, d + 1);
  std::vector<double> row(std::size_t(d) + 1);
  for (std::int64_t i = 0; i < n; ++i) {
    const double t = 2.0 * (kept[i] - e_lo) / (e_hi - e_lo) - 1.0;
    cheb_row(t, d, row.data());
    for (int k = 0; k <= d; ++k) a(i, k) = row[k];
  }
  Eigen::VectorXd y(n);
  for (std::int64_t i = 0; i < n; ++i) y[i] = double(i) + 0.5;
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);

  UnfoldedSpectrum u;
  u.levels = a * coef;
  u.discard_low = opts.discard_low;
  u.discard_high = opts.discard_high;
  u.poly_degree = d;

  for (std::int64_t i = 1; i < n; ++i) {
    if (kept[i] == kept[i - 1]) {
      u.levels[i] = u.levels[i - 1];  // exact degeneracy preserved exactly
    } else if (u.levels[i] < u.levels[i - 1]) {
      throw std::runtime_error(
          "unfolding map is non-monotone on distinct levels; lower the "
          "polynomial degree");
    }
  }
  u.mean_spacing = (u.levels[n - 1] - u.levels[0]) / double(n - 1);
  if (std::abs(u.mean_spacing - 1.0) > 0.02)
    throw std::runtime_error(
        "unfolded mean spacing " + std::to_string(u.mean_spacing) +
        " deviates from 1 by more than 2%; adjust degree or discards");
  return u;
}

Eigen::VectorXd spacings(const UnfoldedSpectrum& u) {
  const std::int64_t n = u.levels.size();
  if (n < 2) throw std::invalid_argument("need at least 2 unfolded levels");
  return u.levels.tail(n - 1) - u.levels.head(n - 1);
}

Histogram spacing_histogram(const Eigen::VectorXd& samples, int n_bins,
                            double s_max) {
  if (n_bins < 1) throw std::invalid_argument("need at least one bin");
  if (!(s_max > 0.0)) throw std::invalid_argument("s_max must be positive");
  if (samples.size() < 1) throw std::invalid_argument("no samples");
  Histogram h;
  h.total = samples.size();
  h.edges.resize(n_bins + 1);
  for (int k = 0; k <= n_bins; ++k)
    h.edges[k] = s_max * double(k) / double(n_bins);
  h.counts = Eigen::VectorXi::Zero(n_bins);
  const double width = s_max / double(n_bins);
  for (std::int64_t i = 0; i < samples.size(); ++i) {
    const double s = samples[i];
    if (s < 0.0 || s >= s_max) continue;  // out-of-range kept only in total
    ++h.counts[std::min(int(s / width), n_bins - 1)];
  }
  h.density = h.counts.cast<double>() / (double(h.total) * width);
  return h;
}

double poisson_pdf(double s) {
  check_s(s);
  return std::exp(-s);
}

double wigner_dyson_pdf(double s) {
  check_s(s);
  return 0.5 * M_PI * s * std::exp(-0.25 * M_PI * s * s);
}

double brody_b(double beta) {
  check_beta(beta);
  return std::pow(std::tgamma((beta + 2.0) / (beta + 1.0)), beta + 1.0);
}

double brody_pdf(double beta, double s) {
  check_beta(beta);
  check_s(s);
  const double b = brody_b(beta);
  const double sb = std::pow(s, beta);
  return (beta + 1.0) * b * sb * std::exp(-b * sb * s);
}

BrodyFit brody_fit_mle(const Eigen::VectorXd& s) {
  BrodyFit fit = guarded_fit_shell(s);
  if (outside_brody_family(fit.spacing_variance)) return fit;  // not fittable

  std::vector<double> log_s;
  std::vector<double> pos;
  log_s.reserve(std::size_t(s.size()));
  pos.reserve(std::size_t(s.size()));
  for (std::int64_t i = 0; i < s.size(); ++i) {
    if (!(s[i] >= 0.0))
      throw std::invalid_argument("spacings must be >= 0");
    if (s[i] > 0.0) {
      pos.push_back(s[i]);
      log_s.push_back(std::log(s[i]));
    }
  }
  fit.zeros_dropped = s.size() - std::int64_t(pos.size());
  fit.sample_count = std::int64_t(pos.size());
  if (fit.sample_count < 200)
    throw std::runtime_error("too few nonzero spacings for a likelihood fit");

  const auto log_like = [&](double beta) {
    const double b = brody_b(beta);
    double acc = 0.0;
    for (std::size_t i = 0; i < pos.size(); ++i)
      acc += beta * log_s[i] - b * std::pow(pos[i], beta + 1.0);
    return double(pos.size()) * (std::log(beta + 1.0) + std::log(b)) + acc;
  };
  const double beta = golden_max(log_like, 0.0, kBetaMax);
  const double ll = log_like(beta);
  if (!std::isfinite(ll))
    throw std::runtime_error("Brody likelihood optimization failed");
  fit.outcome = BrodyOutcome::fitted;
  fit.beta = beta;
  fit.b = brody_b(beta);
  fit.log_likelihood = ll;
  return fit;
}

BrodyFit brody_fit_histogram(const Eigen::VectorXd& s, int n_bins,
                             double s_max) {
  BrodyFit fit = guarded_fit_shell(s);
  if (outside_brody_family(fit.spacing_variance)) return fit;  // not fittable

  const Histogram h = spacing_histogram(s, n_bins, s_max);
  const double width = s_max / double(n_bins);
  const auto sq_residual = [&](double beta) {
    double acc = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double mid = h.edges[k] + 0.5 * width;
      const double diff = h.density[k] - brody_pdf(beta, mid);
      acc += diff * diff;
    }
    return acc;
  };
  const double beta =
      golden_max([&](double x) { return -sq_residual(x); }, 0.0, kBetaMax);
  const double res = sq_residual(beta);
  if (!std::isfinite(res))
    throw std::runtime_error("Brody histogram fit failed");
  fit.outcome = BrodyOutcome::fitted;
  fit.beta = beta;
  fit.b = brody_b(beta);
  fit.residual = res;
  return fit;
}

Eigen::VectorXd poisson_levels(std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one level");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd levels(n);
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    acc += -std::log1p(-unif(rng));  // unit-rate exponential gap
    levels[i] = acc;
  }
  return levels;
}

Eigen::VectorXd brody_spacing_samples(std::int64_t n, double beta,
                                      std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one sample");
  check_beta(beta);
  const double b = brody_b(beta);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd s(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double u = unif(rng);
    s[i] = std::pow(-std::log1p(-u) / b, 1.0 / (beta + 1.0));
  }
  return s;
}

void export_spacings_csv(const std::string& path, const Eigen::VectorXd& s) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "index,spacing\n";
  os.precision(17);
  for (std::int64_t i = 0; i < s.size(); ++i) os << i << ',' << s[i] << '\n';
  if (!os) throw std::runtime_error("short write: " + path);
}

void export_histogram_csv(const std::string& path, const Histogram& h) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "bin_lo,bin_hi,count,density\n";
  os.precision(17);
  for (int k = 0; k < h.counts.size(); ++k)
    os << h.edges[k] << ',' << h.edges[k + 1] << ',' << h.counts[k] << ','
       << h.density[k] << '\n';
  if (!os) throw std::runtime_error("short write: " + path);
}

std::string fit_to_json(const BrodyFit& f) {
  nlohmann::json j{
      {"outcome",
       f.outcome == BrodyOutcome::fitted ? "fitted" : "not_fittable"},
      {"sample_count", f.sample_count},
      {"zeros_dropped", f.zeros_dropped},
      {"spacing_variance", f.spacing_variance},
  };
  if (f.outcome == BrodyOutcome::fitted) {
    j["beta"] = f.beta;
    j["b"] = f.b;
    j["log_likelihood"] = f.log_likelihood;
    j["residual"] = f.residual;
  }
  return j.dump();
}

}  // namespace bbmix::spectral
