#pragma once
// Level-spacing statistics: staircase unfolding, spacing histograms,
// reference spacing densities (Poisson, Wigner-Dyson, Brody), and Brody
// parameter estimation.
//
// Unfolding fits the cumulative level-count staircase N(E) = i + 1/2 with a
// least-squares Chebyshev polynomial over the retained window and maps each
// level through the fit.  Exact degeneracies map to exactly equal unfolded
// values and are preserved as zero spacings.  The mean nearest-neighbor
// spacing of an accepted unfolding equals 1 within 2%; violations throw, as
// does a mapping that becomes non-monotone on distinct input levels (the
// error advises lowering the polynomial degree).
//
// The Brody family P(s) = (beta+1) b s^beta exp(-b s^(beta+1)) with
// b = Gamma((beta+2)/(beta+1))^(beta+1) interpolates Poisson (beta = 0) and
// Wigner-Dyson (beta = 1); every member has unit mean.  Estimation is
// maximum-likelihood by default (histogram least squares as an alternative);
// the family's spacing variance spans [4/pi - 1, 1] (Wigner-Dyson to
// Poisson), so samples far outside that range cannot come from any member:
// variance below 0.01 is a rigid picket-fence ladder, variance above 2 is a
// clustered spectrum (near-degenerate multiplets separated by wide gaps,
// the picket-fence regime of weakly coupled product spectra).  Both are
// reported as not fittable rather than forced onto the family.

#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace bbmix::spectral {

struct UnfoldedSpectrum {
  Eigen::VectorXd levels;     // unfolded, ascending, mean spacing ~ 1
  double discard_low = 0.0;   // fraction of lowest raw levels removed
  double discard_high = 0.0;  // fraction of highest raw levels removed
  int poly_degree = 0;        // Chebyshev degree used for the staircase fit
  double mean_spacing = 0.0;  // achieved mean nearest-neighbor spacing
};

struct UnfoldOptions {
  double discard_low = 0.05;
  double discard_high = 0.0;
  int poly_degree = 10;  // allowed range 3..20
};

UnfoldedSpectrum unfold(const Eigen::VectorXd& energies,
                        const UnfoldOptions& opts = {});

// Nearest-neighbor spacings of the unfolded levels (length n-1, entries >= 0).
Eigen::VectorXd spacings(const UnfoldedSpectrum& u);

struct Histogram {
  Eigen::VectorXd edges;    // n_bins + 1 ascending edges over [0, s_max]
  Eigen::VectorXd density;  // per-bin probability density (all samples norm)
  Eigen::VectorXi counts;   // per-bin sample counts
  std::int64_t total = 0;   // all samples, including any beyond s_max
};

Histogram spacing_histogram(const Eigen::VectorXd& samples, int n_bins,
                            double s_max);

// Reference spacing densities; s >= 0 required, beta within [0, 1.2].
double poisson_pdf(double s);
double wigner_dyson_pdf(double s);
double brody_pdf(double beta, double s);
double brody_b(double beta);  // Gamma((beta+2)/(beta+1))^(beta+1)

enum class BrodyOutcome { fitted, not_fittable };

struct BrodyFit {
  BrodyOutcome outcome = BrodyOutcome::not_fittable;
  double beta = 0.0;            // estimate, valid when fitted; in [0, 1.2]
  double b = 0.0;               // normalization derived from beta
  double log_likelihood = 0.0;  // MLE diagnostic (0 for histogram estimator)
  double residual = 0.0;        // histogram-LSQ diagnostic (0 for MLE)
  std::int64_t sample_count = 0;   // spacings used by the estimator
  std::int64_t zeros_dropped = 0;  // exact-zero spacings excluded from MLE
  double spacing_variance = 0.0;   // picket-fence diagnostic
};

// Maximum-likelihood fit over beta in [0, 1.2] (golden-section search).
BrodyFit brody_fit_mle(const Eigen::VectorXd& spacings);

// Histogram least-squares alternative over the same box.
BrodyFit brody_fit_histogram(const Eigen::VectorXd& spacings, int n_bins = 25,
                             double s_max = 4.0);

// Synthetic generators (deterministic for a given seed).
Eigen::VectorXd poisson_levels(std::int64_t n, std::uint64_t seed);
Eigen::VectorXd brody_spacing_samples(std::int64_t n, double beta,
                                      std::uint64_t seed);

// Exports: spacings/histograms as CSV, fit results as a JSON string.
void export_spacings_csv(const std::string& path, const Eigen::VectorXd& s);
void export_histogram_csv(const std::string& path, const Histogram& h);
std::string fit_to_json(const BrodyFit& f);

}  // namespace bbmix::spectral
