#pragma once
// Sudden-quench protocol on the trapped mixture: construction of weighted
// two-particle product initial states, eigenbasis time evolution of
// observables, diagonal and microcanonical ensembles, thermalization
// metrics, and real-/momentum-space density profiles along the trajectory.
//
// Conventions.  An initial state is a product |Psi_A> (x) |Psi_B> of
// per-component superpositions of normalized two-particle Fock
// configurations |1_i 1_j> (i == j meaning |2_i>).  Evolution is exact in
// the eigenbasis: |Psi(t)> = sum_m c_m e^{-i E_m t} |m> with overlaps
// c_m = v_m^T |Psi(0)>.  A time series of a symmetric observable O is
//   O(t) = sum_{m,n} c_m c_n cos((E_m - E_n) t) O_mn
// evaluated as x(t)^T O x(t) + y(t)^T O y(t) with x_m = c_m cos(E_m t),
// y_m = c_m sin(E_m t); overlaps with |c_m|^2 below a drop tolerance are
// zeroed and the dropped mass recorded.  The spatial-parity sectors of the
// Hamiltonian evolve independently, so a mixed-parity state can be evolved
// either in a both-parity basis or sector by sector and summed; the
// sector spectra can also be merged into one both-parity spectrum.

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bbmix/diag.hpp"
#include "bbmix/eth.hpp"
#include "bbmix/fock.hpp"
#include "bbmix/hamiltonian.hpp"

namespace bbmix::quench {

// One two-particle Fock configuration |1_i 1_j> with a real weight.
// (i, j) and (j, i) name the same configuration; duplicated configurations
// accumulate their weights.
struct PairTerm {
  int i = 0, j = 0;
  double weight = 1.0;
};

// What to do about basis states the configured product misses (parity or
// truncation projection):
//   renormalize       scale the built vector back to unit norm (default);
//   keep_weights      keep the projected amplitudes (norm <= 1), so the
//                     squared norm reports the mass inside this basis;
//   require_complete  throw if the product is not fully representable.
enum class NormPolicy { renormalize, keep_weights, require_complete };

struct InitialStateSpec {
  std::vector<PairTerm> a_terms, b_terms;
  NormPolicy policy = NormPolicy::renormalize;
};

// Default B-state reading: the equal-weight Fock superposition
// (|2_0> + |1_0 1_1>)/sqrt(2) (noninteracting energy 1.5), or the literal
// symmetrized first-quantized sum (2|2_0> + sqrt(2)|1_0 1_1>)/sqrt(6)
// (energy 4/3).  The run metadata records which one was used.
enum class BConstruction { fock_superposition, literal_symmetrized };

// The default quench state: A = ten equal-weight pair configurations
// |1_i 1_{19-i}>, i = 0..9 (component energy 20); B as selected above.
InitialStateSpec default_quench_spec(
    BConstruction b = BConstruction::fock_superposition);

// Noninteracting energy expectation of the product state described by the
// spec: sum over components of sum_c w_c^2 (i_c + j_c + 1) / sum_c w_c^2
// over accumulated configurations.  An empty component contributes zero.
// Throws std::invalid_argument for nonfinite weights or a zero-norm
// component.
double noninteracting_energy(const InitialStateSpec& spec);

// Dense vector of the product state in the given basis.  Each component
// with two particles must carry at least one configuration; a component
// with zero particles must carry none (other particle numbers are not
// expressible as pair configurations and throw).  Configurations must fit
// the basis truncation per component: modes in [0, n_modes) and
// i + j <= cap of that component; product states absent from the basis
// (parity sector or total-energy truncation) are projected out and
// handled per the spec's normalization policy.
Eigen::VectorXd build_initial_state(const InitialStateSpec& spec,
                                    const fock::BasisTable& basis);

struct Overlaps {
  Eigen::VectorXd c;             // c_m = v_m^T state
  double completeness = 0.0;     // sum c_m^2
};

// Overlaps of a (basis-side) state with every computed eigenvector.
// Throws std::invalid_argument if the state length differs from the
// eigenvector length.
Overlaps overlaps(const Eigen::VectorXd& state,
                  const diag::SpectrumResult& spectrum);

// Inclusive uniform grid t0, t0+step, ..., t1 (last point within half a
// step of t1).  step > 0, t1 >= t0, all finite.
Eigen::VectorXd uniform_times(double t0, double t1, double step);

struct EvolutionSeries {
  Eigen::VectorXd times, values;
  double dropped_mass = 0.0;     // total |c_m|^2 zeroed by the tolerance
  bool drop_warning = false;     // dropped_mass > 1e-6
};

// Time series of the observable for the given overlaps.  The observable
// window must contain every m with |c_m|^2 > drop_tol (else
// std::invalid_argument); inside the window, overlaps below the tolerance
// are zeroed and their mass recorded.  Dropped mass > 1e-3 throws
// std::runtime_error; > 1e-6 sets drop_warning.  `energies` must be the
// spectrum the observable matrix was built from (checked bitwise on the
// window).
EvolutionSeries evolve_expectation(const eth::ObservableMatrix& obs,
                                   const Eigen::VectorXd& c,
                                   const Eigen::VectorXd& energies,
                                   const Eigen::VectorXd& times,
                                   double drop_tol = 1e-12);

// O_DE = sum_m c_m^2 O_mm over the full overlap list (no dropping).
double diagonal_ensemble(const Eigen::VectorXd& c,
                         const Eigen::VectorXd& diagonal);

struct EnsembleWindow {
  double e_mid = 0.0;
  double delta_e = 2.0;          // half-width; the default follows the run
};

struct MicrocanonicalResult {
  double value = 0.0;
  std::int64_t n_mc = 0;
  std::vector<std::int64_t> members;  // eigenstate indices in the window
};

// Unweighted mean of O_mm over eigenstates with |E_m - e_mid| <= delta_e.
// Throws std::runtime_error if the window is empty.
MicrocanonicalResult microcanonical_ensemble(
    const diag::SpectrumResult& spectrum, const Eigen::VectorXd& diagonal,
    const EnsembleWindow& window);

struct ThermalizationMetrics {
  Eigen::VectorXd delta_series;     // O(t) - ME over the whole series
  double variance = 0.0;            // population variance over [t0, t1]
  std::int64_t window_samples = 0;  // series points inside [t0, t1]
  double de_me_deviation = 0.0;     // |(DE - ME)/DE|
  bool de_me_defined = true;        // false when DE == 0
};

// Deviation-from-ME series plus its variance over the window and the
// relative DE-ME deviation.  The series must cover [t0, t1] and t1 > t0.
ThermalizationMetrics thermalization_metrics(const EvolutionSeries& series,
                                             double de, double me,
                                             double t0 = 100.0,
                                             double t1 = 400.0);

// |Psi(t)> = sum_m c_m e^{-i E_m t} v_m, as a basis-side complex vector.
Eigen::VectorXcd state_at(const diag::SpectrumResult& spectrum,
                          const Eigen::VectorXd& c, double t);

// n(x_p) = sum_ij rho_ij phi_i(x_p) phi_j(x_p).  The hermitian-part
// quadratic form is used, so the result is exactly real.
Eigen::VectorXd density_from_matrix(const Eigen::MatrixXcd& rho,
                                    const Eigen::VectorXd& grid);
Eigen::VectorXd density_from_matrix(const Eigen::MatrixXd& rho,
                                    const Eigen::VectorXd& grid);

// One component's position density of a (complex) state on the grid.
Eigen::VectorXd density_profile(const hamiltonian::OneBodyMoveTable& table,
                                const Eigen::VectorXcd& state,
                                const Eigen::VectorXd& grid);

// n(k_q) = sum_ij rho_ij conj(u_i(k_q)) u_j(k_q) with u_n = (-i)^n phi_n,
// for a summed-over-components density matrix; throws std::runtime_error
// if any value is negative beyond 1e-10 times the matrix trace.
Eigen::VectorXd momentum_from_matrix(const Eigen::MatrixXcd& rho_total,
                                     const Eigen::VectorXd& k_grid);

// Whole-system momentum density of a (complex) state.
Eigen::VectorXd momentum_profile(const hamiltonian::OneBodyMoveTable& table_a,
                                 const hamiltonian::OneBodyMoveTable& table_b,
                                 const Eigen::VectorXcd& state,
                                 const Eigen::VectorXd& k_grid);

// sum_m weights[m] * rho(v_m) over eigenstates with nonzero weight;
// weights are used as given (pass |c_m|^2 for the diagonal ensemble,
// 1/N_mc on window members for the microcanonical one).
Eigen::MatrixXd averaged_density_matrix(
    const diag::SpectrumResult& spectrum,
    const hamiltonian::OneBodyMoveTable& table,
    const Eigen::VectorXd& weights);

// Trapezoid-rule integral of sampled values over a strictly increasing grid.
double trapezoid(const Eigen::VectorXd& grid, const Eigen::VectorXd& values);

struct ProfileDeviations {
  Eigen::MatrixXd pointwise;      // |n(x,t) - n_ME(x)|, one column per time
  Eigen::VectorXd integrated;     // trapezoid over x, one entry per time
  double de_me_integrated = 0.0;  // trapezoid of |n_DE(x) - n_ME(x)|
};

// Pointwise and integrated deviations of a profile trajectory (one column
// per time) from the microcanonical profile, plus the integrated DE-ME
// deviation.  All inputs share the grid.
ProfileDeviations profile_deviations(const Eigen::VectorXd& grid,
                                     const Eigen::MatrixXd& trajectory,
                                     const Eigen::VectorXd& me_profile,
                                     const Eigen::VectorXd& de_profile);

// Embed two disjoint-sector spectra (e.g. even and odd spatial parity)
// into the containing basis and merge by ascending energy (ties keep
// sector1 first).  Sector couplings must agree bitwise; every sector state
// must exist in the containing basis and the sectors must not overlap.
// The merged provenance points at the containing basis; residual and Gram
// bounds carry over exactly because the sector supports are disjoint.
diag::SpectrumResult merge_sector_spectra(const fock::BasisTable& full,
                                          const fock::BasisTable& sector1,
                                          const diag::SpectrumResult& spec1,
                                          const fock::BasisTable& sector2,
                                          const diag::SpectrumResult& spec2);

// Aggregate of one quench run, serialized by the exports below.
struct QuenchRecord {
  hamiltonian::Couplings couplings;
  std::string sector_mode = "both";  // "both", "even", or "odd"
  std::string b_construction = "fock_superposition";
  double e_initial = 0.0;            // noninteracting energy of the spec
  double completeness = 0.0;         // sum c_m^2 over the evolution basis
  double dropped_mass = 0.0;
  bool drop_warning = false;
  double e_mid = 0.0, delta_e = 2.0;
  std::int64_t n_mc = 0;
  double u_de = 0.0, u_me = 0.0;
  double variance = 0.0;
  double de_me_deviation = 0.0;
  bool de_me_defined = true;
  double density_de_me = 0.0;        // integrated |n^B_DE - n^B_ME|
  Eigen::VectorXd times, potential_series, delta_series;
  Eigen::VectorXd profile_times, density_deviation, momentum_deviation;
  Eigen::VectorXd overlaps;          // c_m, evolution-basis ordering
  std::uint64_t settings_checksum = 0;
};

// JSON object of every scalar metric (series lengths included, data not).
std::string record_to_json(const QuenchRecord& r);

// CSV "t,potential,delta" of the main series.  Series lengths must match
// the time grid (std::invalid_argument otherwise).
void export_series_csv(const std::string& path, const QuenchRecord& r);

struct SpacetimeArray {
  Eigen::VectorXd grid, times;
  Eigen::MatrixXd values;  // grid.size() x times.size()
};

// One JSON header line (format, version, sizes, payload checksum), then
// grid, times, and values (column-major) as packed little-endian doubles.
void save_spacetime(const std::string& path, const Eigen::VectorXd& grid,
                    const Eigen::VectorXd& times,
                    const Eigen::MatrixXd& values);
// Strict loader: refuses version/size mismatches, payload corruption, and
// trailing bytes.
SpacetimeArray load_spacetime(const std::string& path);

}  // namespace bbmix::quench
