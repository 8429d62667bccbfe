#pragma once
// Contact interactions between trapped particle pairs: exact relative-motion
// energies from the even-sector transcendental quantization condition,
// energy-renormalized effective pair potentials built channel by channel from
// the exact relative spectrum, the orthogonal mode-pair <-> center-of-mass
// transformation for equal masses, and dense pair-interaction tensors with a
// verified binary cache.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bbmix::interaction {

// F(nu) = -2 Gamma((1-nu)/2) / Gamma(-nu/2); the even relative levels solve
// F(nu) = g / sqrt(2) with E_rel = nu + 1/2.
double quantization_lhs(double nu);

// m-th even-sector relative energy (m = 0, 1, ...) for contact strength
// g >= 0; g = +infinity gives the hard-core value 2m + 3/2 exactly and g = 0
// the noninteracting 2m + 1/2.  The root of F(nu) = g/sqrt(2) is bracketed in
// (2m, 2m+1) and bisected while keeping the sign change, so the residual of
// the search is the relative enclosure width (hi - lo)/hi; it must end below
// 1e-12 or the call throws.
double relative_energy_exact(double g, int m);

// phi_{2m}(0) for the even oscillator modes (phi_0(0) = pi^{-1/4}).
double even_mode_at_origin(int m);

// Normalized truncated expansion of the interacting relative state with
// energy e over the lowest n_rel even modes:
// c_m proportional to phi_{2m}(0) / (2m + 1/2 - e).
Eigen::VectorXd relative_wavefunction(double e, int n_rel);

// Effective interaction on n_rel even relative modes:
// V = U~ diag(E_exact) U~^T - diag(2m + 1/2), with U~ the symmetric
// orthonormalization of the truncated exact eigenvectors.  Throws when the
// overlap Gram matrix is ill-conditioned (condition number > 1e12).
Eigen::MatrixXd effective_relative_interaction(double g, int n_rel);

// Orthogonal transformation between mode pairs (i, j) and center-of-mass /
// relative mode pairs (N, n), n = i + j - N, for equal masses.
class MoshinskyTable {
 public:
  explicit MoshinskyTable(int max_mode);
  // Bracket <i j | N n>; N outside [0, i+j] returns 0.
  double operator()(int i, int j, int N) const;
  int max_mode() const { return max_mode_; }

 private:
  int max_mode_;
  std::vector<std::vector<std::vector<double>>> c_;
};

enum class TensorKind { bare, effective };

// Dense pair-interaction tensor W(i,j,k,l) = <i j|V|k l> on modes
// 0..n_modes-1; entries with odd i+j+k+l vanish.  The tensor is symmetric
// under i<->j, k<->l (with the matching swap on the other pair) and under
// (i,j)<->(k,l).
struct PairTensor {
  TensorKind kind = TensorKind::bare;
  double g = 0.0;
  int n_modes = 0;
  // Effective tensors vanish unless i+j <= pair_cap and k+l <= pair_cap;
  // for bare tensors this records full coverage 2*(n_modes-1).
  int pair_cap = 0;
  std::vector<double> w;

  double value(int i, int j, int k, int l) const;
  std::uint64_t checksum() const;
};

// g * integral phi_i phi_j phi_k phi_l via the Gaussian-decay-2 quadrature
// rule (exact for these quartic products).
PairTensor bare_pair_tensor(double g, int n_modes);

// Channel-resolved effective tensor: center-of-mass channel N <= pair_cap
// carries the energy-exact relative interaction on floor((pair_cap - N)/2)+1
// even modes; higher channels do not couple, so complete pair shells below
// the cap stay exactly decoupled from the truncated-away space.
PairTensor effective_pair_tensor(double g, int n_modes, int pair_cap);

// Raw payload at `path` plus JSON sidecar `path + ".json"` carrying the
// parameters and an FNV-1a checksum; load verifies both or throws.
void save_pair_tensor(const std::string& path, const PairTensor& t);
PairTensor load_pair_tensor(const std::string& path);

}  // namespace bbmix::interaction
