#pragma once
// Symmetric eigendecomposition with enforced accuracy contract, plus binary
// spectrum persistence.
//
// Every decomposition is checked before it is returned: the residual
// max_m ||H v_m - E_m v_m||_2 must not exceed 1e-8 * ||H||_inf and the
// orthonormality defect max|V^T V - I| must not exceed 1e-8.  The achieved
// values are recorded in SpectrumMeta; a violation throws instead of
// returning a silently degraded result.  Eigenvector signs follow a
// deterministic convention: the largest-magnitude component of each vector
// (ties broken by lowest index) is made positive.
//
// Spectrum files are a single JSON header line followed by a packed payload
// of little-endian 8-byte floats: all energies first, then the eigenvector
// matrix column by column.  The header stores a checksum of the payload, the
// basis checksum, and the coupling strengths as exact bit patterns; loading
// verifies format version and checksum and can refuse a file written for a
// different basis.

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "bbmix/hamiltonian.hpp"

namespace bbmix::diag {

// Provenance supplied by the caller; carried through save/load untouched.
struct Provenance {
  hamiltonian::Couplings couplings{};
  std::uint64_t basis_checksum = 0;
};

struct SpectrumMeta {
  Provenance provenance{};
  std::int64_t dim = 0;            // operator dimension
  std::int64_t count = 0;          // eigenpairs held (== dim in full mode)
  double norm_h = 0.0;             // ||H||_inf of the decomposed operator
  double max_residual = 0.0;       // achieved max_m ||H v_m - E_m v_m||_2
  double max_ortho_defect = 0.0;   // achieved max |V^T V - I|
};

struct SpectrumResult {
  Eigen::VectorXd energies;  // ascending, length meta.count
  Eigen::MatrixXd vectors;   // dim x count, column m = eigenvector m
  SpectrumMeta meta;
};

struct DiagOptions {
  // Full decompositions refuse dimensions above this outright.
  std::int64_t dim_cap = 10000;
  // lowest_k uses a dense solver up to this dimension and an iterative
  // Krylov method (full reorthogonalization) above it.
  std::int64_t dense_cap = 10000;
  // Both invariant bounds scale with this tolerance.
  double check_tol = 1e-8;
  // Iteration budget for the Krylov path; <= 0 picks max(6k, 400).
  std::int64_t max_iterations = 0;
};

// Full decomposition of a symmetric operator (LAPACK divide and conquer).
SpectrumResult diagonalize_full(const hamiltonian::SymmetricSparse& h,
                                const Provenance& prov = {},
                                const DiagOptions& opts = {});

// Lowest k eigenpairs.  Dense path is exact; the iterative path targets
// operators too large to densify and reports achieved residuals when it
// fails to converge.  Closely degenerate clusters converge slowly on the
// iterative path; it is intended for interacting (nondegenerate) spectra.
SpectrumResult diagonalize_lowest(const hamiltonian::SymmetricSparse& h,
                                  std::int64_t k, const Provenance& prov = {},
                                  const DiagOptions& opts = {});

// Re-runs the invariant checks of `r` against the operator `h` and refreshes
// meta; throws if the stored decomposition does not satisfy them.
void verify_spectrum(const hamiltonian::SymmetricSparse& h, SpectrumResult& r,
                     double check_tol = 1e-8);

void save_spectrum(const SpectrumResult& r, const std::string& path);

// Loads a spectrum file, verifying format version and payload checksum.  The
// two-argument overload additionally refuses a file whose recorded basis
// checksum differs from `expected_basis_checksum`.
SpectrumResult load_spectrum(const std::string& path);
SpectrumResult load_spectrum(const std::string& path,
                             std::uint64_t expected_basis_checksum);

}  // namespace bbmix::diag
