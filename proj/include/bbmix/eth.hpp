#pragma once
// Matrix-element statistics of an observable in the energy eigenbasis:
// windowed observable matrices, kurtosis of off-diagonal samples, band
// profiles |O_mn| vs omega_mn, exchange-sector filtering by diagonal-Fock
// support, and Gaussian moment fits.
//
// The sector filter computes, for every eigenstate |m>, the weight
// w_m = sum over Fock states F with occ_A == occ_B of |<F|m>|^2.  When the
// two components are exchange-symmetric (g_A == g_B), antisymmetric-sector
// eigenstates carry exactly zero such weight; removing states with
// w_m < threshold (default 1e-8) strips that sector, which eliminates the
// spurious zero band in the off-diagonal element distribution.  w_m is not
// invariant under rotations inside a degenerate eigenvalue cluster, so
// quantitative weight checks should pin couplings with nondegenerate
// spectra.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bbmix/diag.hpp"
#include "bbmix/fock.hpp"
#include "bbmix/hamiltonian.hpp"

namespace bbmix::eth {

struct Window {
  std::int64_t lo = 0;  // first eigenstate index, inclusive
  std::int64_t hi = 0;  // last eigenstate index, inclusive
};

struct ObservableMatrix {
  Window window;
  Eigen::MatrixXd elements;  // O_mn = v_m^T Op v_n over the window
  Eigen::VectorXd energies;  // E_m for the window
};

// O_mn for all pairs in the window; construction verifies symmetry within
// 1e-10 and throws if the window leaves the spectrum or dimensions mismatch.
ObservableMatrix observable_matrix(const diag::SpectrumResult& spec,
                                   const hamiltonian::SymmetricSparse& op,
                                   Window w);

// Flattened strict upper triangle (m < n) of the window, row-major order.
Eigen::VectorXd offdiag_elements(const ObservableMatrix& obs);

struct BandProfile {
  Eigen::VectorXd omega;      // |E_m - E_n| per unordered pair m < n
  Eigen::VectorXd magnitude;  // |O_mn| for the same pair
};

BandProfile offdiag_band_profile(const ObservableMatrix& obs);

// Fourth central moment over squared variance, population estimators.
// Requires >= 1000 samples and a nonzero variance.
double kurtosis(const Eigen::VectorXd& samples);

struct SectorLabeling {
  Eigen::VectorXd weight;      // w_m per eigenstate
  std::vector<char> retained;  // 1 = kept, 0 = removed (w_m < threshold)
  double threshold = 0.0;
  std::int64_t removed_count = 0;
  double removed_fraction = 0.0;
};

SectorLabeling sector_filter(const diag::SpectrumResult& spec,
                             const fock::BasisTable& basis,
                             double threshold = 1e-8);

// Sub-spectrum of the retained eigenstates, preserving order and metadata.
diag::SpectrumResult apply_filter(const diag::SpectrumResult& spec,
                                  const SectorLabeling& labeling);

struct GaussianFit {
  double mean = 0.0;
  double stddev = 0.0;
  double residual = 0.0;  // rms deviation of the sample histogram density
                          // from the moment-matched normal density
};

GaussianFit gaussian_fit(const Eigen::VectorXd& samples, int n_bins = 40);

// CSV rows (m, n, E_m, E_n, O_mn) over the window's upper triangle.
void export_observable_csv(const std::string& path,
                           const ObservableMatrix& obs);

struct EthSummary {
  double kurtosis = 0.0;
  double inverse_kurtosis = 0.0;
  double removed_fraction = 0.0;
  Window window;
  double threshold = 0.0;
};

std::string summary_to_json(const EthSummary& s);

}  // namespace bbmix::eth
