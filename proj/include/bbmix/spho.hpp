#pragma once
// Single-particle 1D harmonic-oscillator utilities in natural trap units
// (hbar = m = omega = 1): normalized eigenfunctions in position and momentum
// space, analytic matrix elements, and Gauss-Hermite quadrature rules.

#include <complex>

#include <Eigen/Dense>

namespace bbmix::spho {

// Hard cap on mode index; recurrence is stable far beyond typical use.
inline constexpr int kMaxMode = 1024;

// E_n = n + 1/2.
double ho_energy(int n);

// Normalized eigenfunction phi_n(x), evaluated via the stable normalized
// three-term recurrence.  Throws std::invalid_argument for n outside
// [0, kMaxMode].
double hermite_function(int n, double x);

// Rows 0..n_max of phi_n evaluated on the given points: (n_max+1) x n_pts.
Eigen::MatrixXd hermite_table(int n_max, const Eigen::VectorXd& x);

// <i| x^2 |j>: (i + 1/2) on the diagonal, sqrt((m+1)(m+2))/2 two off, else 0.
double x_squared_element(int i, int j);

// Momentum-space eigenfunction phase: phi~_n(k) = (-i)^n phi_n(k).
std::complex<double> momentum_phase(int n);
std::complex<double> momentum_mode_value(int n, double k);

struct QuadratureRule {
  Eigen::VectorXd nodes;    // ascending
  Eigen::VectorXd weights;  // Gaussian factor absorbed: sum w f(x) ~ integral f
  double gaussian_decay = 1.0;
};

// Rule with sum_k w_k f(x_k) = integral f(x) dx exact for
// f(x) = p(x) exp(-gaussian_decay x^2), deg p <= 2 n_nodes - 1.
// Built by Golub-Welsch on the Jacobi matrix; weights carry exp(+y^2) so the
// Gaussian lives in the integrand, then nodes/weights are rescaled by
// sqrt(gaussian_decay).  n_nodes in [1, 600].
QuadratureRule gauss_hermite(int n_nodes, double gaussian_decay = 1.0);

}  // namespace bbmix::spho
