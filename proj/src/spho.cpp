#include "bbmix/spho.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <lapacke.h>

namespace bbmix::spho {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_mode(int n) {
  if (n < 0 || n > kMaxMode)
    throw std::invalid_argument("mode index out of range: " + std::to_string(n));
}

}  // namespace

double ho_energy(int n) {
  check_mode(n);
  return n + 0.5;
}

double hermite_function(int n, double x) {
  check_mode(n);
  // phi_0 = pi^{-1/4} exp(-x^2/2); phi_{k+1} = sqrt(2/(k+1)) x phi_k
  //                                           - sqrt(k/(k+1)) phi_{k-1}.
  double pm = 0.0;
  double p = std::pow(kPi, -0.25) * std::exp(-0.5 * x * x);
  if (n == 0) return p;
  double p1 = std::sqrt(2.0) * x * p;
  pm = p;
  p = p1;
  for (int k = 1; k < n; ++k) {
    const double next =
        std::sqrt(2.0 / (k + 1)) * x * p - std::sqrt(double(k) / (k + 1)) * pm;
    pm = p;
    p = next;
  }
  return p;
}

Eigen::MatrixXd hermite_table(int n_max, const Eigen::VectorXd& x) {
  check_mode(n_max);
  const auto npts = x.size();
  Eigen::MatrixXd out(n_max + 1, npts);
  const Eigen::ArrayXd xs = x.array();
  Eigen::ArrayXd pm = Eigen::ArrayXd::Zero(npts);
  Eigen::ArrayXd p = std::pow(kPi, -0.25) * (-0.5 * xs.square()).exp();
  out.row(0) = p;
  for (int k = 0; k < n_max; ++k) {
    Eigen::ArrayXd next = std::sqrt(2.0 / (k + 1)) * xs * p;
    if (k > 0) next -= std::sqrt(double(k) / (k + 1)) * pm;
    pm = p;
    p = next;
    out.row(k + 1) = p;
  }
  return out;
}

double x_squared_element(int i, int j) {
  check_mode(i);
  check_mode(j);
  if (i == j) return i + 0.5;
  const int lo = std::min(i, j);
  if (std::abs(i - j) == 2) return 0.5 * std::sqrt(double(lo + 1) * (lo + 2));
  return 0.0;
}

std::complex<double> momentum_phase(int n) {
  check_mode(n);
  switch (n & 3) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, -1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, 1.0};
  }
}

std::complex<double> momentum_mode_value(int n, double k) {
  return momentum_phase(n) * hermite_function(n, k);
}

QuadratureRule gauss_hermite(int n_nodes, double gaussian_decay) {
  if (n_nodes < 1 || n_nodes > 600)
    throw std::invalid_argument("quadrature size out of range");
  if (!(gaussian_decay > 0.0))
    throw std::invalid_argument("gaussian_decay must be positive");

  // Golub-Welsch: Jacobi matrix for weight exp(-y^2) has zero diagonal and
  // off-diagonals sqrt(k/2); weights are sqrt(pi) * (first eigvec row)^2.
  const int n = n_nodes;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off(n > 1 ? n - 1 : 1);
  for (int k = 1; k < n; ++k) off[k - 1] = std::sqrt(0.5 * k);
  Eigen::MatrixXd z(n, n);
  const lapack_int info = LAPACKE_dstev(LAPACK_COL_MAJOR, 'V', n, diag.data(),
                                        off.data(), z.data(), n);
  if (info != 0)
    throw std::runtime_error("tridiagonal eigensolve failed: info=" +
                             std::to_string(info));

  const double s = std::sqrt(gaussian_decay);
  QuadratureRule rule;
  rule.gaussian_decay = gaussian_decay;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double y = diag[i];  // ascending after dstev
    // Through logs so the exp(+y^2) compensation never overflows.
    const double logw = 0.5 * std::log(kPi) + 2.0 * std::log(std::abs(z(0, i)));
    rule.nodes[i] = y / s;
    rule.weights[i] = std::exp(logw + y * y) / s;
  }
  return rule;
}

}  // namespace bbmix::spho
