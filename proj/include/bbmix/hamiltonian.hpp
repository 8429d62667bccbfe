#pragma once
// Second-quantized operators on the truncated two-component Fock basis:
// sparse symmetric storage, Hamiltonian assembly from pair tensors, one-body
// operators, and move tables for single-particle density matrices.

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "bbmix/fock.hpp"
#include "bbmix/interaction.hpp"

namespace bbmix::hamiltonian {

struct Triplet {
  std::int64_t row, col;
  double value;
};

// Symmetric sparse matrix storing the upper triangle (row <= col), compressed
// by column.  Triplets may address either triangle; duplicates are summed.
class SymmetricSparse {
 public:
  static SymmetricSparse from_triplets(std::int64_t dim,
                                       std::vector<Triplet> triplets);

  std::int64_t dim() const { return dim_; }
  std::int64_t nnz() const { return std::int64_t(values_.size()); }

  void matvec(const double* x, double* y) const;  // y = A x
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  double quadratic_form(const double* x) const;  // x^T A x
  // psi^dagger A psi, real for symmetric real A.
  double expectation(const Eigen::VectorXcd& psi) const;
  Eigen::MatrixXd to_dense() const;
  double max_abs() const;
  double norm_inf() const;  // max absolute row sum of the full matrix

  // Raw upper-triangle storage, one slice of rows per column.
  const std::vector<std::int64_t>& col_start() const { return col_start_; }
  const std::vector<std::int32_t>& rows() const { return rows_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::int64_t dim_ = 0;
  std::vector<std::int64_t> col_start_;
  std::vector<std::int32_t> rows_;
  std::vector<double> values_;

  friend class ColumnAccumulator;
  friend SymmetricSparse assemble_hamiltonian(const fock::BasisTable&,
                                              const interaction::PairTensor&,
                                              const interaction::PairTensor&,
                                              const interaction::PairTensor&);
  friend SymmetricSparse one_body_operator(
      const fock::BasisTable&, const std::function<double(int, int)>&);
};

struct Couplings {
  double g_a = 0.0, g_b = 0.0, g_ab = 0.0;
};

// H = sum_sigma [ sum_i (i + 1/2) n_sigma_i
//               + (1/2) sum_ijkl W^sigma(i,j,k,l) a+_si a+_sj a_sk a_sl ]
//   + sum_ijkl W^AB(i,j,l,k) a+_Ai a+_Bj a_Bk a_Al,
// with sqrt-occupation amplitudes taken in operator order and moves leaving
// the truncated basis dropped.  Tensor mode counts must match the basis.
SymmetricSparse assemble_hamiltonian(const fock::BasisTable& basis,
                                     const interaction::PairTensor& w_aa,
                                     const interaction::PairTensor& w_bb,
                                     const interaction::PairTensor& w_ab);

// sum_sigma sum_ij f(i,j) a+_sigma,i a_sigma,j for a symmetric one-particle
// kernel f (f(i,j) must equal f(j,i)).
SymmetricSparse one_body_operator(const fock::BasisTable& basis,
                                  const std::function<double(int, int)>& f);

// Trap potential energy U = (1/2) sum_particles x^2.
SymmetricSparse trap_operator(const fock::BasisTable& basis);

enum class Component { a, b };

// All in-basis moves a+_i a_j with i != j on one component, plus diagonal
// occupations, for one-body density matrices rho_ij = <psi|a+_i a_j|psi>.
class OneBodyMoveTable {
 public:
  OneBodyMoveTable(const fock::BasisTable& basis, Component comp);

  Eigen::MatrixXcd density_matrix(const Eigen::VectorXcd& psi) const;
  Eigen::MatrixXd density_matrix(const Eigen::VectorXd& psi) const;
  int n_modes() const { return n_modes_; }

 private:
  struct Move {
    std::int32_t create, annihilate;
    std::int64_t source, target;
    double amp;
  };
  int n_modes_ = 0;
  std::vector<Move> moves_;
  std::vector<std::vector<std::uint8_t>> diag_;  // occupations per state

  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> density_impl(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& psi) const;
};

}  // namespace bbmix::hamiltonian
