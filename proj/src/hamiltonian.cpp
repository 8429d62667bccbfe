#include "bbmix/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bbmix/spho.hpp"

namespace bbmix::hamiltonian {

namespace {
using fock::Occ;
}

// Dense scratch accumulator that emits one sorted upper-triangle column at a
// time; exact-zero sums are dropped.
class ColumnAccumulator {
 public:
  explicit ColumnAccumulator(std::int64_t dim) : acc_(dim, 0.0), seen_(dim, 0) {}

  void add(std::int64_t row, double v) {
    if (!seen_[row]) {
      seen_[row] = 1;
      touched_.push_back(row);
    }
    acc_[row] += v;
  }

  void flush(SymmetricSparse& m) {
    std::sort(touched_.begin(), touched_.end());
    for (const auto r : touched_) {
      if (acc_[r] != 0.0) {
        m.rows_.push_back(std::int32_t(r));
        m.values_.push_back(acc_[r]);
      }
      acc_[r] = 0.0;
      seen_[r] = 0;
    }
    touched_.clear();
    m.col_start_.push_back(std::int64_t(m.rows_.size()));
  }

 private:
  std::vector<double> acc_;
  std::vector<char> seen_;
  std::vector<std::int64_t> touched_;
};

SymmetricSparse SymmetricSparse::from_triplets(std::int64_t dim,
                                               std::vector<Triplet> triplets) {
  if (dim < 1) throw std::invalid_argument("matrix dimension must be positive");
  for (auto& t : triplets) {
    if (t.row < 0 || t.row >= dim || t.col < 0 || t.col >= dim)
      throw std::invalid_argument("triplet index out of range");
    if (t.row > t.col) std::swap(t.row, t.col);
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& x, const Triplet& y) {
    return std::make_pair(x.col, x.row) < std::make_pair(y.col, y.row);
  });

  SymmetricSparse m;
  m.dim_ = dim;
  m.col_start_.assign(1, 0);
  std::size_t p = 0;
  for (std::int64_t c = 0; c < dim; ++c) {
    while (p < triplets.size() && triplets[p].col == c) {
      const std::int64_t r = triplets[p].row;
      double v = 0.0;
      while (p < triplets.size() && triplets[p].col == c && triplets[p].row == r)
        v += triplets[p++].value;
      if (v != 0.0) {
        m.rows_.push_back(std::int32_t(r));
        m.values_.push_back(v);
      }
    }
    m.col_start_.push_back(std::int64_t(m.rows_.size()));
  }
  return m;
}

void SymmetricSparse::matvec(const double* x, double* y) const {
  std::fill(y, y + dim_, 0.0);
  for (std::int64_t c = 0; c < dim_; ++c) {
    const double xc = x[c];
    double acc = 0.0;
    for (std::int64_t p = col_start_[c]; p < col_start_[c + 1]; ++p) {
      const std::int32_t r = rows_[p];
      const double v = values_[p];
      y[r] += v * xc;
      if (r != c) acc += v * x[r];
    }
    y[c] += acc;
  }
}

Eigen::VectorXd SymmetricSparse::apply(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw std::invalid_argument("vector length mismatch");
  Eigen::VectorXd y(dim_);
  matvec(x.data(), y.data());
  return y;
}

double SymmetricSparse::quadratic_form(const double* x) const {
  double s = 0.0;
  for (std::int64_t c = 0; c < dim_; ++c)
    for (std::int64_t p = col_start_[c]; p < col_start_[c + 1]; ++p) {
      const std::int32_t r = rows_[p];
      s += (r == c ? 1.0 : 2.0) * values_[p] * x[r] * x[c];
    }
  return s;
}

double SymmetricSparse::expectation(const Eigen::VectorXcd& psi) const {
  if (psi.size() != dim_) throw std::invalid_argument("vector length mismatch");
  double s = 0.0;
  for (std::int64_t c = 0; c < dim_; ++c)
    for (std::int64_t p = col_start_[c]; p < col_start_[c + 1]; ++p) {
      const std::int32_t r = rows_[p];
      if (r == c)
        s += values_[p] * std::norm(psi[c]);
      else
        s += 2.0 * values_[p] * (std::conj(psi[r]) * psi[c]).real();
    }
  return s;
}

Eigen::MatrixXd SymmetricSparse::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(dim_, dim_);
  for (std::int64_t c = 0; c < dim_; ++c)
    for (std::int64_t p = col_start_[c]; p < col_start_[c + 1]; ++p) {
      d(rows_[p], c) = values_[p];
      d(c, rows_[p]) = values_[p];
    }
  return d;
}

double SymmetricSparse::max_abs() const {
  double m = 0.0;
  for (const double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double SymmetricSparse::norm_inf() const {
  std::vector<double> row_sum(dim_, 0.0);
  for (std::int64_t c = 0; c < dim_; ++c)
    for (std::int64_t p = col_start_[c]; p < col_start_[c + 1]; ++p) {
      const double a = std::abs(values_[p]);
      row_sum[rows_[p]] += a;
      if (rows_[p] != std::int32_t(c)) row_sum[c] += a;
    }
  return row_sum.empty() ? 0.0 : *std::max_element(row_sum.begin(), row_sum.end());
}

namespace {

struct BudgetRule {
  bool per_component;
  int cap_a, cap_b, cap_total;
};

BudgetRule budget_rule(const fock::BasisMeta& meta) {
  return {meta.truncation == fock::Truncation::per_component, meta.cap_a,
          meta.cap_b, meta.cap_total};
}

void check_tensor(const interaction::PairTensor& t, int n_modes) {
  if (t.n_modes != n_modes)
    throw std::invalid_argument("pair tensor mode count differs from basis");
}

}  // namespace

SymmetricSparse assemble_hamiltonian(const fock::BasisTable& basis,
                                     const interaction::PairTensor& w_aa,
                                     const interaction::PairTensor& w_bb,
                                     const interaction::PairTensor& w_ab) {
  const auto& meta = basis.meta();
  const int n = meta.n_modes;
  check_tensor(w_aa, n);
  check_tensor(w_bb, n);
  check_tensor(w_ab, n);
  const BudgetRule rule = budget_rule(meta);

  SymmetricSparse out;
  out.dim_ = basis.size();
  out.col_start_.assign(1, 0);
  ColumnAccumulator acc(basis.size());
  Occ work, work_b;

  for (std::int64_t s = 0; s < basis.size(); ++s) {
    const auto& st = basis.state(s);
    const int qa = fock::quanta(st.a), qb = fock::quanta(st.b);

    double diag = 0.0;
    for (int m = 0; m < n; ++m) diag += (m + 0.5) * (st.a[m] + st.b[m]);
    acc.add(s, diag);

    // Intra-component contact terms, (1/2) W(i,j,k,l) a+_i a+_j a_k a_l.
    const auto intra = [&](const Occ& occ, const Occ& other, bool is_a,
                           const interaction::PairTensor& w) {
      const int q_here = is_a ? qa : qb;
      const int cap = rule.per_component ? (is_a ? rule.cap_a : rule.cap_b)
                                         : rule.cap_total;
      const int q_base = rule.per_component ? q_here : qa + qb;
      for (int l = 0; l < n; ++l) {
        if (!occ[l]) continue;
        const double amp_l = std::sqrt(double(occ[l]));
        for (int k = 0; k < n; ++k) {
          const int nk = occ[k] - (k == l ? 1 : 0);
          if (nk <= 0) continue;
          const double amp_ann = amp_l * std::sqrt(double(nk));
          const int budget = cap - (q_base - k - l);
          if (budget < 0) continue;
          work = occ;
          --work[l];
          --work[k];
          for (int j = 0; j <= budget && j < n; ++j) {
            const double amp_j = std::sqrt(double(work[j] + 1));
            ++work[j];
            for (int i = (k + l + j) % 2; i + j <= budget && i < n; i += 2) {
              const double wv = w.value(i, j, k, l);
              if (wv == 0.0) continue;
              const double amp_i = std::sqrt(double(work[i] + 1));
              ++work[i];
              const auto t = is_a ? basis.find(work, other) : basis.find(other, work);
              --work[i];
              if (t && *t <= s)
                acc.add(*t, 0.5 * wv * amp_ann * amp_j * amp_i);
            }
            --work[j];
          }
        }
      }
    };
    intra(st.a, st.b, true, w_aa);
    intra(st.b, st.a, false, w_bb);

    // Inter-component term W(i,j,l,k) a+_Ai a+_Bj a_Bk a_Al (bra pair (i,j),
    // ket pair (l,k) in particle-slot order).
    for (int l = 0; l < n; ++l) {
      if (!st.a[l]) continue;
      const double amp_l = std::sqrt(double(st.a[l]));
      for (int k = 0; k < n; ++k) {
        if (!st.b[k]) continue;
        const double amp_ann = amp_l * std::sqrt(double(st.b[k]));
        work = st.a;
        --work[l];
        work_b = st.b;
        --work_b[k];
        const int qa2 = qa - l, qb2 = qb - k;
        const int bj = rule.per_component ? rule.cap_b - qb2
                                          : rule.cap_total - qa2 - qb2;
        for (int j = 0; j <= bj && j < n; ++j) {
          const double amp_j = std::sqrt(double(work_b[j] + 1));
          ++work_b[j];
          const int bi = rule.per_component ? rule.cap_a - qa2
                                            : rule.cap_total - qa2 - qb2 - j;
          for (int i = (k + l + j) % 2; i <= bi && i < n; i += 2) {
            const double wv = w_ab.value(i, j, l, k);
            if (wv == 0.0) continue;
            const double amp_i = std::sqrt(double(work[i] + 1));
            ++work[i];
            const auto t = basis.find(work, work_b);
            --work[i];
            if (t && *t <= s) acc.add(*t, wv * amp_ann * amp_j * amp_i);
          }
          --work_b[j];
        }
      }
    }

    acc.flush(out);
  }
  return out;
}

SymmetricSparse one_body_operator(const fock::BasisTable& basis,
                                  const std::function<double(int, int)>& f) {
  const auto& meta = basis.meta();
  const int n = meta.n_modes;
  const BudgetRule rule = budget_rule(meta);

  SymmetricSparse out;
  out.dim_ = basis.size();
  out.col_start_.assign(1, 0);
  ColumnAccumulator acc(basis.size());
  Occ work;

  for (std::int64_t s = 0; s < basis.size(); ++s) {
    const auto& st = basis.state(s);
    const int qa = fock::quanta(st.a), qb = fock::quanta(st.b);

    double diag = 0.0;
    for (int m = 0; m < n; ++m)
      if (st.a[m] + st.b[m]) diag += f(m, m) * (st.a[m] + st.b[m]);
    acc.add(s, diag);

    const auto hop = [&](const Occ& occ, const Occ& other, bool is_a) {
      const int q_here = is_a ? qa : qb;
      const int cap = rule.per_component ? (is_a ? rule.cap_a : rule.cap_b)
                                         : rule.cap_total;
      const int q_base = rule.per_component ? q_here : qa + qb;
      for (int j = 0; j < n; ++j) {
        if (!occ[j]) continue;
        const double amp_j = std::sqrt(double(occ[j]));
        work = occ;
        --work[j];
        for (int i = 0; i < n; ++i) {
          if (i == j) continue;
          if (q_base - j + i > cap) continue;
          const double fv = f(i, j);
          if (fv == 0.0) continue;
          const double amp = amp_j * std::sqrt(double(work[i] + 1)) * fv;
          ++work[i];
          const auto t = is_a ? basis.find(work, other) : basis.find(other, work);
          --work[i];
          if (t && *t <= s) acc.add(*t, amp);
        }
      }
    };
    hop(st.a, st.b, true);
    hop(st.b, st.a, false);

    acc.flush(out);
  }
  return out;
}

SymmetricSparse trap_operator(const fock::BasisTable& basis) {
  return one_body_operator(basis, [](int i, int j) {
    return 0.5 * spho::x_squared_element(i, j);
  });
}

OneBodyMoveTable::OneBodyMoveTable(const fock::BasisTable& basis, Component comp)
    : n_modes_(basis.meta().n_modes) {
  const auto& meta = basis.meta();
  const int n = n_modes_;
  const BudgetRule rule = budget_rule(meta);
  const bool is_a = comp == Component::a;
  Occ work;

  diag_.reserve(basis.size());
  for (std::int64_t s = 0; s < basis.size(); ++s) {
    const auto& st = basis.state(s);
    const Occ& occ = is_a ? st.a : st.b;
    const Occ& other = is_a ? st.b : st.a;
    diag_.push_back(occ);

    const int q_here = fock::quanta(occ);
    const int cap = rule.per_component ? (is_a ? rule.cap_a : rule.cap_b)
                                       : rule.cap_total;
    const int q_base =
        rule.per_component ? q_here : q_here + fock::quanta(other);
    for (int j = 0; j < n; ++j) {
      if (!occ[j]) continue;
      const double amp_j = std::sqrt(double(occ[j]));
      work = occ;
      --work[j];
      for (int i = 0; i < n; ++i) {
        if (i == j || q_base - j + i > cap) continue;
        const double amp = amp_j * std::sqrt(double(work[i] + 1));
        ++work[i];
        const auto t = is_a ? basis.find(work, other) : basis.find(other, work);
        --work[i];
        if (t) moves_.push_back({i, j, s, *t, amp});
      }
    }
  }
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
OneBodyMoveTable::density_impl(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& psi) const {
  if (psi.size() != std::int64_t(diag_.size()))
    throw std::invalid_argument("vector length mismatch");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> rho =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n_modes_,
                                                                  n_modes_);
  for (std::size_t s = 0; s < diag_.size(); ++s) {
    const double p = Eigen::numext::abs2(psi[s]);
    for (int m = 0; m < n_modes_; ++m)
      if (diag_[s][m]) rho(m, m) += Scalar(p * diag_[s][m]);
  }
  for (const auto& mv : moves_)
    rho(mv.create, mv.annihilate) +=
        Eigen::numext::conj(psi[mv.target]) * Scalar(mv.amp) * psi[mv.source];
  return rho;
}

Eigen::MatrixXcd OneBodyMoveTable::density_matrix(
    const Eigen::VectorXcd& psi) const {
  return density_impl<std::complex<double>>(psi);
}

Eigen::MatrixXd OneBodyMoveTable::density_matrix(
    const Eigen::VectorXd& psi) const {
  return density_impl<double>(psi);
}

}  // namespace bbmix::hamiltonian
