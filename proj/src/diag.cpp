#include "bbmix/diag.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "bbmix/fock.hpp"

namespace bbmix::diag {

namespace {

lapack_int as_lapack(std::int64_t n, const char* what) {
  if (n < 1 || n > 2000000000LL)
    throw std::invalid_argument(std::string(what) + " out of range");
  return lapack_int(n);
}

// Largest-magnitude component positive, ties broken by lowest index.
void fix_signs(Eigen::MatrixXd& v) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index best = 0;
    double mag = std::abs(v(0, c));
    for (Eigen::Index r = 1; r < v.rows(); ++r) {
      const double m = std::abs(v(r, c));
      if (m > mag) {
        mag = m;
        best = r;
      }
    }
    if (v(best, c) < 0.0) v.col(c) = -v.col(c);
  }
}

void require_ascending(const Eigen::VectorXd& e) {
  for (Eigen::Index i = 1; i < e.size(); ++i)
    if (e[i] < e[i - 1])
      throw std::runtime_error("eigenvalues not returned in ascending order");
}

// Residual + orthonormality gate.  `h_dense`, when provided, computes the
// residual with one matrix product; otherwise one sparse matvec per column.
void run_checks(const hamiltonian::SymmetricSparse& h,
                const Eigen::MatrixXd* h_dense, SpectrumResult& r, double tol) {
  const Eigen::Index dim = r.vectors.rows();
  const Eigen::Index k = r.vectors.cols();
  r.meta.dim = dim;
  r.meta.count = k;
  r.meta.norm_h = h.norm_inf();

  double rmax = 0.0;
  if (h_dense) {
    Eigen::MatrixXd hv = (*h_dense) * r.vectors;
    for (Eigen::Index c = 0; c < k; ++c)
      rmax = std::max(rmax,
                      (hv.col(c) - r.energies[c] * r.vectors.col(c)).norm());
  } else {
    Eigen::VectorXd hv(dim);
    for (Eigen::Index c = 0; c < k; ++c) {
      h.matvec(r.vectors.col(c).data(), hv.data());
      rmax = std::max(rmax,
                      (hv - r.energies[c] * r.vectors.col(c)).norm());
    }
  }

  Eigen::MatrixXd gram = r.vectors.transpose() * r.vectors;
  gram.diagonal().array() -= 1.0;
  const double omax = gram.size() ? gram.cwiseAbs().maxCoeff() : 0.0;

  r.meta.max_residual = rmax;
  r.meta.max_ortho_defect = omax;
  if (!(rmax <= tol * r.meta.norm_h) || !(omax <= tol)) {
    std::ostringstream msg;
    msg << "decomposition failed its accuracy contract: max residual " << rmax
        << " (bound " << tol * r.meta.norm_h << "), orthonormality defect "
        << omax << " (bound " << tol << ")";
    throw std::runtime_error(msg.str());
  }
}

SpectrumResult dense_lowest(const hamiltonian::SymmetricSparse& h,
                            std::int64_t k, const Provenance& prov,
                            const DiagOptions& opts) {
  const lapack_int n = as_lapack(h.dim(), "dimension");
  const lapack_int kk = as_lapack(k, "eigenpair count");
  Eigen::MatrixXd a = h.to_dense();
  SpectrumResult r;
  r.meta.provenance = prov;
  r.energies.resize(n);
  r.vectors.resize(n, kk);
  std::vector<lapack_int> isuppz(2 * std::size_t(kk));
  lapack_int found = 0;
  const double abstol = 2.0 * LAPACKE_dlamch('S');
  const lapack_int info = LAPACKE_dsyevr(
      LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n, 0.0, 0.0, 1, kk, abstol,
      &found, r.energies.data(), r.vectors.data(), n, isuppz.data());
  if (info != 0)
    throw std::runtime_error("dense eigensolver failed with code " +
                             std::to_string(info));
  if (found != kk)
    throw std::runtime_error("dense eigensolver converged " +
                             std::to_string(found) + " of " +
                             std::to_string(kk) + " requested pairs");
  r.energies.conservativeResize(kk);
  require_ascending(r.energies);
  fix_signs(r.vectors);
  run_checks(h, nullptr, r, opts.check_tol);
  return r;
}

SpectrumResult krylov_lowest(const hamiltonian::SymmetricSparse& h,
                             std::int64_t k, const Provenance& prov,
                             const DiagOptions& opts) {
  const std::int64_t dim = h.dim();
  const std::int64_t max_it =
      std::min(dim, opts.max_iterations > 0 ? opts.max_iterations
                                            : std::max<std::int64_t>(6 * k, 400));
  if (max_it < k)
    throw std::invalid_argument("iteration budget below requested pair count");

  const double norm_h = h.norm_inf();
  const double conv_tol = 0.25 * opts.check_tol * std::max(norm_h, 1e-300);

  Eigen::MatrixXd q(dim, max_it + 1);
  std::vector<double> alpha, beta;
  alpha.reserve(max_it);
  beta.reserve(max_it);

  std::mt19937_64 rng(0x517cc1b727220a95ULL);
  std::normal_distribution<double> gauss;
  for (std::int64_t i = 0; i < dim; ++i) q(i, 0) = gauss(rng);
  q.col(0).normalize();

  Eigen::VectorXd w(dim);
  Eigen::MatrixXd tvec;
  Eigen::VectorXd tval;
  std::int64_t steps = 0;
  bool converged = false;
  double achieved = std::numeric_limits<double>::infinity();

  for (std::int64_t m = 0; m < max_it; ++m) {
    h.matvec(q.col(m).data(), w.data());
    const double a_m = q.col(m).dot(w);
    alpha.push_back(a_m);
    w -= a_m * q.col(m);
    if (m > 0 && beta[m - 1] != 0.0) w -= beta[m - 1] * q.col(m - 1);
    // Full reorthogonalization, two passes.
    for (int pass = 0; pass < 2; ++pass) {
      const auto basis = q.leftCols(m + 1);
      w.noalias() -= basis * (basis.transpose() * w);
    }
    double b_m = w.norm();
    if (b_m <= 1e-13 * std::max(norm_h, 1.0)) {
      // Invariant subspace exhausted; restart in its orthogonal complement.
      b_m = 0.0;
      for (std::int64_t i = 0; i < dim; ++i) w[i] = gauss(rng);
      for (int pass = 0; pass < 2; ++pass) {
        const auto basis = q.leftCols(m + 1);
        w.noalias() -= basis * (basis.transpose() * w);
      }
      const double nw = w.norm();
      if (nw <= 1e-13) {
        steps = m + 1;  // complete space spanned
        break;
      }
      w /= nw;
    } else {
      w /= b_m;
    }
    beta.push_back(b_m);
    q.col(m + 1) = w;
    steps = m + 1;

    if (steps >= k && (steps % 16 == 0 || m == max_it - 1)) {
      std::vector<double> d(alpha), e(beta.begin(), beta.begin() + steps - 1);
      tvec.resize(steps, steps);
      const lapack_int info =
          LAPACKE_dstev(LAPACK_COL_MAJOR, 'V', lapack_int(steps), d.data(),
                        e.data(), tvec.data(), lapack_int(steps));
      if (info != 0)
        throw std::runtime_error("tridiagonal solve failed with code " +
                                 std::to_string(info));
      const double b_last = beta[steps - 1];
      achieved = 0.0;
      for (std::int64_t i = 0; i < k; ++i)
        achieved = std::max(achieved,
                            std::abs(b_last * tvec(steps - 1, i)));
      if (achieved <= conv_tol) {
        tval = Eigen::Map<Eigen::VectorXd>(d.data(), steps);
        converged = true;
        break;
      }
    }
  }

  if (steps == dim && !converged) {
    // Krylov space is the whole space: the tridiagonal solve is exact.
    std::vector<double> d(alpha), e(beta.begin(), beta.begin() + steps - 1);
    tvec.resize(steps, steps);
    const lapack_int info =
        LAPACKE_dstev(LAPACK_COL_MAJOR, 'V', lapack_int(steps), d.data(),
                      e.data(), tvec.data(), lapack_int(steps));
    if (info != 0)
      throw std::runtime_error("tridiagonal solve failed with code " +
                               std::to_string(info));
    tval = Eigen::Map<Eigen::VectorXd>(d.data(), steps);
    converged = true;
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "iterative eigensolver did not converge " << k << " pairs in "
        << max_it << " steps; achieved residual bound " << achieved
        << " vs required " << conv_tol;
    throw std::runtime_error(msg.str());
  }

  SpectrumResult r;
  r.meta.provenance = prov;
  r.energies = tval.head(k);
  require_ascending(r.energies);
  r.vectors.noalias() = q.leftCols(steps) * tvec.leftCols(k);
  fix_signs(r.vectors);
  run_checks(h, nullptr, r, opts.check_tol);
  return r;
}

std::uint64_t bits_of(double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, sizeof u);
  return u;
}

double double_of(std::uint64_t u) {
  double x;
  std::memcpy(&x, &u, sizeof x);
  return x;
}

std::uint64_t payload_checksum(const SpectrumResult& r) {
  std::uint64_t h = fock::fnv1a(r.energies.data(),
                                std::size_t(r.energies.size()) * sizeof(double),
                                0xcbf29ce484222325ULL);
  return fock::fnv1a(r.vectors.data(),
                     std::size_t(r.vectors.size()) * sizeof(double), h);
}

constexpr int kSpectrumVersion = 1;

}  // namespace

SpectrumResult diagonalize_full(const hamiltonian::SymmetricSparse& h,
                                const Provenance& prov,
                                const DiagOptions& opts) {
  if (h.dim() > opts.dim_cap)
    throw std::invalid_argument(
        "operator dimension " + std::to_string(h.dim()) +
        " exceeds the full-decomposition cap " + std::to_string(opts.dim_cap));
  const lapack_int n = as_lapack(h.dim(), "dimension");

  const Eigen::MatrixXd dense = h.to_dense();
  SpectrumResult r;
  r.meta.provenance = prov;
  r.energies.resize(n);
  r.vectors = dense;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n,
                                         r.vectors.data(), n, r.energies.data());
  if (info != 0)
    throw std::runtime_error("dense eigensolver failed with code " +
                             std::to_string(info));
  require_ascending(r.energies);
  fix_signs(r.vectors);
  run_checks(h, &dense, r, opts.check_tol);
  return r;
}

SpectrumResult diagonalize_lowest(const hamiltonian::SymmetricSparse& h,
                                  std::int64_t k, const Provenance& prov,
                                  const DiagOptions& opts) {
  if (k < 1 || k > h.dim())
    throw std::invalid_argument("requested pair count out of range");
  if (h.dim() <= opts.dense_cap) return dense_lowest(h, k, prov, opts);
  return krylov_lowest(h, k, prov, opts);
}

void verify_spectrum(const hamiltonian::SymmetricSparse& h, SpectrumResult& r,
                     double check_tol) {
  if (r.vectors.rows() != h.dim())
    throw std::invalid_argument("spectrum dimension differs from operator");
  if (r.energies.size() != r.vectors.cols())
    throw std::invalid_argument("energy count differs from vector count");
  run_checks(h, nullptr, r, check_tol);
}

void save_spectrum(const SpectrumResult& r, const std::string& path) {
  if (r.vectors.cols() != r.energies.size() || r.vectors.rows() < 1)
    throw std::invalid_argument("malformed spectrum result");
  nlohmann::json header{
      {"format", "bbmix-spectrum"},
      {"version", kSpectrumVersion},
      {"layout", "energies|vectors:col-major|f64le"},
      {"dim", r.vectors.rows()},
      {"count", r.vectors.cols()},
      {"basis_checksum", r.meta.provenance.basis_checksum},
      {"g_a_bits", bits_of(r.meta.provenance.couplings.g_a)},
      {"g_b_bits", bits_of(r.meta.provenance.couplings.g_b)},
      {"g_ab_bits", bits_of(r.meta.provenance.couplings.g_ab)},
      {"norm_h_bits", bits_of(r.meta.norm_h)},
      {"max_residual_bits", bits_of(r.meta.max_residual)},
      {"max_ortho_defect_bits", bits_of(r.meta.max_ortho_defect)},
      {"payload_checksum", payload_checksum(r)},
  };
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open spectrum file for writing: " + path);
  os << header.dump() << '\n';
  os.write(reinterpret_cast<const char*>(r.energies.data()),
           std::streamsize(r.energies.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(r.vectors.data()),
           std::streamsize(r.vectors.size() * sizeof(double)));
  os.flush();
  if (!os) throw std::runtime_error("short write to spectrum file: " + path);
}

SpectrumResult load_spectrum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open spectrum file: " + path);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("spectrum file has no header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("spectrum header is not valid JSON: " +
                             std::string(e.what()));
  }
  if (header.value("format", "") != "bbmix-spectrum")
    throw std::runtime_error("not a spectrum file: " + path);
  if (header.value("version", -1) != kSpectrumVersion)
    throw std::runtime_error("unsupported spectrum file version " +
                             header.value("version", nlohmann::json{}).dump());
  const auto dim = header.at("dim").get<std::int64_t>();
  const auto count = header.at("count").get<std::int64_t>();
  if (dim < 1 || count < 1 || count > 2000000000LL || dim > 2000000000LL)
    throw std::runtime_error("spectrum header has implausible sizes");

  SpectrumResult r;
  r.energies.resize(count);
  r.vectors.resize(dim, count);
  is.read(reinterpret_cast<char*>(r.energies.data()),
          std::streamsize(count * sizeof(double)));
  is.read(reinterpret_cast<char*>(r.vectors.data()),
          std::streamsize(dim * count * sizeof(double)));
  if (!is || is.gcount() != std::streamsize(dim * count * sizeof(double)))
    throw std::runtime_error("spectrum payload truncated: " + path);
  is.get();
  if (!is.eof())
    throw std::runtime_error("spectrum payload has trailing bytes: " + path);

  if (payload_checksum(r) != header.at("payload_checksum").get<std::uint64_t>())
    throw std::runtime_error("spectrum payload checksum mismatch: " + path);

  r.meta.dim = dim;
  r.meta.count = count;
  r.meta.provenance.basis_checksum =
      header.at("basis_checksum").get<std::uint64_t>();
  r.meta.provenance.couplings.g_a =
      double_of(header.at("g_a_bits").get<std::uint64_t>());
  r.meta.provenance.couplings.g_b =
      double_of(header.at("g_b_bits").get<std::uint64_t>());
  r.meta.provenance.couplings.g_ab =
      double_of(header.at("g_ab_bits").get<std::uint64_t>());
  r.meta.norm_h = double_of(header.at("norm_h_bits").get<std::uint64_t>());
  r.meta.max_residual =
      double_of(header.at("max_residual_bits").get<std::uint64_t>());
  r.meta.max_ortho_defect =
      double_of(header.at("max_ortho_defect_bits").get<std::uint64_t>());
  return r;
}

SpectrumResult load_spectrum(const std::string& path,
                             std::uint64_t expected_basis_checksum) {
  SpectrumResult r = load_spectrum(path);
  if (r.meta.provenance.basis_checksum != expected_basis_checksum)
    throw std::runtime_error(
        "spectrum file was written for a different basis (checksum mismatch)");
  return r;
}

}  // namespace bbmix::diag
