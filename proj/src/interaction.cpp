#include "bbmix/interaction.hpp"

#include <cmath>
#include <array>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "bbmix/fock.hpp"
#include "bbmix/spho.hpp"

namespace bbmix::interaction {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct SignedLog {
  double log_abs;
  double sign;
};

// log|Gamma(x)| with sign, via reflection for x < 0 (x must not be a pole).
SignedLog log_gamma(double x) {
  if (x > 0.0) return {std::lgamma(x), 1.0};
  const double s = std::sin(kPi * x);
  if (s == 0.0) throw std::domain_error("log_gamma at a pole");
  return {std::log(kPi) - std::log(std::abs(s)) - std::lgamma(1.0 - x),
          s > 0.0 ? 1.0 : -1.0};
}

void check_coupling(double g) {
  if (std::isnan(g) || g < 0.0)
    throw std::invalid_argument("contact strength must be >= 0");
}

std::size_t tensor_index(const PairTensor& t, int i, int j, int k, int l) {
  const auto n = std::size_t(t.n_modes);
  return ((std::size_t(i) * n + j) * n + k) * n + l;
}

// Mirror one computed entry onto its full symmetry orbit (swaps within each
// pair and exchange of the pairs), keeping those relations exact in floating
// point.
void write_symmetric(PairTensor& t, int i, int j, int k, int l, double v) {
  for (const auto [a, b, c, d] :
       {std::array{i, j, k, l}, std::array{j, i, k, l}, std::array{i, j, l, k},
        std::array{j, i, l, k}, std::array{k, l, i, j}, std::array{l, k, i, j},
        std::array{k, l, j, i}, std::array{l, k, j, i}})
    t.w[tensor_index(t, a, b, c, d)] = v;
}

}  // namespace

double quantization_lhs(double nu) {
  const SignedLog num = log_gamma(0.5 * (1.0 - nu));
  const SignedLog den = log_gamma(-0.5 * nu);
  return -2.0 * num.sign * den.sign * std::exp(num.log_abs - den.log_abs);
}

double relative_energy_exact(double g, int m) {
  check_coupling(g);
  if (m < 0 || m > 200) throw std::invalid_argument("level index out of range");
  if (g == 0.0) return 2.0 * m + 0.5;
  if (std::isinf(g)) return 2.0 * m + 1.5;

  const double c = g / std::sqrt(2.0);
  const double delta = 1e-12 * (2.0 * m + 1.0);
  double lo = 2.0 * m + delta;        // F -> 0+ at the left edge
  double hi = 2.0 * m + 1.0 - delta;  // F -> +inf at the right edge
  if (quantization_lhs(lo) - c >= 0.0 || quantization_lhs(hi) - c <= 0.0)
    throw std::runtime_error("quantization root not bracketed");
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (quantization_lhs(mid) - c < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  // The sign change F(lo) < c < F(hi) is maintained throughout, so the
  // residual of the bracketed search is the relative enclosure width.
  const double residual = (hi - lo) / hi;
  if (!(residual <= 1e-12))
    throw std::runtime_error("quantization root refinement failed");
  return 0.5 * (lo + hi) + 0.5;
}

double even_mode_at_origin(int m) {
  if (m < 0 || m > (1 << 20))
    throw std::invalid_argument("mode index out of range");
  double v = std::pow(kPi, -0.25);
  for (int k = 1; k <= m; ++k) v *= -std::sqrt((2.0 * k - 1.0) / (2.0 * k));
  return v;
}

Eigen::VectorXd relative_wavefunction(double e, int n_rel) {
  if (n_rel < 1) throw std::invalid_argument("need at least one relative mode");
  Eigen::VectorXd c(n_rel);
  for (int m = 0; m < n_rel; ++m) {
    const double gap = 2.0 * m + 0.5 - e;
    if (std::abs(gap) < 1e-12)
      throw std::invalid_argument("energy coincides with a free level");
    c[m] = even_mode_at_origin(m) / gap;
  }
  c.normalize();
  return c;
}

Eigen::MatrixXd effective_relative_interaction(double g, int n_rel) {
  check_coupling(g);
  if (n_rel < 1) throw std::invalid_argument("need at least one relative mode");
  if (g == 0.0) return Eigen::MatrixXd::Zero(n_rel, n_rel);

  Eigen::VectorXd energies(n_rel);
  Eigen::MatrixXd u(n_rel, n_rel);
  for (int k = 0; k < n_rel; ++k) {
    energies[k] = relative_energy_exact(g, k);
    u.col(k) = relative_wavefunction(energies[k], n_rel);
  }

  const Eigen::MatrixXd gram = u.transpose() * u;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("Gram eigendecomposition failed");
  const auto& lam = es.eigenvalues();
  if (!(lam.minCoeff() > 0.0) || lam.maxCoeff() / lam.minCoeff() > 1e12)
    throw std::runtime_error("truncated relative states are ill-conditioned");
  const Eigen::MatrixXd inv_sqrt = es.eigenvectors() *
                                   lam.cwiseSqrt().cwiseInverse().asDiagonal() *
                                   es.eigenvectors().transpose();
  const Eigen::MatrixXd ortho = u * inv_sqrt;

  Eigen::MatrixXd v = ortho * energies.asDiagonal() * ortho.transpose();
  for (int m = 0; m < n_rel; ++m) v(m, m) -= 2.0 * m + 0.5;
  v = 0.5 * (v + v.transpose()).eval();
  return v;
}

MoshinskyTable::MoshinskyTable(int max_mode) : max_mode_(max_mode) {
  if (max_mode < 0 || max_mode > 255)
    throw std::invalid_argument("mode range out of range");
  const int im = max_mode_;
  c_.assign(im + 1, {});
  for (int i = 0; i <= im; ++i) {
    c_[i].assign(im + 1, {});
    for (int j = 0; j <= im; ++j) c_[i][j].assign(i + j + 1, 0.0);
  }
  c_[0][0][0] = 1.0;
  // First build the i = 0 row in j, then ladder up in i; the relative index
  // n = i + j - N is implicit in the storage.
  for (int j = 1; j <= im; ++j)
    for (int N = 0; N <= j; ++N) {
      double acc = 0.0;
      if (N >= 1) acc += std::sqrt(double(N)) * c_[0][j - 1][N - 1];
      if (N <= j - 1) acc -= std::sqrt(double(j - N)) * c_[0][j - 1][N];
      c_[0][j][N] = acc / std::sqrt(2.0 * j);
    }
  for (int i = 1; i <= im; ++i)
    for (int j = 0; j <= im; ++j)
      for (int N = 0; N <= i + j; ++N) {
        double acc = 0.0;
        if (N >= 1) acc += std::sqrt(double(N)) * c_[i - 1][j][N - 1];
        if (N <= i - 1 + j) acc += std::sqrt(double(i + j - N)) * c_[i - 1][j][N];
        c_[i][j][N] = acc / std::sqrt(2.0 * i);
      }
}

double MoshinskyTable::operator()(int i, int j, int N) const {
  if (i < 0 || j < 0 || i > max_mode_ || j > max_mode_)
    throw std::invalid_argument("mode index out of range");
  if (N < 0 || N > i + j) return 0.0;
  return c_[i][j][N];
}

double PairTensor::value(int i, int j, int k, int l) const {
  for (const int m : {i, j, k, l})
    if (m < 0 || m >= n_modes) throw std::invalid_argument("mode index out of range");
  return w[tensor_index(*this, i, j, k, l)];
}

std::uint64_t PairTensor::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const int kv = int(kind);
  h = fock::fnv1a(&kv, sizeof kv, h);
  h = fock::fnv1a(&g, sizeof g, h);
  h = fock::fnv1a(&n_modes, sizeof n_modes, h);
  h = fock::fnv1a(&pair_cap, sizeof pair_cap, h);
  h = fock::fnv1a(w.data(), w.size() * sizeof(double), h);
  return h;
}

PairTensor bare_pair_tensor(double g, int n_modes) {
  check_coupling(g);
  if (std::isinf(g))
    throw std::invalid_argument("bare tensor needs a finite strength");
  if (n_modes < 1 || n_modes > 128)
    throw std::invalid_argument("mode count out of range");

  const auto rule = spho::gauss_hermite(2 * n_modes + 16, 2.0);
  const Eigen::MatrixXd table = spho::hermite_table(n_modes - 1, rule.nodes);
  const int n = n_modes, npts = int(rule.nodes.size());

  PairTensor t;
  t.kind = TensorKind::bare;
  t.g = g;
  t.n_modes = n;
  t.pair_cap = 2 * (n - 1);
  t.w.assign(std::size_t(n) * n * n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      for (int k = i; k < n; ++k)
        for (int l = k; l < n; ++l) {
          if ((i + j + k + l) % 2 != 0) continue;
          if (k == i && l < j) continue;
          double s = 0.0;
          for (int p = 0; p < npts; ++p)
            s += rule.weights[p] * table(i, p) * table(j, p) * table(k, p) *
                 table(l, p);
          write_symmetric(t, i, j, k, l, g * s);
        }
  return t;
}

PairTensor effective_pair_tensor(double g, int n_modes, int pair_cap) {
  check_coupling(g);
  if (n_modes < 1 || n_modes > 128)
    throw std::invalid_argument("mode count out of range");
  if (pair_cap < 0 || pair_cap > 510)
    throw std::invalid_argument("pair quanta cap out of range");

  // Relative interaction blocks per center-of-mass channel.
  std::vector<Eigen::MatrixXd> blocks(pair_cap + 1);
  for (int N = 0; N <= pair_cap; ++N)
    blocks[N] = effective_relative_interaction(g, (pair_cap - N) / 2 + 1);

  const MoshinskyTable mosh(n_modes - 1);
  const int n = n_modes;
  PairTensor t;
  t.kind = TensorKind::effective;
  t.g = g;
  t.n_modes = n;
  t.pair_cap = pair_cap;
  t.w.assign(std::size_t(n) * n * n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const int s = i + j;
      if (s > pair_cap) continue;
      for (int k = i; k < n; ++k)
        for (int l = k; l < n; ++l) {
          const int sp = k + l;
          if (sp > pair_cap || (s + sp) % 2 != 0) continue;
          if (k == i && l < j) continue;
          // Only channels with even relative quanta couple; s = sp mod 2
          // already holds, so step N by 2 from the matching parity.
          double acc = 0.0;
          for (int N = s % 2; N <= std::min(s, sp); N += 2)
            acc += mosh(i, j, N) * mosh(k, l, N) *
                   blocks[N]((s - N) / 2, (sp - N) / 2);
          write_symmetric(t, i, j, k, l, acc);
        }
    }
  return t;
}

void save_pair_tensor(const std::string& path, const PairTensor& t) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write tensor payload: " + path);
    os.write(reinterpret_cast<const char*>(t.w.data()),
             std::streamsize(t.w.size() * sizeof(double)));
    if (!os) throw std::runtime_error("tensor payload write failed: " + path);
  }
  std::uint64_t g_bits;
  std::memcpy(&g_bits, &t.g, sizeof g_bits);
  nlohmann::json meta{
      {"kind", t.kind == TensorKind::bare ? "bare" : "effective"},
      {"g_bits", g_bits},
      {"g_repr", std::isfinite(t.g) ? std::to_string(t.g) : "inf"},
      {"n_modes", t.n_modes},
      {"pair_cap", t.pair_cap},
      {"count", t.w.size()},
      {"checksum", t.checksum()},
  };
  std::ofstream os(path + ".json");
  if (!os) throw std::runtime_error("cannot write tensor sidecar: " + path);
  os << meta.dump(2) << '\n';
  if (!os) throw std::runtime_error("tensor sidecar write failed: " + path);
}

PairTensor load_pair_tensor(const std::string& path) {
  std::ifstream ms(path + ".json");
  if (!ms) throw std::runtime_error("missing tensor sidecar: " + path + ".json");
  nlohmann::json meta;
  try {
    ms >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad tensor sidecar: " + std::string(e.what()));
  }

  PairTensor t;
  const std::string kind = meta.at("kind").get<std::string>();
  if (kind == "bare")
    t.kind = TensorKind::bare;
  else if (kind == "effective")
    t.kind = TensorKind::effective;
  else
    throw std::runtime_error("bad tensor kind in sidecar");
  const auto g_bits = meta.at("g_bits").get<std::uint64_t>();
  std::memcpy(&t.g, &g_bits, sizeof t.g);
  t.n_modes = meta.at("n_modes").get<int>();
  t.pair_cap = meta.at("pair_cap").get<int>();
  const auto count = meta.at("count").get<std::size_t>();
  const auto expect = std::size_t(t.n_modes) * t.n_modes * t.n_modes * t.n_modes;
  if (count != expect) throw std::runtime_error("tensor size mismatch in sidecar");

  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("missing tensor payload: " + path);
  t.w.resize(count);
  is.read(reinterpret_cast<char*>(t.w.data()),
          std::streamsize(count * sizeof(double)));
  if (std::size_t(is.gcount()) != count * sizeof(double))
    throw std::runtime_error("truncated tensor payload: " + path);
  if (t.checksum() != meta.at("checksum").get<std::uint64_t>())
    throw std::runtime_error("tensor cache checksum mismatch: " + path);
  return t;
}

}  // namespace bbmix::interaction
