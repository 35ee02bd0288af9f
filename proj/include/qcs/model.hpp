#pragma once

// Block-sparse Gaussian-mixture source, Gaussian sensing matrix and the noisy
// linear measurement y = Ax + n_m.
//
// Block indices are 0-based throughout: block r covers entries
// [r*Q, (r+1)*Q) of a length-M vector.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qcs/errors.hpp"
#include "qcs/rng.hpp"

namespace qcs {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One Gaussian component of the prior: the blocks in `support` have variance
/// rho2, every other block has variance theta2.
struct MixtureComponent {
  std::vector<int> support;  // sorted block indices
  double weight = 0.0;
};

/// Binomial coefficient as a 64-bit count. Throws on overflow.
inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (int i = 1; i <= k; ++i) {
    const std::uint64_t num = static_cast<std::uint64_t>(n - k + i);
    if (c > UINT64_MAX / num) throw ConfigError("binomial coefficient overflows");
    c = c * num / static_cast<std::uint64_t>(i);
  }
  return c;
}

/// Total number of mixture components, sum_{k=1..K} C(R, k).
inline std::uint64_t component_count(int R, int K) {
  std::uint64_t total = 0;
  for (int k = 1; k <= K; ++k) total += binomial(R, k);
  return total;
}

/// All supports of size 1..K in order of size, then lexicographically.
///
/// With no explicit weights every arrangement gets 1 / (number of components).
/// Explicit weights must match the enumeration order and sum to one.
inline std::vector<MixtureComponent> enumerate_components(
    int R, int K, const std::optional<std::vector<double>>& explicitWeights = std::nullopt) {
  if (R < 1) throw ConfigError("R must be >= 1");
  if (K < 1 || K > R) throw ConfigError("K must satisfy 1 <= K <= R (K=" + std::to_string(K) +
                                        ", R=" + std::to_string(R) + ")");
  const std::uint64_t count = component_count(R, K);
  if (count > 5'000'000) throw ConfigError("too many mixture components to enumerate");

  std::vector<MixtureComponent> out;
  out.reserve(count);
  for (int k = 1; k <= K; ++k) {
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      out.push_back({idx, 0.0});
      int i = k - 1;
      while (i >= 0 && idx[i] == R - k + i) --i;
      if (i < 0) break;
      ++idx[i];
      for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }

  if (explicitWeights) {
    const auto& w = *explicitWeights;
    if (w.size() != out.size())
      throw ConfigError("weight list has " + std::to_string(w.size()) + " entries, expected " +
                        std::to_string(out.size()));
    double sum = 0.0;
    for (double v : w) {
      if (!(v >= 0.0)) throw ConfigError("mixture weights must be non-negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
    for (std::size_t i = 0; i < out.size(); ++i) out[i].weight = w[i];
  } else {
    const double w = 1.0 / static_cast<double>(out.size());
    for (auto& c : out) c.weight = w;
  }
  return out;
}

/// Parameters of the block-sparse prior.
class SourceModel {
 public:
  SourceModel(int M, int Q, int K, double theta2, double rho2,
              const std::optional<std::vector<double>>& explicitWeights = std::nullopt)
      : M_(M), Q_(Q), K_(K), theta2_(theta2), rho2_(rho2) {
    if (Q < 1 || M < 1) throw ConfigError("M and Q must be positive");
    if (M % Q != 0)
      throw ConfigError("M=" + std::to_string(M) + " is not a multiple of Q=" + std::to_string(Q));
    R_ = M / Q;
    if (!(rho2 > 0.0)) throw ConfigError("rho2 must be > 0");
    if (!(theta2 >= 0.0)) throw ConfigError("theta2 must be >= 0");
    if (!(theta2 < rho2)) throw ConfigError("theta2 must be strictly smaller than rho2");
    if (theta2 / rho2 > 1e-3)
      warnings_.push_back("theta2/rho2 > 1e-3: source is not approximately block sparse");
    components_ = enumerate_components(R_, K, explicitWeights);
  }

  int M() const noexcept { return M_; }
  int Q() const noexcept { return Q_; }
  int R() const noexcept { return R_; }
  int K() const noexcept { return K_; }
  double theta2() const noexcept { return theta2_; }
  double rho2() const noexcept { return rho2_; }
  const std::vector<MixtureComponent>& components() const noexcept { return components_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  /// Per-block variances of a component (length R).
  Vector block_variances(const MixtureComponent& c) const {
    Vector v = Vector::Constant(R_, theta2_);
    for (int r : c.support) v(r) = rho2_;
    return v;
  }

 private:
  int M_, Q_, R_, K_;
  double theta2_, rho2_;
  std::vector<MixtureComponent> components_;
  std::vector<std::string> warnings_;
};

/// Measurement-noise and channel-noise variances.
struct ChannelSpec {
  double sigma_m2 = 0.0;
  double sigma_c2 = 0.0;

  double total() const noexcept { return sigma_m2 + sigma_c2; }
  void validate() const {
    if (!(sigma_m2 >= 0.0) || !(sigma_c2 >= 0.0))
      throw ConfigError("noise variances must be non-negative");
  }
};

struct SparseVector {
  Vector values;
  std::vector<int> trueSupport;  // blocks of the generating component
  std::size_t componentIndex = 0;
};

/// Draws x from the mixture: pick a component by weight, then fill every block
/// with i.i.d. zero-mean Gaussians of the component's block variance.
inline SparseVector sample_source(const SourceModel& model, Rng& rng) {
  const auto& comps = model.components();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  std::size_t pick = comps.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    acc += comps[i].weight;
    if (u < acc) {
      pick = i;
      break;
    }
  }
  // Guard against rounding in the cumulative sum landing on a zero-weight tail.
  while (comps[pick].weight == 0.0 && pick > 0) --pick;

  const auto& c = comps[pick];
  const double sdInfo = std::sqrt(model.rho2());
  const double sdRest = std::sqrt(model.theta2());
  std::normal_distribution<double> gauss(0.0, 1.0);
  SparseVector out;
  out.values.resize(model.M());
  out.trueSupport = c.support;
  out.componentIndex = pick;
  std::vector<char> active(model.R(), 0);
  for (int r : c.support) active[r] = 1;
  for (int r = 0; r < model.R(); ++r) {
    const double sd = active[r] ? sdInfo : sdRest;
    for (int j = 0; j < model.Q(); ++j) out.values(r * model.Q() + j) = sd * gauss(rng);
  }
  return out;
}

/// N x M sensing matrix with unit-norm columns.
class SensingMatrix {
 public:
  /// Wraps a matrix whose columns are already unit norm (checked to 1e-12).
  explicit SensingMatrix(Matrix entries) : a_(std::move(entries)) {
    if (a_.rows() < 1 || a_.cols() < 1) throw ConfigError("empty sensing matrix");
    for (Eigen::Index j = 0; j < a_.cols(); ++j)
      if (std::abs(a_.col(j).norm() - 1.0) > 1e-12)
        throw ConfigError("sensing matrix column " + std::to_string(j) + " is not unit norm");
  }

  /// Rescales every column of `raw` to unit norm.
  static SensingMatrix normalized(Matrix raw) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const double n = raw.col(j).norm();
      if (n == 0.0) throw ConfigError("zero column in sensing matrix");
      raw.col(j) /= n;
    }
    return SensingMatrix(std::move(raw));
  }

  const Matrix& entries() const noexcept { return a_; }
  int N() const noexcept { return static_cast<int>(a_.rows()); }
  int M() const noexcept { return static_cast<int>(a_.cols()); }

 private:
  Matrix a_;
};

/// Draws the raw Gaussian matrix with entries N(0, 1/N) (before normalisation).
inline Matrix sample_gaussian_matrix(int N, int M, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(N)));
  Matrix a(N, M);
  // Column by column so that the draw order is independent of storage order.
  for (int j = 0; j < M; ++j)
    for (int i = 0; i < N; ++i) a(i, j) = gauss(rng);
  return a;
}

inline SensingMatrix sample_sensing_matrix(int N, int M, Rng& rng) {
  if (N < 1 || M < 1) throw ConfigError("matrix dimensions must be positive");
  if (N > M) throw ConfigError("N > M: system is not under-determined");
  return SensingMatrix::normalized(sample_gaussian_matrix(N, M, rng));
}

/// y = A x + n_m with n_m ~ N(0, sigma_m2 I).
inline Vector measure(const SensingMatrix& A, const Vector& x, double sigma_m2, Rng& rng) {
  if (x.size() != A.M())
    throw ConfigError("dimension mismatch: x has " + std::to_string(x.size()) +
                      " entries, A has " + std::to_string(A.M()) + " columns");
  if (sigma_m2 < 0.0) throw ConfigError("sigma_m2 must be >= 0");
  Vector y = A.entries() * x;
  if (sigma_m2 > 0.0) {
    std::normal_distribution<double> gauss(0.0, std::sqrt(sigma_m2));
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += gauss(rng);
  }
  return y;
}

/// Number of blocks of length Q whose l2 norm exceeds gamma.
inline int block_sparsity(const Vector& x, int Q, double gamma) {
  if (Q < 1 || x.size() % Q != 0) throw ConfigError("vector length is not a multiple of Q");
  int count = 0;
  for (Eigen::Index r = 0; r < x.size() / Q; ++r)
    if (x.segment(r * Q, Q).norm() > gamma) ++count;
  return count;
}

/// Default block-sparsity threshold, 1e-3 * rho_x.
inline double default_gamma(const SourceModel& model) { return 1e-3 * std::sqrt(model.rho2()); }

/// E||x||^2 = sum_l w_l Q (k_l rho2 + (R - k_l) theta2).
inline double source_energy(const SourceModel& model) {
  double e = 0.0;
  for (const auto& c : model.components()) {
    const double k = static_cast<double>(c.support.size());
    e += c.weight * model.Q() * (k * model.rho2() + (model.R() - k) * model.theta2());
  }
  return e;
}

}  // namespace qcs
