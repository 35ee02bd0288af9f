#pragma once

// Block-RIP estimation by random probing and the probabilistic error bounds for
// block BPDN (upper bound on the error) and the oracle least-squares estimator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "qcs/errors.hpp"
#include "qcs/model.hpp"
#include "qcs/rng.hpp"

namespace qcs {

enum class RipSided { lower, two_sided };

inline const char* to_string(RipSided s) { return s == RipSided::lower ? "lower" : "two-sided"; }

struct RipEstimate {
  int k = 0;
  double delta = 0.0;
  std::uint64_t trials = 0;
  RipSided sided = RipSided::lower;
};

namespace detail {

/// Deviation of ||A x||^2 from 1 for one random unit-norm k-block-sparse probe.
inline double rip_probe(const Matrix& A, int Q, int R, int k, std::uint64_t seed, RipSided sided) {
  Rng rng(seed);
  // Partial Fisher-Yates: k distinct blocks, uniform over arrangements.
  std::vector<int> blocks(R);
  for (int r = 0; r < R; ++r) blocks[r] = r;
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, R - 1);
    std::swap(blocks[i], blocks[pick(rng)]);
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector x(k * Q);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = gauss(rng);
  x /= x.norm();
  Vector Ax = Vector::Zero(A.rows());
  for (int i = 0; i < k; ++i) Ax.noalias() += A.middleCols(blocks[i] * Q, Q) * x.segment(i * Q, Q);
  const double ratio = Ax.squaredNorm();
  return sided == RipSided::lower ? std::max(0.0, 1.0 - ratio) : std::abs(ratio - 1.0);
}

}  // namespace detail

/// Sampled lower estimate of the block-RIP constant delta_{k|R}: the largest
/// deviation of ||Ax||^2 from 1 over `trials` random unit k-block-sparse x.
/// Probe i uses seed derive_seed(seed, {i}), so the result is independent of
/// the thread count.
inline RipEstimate estimate_block_rip(const SensingMatrix& A, int Q, int k, std::uint64_t trials,
                                      std::uint64_t seed, RipSided sided = RipSided::lower,
                                      unsigned threads = 1) {
  if (trials < 1) throw ConfigError("RIP probe count must be >= 1");
  if (Q < 1 || A.M() % Q != 0) throw ConfigError("M is not a multiple of Q");
  const int R = A.M() / Q;
  if (k < 1 || k > R) throw ConfigError("RIP sparsity k must satisfy 1 <= k <= R (k*Q <= M)");

  const Matrix& a = A.entries();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::uint64_t>(trials, 64))));
  std::vector<double> partial(threads, 0.0);
  auto work = [&](unsigned t) {
    double best = 0.0;
    for (std::uint64_t i = t; i < trials; i += threads)
      best = std::max(best, detail::rip_probe(a, Q, R, k, derive_seed(seed, {i}), sided));
    partial[t] = best;
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  return {k, *std::max_element(partial.begin(), partial.end()), trials, sided};
}

struct CantelliMargin {
  double a = 0.0;
  bool degenerate = false;  // zero variance: the noise energy is deterministic
};

/// Margin a with a^2 / (a^2 + Var) = p, i.e. a = sqrt(Var p / (1 - p)).
inline CantelliMargin cantelli_margin(double variance, double pTarget) {
  if (!(variance >= 0.0)) throw ConfigError("variance must be >= 0");
  if (!(pTarget > 0.0 && pTarget < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
  if (variance == 0.0) return {0.0, true};
  return {std::sqrt(variance * pTarget / (1.0 - pTarget)), false};
}

/// One-sided Chebyshev level a^2 / (a^2 + Var): lower bound on the
/// probability that ||n||^2 stays below E||n||^2 + a.
inline double exceedance_probability(double a, double variance) {
  if (!(variance >= 0.0)) throw ConfigError("variance must be >= 0");
  if (std::isinf(a)) return 1.0;
  if (variance == 0.0) return 1.0;
  const double a2 = a * a;
  return a2 / (a2 + variance);
}

/// Noise-energy level shared by both bounds and how it was obtained.
struct BoundInputs {
  double a = 0.0;         // Cantelli margin
  double beta = 0.0;      // minimum quantization distortion E||n_q||^2
  double variance = 0.0;  // Var||n||^2
  int N = 1;
  ChannelSpec channel;
  double sourceEnergy = 0.0;  // E||x||^2, for the SRNR form of the bound
};

struct BoundResult {
  double errorBound = 0.0;
  /// sourceEnergy / errorBound^2 (linear).
  double srnrBound = 0.0;
  /// Probability with which the stated inequality holds.
  double confidence = 0.0;
  /// Probability of the complementary event, Var / (a^2 + Var).
  double complementLevel = 0.0;
  double margin_a = 0.0;
  /// a + beta + N (sigma_m2 + sigma_c2): the squared noise radius the bound uses.
  double epsilonSquared = 0.0;
};

inline constexpr double kBpdnRipLimit = std::numbers::sqrt2 - 1.0;

inline bool bpdn_bound_applicable(double delta2K) { return delta2K >= 0.0 && delta2K < kBpdnRipLimit; }

/// Stability constant 4 sqrt(1 + d) / (1 - (1 + sqrt 2) d) of block BPDN.
inline double bpdn_constant(double delta2K) {
  return 4.0 * std::sqrt(1.0 + delta2K) / (1.0 - (1.0 + std::numbers::sqrt2) * delta2K);
}

namespace detail {
inline double noise_radius_squared(const BoundInputs& in) {
  if (!(in.a >= 0.0)) throw ConfigError("Cantelli margin must be >= 0");
  if (!(in.beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (in.N < 1) throw ConfigError("N must be >= 1");
  in.channel.validate();
  return in.a + in.beta + in.N * in.channel.total();
}

inline double srnr_of(double energy, double err) {
  if (err <= 0.0) return std::numeric_limits<double>::infinity();
  return energy / (err * err);
}
}  // namespace detail

/// Upper bound on ||x - x_BP||: C(delta_2K) sqrt(a + beta + N (sigma_m2 + sigma_c2)),
/// holding with probability at least a^2 / (a^2 + Var).
/// Throws InvalidRegime when delta_2K >= sqrt(2) - 1 (the bound is vacuous).
inline BoundResult bpdn_upper_bound(double delta2K, const BoundInputs& in) {
  if (!bpdn_bound_applicable(delta2K))
    throw InvalidRegime("block BPDN bound needs delta_2K < sqrt(2) - 1, got " + std::to_string(delta2K));
  BoundResult out;
  out.epsilonSquared = detail::noise_radius_squared(in);
  out.errorBound = bpdn_constant(delta2K) * std::sqrt(out.epsilonSquared);
  out.srnrBound = detail::srnr_of(in.sourceEnergy, out.errorBound);
  out.confidence = exceedance_probability(in.a, in.variance);
  out.complementLevel = 1.0 - out.confidence;
  out.margin_a = in.a;
  return out;
}

/// Oracle-estimator error level sqrt(a + beta + N (sigma_m2 + sigma_c2)) / sqrt(1 + delta_K).
/// The oracle error stays at or below this value with probability at least
/// `confidence` and exceeds it with probability at most `complementLevel`.
inline BoundResult oracle_lower_bound(double deltaK, const BoundInputs& in) {
  if (!(deltaK >= 0.0 && deltaK < 1.0)) throw InvalidRegime("delta_K must lie in [0, 1)");
  BoundResult out;
  out.epsilonSquared = detail::noise_radius_squared(in);
  out.errorBound = std::sqrt(out.epsilonSquared) / std::sqrt(1.0 + deltaK);
  out.srnrBound = detail::srnr_of(in.sourceEnergy, out.errorBound);
  out.confidence = exceedance_probability(in.a, in.variance);
  out.complementLevel = 1.0 - out.confidence;
  out.margin_a = in.a;
  return out;
}

}  // namespace qcs
