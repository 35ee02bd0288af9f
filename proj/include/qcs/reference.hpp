#pragma once

// Slow, independent reference computations used to cross-check the fast paths
// (by the `validate` subcommand and by the test suites). Nothing here calls the
// routines it is meant to check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "qcs/errors.hpp"
#include "qcs/model.hpp"

namespace qcs::reference {

/// V_{eta,N} evaluated straight from its definition with tgamma.
inline double shape_constant_direct(int eta, int N) {
  const double n = N, e = eta;
  return std::pow(std::sqrt(2.0), e) * std::pow(0.5 * n * std::tgamma(0.5 * n), e / n) *
         std::pow((n + e) / n, 0.5 * (n + e - 2.0));
}

struct AllocationInstance {
  std::vector<double> weights;
  std::vector<double> logDets;
  double bTotal = 0.0;
  int N = 1;
};

struct NumericalAllocation {
  std::vector<double> shares;  // 2^{b_l} / 2^{b_t}
  double delta2 = 0.0;
  int iterations = 0;
};

/// Minimises sum_l w_l (2^{b_t} s_l)^{-2/N} V_{2,N} |Sigma_l|^{1/N} over the
/// simplex of shares s by equality-constrained Newton with a fraction-to-the-
/// boundary line search. Needs N small enough for tgamma (N <= 300).
inline NumericalAllocation minimize_allocation(const AllocationInstance& in) {
  const std::size_t L = in.weights.size();
  if (L == 0 || in.logDets.size() != L) throw ConfigError("bad allocation instance");
  const double p = 2.0 / in.N;

  // Objective F(s) = sum c_l s_l^{-p}; c is rescaled by its maximum, which does
  // not move the minimiser.
  std::vector<double> logc(L);
  for (std::size_t l = 0; l < L; ++l) logc[l] = std::log(in.weights[l]) + in.logDets[l] / in.N;
  const double cmax = *std::max_element(logc.begin(), logc.end());
  std::vector<double> c(L);
  for (std::size_t l = 0; l < L; ++l) c[l] = std::exp(logc[l] - cmax);
  auto F = [&](const std::vector<double>& s) {
    double f = 0.0;
    for (std::size_t l = 0; l < L; ++l) f += c[l] * std::pow(s[l], -p);
    return f;
  };

  std::vector<double> s(L, 1.0 / L), d(L), trial(L);
  NumericalAllocation out;
  for (int it = 0; it < 500; ++it) {
    out.iterations = it;
    double sumInvH = 0.0, sumGH = 0.0;
    std::vector<double> g(L), h(L);
    for (std::size_t l = 0; l < L; ++l) {
      g[l] = -p * c[l] * std::pow(s[l], -p - 1.0);
      h[l] = p * (p + 1.0) * c[l] * std::pow(s[l], -p - 2.0);
      sumInvH += 1.0 / h[l];
      sumGH += -g[l] / h[l];
    }
    const double nu = sumGH / sumInvH;
    double decrement = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      d[l] = (-g[l] - nu) / h[l];
      decrement += d[l] * d[l] * h[l];
    }
    if (decrement < 1e-28 * F(s)) break;

    double alpha = 1.0;
    for (std::size_t l = 0; l < L; ++l)
      if (d[l] < 0.0) alpha = std::min(alpha, -0.99 * s[l] / d[l]);
    const double f0 = F(s);
    double slope = 0.0;
    for (std::size_t l = 0; l < L; ++l) slope += g[l] * d[l];
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t l = 0; l < L; ++l) trial[l] = s[l] + alpha * d[l];
      if (F(trial) <= f0 + 1e-4 * alpha * slope) break;
      alpha *= 0.5;
    }
    const double total = std::accumulate(trial.begin(), trial.end(), 0.0);
    for (std::size_t l = 0; l < L; ++l) s[l] = trial[l] / total;
  }
  out.shares = s;

  // Delta_2 = 2^{-2 b_t/N} V_{2,N} sum w_l |Sigma_l|^{1/N} s_l^{-2/N}.
  double acc = 0.0;
  for (std::size_t l = 0; l < L; ++l) acc += c[l] * std::pow(s[l], -p);
  out.delta2 = std::exp(std::log(acc) + cmax - 2.0 * in.bTotal / in.N * std::log(2.0) +
                        std::log(shape_constant_direct(2, in.N)));
  return out;
}

struct ReferenceBpdn {
  Vector x;
  double objective = 0.0;
  double residualNorm = 0.0;
  double lambda = 0.0;  // penalty weight of the matching Lagrangian problem
};

namespace detail {

/// Accelerated proximal gradient for 0.5||y - Ax||^2 + lambda sum ||x_r||.
inline Vector group_lasso(const Matrix& A, const Vector& y, int Q, double lambda, double L, Vector x,
                          int maxIter = 200000, double tol = 1e-14) {
  Vector v = x, grad(x.size());
  double tk = 1.0;
  const double scale = std::max(1.0, y.norm());
  for (int it = 0; it < maxIter; ++it) {
    grad = A.transpose() * (A * v - y);
    Vector xn = v - grad / L;
    for (Eigen::Index r = 0; r < xn.size() / Q; ++r) {
      auto seg = xn.segment(r * Q, Q);
      const double n = seg.norm();
      if (n <= lambda / L)
        seg.setZero();
      else
        seg *= 1.0 - lambda / (L * n);
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    // Gradient-based adaptive restart.
    if ((v - xn).dot(xn - x) > 0.0) {
      v = xn;
      tk = 1.0;
    } else {
      v = xn + ((tk - 1.0) / tn) * (xn - x);
      tk = tn;
    }
    const double change = (xn - x).norm();
    x = xn;
    if (change <= tol * scale) break;
  }
  return x;
}

}  // namespace detail

/// Block BPDN through its penalised form: bisection on log(lambda) until the
/// group-lasso solution has residual norm eps.
inline ReferenceBpdn solve_bpdn_by_penalty(const Matrix& A, const Vector& y, int Q, double eps) {
  const Eigen::Index M = A.cols();
  ReferenceBpdn out;
  if (y.norm() <= eps) {
    out.x = Vector::Zero(M);
    out.residualNorm = y.norm();
    return out;
  }
  const Vector g = A.transpose() * y;
  double lmax = 0.0;
  for (Eigen::Index r = 0; r < M / Q; ++r) lmax = std::max(lmax, g.segment(r * Q, Q).norm());
  const double L = Eigen::JacobiSVD<Matrix>(A).singularValues()(0);
  const double lip = L * L;

  double lo = std::log(lmax) - 40.0, hi = std::log(lmax);
  Vector x = Vector::Zero(M);
  Vector xLo = x;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    x = detail::group_lasso(A, y, Q, std::exp(mid), lip, x);
    const double res = (y - A * x).norm();
    if (res > eps)
      hi = mid;
    else {
      lo = mid;
      xLo = x;
    }
    if (hi - lo < 1e-13) break;
  }
  out.lambda = std::exp(lo);
  out.x = detail::group_lasso(A, y, Q, out.lambda, lip, xLo);
  out.residualNorm = (y - A * out.x).norm();
  double obj = 0.0;
  for (Eigen::Index r = 0; r < M / Q; ++r) obj += out.x.segment(r * Q, Q).norm();
  out.objective = obj;
  return out;
}

}  // namespace qcs::reference
