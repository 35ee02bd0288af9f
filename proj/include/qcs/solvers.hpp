#pragma once

// Block basis pursuit denoising,
//
//     minimize  sum_r ||x_r||_2   subject to  ||y - A x||_2 <= eps,
//
// and the oracle least-squares estimator restricted to a known block support.
//
// BPDN is solved by Douglas-Rachford splitting between the block shrinkage
// (prox of the mixed norm) and the exact Euclidean projection onto the
// feasible set C = {x : ||y - Ax|| <= eps}. With a thin SVD A = U S V^T the
// projection reduces to a scalar secular equation in the multiplier mu of
//     x = argmin ||x - v||^2 + mu ||y - A x||^2,
// so every iterate of the projection step is exactly feasible. The SVD depends
// only on A and is shared by every solve against the same matrix.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "qcs/errors.hpp"
#include "qcs/model.hpp"

namespace qcs {

/// max(0, 1 - tau / ||v||) v.
inline Vector group_shrink(const Vector& v, double tau) {
  if (tau < 0.0) throw ConfigError("shrinkage threshold must be >= 0");
  const double n = v.norm();
  if (n <= tau) return Vector::Zero(v.size());
  return (1.0 - tau / n) * v;
}

/// sum_r ||x_r||_2 over consecutive blocks of length Q.
inline double block_norm_sum(const Vector& x, int Q) {
  double s = 0.0;
  for (Eigen::Index r = 0; r < x.size() / Q; ++r) s += x.segment(r * Q, Q).norm();
  return s;
}

struct BpdnOptions {
  double epsilon = 0.0;
  int maxIterations = 50000;
  /// Absolute tolerance on ||w - x|| between the two half-steps.
  double primalTol = 1e-8;
  /// Absolute tolerance on the change of the feasible iterate.
  double dualTol = 1e-8;
  /// Initial prox step; <= 0 picks 0.05 * max_r ||A_r^T y||.
  double step = 0.0;
  /// Rebalance the step every `adaptEvery` iterations when the two residuals
  /// differ by more than a factor of 10.
  bool adaptiveStep = true;
  int adaptEvery = 20;
  /// Relative feasibility slack accepted on ||y - A xHat|| <= eps.
  double feasTol = 1e-6;

  void validate() const {
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (!(primalTol > 0.0) || !(dualTol > 0.0)) throw ConfigError("tolerances must be > 0");
    if (maxIterations < 1) throw ConfigError("maxIterations must be >= 1");
    if (!(feasTol >= 0.0)) throw ConfigError("feasTol must be >= 0");
  }
};

struct Reconstruction {
  Vector xHat;
  int iterations = 0;
  double residualNorm = 0.0;
  double objective = 0.0;
  bool converged = false;
};

namespace detail {

inline void shrink_blocks(Vector& v, int Q, double tau) {
  for (Eigen::Index r = 0; r < v.size() / Q; ++r) {
    auto seg = v.segment(r * Q, Q);
    const double n = seg.norm();
    if (n <= tau)
      seg.setZero();
    else
      seg *= 1.0 - tau / n;
  }
}

/// Projection onto {x : ||y - B x|| <= eps} for a fixed B given by its thin SVD.
class ResidualBallProjector {
 public:
  ResidualBallProjector() = default;

  explicit ResidualBallProjector(const Matrix& B) {
    Eigen::BDCSVD<Matrix> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double smax = s.size() ? s(0) : 0.0;
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > 1e-12 * smax) ++rank;
    U_ = svd.matrixU().leftCols(rank);
    V_ = svd.matrixV().leftCols(rank);
    s_ = s.head(rank);
  }

  /// Fixes the right-hand side and radius. Returns false when the set is empty.
  bool bind(const Vector& y, double eps) {
    eps_ = eps;
    uy_ = U_.transpose() * y;
    yPerp2_ = std::max(0.0, y.squaredNorm() - uy_.squaredNorm());
    // Radius slack of a few ulps for the component of y outside range(B).
    return yPerp2_ <= eps * eps + 1e-24 * std::max(1.0, y.squaredNorm());
  }

  double yPerp2() const { return yPerp2_; }
  Eigen::Index cols() const { return V_.rows(); }

  Vector project(const Vector& v) const {
    const Vector vv = V_.transpose() * v;
    const Vector d = uy_ - s_.cwiseProduct(vv);
    const double eps2 = eps_ * eps_;
    if (yPerp2_ + d.squaredNorm() <= eps2) return v;

    Vector c;
    if (eps_ == 0.0 || eps2 <= yPerp2_) {
      // Affine (or degenerate) case: x = v + V (S^{-1} U^T y - V^T v).
      c = uy_.cwiseQuotient(s_);
    } else {
      const double mu = solve_multiplier(d);
      const Vector den = (1.0 + mu * s_.array().square()).matrix();
      c = (vv + mu * s_.cwiseProduct(uy_)).cwiseQuotient(den);
    }
    return v + V_ * (c - vv);
  }

 private:
  double residual2(const Vector& d, double mu) const {
    return yPerp2_ + (d.array() / (1.0 + mu * s_.array().square())).square().sum();
  }

  // Newton on phi(mu) = 1/||r(mu)|| - 1/eps, which is close to linear in mu,
  // safeguarded by a bracket.
  double solve_multiplier(const Vector& d) const {
    const auto s2 = s_.array().square();
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double mu = 0.0;
    for (int it = 0; it < 200; ++it) {
      const auto den = 1.0 + mu * s2;
      const double r2 = yPerp2_ + (d.array() / den).square().sum();
      const double r = std::sqrt(r2);
      const double phi = 1.0 / r - 1.0 / eps_;
      if (std::abs(r - eps_) <= 1e-15 * eps_) break;
      if (phi < 0.0)
        lo = mu;
      else
        hi = mu;
      const double dr2 = -2.0 * (d.array().square() * s2 / den.cube()).sum();
      const double dphi = -0.5 * dr2 / (r2 * r);
      double next = mu - phi / dphi;
      if (!(next > lo && next < hi) || !std::isfinite(next))
        next = std::isfinite(hi) ? 0.5 * (lo + hi) : std::max(2.0 * lo, 1.0);
      if (next == mu) break;
      mu = next;
    }
    return mu;
  }

  Matrix U_, V_;
  Vector s_;
  Vector uy_;
  double yPerp2_ = 0.0;
  double eps_ = 0.0;
};

}  // namespace detail

/// Block BPDN solver bound to one sensing matrix.
class BlockBpdnSolver {
 public:
  BlockBpdnSolver(const SensingMatrix& A, int Q)
      : A_(A.entries()), Q_(Q), projector_(A.entries()) {
    if (Q < 1 || A.M() % Q != 0) throw ConfigError("M is not a multiple of the block length");
  }

  int Q() const noexcept { return Q_; }
  const Matrix& matrix() const noexcept { return A_; }

  Reconstruction solve(const Vector& y, const BpdnOptions& opt) const {
    opt.validate();
    if (y.size() != A_.rows()) throw ConfigError("measurement length does not match A");
    const Eigen::Index M = A_.cols();
    const double eps = opt.epsilon;

    Reconstruction rec;
    if (y.norm() <= eps) {
      rec.xHat = Vector::Zero(M);
      rec.residualNorm = y.norm();
      rec.converged = true;
      return rec;
    }

    detail::ResidualBallProjector proj = projector_;
    if (!proj.bind(y, eps))
      throw InfeasibleProblem("no x satisfies ||y - Ax|| <= eps: y lies " +
                              std::to_string(std::sqrt(proj.yPerp2())) +
                              " away from range(A), eps = " + std::to_string(eps));

    double t = opt.step;
    if (t <= 0.0) {
      const Vector g = A_.transpose() * y;
      double lmax = 0.0;
      for (Eigen::Index r = 0; r < M / Q_; ++r) lmax = std::max(lmax, g.segment(r * Q_, Q_).norm());
      t = 0.05 * lmax;
    }

    Vector z = Vector::Zero(M);
    Vector x = proj.project(z), xPrev = x, w(M);
    for (int k = 1; k <= opt.maxIterations; ++k) {
      w = 2.0 * x - z;
      detail::shrink_blocks(w, Q_, t);
      z += w - x;
      xPrev.swap(x);
      x = proj.project(z);
      rec.iterations = k;

      const double primal = (w - xPrev).norm();
      const double dual = (x - xPrev).norm();
      if (primal <= opt.primalTol && dual <= opt.dualTol) {
        rec.converged = true;
        break;
      }
      if (opt.adaptiveStep && k % opt.adaptEvery == 0) {
        double scale = 1.0;
        if (primal > 10.0 * dual)
          scale = 0.5;
        else if (dual > 10.0 * primal)
          scale = 2.0;
        if (scale != 1.0) {
          z = x + scale * (z - x);
          t *= scale;
          x = proj.project(z);
        }
      }
    }

    rec.xHat = polish(y, eps, w, x);
    rec.residualNorm = (y - A_ * rec.xHat).norm();
    rec.objective = block_norm_sum(rec.xHat, Q_);
    return rec;
  }

 private:
  // The shrinkage half-step w is exactly block sparse but only approximately
  // feasible; the projection half-step x is feasible but dense. Project w onto
  // the feasible set restricted to its own support, and keep whichever
  // feasible candidate has the smaller objective.
  Vector polish(const Vector& y, double eps, const Vector& w, const Vector& x) const {
    std::vector<int> support;
    for (Eigen::Index r = 0; r < w.size() / Q_; ++r)
      if (w.segment(r * Q_, Q_).squaredNorm() > 0.0) support.push_back(static_cast<int>(r));
    if (support.empty()) return x;

    const Eigen::Index cols = static_cast<Eigen::Index>(support.size()) * Q_;
    Matrix AS(A_.rows(), cols);
    Vector wS(cols);
    for (std::size_t i = 0; i < support.size(); ++i) {
      AS.middleCols(static_cast<Eigen::Index>(i) * Q_, Q_) = A_.middleCols(support[i] * Q_, Q_);
      wS.segment(static_cast<Eigen::Index>(i) * Q_, Q_) = w.segment(support[i] * Q_, Q_);
    }
    detail::ResidualBallProjector restricted(AS);
    if (!restricted.bind(y, eps)) return x;
    const Vector xS = restricted.project(wS);
    Vector cand = Vector::Zero(w.size());
    for (std::size_t i = 0; i < support.size(); ++i)
      cand.segment(support[i] * Q_, Q_) = xS.segment(static_cast<Eigen::Index>(i) * Q_, Q_);

    const double limit = eps * (1.0 + 1e-9) + 1e-12 * y.norm();
    if ((y - A_ * cand).norm() > limit) return x;
    return block_norm_sum(cand, Q_) <= block_norm_sum(x, Q_) ? cand : x;
  }

  Matrix A_;
  int Q_;
  detail::ResidualBallProjector projector_;
};

inline Reconstruction solve_block_bpdn(const SensingMatrix& A, const Vector& y, int Q,
                                       const BpdnOptions& options) {
  return BlockBpdnSolver(A, Q).solve(y, options);
}

/// Approximate optimality certificate for a BPDN solution: a multiplier
/// lambda >= 0 such that lambda A^T (y - A x) lies in the subdifferential of
/// sum_r ||x_r|| at x, with complementary slackness on the residual ball.
struct KktCertificate {
  double lambda = 0.0;
  /// Worst per-block distance to the subdifferential (dimensionless).
  double maxBlockViolation = 0.0;
  /// lambda * | ||y - Ax|| - eps |.
  double slackness = 0.0;
  double residualNorm = 0.0;
  bool feasible = false;

  bool passes(double tol) const { return feasible && maxBlockViolation <= tol && slackness <= tol; }
};

/// Builds the certificate at x. Blocks with norm above `activeTol` times the
/// largest block norm count as active.
inline KktCertificate bpdn_certificate(const SensingMatrix& A, const Vector& y, const Vector& x, int Q,
                                       double eps, double feasTol = 1e-6, double activeTol = 1e-9) {
  const Matrix& a = A.entries();
  const Vector r = y - a * x;
  const Vector g = a.transpose() * r;
  const Eigen::Index R = x.size() / Q;

  KktCertificate cert;
  cert.residualNorm = r.norm();
  cert.feasible = cert.residualNorm <= eps * (1.0 + feasTol) + 1e-12 * y.norm();

  double maxNorm = 0.0;
  for (Eigen::Index b = 0; b < R; ++b) maxNorm = std::max(maxNorm, x.segment(b * Q, Q).norm());
  std::vector<char> active(R, 0);
  double num = 0.0, den = 0.0;
  for (Eigen::Index b = 0; b < R; ++b) {
    const double n = x.segment(b * Q, Q).norm();
    if (maxNorm > 0.0 && n > activeTol * maxNorm) {
      active[b] = 1;
      num += g.segment(b * Q, Q).dot(x.segment(b * Q, Q)) / n;
      den += g.segment(b * Q, Q).squaredNorm();
    }
  }
  if (den == 0.0) {
    // x = 0 (or a zero residual with no usable direction): lambda = 0 certifies
    // x = 0, and nothing else.
    cert.lambda = 0.0;
    cert.maxBlockViolation = maxNorm > 0.0 ? 1.0 : 0.0;
    return cert;
  }
  cert.lambda = std::max(0.0, num / den);
  for (Eigen::Index b = 0; b < R; ++b) {
    const auto gb = g.segment(b * Q, Q);
    double v;
    if (active[b]) {
      const auto xb = x.segment(b * Q, Q);
      v = (cert.lambda * gb - xb / xb.norm()).norm();
    } else {
      v = std::max(0.0, cert.lambda * gb.norm() - 1.0);
    }
    cert.maxBlockViolation = std::max(cert.maxBlockViolation, v);
  }
  cert.slackness = cert.lambda * std::abs(cert.residualNorm - eps);
  return cert;
}

/// Columns of A belonging to the given blocks, in the given order.
inline Matrix block_columns(const Matrix& A, const std::vector<int>& blocks, int Q) {
  Matrix out(A.rows(), static_cast<Eigen::Index>(blocks.size()) * Q);
  for (std::size_t i = 0; i < blocks.size(); ++i)
    out.middleCols(static_cast<Eigen::Index>(i) * Q, Q) = A.middleCols(blocks[i] * Q, Q);
  return out;
}

/// Least squares on the columns of the support blocks, zero elsewhere.
/// Throws RankDeficient when s_min(A_Omega) < 1e-10 s_max(A_Omega).
inline Reconstruction oracle_ls(const SensingMatrix& A, const Vector& y, const std::vector<int>& support, int Q) {
  if (Q < 1 || A.M() % Q != 0) throw ConfigError("M is not a multiple of the block length");
  if (y.size() != A.N()) throw ConfigError("measurement length does not match A");
  const int R = A.M() / Q;
  for (int b : support)
    if (b < 0 || b >= R) throw ConfigError("support block index out of range");
  const Eigen::Index cols = static_cast<Eigen::Index>(support.size()) * Q;

  Reconstruction rec;
  rec.xHat = Vector::Zero(A.M());
  rec.converged = true;
  if (cols > 0) {
    if (cols > A.N())
      throw RankDeficient("support has " + std::to_string(cols) + " columns but only " +
                              std::to_string(A.N()) + " measurements",
                          std::numeric_limits<double>::infinity());
    const Matrix AS = block_columns(A.entries(), support, Q);
    Eigen::BDCSVD<Matrix> svd(AS, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double cond = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
    if (s(s.size() - 1) < 1e-10 * s(0))
      throw RankDeficient("support columns are rank deficient (condition " + std::to_string(cond) + ")", cond);
    const Vector xS = svd.solve(y);
    for (std::size_t i = 0; i < support.size(); ++i)
      rec.xHat.segment(support[i] * Q, Q) = xS.segment(static_cast<Eigen::Index>(i) * Q, Q);
  }
  rec.residualNorm = (y - A.entries() * rec.xHat).norm();
  rec.objective = block_norm_sum(rec.xHat, Q);
  return rec;
}

/// The K blocks of largest l2 norm, ties broken towards the lower index.
/// Returned in ascending block order.
inline std::vector<int> true_support(const Vector& x, int Q, int K) {
  if (Q < 1 || x.size() % Q != 0) throw ConfigError("vector length is not a multiple of Q");
  const int R = static_cast<int>(x.size() / Q);
  K = std::clamp(K, 0, R);
  std::vector<double> norms(R);
  for (int r = 0; r < R; ++r) norms[r] = x.segment(r * Q, Q).norm();
  std::vector<int> order(R);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return norms[a] > norms[b]; });
  std::vector<int> out(order.begin(), order.begin() + K);
  std::sort(out.begin(), out.end());
  return out;
}

/// Blocks whose l2 norm exceeds gamma.
inline std::vector<int> threshold_support(const Vector& x, int Q, double gamma) {
  if (Q < 1 || x.size() % Q != 0) throw ConfigError("vector length is not a multiple of Q");
  std::vector<int> out;
  for (Eigen::Index r = 0; r < x.size() / Q; ++r)
    if (x.segment(r * Q, Q).norm() > gamma) out.push_back(static_cast<int>(r));
  return out;
}

}  // namespace qcs
