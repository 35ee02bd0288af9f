#pragma once

// High-rate analysis of a Gaussian-mixture vector quantizer applied to the
// noisy measurement vector: component log-determinants, per-component
// distortion, the distortion-minimising rate allocation and the moments of the
// total noise ||n_q + n_m + n_c||^2. Also the uniform quantization-noise model
// used by the Monte Carlo experiments.
//
// Everything that involves determinants or 2^{bits} is carried in the log
// domain: with theta2 = 1e-10 the raw determinants underflow for N of a few
// dozen and 2^{b_t} overflows for b_t > 1023.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qcs/errors.hpp"
#include "qcs/model.hpp"
#include "qcs/rng.hpp"

namespace qcs {

namespace detail {

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// log|S| for a symmetric positive-definite S via Cholesky. Pivots below
/// n * eps * max(diag S) are treated as singular.
inline double log_det_spd(const Matrix& S, const char* what) {
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite(std::string(what) + " is not positive definite");
  const auto L = llt.matrixLLT().diagonal();
  const double maxDiag = S.diagonal().maxCoeff();
  const double floor = static_cast<double>(S.rows()) * std::numeric_limits<double>::epsilon() * maxDiag;
  double ld = 0.0;
  for (Eigen::Index i = 0; i < L.size(); ++i) {
    const double pivot = L(i) * L(i);
    if (!(pivot > floor)) throw NotPositiveDefinite(std::string(what) + " is numerically singular");
    ld += std::log(pivot);
  }
  return ld;
}

/// Multiplies every shape constant. Only the validation suite's fault
/// injection changes it.
inline double shapeConstantFault = 1.0;

}  // namespace detail

/// log V_{eta,N}, the dimension-dependent constant of the high-rate distortion law:
/// V = sqrt(2)^eta ((N/2) Gamma(N/2))^{eta/N} ((N+eta)/N)^{(N+eta-2)/2}.
inline double log_shape_constant(int eta, int N) {
  if (N < 1) throw ConfigError("shape_constant: N must be >= 1");
  if (eta < 1) throw ConfigError("shape_constant: eta must be positive");
  const double n = N, e = eta;
  return e * 0.5 * std::log(2.0) + (e / n) * (std::log(n / 2.0) + std::lgamma(n / 2.0)) +
         0.5 * (n + e - 2.0) * std::log((n + e) / n) + std::log(detail::shapeConstantFault);
}

inline double shape_constant(int eta, int N) { return std::exp(log_shape_constant(eta, N)); }

/// Log-determinant of a component covariance in the measurement domain,
/// Sigma_l = A C_l A^T + sigma_m2 I.
///
/// Every C_l equals theta2 I plus (rho2 - theta2) on the support columns, so
/// Sigma_l = H + (rho2 - theta2) A_S A_S^T with H = theta2 A A^T + sigma_m2 I
/// shared by all components. H is factored once; each component then costs a
/// (kQ x kQ) factorization through the matrix determinant lemma. When H is
/// singular (theta2 = sigma_m2 = 0) the full N x N matrix is factored instead.
class MeasurementCovariance {
 public:
  MeasurementCovariance(const SensingMatrix& A, const SourceModel& model, double sigma_m2)
      : A_(A.entries()), Q_(model.Q()), theta2_(model.theta2()), rho2_(model.rho2()),
        sigma_m2_(sigma_m2) {
    if (A.M() != model.M()) throw ConfigError("sensing matrix and model disagree on M");
    if (sigma_m2 < 0.0) throw ConfigError("sigma_m2 must be >= 0");
    Matrix H = theta2_ * (A_ * A_.transpose());
    H.diagonal().array() += sigma_m2_;
    if (theta2_ > 0.0 || sigma_m2_ > 0.0) {
      try {
        logDetH_ = detail::log_det_spd(H, "theta2 A A^T + sigma_m2 I");
        hChol_.compute(H);
        baseIsPd_ = true;
      } catch (const NotPositiveDefinite&) {
        baseIsPd_ = false;
      }
    }
  }

  double logdet(const MixtureComponent& comp) const {
    const int N = static_cast<int>(A_.rows());
    const int cols = static_cast<int>(comp.support.size()) * Q_;
    Matrix AS(N, cols);
    for (std::size_t i = 0; i < comp.support.size(); ++i)
      AS.middleCols(static_cast<Eigen::Index>(i) * Q_, Q_) = A_.middleCols(comp.support[i] * Q_, Q_);
    const double gain = rho2_ - theta2_;

    if (baseIsPd_) {
      // |H + g A_S A_S^T| = |H| |I + g A_S^T H^{-1} A_S|
      Matrix small = gain * (AS.transpose() * hChol_.solve(AS));
      small = 0.5 * (small + small.transpose()).eval();
      small.diagonal().array() += 1.0;
      return logDetH_ + detail::log_det_spd(small, "capacitance matrix");
    }
    if (cols < N)
      throw NotPositiveDefinite(
          "A C A^T + sigma_m2 I is singular: theta2 = 0, sigma_m2 = 0 and N > kQ (N=" +
          std::to_string(N) + ", kQ=" + std::to_string(cols) + ")");
    Matrix S = rho2_ * (AS * AS.transpose());
    return detail::log_det_spd(S, "A C A^T");
  }

 private:
  Matrix A_;
  int Q_;
  double theta2_, rho2_, sigma_m2_;
  Eigen::LLT<Matrix> hChol_;
  double logDetH_ = 0.0;
  bool baseIsPd_ = false;
};

/// log|A diag(c) A^T + sigma_m2 I| for an arbitrary non-negative diagonal c.
inline double logdet_diag_covariance(const SensingMatrix& A, const Vector& covDiag, double sigma_m2) {
  if (covDiag.size() != A.M()) throw ConfigError("covariance diagonal has wrong length");
  Matrix S = A.entries() * covDiag.asDiagonal() * A.entries().transpose();
  S.diagonal().array() += sigma_m2;
  return detail::log_det_spd(S, "A C A^T + sigma_m2 I");
}

inline double component_logdet(const SensingMatrix& A, const SourceModel& model,
                               const MixtureComponent& comp, double sigma_m2) {
  return MeasurementCovariance(A, model, sigma_m2).logdet(comp);
}

struct ComponentMass {
  std::size_t componentIndex = 0;
  double logDet = 0.0;
  double weight = 0.0;
};

/// Log-determinants of every mixture component, in enumeration order.
inline std::vector<ComponentMass> component_masses(const SensingMatrix& A, const SourceModel& model,
                                                   double sigma_m2) {
  MeasurementCovariance cov(A, model, sigma_m2);
  std::vector<ComponentMass> out;
  out.reserve(model.components().size());
  for (std::size_t i = 0; i < model.components().size(); ++i) {
    const auto& c = model.components()[i];
    out.push_back({i, cov.logdet(c), c.weight});
  }
  return out;
}

/// log of Delta_{eta}(b) = 2^{-eta b/N} V_{eta,N} exp(eta logDet / (2N)).
inline double log_component_distortion(double bits, int eta, double logDet, int N) {
  return -eta * bits / N * std::numbers::ln2 + log_shape_constant(eta, N) + eta * logDet / (2.0 * N);
}

inline double component_distortion(double bits, int eta, double logDet, int N) {
  return std::exp(log_component_distortion(bits, eta, logDet, N));
}

/// Weighted distortion sum_l w_l Delta_{eta,l}(b_l), summed directly.
/// Components with -inf bits (dropped, zero weight) are skipped.
inline double mixture_distortion(std::span<const ComponentMass> masses, std::span<const double> bits,
                                 int eta, int N) {
  if (masses.size() != bits.size()) throw ConfigError("bits and masses differ in length");
  std::vector<double> terms;
  terms.reserve(masses.size());
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (masses[i].weight <= 0.0) continue;
    terms.push_back(std::log(masses[i].weight) +
                    log_component_distortion(bits[i], eta, masses[i].logDet, N));
  }
  return std::exp(detail::log_sum_exp(terms));
}

struct RateAllocation {
  double b_total = 0.0;
  /// Bits per component in enumeration order; -inf for zero-weight components.
  std::vector<double> bits;
  /// log2(2^{b_l} / 2^{b_t}); sums to one in the 2^x domain.
  std::vector<double> log2Shares;
  double delta2 = 0.0;  // minimum mean-squared quantization distortion (beta)
  double delta4 = 0.0;  // fourth-moment distortion at the optimum (alpha)
  /// Some component receives fewer than one codevector (2^{b_l} < 1).
  bool highRateStrained = false;
};

/// Distortion-minimising split of b_total bits over the mixture components:
/// 2^{b_l} = 2^{b_t} w_l / sum w, w_l = [omega_l exp(logDet_l / N)]^{N/(N+2)}.
/// delta2 uses the closed-form minimum; delta4 is the eta = 4 distortion summed
/// directly at the returned bits.
inline RateAllocation optimal_allocation(std::span<const ComponentMass> masses, double b_total, int N) {
  if (!(b_total > 0.0)) throw ConfigError("total rate must be > 0");
  if (N < 1) throw ConfigError("N must be >= 1");
  if (masses.empty()) throw ConfigError("no mixture components");
  const double n = N;
  const double expo = n / (n + 2.0);

  std::vector<double> logW;
  logW.reserve(masses.size());
  for (const auto& m : masses) {
    if (m.weight < 0.0) throw ConfigError("negative mixture weight");
    if (!std::isfinite(m.logDet)) throw ConfigError("non-finite component log-determinant");
    if (m.weight > 0.0) logW.push_back(expo * (std::log(m.weight) + m.logDet / n));
  }
  if (logW.empty()) throw ConfigError("all mixture weights are zero");
  const double logS = detail::log_sum_exp(logW);

  RateAllocation out;
  out.b_total = b_total;
  out.bits.resize(masses.size());
  out.log2Shares.resize(masses.size());
  for (std::size_t i = 0, j = 0; i < masses.size(); ++i) {
    if (masses[i].weight > 0.0) {
      out.log2Shares[i] = (logW[j++] - logS) / std::numbers::ln2;
      out.bits[i] = b_total + out.log2Shares[i];
      if (out.bits[i] < 0.0) out.highRateStrained = true;
    } else {
      out.log2Shares[i] = -std::numeric_limits<double>::infinity();
      out.bits[i] = -std::numeric_limits<double>::infinity();
    }
  }
  out.delta2 = std::exp(-2.0 * b_total / n * std::numbers::ln2 + log_shape_constant(2, N) +
                        (n + 2.0) / n * logS);
  out.delta4 = mixture_distortion(masses, out.bits, 4, N);
  return out;
}

/// Marginal distortion reduction per unit of 2^{b_l} at an allocation. At the
/// optimum every positive-weight component has the same value (KKT).
inline std::vector<double> allocation_marginals(std::span<const ComponentMass> masses,
                                                std::span<const double> bits, int N) {
  const double n = N;
  std::vector<double> out;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (masses[i].weight <= 0.0) continue;
    // d/dB [w B^{-2/N} V |Sigma|^{1/N}] at B = 2^b, dropping the common V.
    out.push_back(std::exp(std::log(masses[i].weight) + std::log(2.0 / n) -
                           (n + 2.0) / n * bits[i] * std::numbers::ln2 + masses[i].logDet / n));
  }
  return out;
}

/// Closed forms for the fourth-moment distortion at the optimal allocation.
/// `substituted` plugs the optimal bits into the eta = 4 distortion law, giving
/// inner exponent 2/(N-2) on the determinant; `alternative` uses the exponent
/// (N-6)/(2N(N-2)) instead and is undefined at N = 2. Diagnostic only.
struct AlphaClosedForms {
  std::optional<double> alternative;
  double substituted = 0.0;
};

inline AlphaClosedForms alpha_closed_forms(std::span<const ComponentMass> masses, double b_total, int N) {
  const double n = N;
  std::vector<double> logW, subTerms, altTerms;
  for (const auto& m : masses) {
    if (m.weight <= 0.0) continue;
    const double lw = std::log(m.weight);
    logW.push_back(n / (n + 2.0) * (lw + m.logDet / n));
    subTerms.push_back((n - 2.0) / (n + 2.0) * lw + 2.0 / (n + 2.0) * m.logDet);
    if (N != 2)
      altTerms.push_back((n - 2.0) / (n + 2.0) *
                             (lw + m.logDet * (n - 6.0) / (2.0 * n * (n - 2.0))));
  }
  const double logS = detail::log_sum_exp(logW);
  const double prefix = -4.0 * b_total / n * std::numbers::ln2 + log_shape_constant(4, N) + 4.0 / n * logS;
  AlphaClosedForms out;
  out.substituted = std::exp(prefix + detail::log_sum_exp(subTerms));
  if (N != 2) out.alternative = std::exp(prefix + detail::log_sum_exp(altTerms));
  return out;
}

struct NoiseMoments {
  double mean = 0.0;      // E||n||^2
  double variance = 0.0;  // Var||n||^2
};

/// Cross term of Var||n||^2 between quantization and Gaussian noise.
/// `conservative` (default): 4 N s delta2, never below the exact value.
/// `independent`: 4 s delta2, exact when n_q is independent of the Gaussian
/// noise (delta2 already sums over the N coordinates).
enum class CrossTerm { conservative, independent };

inline const char* to_string(CrossTerm c) { return c == CrossTerm::conservative ? "conservative" : "independent"; }

/// Moments of ||n||^2 for n = n_q + n_m + n_c, given E||n_q||^2 = delta2 and
/// E||n_q||^4 = delta4.
inline NoiseMoments noise_moments(double delta2, double delta4, int N, double sigma_m2, double sigma_c2,
                                  CrossTerm cross = CrossTerm::conservative) {
  if (N < 1) throw ConfigError("N must be >= 1");
  if (delta2 < 0.0) throw ConfigError("delta2 must be >= 0");
  if (sigma_m2 < 0.0 || sigma_c2 < 0.0) throw ConfigError("noise variances must be >= 0");
  const double quantVar = delta4 - delta2 * delta2;
  if (quantVar < -1e-12 * delta2 * delta2)
    throw ConfigError("delta4 < delta2^2: inconsistent distortion moments");
  const double s = sigma_m2 + sigma_c2;
  const double n = N;
  const double crossScale = cross == CrossTerm::conservative ? n : 1.0;
  NoiseMoments out;
  out.mean = delta2 + n * s;
  out.variance = std::max(0.0, quantVar) + 4.0 * crossScale * s * delta2 + 2.0 * n * s * s;
  return out;
}

/// Step of the uniform scalar quantizer that spends M*b/N bits per measurement:
/// q = 1 / 2^{M b / N - 1}.
inline double quantization_step(int M, int N, double bitsPerScalar) {
  if (!(bitsPerScalar > 0.0)) throw ConfigError("bits per scalar must be > 0");
  if (M < 1 || N < 1) throw ConfigError("M and N must be positive");
  return std::exp2(1.0 - static_cast<double>(M) * bitsPerScalar / N);
}

/// y + u with u i.i.d. uniform on the open interval (-q/2, q/2).
inline Vector simulate_quantization(const Vector& y, double q, Rng& rng) {
  if (!(q > 0.0)) throw ConfigError("quantization step must be > 0");
  std::uniform_real_distribution<double> unif(-0.5 * q, 0.5 * q);
  Vector out = y;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    double u = unif(rng);
    while (u == -0.5 * q) u = unif(rng);
    out(i) += u;
  }
  return out;
}

/// Moments of ||u||^2 for u uniform on (-q/2, q/2)^N: delta2 = N q^2/12,
/// delta4 = delta2^2 + N q^4/180.
struct DistortionMoments {
  double delta2 = 0.0;
  double delta4 = 0.0;
};

inline DistortionMoments uniform_noise_distortion(int N, double q) {
  DistortionMoments out;
  out.delta2 = N * q * q / 12.0;
  out.delta4 = out.delta2 * out.delta2 + N * std::pow(q, 4) / 180.0;
  return out;
}

/// BPDN residual radius: mean of ||n_q||^2 plus three standard deviations,
/// eps = sqrt(N q^2/12 + 3 sqrt(N) q^2 / (6 sqrt 5)).
inline double epsilon_radius(int N, double q) {
  if (N < 1) throw ConfigError("N must be >= 1");
  if (!(q > 0.0)) throw ConfigError("quantization step must be > 0");
  const double n = N;
  return std::sqrt(n * q * q / 12.0 + 3.0 * std::sqrt(n) * q * q / (6.0 * std::sqrt(5.0)));
}

}  // namespace qcs
