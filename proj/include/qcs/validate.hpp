#pragma once

// Self-check suite behind `qcs validate`: closed forms against independent
// reference computations, noise-moment Monte Carlo checks and solver
// optimality certificates on small instances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qcs/bounds.hpp"
#include "qcs/gmvq.hpp"
#include "qcs/model.hpp"
#include "qcs/reference.hpp"
#include "qcs/rng.hpp"
#include "qcs/solvers.hpp"

namespace qcs::validate {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Options {
  std::uint64_t seed = 0;
  int allocationInstances = 20;
  int monteCarloDraws = 20000;
  int solverInstances = 5;
};

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

inline CheckResult check_shape_constant() {
  double worst = 0.0;
  for (int eta : {2, 4})
    for (int N = 1; N <= 100; ++N)
      worst = std::max(worst, rel_err(shape_constant(eta, N), reference::shape_constant_direct(eta, N)));
  return {"shape constant vs direct evaluation", worst <= 1e-10, "max rel err " + fmt(worst)};
}

inline CheckResult check_allocation(const Options& o) {
  Rng rng(derive_seed(o.seed, {101}));
  std::uniform_int_distribution<int> dn(2, 8), dl(2, 5);
  std::uniform_real_distribution<double> dld(-20.0, 5.0), dw(0.05, 1.0), db(4.0, 40.0);
  double worstOpt = 0.0, worstKkt = 0.0, worstClosed = 0.0, worstCons = 0.0;
  for (int i = 0; i < o.allocationInstances; ++i) {
    const int N = dn(rng), L = dl(rng);
    std::vector<ComponentMass> masses(L);
    double wsum = 0.0;
    for (int l = 0; l < L; ++l) {
      masses[l] = {static_cast<std::size_t>(l), dld(rng), dw(rng)};
      wsum += masses[l].weight;
    }
    for (auto& m : masses) m.weight /= wsum;
    const double bt = db(rng);
    const RateAllocation a = optimal_allocation(masses, bt, N);

    reference::AllocationInstance inst{{}, {}, bt, N};
    for (const auto& m : masses) {
      inst.weights.push_back(m.weight);
      inst.logDets.push_back(m.logDet);
    }
    worstOpt = std::max(worstOpt, rel_err(a.delta2, reference::minimize_allocation(inst).delta2));
    const auto marg = allocation_marginals(masses, a.bits, N);
    const auto [lo, hi] = std::minmax_element(marg.begin(), marg.end());
    worstKkt = std::max(worstKkt, (*hi - *lo) / *hi);
    worstClosed = std::max(worstClosed, rel_err(a.delta2, mixture_distortion(masses, a.bits, 2, N)));
    double shares = 0.0;
    for (double s : a.log2Shares) shares += std::exp2(s);
    worstCons = std::max(worstCons, std::abs(shares - 1.0));
  }
  const bool ok = worstOpt <= 1e-6 && worstKkt <= 1e-8 && worstClosed <= 1e-10 && worstCons <= 1e-10;
  return {"rate allocation optimality", ok,
          "minimizer " + fmt(worstOpt) + ", KKT spread " + fmt(worstKkt) + ", closed form " + fmt(worstClosed) +
              ", rate sum " + fmt(worstCons)};
}

inline CheckResult check_noise_moments(const Options& o) {
  const int N = 40;
  const double q = 0.5, s = 0.01;
  Rng rng(derive_seed(o.seed, {102}));
  std::uniform_real_distribution<double> u(-q / 2, q / 2);
  std::normal_distribution<double> g(0.0, std::sqrt(s));
  double sum = 0.0, sum2 = 0.0;
  for (int d = 0; d < o.monteCarloDraws; ++d) {
    double e = 0.0;
    for (int i = 0; i < N; ++i) {
      const double v = u(rng) + g(rng);
      e += v * v;
    }
    sum += e;
    sum2 += e * e;
  }
  const double mean = sum / o.monteCarloDraws;
  const double var = sum2 / o.monteCarloDraws - mean * mean;
  const auto dm = uniform_noise_distortion(N, q);
  const NoiseMoments nm = noise_moments(dm.delta2, dm.delta4, N, s, 0.0, CrossTerm::independent);
  const double em = rel_err(mean, nm.mean), ev = rel_err(var, nm.variance);
  return {"noise moments (independent cross term) vs Monte Carlo", em <= 0.02 && ev <= 0.1, "mean " + fmt(em) + ", variance " + fmt(ev)};
}

inline CheckResult check_epsilon_coverage(const Options& o) {
  const int N = 100;
  const double q = 1.0, eps = epsilon_radius(N, q);
  Rng rng(derive_seed(o.seed, {103}));
  std::uniform_real_distribution<double> u(-q / 2, q / 2);
  int inside = 0;
  for (int d = 0; d < o.monteCarloDraws; ++d) {
    double e = 0.0;
    for (int i = 0; i < N; ++i) {
      const double v = u(rng);
      e += v * v;
    }
    if (std::sqrt(e) <= eps) ++inside;
  }
  const double frac = static_cast<double>(inside) / o.monteCarloDraws;
  return {"epsilon radius coverage", frac >= 0.99, "coverage " + fmt(frac)};
}

inline CheckResult check_solver(const Options& o) {
  double worstGap = 0.0, worstKkt = 0.0;
  bool feasible = true;
  for (int i = 0; i < o.solverInstances; ++i) {
    Rng rng(derive_seed(o.seed, {104, static_cast<std::uint64_t>(i)}));
    const int Q = 4, M = 40, N = 20;
    const SensingMatrix A = sample_sensing_matrix(N, M, rng);
    const SourceModel model(M, Q, 1, 0.0, 1.0);
    const Vector x = sample_source(model, rng).values;
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    Vector y = A.entries() * x;
    for (Eigen::Index k = 0; k < y.size(); ++k) y(k) += u(rng);
    BpdnOptions opt;
    opt.epsilon = 0.05 * std::sqrt(static_cast<double>(N) / 3.0);
    const Reconstruction r = solve_block_bpdn(A, y, Q, opt);
    const KktCertificate c = bpdn_certificate(A, y, r.xHat, Q, opt.epsilon);
    const auto ref = reference::solve_bpdn_by_penalty(A.entries(), y, Q, opt.epsilon);
    feasible = feasible && c.feasible;
    worstKkt = std::max({worstKkt, c.maxBlockViolation, c.slackness});
    worstGap = std::max(worstGap, (r.objective - ref.objective) / std::max(ref.objective, 1e-300));
  }
  return {"block BPDN optimality", feasible && worstKkt <= 1e-4 && worstGap <= 1e-4,
          "objective gap " + fmt(worstGap) + ", KKT " + fmt(worstKkt) + (feasible ? "" : ", infeasible")};
}

/// Sampled block-RIP never exceeds the exhaustive two-sided constant.
inline CheckResult check_rip(const Options& o) {
  Rng rng(derive_seed(o.seed, {105}));
  const int Q = 2, M = 8, N = 6, k = 2;
  const SensingMatrix A = sample_sensing_matrix(N, M, rng);
  double exact = 0.0;
  for (int r1 = 0; r1 < M / Q; ++r1)
    for (int r2 = r1 + 1; r2 < M / Q; ++r2) {
      const Matrix As = block_columns(A.entries(), {r1, r2}, Q);
      Eigen::SelfAdjointEigenSolver<Matrix> es(As.transpose() * As);
      exact = std::max({exact, 1.0 - es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff() - 1.0});
    }
  const RipEstimate est = estimate_block_rip(A, Q, k, 2000, derive_seed(o.seed, {106}), RipSided::two_sided);
  return {"sampled RIP below exhaustive", est.delta <= exact + 1e-12,
          "sampled " + fmt(est.delta) + ", exhaustive " + fmt(exact)};
}

inline std::vector<CheckResult> run_all(const Options& o = {}) {
  return {check_shape_constant(), check_allocation(o), check_noise_moments(o),
          check_epsilon_coverage(o), check_solver(o),      check_rip(o)};
}

}  // namespace qcs::validate
