#pragma once

// Monte Carlo experiment engine: sweeps over the fraction of measurements
// (FoM = N/M) and the rate b (bits per source scalar), runs the full
// quantize-transmit-reconstruct pipeline per trial and evaluates the
// theoretical bound curves at every sweep point.
//
// Seed scheme (all from the master seed s):
//   matrix of FoM index f        derive_seed(s, {matrix, f})
//   per-trial matrix (f, t)      derive_seed(s, {matrix, f, t})
//   RIP probes for (f, k)        derive_seed(s, {rip, f, k})
//   trial t at FoM f             T = derive_seed(s, {trial, f, t})
//     source / measurement / quantization / channel noise
//                                derive_seed(T, {source}) etc.
// Trial seeds do not depend on b, so every rate sees the same source vectors
// and the same normalized quantization noise.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qcs/bounds.hpp"
#include "qcs/errors.hpp"
#include "qcs/gmvq.hpp"
#include "qcs/model.hpp"
#include "qcs/rng.hpp"
#include "qcs/solvers.hpp"

namespace qcs {

enum class MatrixMode { per_fom, per_trial };
enum class OracleSupport { generator, threshold };

inline const char* to_string(MatrixMode m) { return m == MatrixMode::per_fom ? "per_fom" : "per_trial"; }
inline const char* to_string(OracleSupport o) { return o == OracleSupport::generator ? "true" : "threshold"; }

struct ExperimentConfig {
  int M = 300;
  int Q = 10;
  std::optional<int> R;  // derived from M / Q when absent
  int K = 1;
  double theta2 = 1e-10;
  double rho2 = 1.0;
  std::optional<std::vector<double>> weights;  // uniform when absent
  ChannelSpec channel;

  std::vector<double> fomGrid = default_fom_grid();
  std::vector<double> rateGrid{0.5, 1.0, 1.5};
  int trials = 100;
  double confidence = 0.5;
  std::uint64_t seed = 0;
  std::uint64_t ripProbes = 1000;
  RipSided ripSided = RipSided::lower;
  MatrixMode matrixMode = MatrixMode::per_fom;
  OracleSupport oracleSupport = OracleSupport::generator;
  double gamma = 0.0;  // <= 0 means 1e-3 * rho
  CrossTerm varianceCrossTerm = CrossTerm::conservative;

  BpdnOptions solver;
  unsigned threads = 0;  // 0 = hardware concurrency
  bool writeTrials = false;
  std::string outputPath = "out";

  static std::vector<double> default_fom_grid() {
    std::vector<double> g;
    for (int i = 1; i <= 20; ++i) g.push_back(i / 20.0);
    return g;
  }

  SourceModel model() const { return SourceModel(M, Q, K, theta2, rho2, weights); }

  double effective_gamma() const { return gamma > 0.0 ? gamma : 1e-3 * std::sqrt(rho2); }

  unsigned effective_threads() const {
    if (threads > 0) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
  }

  void validate() const;
};

/// N = round(FoM * M), ties rounded up.
inline int fom_to_N(double fom, int M) { return static_cast<int>(std::floor(fom * M + 0.5)); }

inline void ExperimentConfig::validate() const {
  if (M < 1 || Q < 1) throw ConfigError("model.M and model.Q must be positive");
  if (M % Q != 0)
    throw ConfigError("model.M=" + std::to_string(M) + " is not a multiple of model.Q=" + std::to_string(Q));
  if (R && *R != M / Q)
    throw ConfigError("model.R=" + std::to_string(*R) + " disagrees with M/Q=" + std::to_string(M / Q));
  if (K < 1 || K > M / Q) throw ConfigError("model.K must satisfy 1 <= K <= R");
  if (!(rho2 > 0.0)) throw ConfigError("model.rho2 must be > 0");
  if (!(theta2 >= 0.0) || !(theta2 < rho2)) throw ConfigError("model.theta2 must satisfy 0 <= theta2 < rho2");
  channel.validate();
  if (fomGrid.empty()) throw ConfigError("fom_grid is empty");
  for (double f : fomGrid) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fom_grid entries must lie in (0, 1]");
    if (fom_to_N(f, M) < 1) throw ConfigError("fom " + std::to_string(f) + " gives N < 1");
  }
  if (rateGrid.empty()) throw ConfigError("rate_grid is empty");
  for (double b : rateGrid)
    if (!(b > 0.0)) throw ConfigError("rate_grid entries must be > 0");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
  if (ripProbes < 1) throw ConfigError("rip_probes must be >= 1");
  if (2 * K > M / Q) throw ConfigError("2K blocks exceed R: delta_2K cannot be probed");
  if (weights) enumerate_components(M / Q, K, *weights);
  solver.validate();
}

struct TrialRecord {
  double fom = 0.0;
  double b = 0.0;
  int trialIndex = 0;
  double epsilon = 0.0;
  double errBpdn = 0.0;
  double errOracle = std::numeric_limits<double>::quiet_NaN();
  double srnrBpdn = 0.0;  // linear
  double srnrOracle = std::numeric_limits<double>::quiet_NaN();
  bool feasibleTruth = false;
  bool converged = false;
  bool bpdnFeasible = false;
  bool oracleOk = false;
  int iterations = 0;
  double residualNorm = 0.0;
  double objectiveBpdn = 0.0;
  double objectiveTruth = 0.0;
  std::string note;
};

/// Everything a trial needs that is shared across the trials of one sweep point.
struct PointSetup {
  double fom = 0.0;
  int fomIndex = 0;
  int N = 0;
  double b = 0.0;
  double q = 0.0;
  double epsilon = 0.0;
  double sourceEnergy = 0.0;
};

struct SweepRow {
  double fom = 0.0;
  int N = 0;
  double b = 0.0;
  double deltaK = std::numeric_limits<double>::quiet_NaN();
  double delta2K = std::numeric_limits<double>::quiet_NaN();
  double a = std::numeric_limits<double>::quiet_NaN();
  double beta = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
  double confidence = std::numeric_limits<double>::quiet_NaN();
  bool applicable = false;  // BPDN bound: delta_2K < sqrt(2) - 1
  bool oracleApplicable = false;
  std::optional<BoundResult> bpdnBound;
  std::optional<BoundResult> oracleBound;
  double medianSrnrBpdn = std::numeric_limits<double>::quiet_NaN();  // linear
  double medianSrnrOracle = std::numeric_limits<double>::quiet_NaN();
  int nTrials = 0;
  int nExcluded = 0;
  int nNonConverged = 0;
  int nOracleFailed = 0;
  double violationBpdn = std::numeric_limits<double>::quiet_NaN();
  double violationOracle = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string note;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::vector<TrialRecord> trials;  // filled only when writeTrials is set
  int failedPoints = 0;
  double runtimeSeconds = 0.0;
};

/// Sorted middle element; for an even count the lower of the two middle ones.
inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty list");
  const std::size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

/// 10 log10(energy / errSquared); +inf when errSquared is zero.
inline double srnr_db(double energy, double errSquared) {
  if (errSquared < 0.0) throw ConfigError("squared error must be >= 0");
  if (errSquared == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(energy / errSquared);
}

inline double to_db(double linear) {
  if (std::isnan(linear)) return linear;
  if (linear <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(linear);
}

/// BPDN radius: the quantization mean-plus-three-sigma rule, widened by
/// N s + 3 sqrt(2N) s for Gaussian noise of total variance s.
inline double trial_epsilon(int N, double q, const ChannelSpec& ch) {
  const double eq = epsilon_radius(N, q);
  const double s = ch.total();
  if (s == 0.0) return eq;
  return std::sqrt(eq * eq + N * s + 3.0 * std::sqrt(2.0 * N) * s);
}

inline SensingMatrix sweep_matrix(std::uint64_t seed, int fomIndex, int N, int M) {
  Rng rng(derive_seed(seed, {stream::matrix, static_cast<std::uint64_t>(fomIndex)}));
  return sample_sensing_matrix(N, M, rng);
}

inline SensingMatrix trial_matrix(std::uint64_t seed, int fomIndex, int trial, int N, int M) {
  Rng rng(derive_seed(seed, {stream::matrix, static_cast<std::uint64_t>(fomIndex),
                             static_cast<std::uint64_t>(trial)}));
  return sample_sensing_matrix(N, M, rng);
}

inline std::uint64_t trial_seed(std::uint64_t seed, int fomIndex, int trial) {
  return derive_seed(seed, {stream::trial, static_cast<std::uint64_t>(fomIndex), static_cast<std::uint64_t>(trial)});
}

/// One realization: source, measurement, quantization, channel, both decoders.
/// The BPDN estimate is copied to `bpdnOut` when given.
inline TrialRecord run_trial(const ExperimentConfig& cfg, const SourceModel& model, const PointSetup& pt,
                             int trialIndex, std::uint64_t seed, const BlockBpdnSolver& solver,
                             const SensingMatrix& A, Reconstruction* bpdnOut = nullptr) {
  TrialRecord rec;
  rec.fom = pt.fom;
  rec.b = pt.b;
  rec.trialIndex = trialIndex;
  rec.epsilon = pt.epsilon;

  Rng srcRng(derive_seed(seed, {stream::source}));
  Rng measRng(derive_seed(seed, {stream::measurement}));
  Rng quantRng(derive_seed(seed, {stream::quantization}));
  Rng chanRng(derive_seed(seed, {stream::channel}));

  const SparseVector x = sample_source(model, srcRng);
  const Vector y = measure(A, x.values, cfg.channel.sigma_m2, measRng);
  Vector yc = simulate_quantization(y, pt.q, quantRng);
  if (cfg.channel.sigma_c2 > 0.0) {
    std::normal_distribution<double> gauss(0.0, std::sqrt(cfg.channel.sigma_c2));
    for (Eigen::Index i = 0; i < yc.size(); ++i) yc(i) += gauss(chanRng);
  }

  rec.objectiveTruth = block_norm_sum(x.values, cfg.Q);
  rec.feasibleTruth = (yc - A.entries() * x.values).norm() <= pt.epsilon;

  BpdnOptions opt = cfg.solver;
  opt.epsilon = pt.epsilon;
  const Reconstruction bp = solver.solve(yc, opt);
  if (bpdnOut) *bpdnOut = bp;
  rec.converged = bp.converged;
  rec.iterations = bp.iterations;
  rec.residualNorm = bp.residualNorm;
  rec.objectiveBpdn = bp.objective;
  rec.bpdnFeasible = bp.residualNorm <= pt.epsilon * (1.0 + opt.feasTol) + 1e-12 * yc.norm();
  const double e2 = (x.values - bp.xHat).squaredNorm();
  rec.errBpdn = std::sqrt(e2);
  rec.srnrBpdn = e2 > 0.0 ? pt.sourceEnergy / e2 : std::numeric_limits<double>::infinity();

  const std::vector<int> support = cfg.oracleSupport == OracleSupport::generator
                                       ? x.trueSupport
                                       : threshold_support(x.values, cfg.Q, cfg.effective_gamma());
  try {
    const Reconstruction orc = oracle_ls(A, yc, support, cfg.Q);
    const double o2 = (x.values - orc.xHat).squaredNorm();
    rec.errOracle = std::sqrt(o2);
    rec.srnrOracle = o2 > 0.0 ? pt.sourceEnergy / o2 : std::numeric_limits<double>::infinity();
    rec.oracleOk = true;
  } catch (const RankDeficient& e) {
    rec.note = e.what();
  }
  return rec;
}

/// Runs fn(i) for i in [0, n) on `threads` workers. Results must be written to
/// per-index slots so that the outcome does not depend on scheduling.
inline void parallel_for(int n, unsigned threads, const std::function<void(int)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max(1, n))));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex errorMutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(errorMutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct SweepProgress {
  std::function<void(const SweepRow&, std::size_t done, std::size_t total)> onRow;
};

/// Per-FoM quantities shared by every rate: the matrix, its component
/// log-determinants and the two RIP estimates.
struct FomSetup {
  int N = 0;
  std::optional<SensingMatrix> A;
  std::vector<ComponentMass> masses;
  RipEstimate ripK, rip2K;
};

inline FomSetup prepare_fom(const ExperimentConfig& cfg, const SourceModel& model, int fomIndex) {
  FomSetup fs;
  fs.N = fom_to_N(cfg.fomGrid[fomIndex], cfg.M);
  fs.A = sweep_matrix(cfg.seed, fomIndex, fs.N, cfg.M);
  fs.masses = component_masses(*fs.A, model, cfg.channel.sigma_m2);
  const unsigned th = cfg.effective_threads();
  const auto f = static_cast<std::uint64_t>(fomIndex);
  fs.ripK = estimate_block_rip(*fs.A, cfg.Q, cfg.K, cfg.ripProbes,
                               derive_seed(cfg.seed, {stream::rip, f, static_cast<std::uint64_t>(cfg.K)}),
                               cfg.ripSided, th);
  fs.rip2K = estimate_block_rip(*fs.A, cfg.Q, 2 * cfg.K, cfg.ripProbes,
                                derive_seed(cfg.seed, {stream::rip, f, static_cast<std::uint64_t>(2 * cfg.K)}),
                                cfg.ripSided, th);
  return fs;
}

/// Bound columns of a sweep point (no trials).
inline void evaluate_bounds(const ExperimentConfig& cfg, const FomSetup& fs, double sourceEnergy, SweepRow& row) {
  row.deltaK = fs.ripK.delta;
  row.delta2K = fs.rip2K.delta;
  const RateAllocation alloc = optimal_allocation(fs.masses, row.b * cfg.M, fs.N);
  row.beta = alloc.delta2;
  row.alpha = alloc.delta4;
  const NoiseMoments nm = noise_moments(alloc.delta2, alloc.delta4, fs.N, cfg.channel.sigma_m2,
                                        cfg.channel.sigma_c2, cfg.varianceCrossTerm);
  row.variance = nm.variance;
  const CantelliMargin cm = cantelli_margin(nm.variance, cfg.confidence);
  row.a = cm.a;
  BoundInputs in;
  in.a = cm.a;
  in.beta = alloc.delta2;
  in.variance = nm.variance;
  in.N = fs.N;
  in.channel = cfg.channel;
  in.sourceEnergy = sourceEnergy;
  row.confidence = exceedance_probability(cm.a, nm.variance);
  row.applicable = bpdn_bound_applicable(row.delta2K);
  if (row.applicable) row.bpdnBound = bpdn_upper_bound(row.delta2K, in);
  row.oracleApplicable = row.deltaK >= 0.0 && row.deltaK < 1.0;
  if (row.oracleApplicable) row.oracleBound = oracle_lower_bound(row.deltaK, in);
  if (alloc.highRateStrained) row.note += "high-rate assumption strained;";
  if (cm.degenerate) row.note += "zero noise variance;";
}

/// Aggregates the trials of one point into the median and violation columns.
inline void aggregate(const std::vector<TrialRecord>& recs, SweepRow& row) {
  std::vector<double> bp, orc;
  int bpViol = 0, orViol = 0;
  for (const auto& r : recs) {
    if (!r.converged) ++row.nNonConverged;
    if (!r.converged && !r.bpdnFeasible) {
      ++row.nExcluded;
      continue;
    }
    bp.push_back(r.srnrBpdn);
    if (row.bpdnBound && r.errBpdn > row.bpdnBound->errorBound) ++bpViol;
    if (r.oracleOk) {
      orc.push_back(r.srnrOracle);
      if (row.oracleBound && r.errOracle > row.oracleBound->errorBound) ++orViol;
    } else {
      ++row.nOracleFailed;
    }
  }
  row.nTrials = static_cast<int>(bp.size());
  if (!bp.empty()) {
    row.medianSrnrBpdn = median(bp);
    if (row.bpdnBound) row.violationBpdn = static_cast<double>(bpViol) / bp.size();
  }
  if (!orc.empty()) {
    row.medianSrnrOracle = median(orc);
    if (row.oracleBound) row.violationOracle = static_cast<double>(orViol) / orc.size();
  }
  if (row.nExcluded > 0) row.note += std::to_string(row.nExcluded) + " non-converged infeasible trials excluded;";
  if (row.nOracleFailed > 0) row.note += std::to_string(row.nOracleFailed) + " oracle solves rank deficient;";
}

/// Full sweep over fomGrid x rateGrid. Points that throw are reported with
/// `failed` set and a note instead of aborting the sweep.
inline SweepTable run_sweep(const ExperimentConfig& cfg, const SweepProgress& progress = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const SourceModel model = cfg.model();
  const double energy = source_energy(model);
  const unsigned threads = cfg.effective_threads();

  SweepTable table;
  const std::size_t total = cfg.fomGrid.size() * cfg.rateGrid.size();
  for (std::size_t f = 0; f < cfg.fomGrid.size(); ++f) {
    const double fom = cfg.fomGrid[f];
    std::optional<FomSetup> fs;
    std::string fomError;
    try {
      fs = prepare_fom(cfg, model, static_cast<int>(f));
    } catch (const std::exception& e) {
      fomError = e.what();
    }
    std::optional<BlockBpdnSolver> shared;
    if (fs && cfg.matrixMode == MatrixMode::per_fom) shared.emplace(*fs->A, cfg.Q);

    for (double b : cfg.rateGrid) {
      SweepRow row;
      row.fom = fom;
      row.N = fom_to_N(fom, cfg.M);
      row.b = b;
      try {
        if (!fs) throw std::runtime_error(fomError);
        evaluate_bounds(cfg, *fs, energy, row);

        PointSetup pt;
        pt.fom = fom;
        pt.fomIndex = static_cast<int>(f);
        pt.N = row.N;
        pt.b = b;
        pt.q = quantization_step(cfg.M, row.N, b);
        pt.epsilon = trial_epsilon(row.N, pt.q, cfg.channel);
        pt.sourceEnergy = energy;

        std::vector<TrialRecord> recs(cfg.trials);
        parallel_for(cfg.trials, threads, [&](int t) {
          const std::uint64_t ts = trial_seed(cfg.seed, pt.fomIndex, t);
          if (shared) {
            recs[t] = run_trial(cfg, model, pt, t, ts, *shared, *fs->A);
          } else {
            const SensingMatrix At = trial_matrix(cfg.seed, pt.fomIndex, t, row.N, cfg.M);
            recs[t] = run_trial(cfg, model, pt, t, ts, BlockBpdnSolver(At, cfg.Q), At);
          }
        });
        aggregate(recs, row);
        if (cfg.writeTrials) table.trials.insert(table.trials.end(), recs.begin(), recs.end());
      } catch (const std::exception& e) {
        row.failed = true;
        row.note += std::string("error: ") + e.what() + ";";
        ++table.failedPoints;
      }
      table.rows.push_back(row);
      if (progress.onRow) progress.onRow(table.rows.back(), table.rows.size(), total);
    }
  }
  table.runtimeSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return table;
}

}  // namespace qcs
