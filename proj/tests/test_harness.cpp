#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "qcs/harness.hpp"
#include "qcs/io.hpp"

using namespace qcs;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.M = 60;
  c.Q = 6;
  c.fomGrid = {0.5, 0.8};
  c.rateGrid = {0.5, 1.5};
  c.trials = 6;
  c.ripProbes = 200;
  c.threads = 1;
  return c;
}

}  // namespace

TEST(Median, OddEvenAndOrderInvariance) {
  EXPECT_EQ(median({3.0}), 3.0);
  EXPECT_EQ(median({5.0, 1.0, 3.0}), 3.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.0);  // lower middle
  std::vector<double> v{9, 2, 7, 4, 4, 1, 8};
  const double m = median(v);
  std::sort(v.begin(), v.end());
  do {
    EXPECT_EQ(median(v), m);
  } while (std::next_permutation(v.begin(), v.begin() + 4));
  EXPECT_THROW(median({}), ConfigError);
}

TEST(Srnr, Decibels) {
  EXPECT_DOUBLE_EQ(srnr_db(10.0, 1.0), 10.0);
  EXPECT_DOUBLE_EQ(srnr_db(1.0, 0.01), 20.0);
  EXPECT_TRUE(std::isinf(srnr_db(1.0, 0.0)));
  EXPECT_THROW(srnr_db(1.0, -1.0), ConfigError);
  EXPECT_DOUBLE_EQ(to_db(100.0), 20.0);
  EXPECT_TRUE(std::isnan(to_db(std::nan(""))));
}

TEST(FomToN, RoundsHalfUp) {
  EXPECT_EQ(fom_to_N(0.5, 300), 150);
  EXPECT_EQ(fom_to_N(0.05, 300), 15);
  EXPECT_EQ(fom_to_N(0.25, 10), 3);  // 2.5 -> 3
  EXPECT_EQ(fom_to_N(1.0, 300), 300);
  for (int i = 1; i <= 20; ++i) EXPECT_EQ(fom_to_N(i / 20.0, 300), 15 * i);
}

TEST(TrialEpsilon, QuantizationOnlyAndExtension) {
  ChannelSpec ch;
  EXPECT_DOUBLE_EQ(trial_epsilon(180, 1.0, ch), epsilon_radius(180, 1.0));
  ch.sigma_m2 = 0.01;
  ch.sigma_c2 = 0.01;
  const double e2 = std::pow(epsilon_radius(50, 0.3), 2) + 50 * 0.02 + 3.0 * std::sqrt(100.0) * 0.02;
  EXPECT_NEAR(trial_epsilon(50, 0.3, ch), std::sqrt(e2), 1e-12);
}

TEST(Config, Validation) {
  ExperimentConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.M = 61;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.fomGrid = {0.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.K = 6;  // 2K > R
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.confidence = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.rateGrid = {-0.5};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Sweep, ShapeAndDeterminism) {
  const auto c = small_config();
  const auto t1 = run_sweep(c);
  ASSERT_EQ(t1.rows.size(), 4u);
  EXPECT_EQ(t1.failedPoints, 0);
  for (const auto& r : t1.rows) {
    EXPECT_EQ(r.nTrials + r.nExcluded, c.trials);
    EXPECT_TRUE(std::isfinite(r.medianSrnrBpdn));
    EXPECT_GT(r.beta, 0.0);
    EXPECT_GE(r.alpha, r.beta * r.beta);
  }
  const auto t2 = run_sweep(c);
  EXPECT_EQ(io::sweep_csv(t1), io::sweep_csv(t2));
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  auto c = small_config();
  const auto one = io::sweep_csv(run_sweep(c));
  c.threads = 3;
  EXPECT_EQ(io::sweep_csv(run_sweep(c)), one);
}

TEST(Sweep, TrialsIndependentOfRateGrid) {
  // Common random numbers: a point's trials do not depend on the other rates.
  auto c = small_config();
  c.writeTrials = true;
  const auto full = run_sweep(c);
  c.rateGrid = {1.5};
  const auto single = run_sweep(c);
  for (const auto& t : single.trials) {
    const auto it = std::find_if(full.trials.begin(), full.trials.end(), [&](const TrialRecord& r) {
      return r.fom == t.fom && r.b == t.b && r.trialIndex == t.trialIndex;
    });
    ASSERT_NE(it, full.trials.end());
    EXPECT_EQ(it->errBpdn, t.errBpdn);
    EXPECT_EQ(it->errOracle, t.errOracle);
  }
}

TEST(Sweep, SingleTrialSingleRate) {
  auto c = small_config();
  c.trials = 1;
  c.rateGrid = {1.0};
  c.fomGrid = {0.7};
  const auto t = run_sweep(c);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].nTrials, 1);
}

TEST(Sweep, MoreBitsHelpOnAverage) {
  auto c = small_config();
  c.trials = 20;
  c.fomGrid = {0.7};
  c.rateGrid = {0.25, 2.0};
  const auto t = run_sweep(c);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_LT(t.rows[0].medianSrnrBpdn, t.rows[1].medianSrnrBpdn);
  EXPECT_LT(t.rows[0].medianSrnrOracle, t.rows[1].medianSrnrOracle);
  ASSERT_TRUE(t.rows[0].oracleBound && t.rows[1].oracleBound);
  EXPECT_GT(t.rows[0].oracleBound->errorBound, t.rows[1].oracleBound->errorBound);
}

TEST(Sweep, OracleBeatsBpdnInMedian) {
  auto c = small_config();
  c.trials = 15;
  const auto t = run_sweep(c);
  for (const auto& r : t.rows) EXPECT_GE(r.medianSrnrOracle, r.medianSrnrBpdn);
}

TEST(Sweep, PerTrialMatrixMode) {
  auto c = small_config();
  c.matrixMode = MatrixMode::per_trial;
  c.fomGrid = {0.8};
  const auto t = run_sweep(c);
  EXPECT_EQ(t.failedPoints, 0);
  EXPECT_EQ(io::sweep_csv(t), io::sweep_csv(run_sweep(c)));
}

TEST(Sweep, ThresholdOracleSupport) {
  auto c = small_config();
  c.oracleSupport = OracleSupport::threshold;
  c.fomGrid = {0.8};
  const auto t = run_sweep(c);
  for (const auto& r : t.rows) EXPECT_EQ(r.nOracleFailed, 0);
}

TEST(Aggregate, ExclusionRules) {
  SweepRow row;
  BoundResult br;
  br.errorBound = 1.0;
  row.bpdnBound = br;
  row.oracleBound = br;
  std::vector<TrialRecord> recs(4);
  for (int i = 0; i < 4; ++i) {
    recs[i].converged = true;
    recs[i].bpdnFeasible = true;
    recs[i].oracleOk = true;
    recs[i].errBpdn = 0.5 + i;
    recs[i].srnrBpdn = 10.0 - i;
    recs[i].errOracle = 0.1;
    recs[i].srnrOracle = 100.0;
  }
  recs[1].converged = false;                                   // kept: still feasible
  recs[2].converged = false, recs[2].bpdnFeasible = false;     // excluded
  recs[3].oracleOk = false;
  aggregate(recs, row);
  EXPECT_EQ(row.nTrials, 3);
  EXPECT_EQ(row.nExcluded, 1);
  EXPECT_EQ(row.nNonConverged, 2);
  EXPECT_EQ(row.nOracleFailed, 1);
  EXPECT_DOUBLE_EQ(row.violationBpdn, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(row.violationOracle, 0.0);
  EXPECT_DOUBLE_EQ(row.medianSrnrBpdn, 9.0);
}

TEST(Io, CsvFormat) {
  const auto t = run_sweep(small_config());
  const std::string csv = io::sweep_csv(t);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  const auto header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ',') + 1,
            static_cast<long>(io::sweep_columns().size()));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Sweep, BoundBelowMedianAtApplicablePoints) {
  ExperimentConfig c;
  c.M = 100;
  c.fomGrid = {0.5, 0.7, 0.9};
  c.rateGrid = {0.5, 1.0};
  c.trials = 50;
  c.threads = 1;
  const auto t = run_sweep(c);
  int applicable = 0;
  for (const auto& r : t.rows) {
    if (!r.bpdnBound) continue;
    ++applicable;
    EXPECT_LE(to_db(r.bpdnBound->srnrBound), to_db(r.medianSrnrBpdn)) << "fom " << r.fom << " b " << r.b;
  }
  EXPECT_GT(applicable, 0);
}
