#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "qcs/model.hpp"

using namespace qcs;

TEST(EnumerateComponents, ThirtyBlocksSingleSparse) {
  const auto comps = enumerate_components(30, 1);
  ASSERT_EQ(comps.size(), 30u);
  for (std::size_t i = 0; i < comps.size(); ++i) {
    EXPECT_DOUBLE_EQ(comps[i].weight, 1.0 / 30.0);
    ASSERT_EQ(comps[i].support.size(), 1u);
    EXPECT_EQ(comps[i].support[0], static_cast<int>(i));
  }
}

TEST(EnumerateComponents, TwoBlocksHalfWeights) {
  const auto comps = enumerate_components(2, 1);
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0].support, std::vector<int>{0});
  EXPECT_EQ(comps[1].support, std::vector<int>{1});
  EXPECT_DOUBLE_EQ(comps[0].weight, 0.5);
  EXPECT_DOUBLE_EQ(comps[1].weight, 0.5);
}

TEST(EnumerateComponents, BinomialCountAndOrder) {
  const auto comps = enumerate_components(4, 2);
  ASSERT_EQ(comps.size(), 10u);
  EXPECT_EQ(comps[3].support, std::vector<int>{3});
  EXPECT_EQ(comps[4].support, (std::vector<int>{0, 1}));
  EXPECT_EQ(comps[9].support, (std::vector<int>{2, 3}));
  std::set<std::vector<int>> distinct;
  double sum = 0.0;
  for (const auto& c : comps) {
    distinct.insert(c.support);
    sum += c.weight;
  }
  EXPECT_EQ(distinct.size(), comps.size());
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(EnumerateComponents, CountsMatchBinomialSums) {
  for (int R = 1; R <= 9; ++R)
    for (int K = 1; K <= R; ++K) {
      std::uint64_t expect = 0;
      for (int k = 1; k <= K; ++k) expect += binomial(R, k);
      EXPECT_EQ(enumerate_components(R, K).size(), expect);
    }
}

TEST(EnumerateComponents, RejectsBadInput) {
  EXPECT_THROW(enumerate_components(3, 4), ConfigError);
  EXPECT_THROW(enumerate_components(3, 0), ConfigError);
  EXPECT_THROW(enumerate_components(3, 1, std::vector<double>{0.5, 0.5}), ConfigError);
  EXPECT_THROW(enumerate_components(2, 1, std::vector<double>{0.7, 0.7}), ConfigError);
  EXPECT_THROW(enumerate_components(2, 1, std::vector<double>{-0.5, 1.5}), ConfigError);
  const auto ok = enumerate_components(2, 1, std::vector<double>{0.25, 0.75});
  EXPECT_DOUBLE_EQ(ok[1].weight, 0.75);
}

TEST(SourceModel, Invariants) {
  const SourceModel m(300, 10, 1, 1e-10, 1.0);
  EXPECT_EQ(m.R(), 30);
  EXPECT_TRUE(m.warnings().empty());
  const Vector v = m.block_variances(m.components()[7]);
  for (int r = 0; r < 30; ++r) EXPECT_EQ(v(r), r == 7 ? 1.0 : 1e-10);
  EXPECT_THROW(SourceModel(301, 10, 1, 0.0, 1.0), ConfigError);
  EXPECT_THROW(SourceModel(300, 10, 1, 1.0, 1.0), ConfigError);
  EXPECT_THROW(SourceModel(300, 10, 31, 0.0, 1.0), ConfigError);
  EXPECT_EQ(SourceModel(20, 10, 1, 0.01, 1.0).warnings().size(), 1u);
}

TEST(SampleSource, ZeroThetaGivesOneActiveBlock) {
  const SourceModel m(60, 6, 1, 0.0, 2.0);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto x = sample_source(m, rng);
    EXPECT_EQ(block_sparsity(x.values, 6, 1e-300), 1);
  }
}

TEST(SampleSource, DenseSingleBlock) {
  const SourceModel m(50, 50, 1, 0.0, 4.0);
  Rng rng(2);
  double acc = 0.0;
  const int draws = 2000;
  for (int i = 0; i < draws; ++i) acc += sample_source(m, rng).values.squaredNorm();
  EXPECT_NEAR(acc / draws / 50.0, 4.0, 0.12);
}

TEST(SampleSource, EnergyMatchesClosedForm) {
  const SourceModel m(300, 10, 1, 1e-10, 1.0);
  EXPECT_NEAR(source_energy(m), 10.0 + 290e-10, 1e-12);
  Rng rng(3);
  const int draws = 10000;
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) acc += sample_source(m, rng).values.squaredNorm();
  EXPECT_NEAR(acc / draws, source_energy(m), 0.03 * source_energy(m));
}

TEST(SampleSource, EnergyMatchesForMultiBlockModel) {
  const SourceModel m(40, 4, 3, 0.05, 1.0);
  Rng rng(4);
  const int draws = 10000;
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) acc += sample_source(m, rng).values.squaredNorm();
  EXPECT_NEAR(acc / draws, source_energy(m), 0.03 * source_energy(m));
}

TEST(SourceEnergy, Limits) {
  EXPECT_DOUBLE_EQ(source_energy(SourceModel(300, 10, 1, 0.0, 1.0)), 10.0);
  // theta2 -> rho2: dense limit M rho2.
  const double e = source_energy(SourceModel(300, 10, 1, 1.0 - 1e-12, 1.0));
  EXPECT_NEAR(e, 300.0, 1e-9);
}

TEST(SampleSource, WeightsSelectComponents) {
  const SourceModel m(30, 10, 1, 0.0, 1.0, std::vector<double>{0.0, 1.0, 0.0});
  Rng rng(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_source(m, rng).trueSupport, std::vector<int>{1});
}

TEST(SampleSource, ThresholdCountsOneBlock) {
  const SourceModel m(300, 10, 1, 1e-10, 1.0);
  Rng rng(6);
  int hits = 0;
  for (int i = 0; i < 1000; ++i)
    if (block_sparsity(sample_source(m, rng).values, 10, default_gamma(m)) == 1) ++hits;
  EXPECT_GE(hits, 990);
}

TEST(SampleSource, Reproducible) {
  const SourceModel m(300, 10, 1, 1e-10, 1.0);
  Rng a(99), b(99);
  const auto xa = sample_source(m, a);
  const auto xb = sample_source(m, b);
  EXPECT_EQ(xa.componentIndex, xb.componentIndex);
  EXPECT_TRUE((xa.values.array() == xb.values.array()).all());
}

TEST(SensingMatrix, UnitColumns) {
  Rng rng(7);
  const auto A = sample_sensing_matrix(150, 300, rng);
  for (int j = 0; j < 300; ++j) EXPECT_NEAR(A.entries().col(j).norm(), 1.0, 1e-12);
  EXPECT_THROW(sample_sensing_matrix(301, 300, rng), ConfigError);
  Matrix bad = Matrix::Ones(2, 2);
  EXPECT_THROW(SensingMatrix{bad}, ConfigError);
}

TEST(SensingMatrix, ScalarIsPlusMinusOne) {
  Rng rng(8);
  for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(std::abs(sample_sensing_matrix(1, 1, rng).entries()(0, 0)), 1.0);
}

TEST(SensingMatrix, RawColumnNormsAverageOne) {
  Rng rng(9);
  double acc = 0.0;
  int count = 0;
  for (int i = 0; i < 100; ++i) {
    const Matrix raw = sample_gaussian_matrix(30, 60, rng);
    for (int j = 0; j < 60; ++j, ++count) acc += raw.col(j).squaredNorm();
  }
  EXPECT_NEAR(acc / count, 1.0, 0.05);
}

TEST(SensingMatrix, Reproducible) {
  Rng a(10), b(10);
  EXPECT_TRUE((sample_sensing_matrix(20, 40, a).entries().array() ==
               sample_sensing_matrix(20, 40, b).entries().array()).all());
}

TEST(Measure, NoiselessIsExact) {
  Rng rng(11);
  const auto A = sample_sensing_matrix(10, 20, rng);
  const Vector zero = Vector::Zero(20);
  EXPECT_EQ(measure(A, zero, 0.0, rng).norm(), 0.0);
  const Vector x = Vector::LinSpaced(20, -1.0, 1.0);
  EXPECT_TRUE((measure(A, x, 0.0, rng).array() == (A.entries() * x).array()).all());
  EXPECT_THROW(measure(A, Vector::Zero(19), 0.0, rng), ConfigError);
}

TEST(Measure, NoiseVariance) {
  Rng rng(12);
  const auto A = sample_sensing_matrix(10, 20, rng);
  const Vector x = Vector::Ones(20);
  const Vector clean = A.entries() * x;
  const double s2 = 0.25;
  double acc = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) acc += (measure(A, x, s2, rng) - clean).squaredNorm();
  EXPECT_NEAR(acc / (draws * 10.0), s2, 0.03 * s2);
}

TEST(BlockSparsity, Basics) {
  EXPECT_EQ(block_sparsity(Vector::Zero(30), 10, 1.0), 0);
  Vector x = Vector::Zero(30);
  x.segment(10, 2) << 3.0, 4.0;
  EXPECT_EQ(block_sparsity(x, 10, 1.0), 1);
  EXPECT_THROW(block_sparsity(x, 7, 1.0), ConfigError);
}
