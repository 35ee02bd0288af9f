#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "qcs/model.hpp"
#include "qcs/solvers.hpp"

using namespace qcs;

namespace {

struct RefInstance {
  int Q = 1;
  double eps = 0.0;
  Matrix A;
  Vector y, xRef;
  double objective = 0.0;
};

std::vector<RefInstance> load_reference() {
  std::ifstream in(std::string(QCS_TEST_DATA_DIR) + "/bpdn_reference.json");
  const auto doc = nlohmann::json::parse(in);
  std::vector<RefInstance> out;
  for (const auto& j : doc.at("instances")) {
    RefInstance r;
    const int N = j.at("N"), M = j.at("M");
    r.Q = j.at("Q");
    r.eps = j.at("eps");
    r.objective = j.at("objective");
    r.A.resize(N, M);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < M; ++k) r.A(i, k) = j.at("A")[i][k].get<double>();
    r.y.resize(N);
    r.xRef.resize(M);
    for (int i = 0; i < N; ++i) r.y(i) = j.at("y")[i].get<double>();
    for (int k = 0; k < M; ++k) r.xRef(k) = j.at("x_ref")[k].get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

struct Problem {
  SensingMatrix A;
  Vector x, y;
};

Problem block_problem(std::uint64_t seed, int N, int M, int Q, int K, double noise) {
  Rng rng(seed);
  auto A = sample_sensing_matrix(N, M, rng);
  const SourceModel model(M, Q, K, 0.0, 1.0);
  Vector x = Vector::Zero(M);
  std::vector<int> blocks(M / Q);
  std::iota(blocks.begin(), blocks.end(), 0);
  std::shuffle(blocks.begin(), blocks.end(), rng);
  std::normal_distribution<double> g;
  for (int i = 0; i < K; ++i)
    for (int q = 0; q < Q; ++q) x(blocks[i] * Q + q) = g(rng);
  std::uniform_real_distribution<double> u(-noise, noise);
  Vector y = A.entries() * x;
  if (noise > 0)
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += u(rng);
  return {std::move(A), std::move(x), std::move(y)};
}

}  // namespace

TEST(GroupShrink, Examples) {
  Vector v(2);
  v << 3.0, 4.0;
  const Vector s = group_shrink(v, 1.0);
  EXPECT_NEAR(s(0), 2.4, 1e-15);
  EXPECT_NEAR(s(1), 3.2, 1e-15);
  EXPECT_EQ(group_shrink(v, 5.0).norm(), 0.0);
  EXPECT_EQ(group_shrink(v, 7.0).norm(), 0.0);
  EXPECT_EQ(group_shrink(Vector::Zero(3), 0.5).norm(), 0.0);
  EXPECT_TRUE((group_shrink(v, 0.0).array() == v.array()).all());
}

TEST(GroupShrink, IsProximalOperator) {
  // prox of tau ||.||: minimizes tau ||z|| + 0.5 ||z - v||^2; compare against perturbations.
  Rng rng(1);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    Vector v(4);
    for (int i = 0; i < 4; ++i) v(i) = g(rng);
    const double tau = std::abs(g(rng));
    const Vector z = group_shrink(v, tau);
    auto f = [&](const Vector& w) { return tau * w.norm() + 0.5 * (w - v).squaredNorm(); };
    for (int p = 0; p < 20; ++p) {
      Vector d(4);
      for (int i = 0; i < 4; ++i) d(i) = 1e-3 * g(rng);
      EXPECT_LE(f(z), f(z + d) + 1e-15);
    }
  }
}

TEST(BlockBpdn, ZeroWhenEpsilonCoversMeasurement) {
  auto p = block_problem(2, 20, 40, 4, 1, 0.0);
  BpdnOptions opt;
  opt.epsilon = p.y.norm() * 1.01;
  const auto r = solve_block_bpdn(p.A, p.y, 4, opt);
  EXPECT_EQ(r.xHat.norm(), 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(BlockBpdn, ExactRecoveryNoiseless) {
  // Single active block at M=100, FoM 0.6.
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto p = block_problem(100 + s, 60, 100, 10, 1, 0.0);
    BpdnOptions opt;
    opt.epsilon = 0.0;
    const auto r = solve_block_bpdn(p.A, p.y, 10, opt);
    EXPECT_LE((r.xHat - p.x).norm() / p.x.norm(), 1e-4);
  }
}

TEST(BlockBpdn, MatchesReferenceSolutions) {
  const auto refs = load_reference();
  ASSERT_EQ(refs.size(), 20u);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& r = refs[i];
    const SensingMatrix A = SensingMatrix::normalized(r.A);
    BpdnOptions opt;
    opt.epsilon = r.eps;
    const auto rec = solve_block_bpdn(A, r.y, r.Q, opt);
    EXPECT_LE(std::abs(rec.objective - r.objective) / r.objective, 1e-4) << "instance " << i;
    const auto cert = bpdn_certificate(A, r.y, rec.xHat, r.Q, r.eps);
    EXPECT_TRUE(cert.passes(1e-4)) << "instance " << i << " viol " << cert.maxBlockViolation << " slack "
                                   << cert.slackness;
    EXPECT_LE((rec.xHat - r.xRef).norm(), 1e-3 * std::max(1.0, r.xRef.norm())) << "instance " << i;
  }
}

TEST(BlockBpdn, FeasibleAndCertified) {
  for (std::uint64_t s = 0; s < 8; ++s) {
    auto p = block_problem(200 + s, 30, 60, 5, 2, 0.05);
    BpdnOptions opt;
    opt.epsilon = 0.05 * std::sqrt(30.0 / 3.0);
    const auto r = solve_block_bpdn(p.A, p.y, 5, opt);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.residualNorm, opt.epsilon * (1 + 1e-6));
    EXPECT_TRUE(bpdn_certificate(p.A, p.y, r.xHat, 5, opt.epsilon).passes(1e-4));
    // The generating x is feasible, so the optimum cannot be worse.
    if ((p.y - p.A.entries() * p.x).norm() <= opt.epsilon) EXPECT_LE(r.objective, block_norm_sum(p.x, 5) + 1e-8);
  }
}

TEST(BlockBpdn, BlockPermutationEquivariance) {
  auto p = block_problem(300, 24, 48, 4, 2, 0.02);
  BpdnOptions opt;
  opt.epsilon = 0.05;
  const auto r = solve_block_bpdn(p.A, p.y, 4, opt);
  const int R = 12;
  std::vector<int> perm(R);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[0], perm[5]);
  const SensingMatrix Ap(block_columns(p.A.entries(), perm, 4));
  const auto rp = solve_block_bpdn(Ap, p.y, 4, opt);
  EXPECT_NEAR(rp.objective, r.objective, 1e-6 * r.objective);
  for (int i = 0; i < R; ++i)
    EXPECT_LE((rp.xHat.segment(i * 4, 4) - r.xHat.segment(perm[i] * 4, 4)).norm(), 1e-4);
}

TEST(BlockBpdn, RejectsBadInput) {
  auto p = block_problem(4, 10, 20, 4, 1, 0.0);
  BpdnOptions opt;
  opt.epsilon = -1.0;
  EXPECT_THROW(solve_block_bpdn(p.A, p.y, 4, opt), ConfigError);
  opt.epsilon = 0.1;
  EXPECT_THROW(solve_block_bpdn(p.A, p.y, 3, opt), ConfigError);
  EXPECT_THROW(solve_block_bpdn(p.A, Vector::Zero(9), 4, opt), ConfigError);
}

TEST(Certificate, RejectsSuboptimalPoint) {
  auto p = block_problem(5, 20, 40, 4, 1, 0.0);
  BpdnOptions opt;
  opt.epsilon = 0.1;
  const auto r = solve_block_bpdn(p.A, p.y, 4, opt);
  Vector x = r.xHat;
  x.segment(0, 4).array() += 0.3;
  EXPECT_FALSE(bpdn_certificate(p.A, p.y, x, 4, opt.epsilon).passes(1e-4));
}

TEST(OracleLs, ExactOnTrueSupport) {
  auto p = block_problem(6, 30, 60, 6, 2, 0.0);
  const auto supp = true_support(p.x, 6, 2);
  const auto r = oracle_ls(p.A, p.y, supp, 6);
  EXPECT_LE((r.xHat - p.x).norm(), 1e-10 * p.x.norm());
  EXPECT_LE(r.residualNorm, 1e-10);
}

TEST(OracleLs, ResidualOrthogonalAndErrorBounded) {
  auto p = block_problem(7, 30, 60, 6, 2, 0.1);
  const auto supp = true_support(p.x, 6, 2);
  const auto r = oracle_ls(p.A, p.y, supp, 6);
  const Matrix AS = block_columns(p.A.entries(), supp, 6);
  const Vector res = p.y - p.A.entries() * r.xHat;
  EXPECT_LE((AS.transpose() * res).norm(), 1e-10);
  // ||x_hat - x|| <= ||n|| / s_min(A_S).
  const Vector n = p.y - p.A.entries() * p.x;
  Eigen::JacobiSVD<Matrix> svd(AS);
  EXPECT_LE((r.xHat - p.x).norm(), n.norm() / svd.singularValues().minCoeff() + 1e-12);
  for (int b = 0; b < 10; ++b)
    if (std::find(supp.begin(), supp.end(), b) == supp.end()) EXPECT_EQ(r.xHat.segment(b * 6, 6).norm(), 0.0);
}

TEST(OracleLs, RankDeficiency) {
  Rng rng(8);
  Matrix a = sample_sensing_matrix(10, 20, rng).entries();
  a.col(1) = a.col(0);
  const SensingMatrix A(a);
  EXPECT_THROW(oracle_ls(A, Vector::Ones(10), {0}, 4), RankDeficient);
  EXPECT_THROW(oracle_ls(A, Vector::Ones(10), {1, 2, 3}, 4), RankDeficient);  // 12 columns > 10 rows
  EXPECT_NO_THROW(oracle_ls(A, Vector::Ones(10), {1}, 4));
  const auto empty = oracle_ls(A, Vector::Ones(10), {}, 4);
  EXPECT_EQ(empty.xHat.norm(), 0.0);
}

TEST(Support, TrueSupportTieBreakAndOrder) {
  Vector x = Vector::Zero(12);
  x.segment(3, 3).setConstant(1.0);
  x.segment(6, 3).setConstant(1.0);
  x.segment(9, 3).setConstant(-2.0);
  EXPECT_EQ(true_support(x, 3, 1), std::vector<int>{3});
  EXPECT_EQ(true_support(x, 3, 2), (std::vector<int>{1, 3}));
  EXPECT_EQ(true_support(Vector::Zero(6), 3, 1), std::vector<int>{0});
  EXPECT_EQ(threshold_support(x, 3, 1.5), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(threshold_support(x, 3, 2.0), std::vector<int>{3});
}
