#include <affgr/grpo.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace affgr;

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double pop_var(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

std::vector<RolloutRecord> group_of(const std::vector<double>& rewards, const std::vector<double>& cur,
                                    const std::vector<double>& old, const std::vector<double>& ref) {
  std::vector<RolloutRecord> g;
  for (std::size_t i = 0; i < rewards.size(); ++i)
    g.push_back({"q", "r" + std::to_string(i), rewards[i], cur[i], old[i], ref[i]});
  return g;
}

}  // namespace

TEST(Advantages, HandExamples) {
  const std::vector<double> r1 = {3.0, 1.0, 2.0, 2.0};
  const auto a = group_advantages(r1);
  EXPECT_NEAR(a[0], std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(a[1], -std::sqrt(2.0), 1e-12);
  EXPECT_EQ(a[2], 0.0);
  EXPECT_EQ(a[3], 0.0);

  const std::vector<double> r2 = {1, 0, 1, 0};
  const auto b = group_advantages(r2);
  const std::vector<double> expect = {1, -1, 1, -1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(b[i], expect[i], 1e-15);
}

TEST(Advantages, AllEqualIsZero) {
  for (double c : {0.0, 1.0, -3.5, 1e300}) {
    const std::vector<double> r(8, c);
    for (double x : group_advantages(r)) EXPECT_EQ(x, 0.0);
  }
}

TEST(Advantages, EmptyGroupThrows) {
  try {
    group_advantages(std::vector<double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGroup);
  }
}

TEST(Advantages, StandardizedAndShiftInvariant) {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> size(2, 16);
  std::uniform_real_distribution<double> reward(0.0, 5.0), shift(-100.0, 100.0), scale(0.01, 100.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> r(static_cast<std::size_t>(size(rng)));
    for (auto& x : r) x = reward(rng);
    const auto a = group_advantages(r);
    ASSERT_LT(std::abs(mean_of(a)), 1e-9);
    ASSERT_LT(std::abs(pop_var(a) - 1.0), 1e-6);
    const double c = shift(rng), lam = scale(rng);
    std::vector<double> shifted = r, scaled = r;
    for (auto& x : shifted) x += c;
    for (auto& x : scaled) x *= lam;
    const auto as = group_advantages(shifted), al = group_advantages(scaled);
    // rounding x + c costs about ulp(|c|) per reward, amplified by 1 / std
    const double shift_tol = std::max(1e-12, 8.0 * std::numeric_limits<double>::epsilon() * (std::abs(c) + 5.0) /
                                                 std::sqrt(pop_var(r)));
    for (std::size_t i = 0; i < r.size(); ++i) {
      ASSERT_NEAR(as[i], a[i], shift_tol);
      ASSERT_NEAR(al[i], a[i], 1e-12);
    }
  }
}

TEST(Kl, Examples) {
  EXPECT_EQ(kl_penalty(-3.0, -3.0), 0.0);
  EXPECT_NEAR(kl_penalty(0.0, std::log(2.0)), 2.0 - std::log(2.0) - 1.0, 1e-15);
  EXPECT_NEAR(kl_penalty(std::log(2.0), 0.0), 0.5 - std::log(0.5) - 1.0, 1e-15);
}

TEST(Kl, NonNegativeOnRandomPairs) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> lp(-50.0, 0.0);
  for (int i = 0; i < 100000; ++i) {
    const double a = lp(rng), b = lp(rng);
    ASSERT_GE(kl_penalty(a, b), 0.0);
    ASSERT_EQ(kl_penalty(a, a), 0.0);
  }
}

TEST(Kl, OverflowReported) {
  try {
    kl_penalty(-1000.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Overflow);
  }
  // large negative deltas are fine
  EXPECT_GT(kl_penalty(0.0, -1000.0), 998.0);
}

TEST(Clip, Examples) {
  GrpoConfig cfg;
  cfg.epsilon = 0.2;
  EXPECT_EQ(clipped_term(1.0, 0.7, cfg), 0.7);
  EXPECT_NEAR(clipped_term(1.3, 1.0, cfg), 1.2, 1e-15);
  EXPECT_NEAR(clipped_term(0.5, -1.0, cfg), -0.8, 1e-15);
  // outside the band on the pessimistic side the unclipped term wins
  EXPECT_NEAR(clipped_term(0.5, 1.0, cfg), 0.5, 1e-15);
  EXPECT_NEAR(clipped_term(1.5, -1.0, cfg), -1.5, 1e-15);
}

TEST(Clip, BandProperty) {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> lr(-3.0, 3.0), eps(0.01, 0.99), adv(-3.0, 3.0);
  for (int i = 0; i < 100000; ++i) {
    const double s1 = std::exp(lr(rng)), e = eps(rng), a = adv(rng);
    const double s2 = clip_ratio(s1, e);
    ASSERT_LE(std::abs(s2 - 1.0), e + 1e-15);
    GrpoConfig cfg;
    cfg.epsilon = e;
    ASSERT_EQ(clipped_term(s1, a, cfg), std::min(s1 * a, s2 * a));
  }
}

TEST(Objective, AllEqualLogprobsGiveZero) {
  const auto g = group_of({1, 2, 3, 5}, {-1, -1, -1, -1}, {-1, -1, -1, -1}, {-1, -1, -1, -1});
  const auto res = grpo_objective(g);
  EXPECT_NEAR(res.objective, 0.0, 1e-15);
  for (const auto& d : res.rollouts) {
    EXPECT_EQ(d.s1, 1.0);
    EXPECT_EQ(d.kl, 0.0);
  }
}

TEST(Objective, HandBuiltTwoRolloutGroup) {
  GrpoConfig cfg;
  cfg.beta = 0.0;
  const auto g = group_of({1, 0}, {std::log(1.1), std::log(0.9)}, {0, 0}, {0, 0});
  const auto res = grpo_objective(g, cfg);
  EXPECT_NEAR(res.objective, 0.1, 1e-12);
  EXPECT_NEAR(res.rollouts[0].s1, 1.1, 1e-12);
  EXPECT_NEAR(res.rollouts[1].s1, 0.9, 1e-12);
  EXPECT_EQ(res.rollouts[0].advantage, 1.0);
  EXPECT_EQ(res.rollouts[1].advantage, -1.0);
}

TEST(Objective, MonotoneInBeta) {
  const auto g = group_of({1, 0, 2}, {-1, -2, -3}, {-1.1, -2, -2.9}, {-0.5, -2.5, -3.5});
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {0.0, 0.01, 0.1, 1.0, 10.0}) {
    GrpoConfig cfg;
    cfg.beta = beta;
    const double obj = grpo_objective(g, cfg).objective;
    EXPECT_LT(obj, prev);
    prev = obj;
  }
}

TEST(Objective, PermutationInvariant) {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> r(0, 5), lp(-5, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RolloutRecord> g;
    for (int i = 0; i < 8; ++i) g.push_back({"q", std::to_string(i), r(rng), lp(rng), lp(rng), lp(rng)});
    const double base = grpo_objective(g).objective;
    std::shuffle(g.begin(), g.end(), rng);
    ASSERT_NEAR(grpo_objective(g).objective, base, 1e-12);
  }
}

TEST(Objective, GroupErrors) {
  try {
    grpo_objective(std::vector<RolloutRecord>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGroup);
  }
  std::vector<RolloutRecord> g = {{"a", "0", 1, 0, 0, 0}, {"b", "1", 0, 0, 0, 0}};
  try {
    grpo_objective(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MismatchedGroup);
  }
}

TEST(Sft, Examples) {
  EXPECT_EQ(sft_nll({{0, 0}, {0}}), 0.0);
  EXPECT_NEAR(sft_nll({{-0.1, -0.2, -0.3}, {-0.4}}), 1.0, 1e-15);
  const double h = std::log(0.5);
  EXPECT_NEAR(sft_nll({{h, h}, {h, h}}), 4.0 * std::log(2.0), 1e-15);
}

TEST(Sft, AdditiveOverConcatenation) {
  const TokenSequenceLikelihood a{{-0.5, -1.25}, {-0.125}}, b{{-2.0}, {-0.25, -0.75}};
  TokenSequenceLikelihood ab = a;
  ab.reasoning_logprobs.insert(ab.reasoning_logprobs.end(), b.reasoning_logprobs.begin(), b.reasoning_logprobs.end());
  ab.answer_logprobs.insert(ab.answer_logprobs.end(), b.answer_logprobs.begin(), b.answer_logprobs.end());
  EXPECT_EQ(sft_nll(ab), sft_nll(a) + sft_nll(b));
}

TEST(Sft, PositiveLogProbRejected) {
  try {
    sft_nll({{-0.1, 0.2}, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PositiveLogProb);
  }
}

TEST(LowRank, ScalarExample) {
  LowRankAdapter a{Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::MatrixXd::Constant(1, 1, 1.0),
                   Eigen::MatrixXd::Constant(1, 1, 3.0)};
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
  EXPECT_EQ(lowrank_apply(a, x)(0), 5.0);
}

TEST(LowRank, ZeroUpIsBaseMap) {
  std::srand(3);
  LowRankAdapter a{Eigen::MatrixXd::Random(6, 4), Eigen::MatrixXd::Zero(6, 2), Eigen::MatrixXd::Random(4, 2)};
  const Eigen::VectorXd x = Eigen::VectorXd::Random(4);
  EXPECT_EQ((lowrank_apply(a, x) - a.base * x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LowRank, MatchesDenseMaterialization) {
  std::srand(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 3 + trial % 7, k = 2 + trial % 5, r = 1 + trial % 2;
    LowRankAdapter a{Eigen::MatrixXd::Random(d, k), Eigen::MatrixXd::Random(d, r), Eigen::MatrixXd::Random(k, r)};
    const Eigen::VectorXd x = Eigen::VectorXd::Random(k);
    const Eigen::MatrixXd dense = a.base + a.up * a.down.transpose();
    ASSERT_LT((lowrank_apply(a, x) - dense * x).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::MatrixXd xs = Eigen::MatrixXd::Random(k, 3);
    ASSERT_LT((lowrank_apply(a, xs) - dense * xs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(LowRank, DimensionMismatch) {
  LowRankAdapter a{Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(3, 1)};
  try {
    lowrank_apply(a, Eigen::VectorXd::Zero(2).eval());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}
