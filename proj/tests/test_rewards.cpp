#include <affgr/rewards.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace affgr;

namespace {

GroundTruthTarget single_target(Box2D b, Point2D p, int w = 640, int h = 480) {
  return {{b}, {{p}}, "grasp", "handle", w, h};
}

PredictionSet single_pred(Box2D b, Point2D p) { return {{b}, {{p}}}; }

std::string rollout(const std::string& think, const std::string& answer) {
  return "<think>" + think + "</think><answer>" + answer + "</answer>";
}

}  // namespace

TEST(BoxIou, Examples) {
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  EXPECT_DOUBLE_EQ(box_iou({1, 1, 10, 10}, {0, 0, 10, 10}), 0.81);
  // touching edges share no area
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
}

TEST(BoxIou, SymmetricAndBounded) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5000; ++i) {
    const auto a = oracle::random_box(rng), b = oracle::random_box(rng);
    const double x = box_iou(a, b);
    ASSERT_EQ(x, box_iou(b, a));
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
  }
}

TEST(Matching, SinglePairForced) {
  const auto m = match_boxes(std::vector<Box2D>{{0, 0, 5, 5}}, std::vector<Box2D>{{1, 1, 6, 6}});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].pred, 0u);
  EXPECT_EQ(m[0].gt, 0u);
}

TEST(Matching, CrossingFreeAssignment) {
  const std::vector<Box2D> gt = {{0, 0, 10, 10}, {100, 100, 120, 120}};
  const std::vector<Box2D> pred = {{101, 101, 119, 119}, {1, 1, 9, 9}};
  const auto m = match_boxes(pred, gt);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].gt, 0u);
  EXPECT_EQ(m[0].pred, 1u);
  EXPECT_EQ(m[1].gt, 1u);
  EXPECT_EQ(m[1].pred, 0u);
}

TEST(Matching, OptimalBeatsGreedyOnConstructedCase) {
  // Greedy takes the 8/12 pair and strands the second prediction.
  const std::vector<Box2D> gt = {{0, 0, 10, 10}, {5, 0, 15, 10}};
  const std::vector<Box2D> pred = {{2, 0, 12, 10}, {-5, 0, 5, 10}};
  const auto opt = match_boxes(pred, gt, MatchingStrategy::Optimal);
  const auto greedy = match_boxes(pred, gt, MatchingStrategy::Greedy);
  EXPECT_NEAR(total_iou(greedy), 8.0 / 12.0, 1e-12);
  EXPECT_NEAR(total_iou(opt), 7.0 / 13.0 + 5.0 / 15.0, 1e-12);
  EXPECT_EQ(opt.size(), 2u);
}

TEST(Matching, ZeroIouNeverMatched) {
  const auto m = match_boxes(std::vector<Box2D>{{0, 0, 1, 1}}, std::vector<Box2D>{{5, 5, 6, 6}});
  EXPECT_TRUE(m.empty());
}

TEST(Matching, ExhaustiveOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> count(1, 6);
  for (int trial = 0; trial < 1500; ++trial) {
    std::vector<Box2D> pred, gt;
    const int n = count(rng), k = count(rng);
    for (int i = 0; i < n; ++i) gt.push_back(oracle::random_box(rng));
    for (int i = 0; i < k; ++i) pred.push_back(oracle::random_box(rng));
    const auto expect = oracle::best_injection(pred, gt);
    const auto got = match_boxes(pred, gt);
    ASSERT_NEAR(total_iou(got), expect.total, 1e-12);
    std::vector<int> pred_of_gt(gt.size(), -1);
    for (const auto& m : got) pred_of_gt[m.gt] = static_cast<int>(m.pred);
    ASSERT_EQ(pred_of_gt, expect.pred_of_gt);
    ASSERT_GE(total_iou(got) + 1e-12, total_iou(match_boxes(pred, gt, MatchingStrategy::Greedy)));
  }
}

TEST(Matching, HungarianAgreesWithDpOnTotals) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> count(1, 9);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Box2D> pred, gt;
    const int n = count(rng), k = count(rng);
    for (int i = 0; i < n; ++i) gt.push_back(oracle::random_box(rng));
    for (int i = 0; i < k; ++i) pred.push_back(oracle::random_box(rng));
    const auto m = detail::iou_matrix(pred, gt);
    ASSERT_NEAR(total_iou(detail::match_optimal_dp(m, pred.size())),
                total_iou(detail::match_optimal_hungarian(m, pred.size())), 1e-9);
  }
}

TEST(Matching, LargeSetsUseHungarian) {
  std::vector<Box2D> pred, gt;
  for (int i = 0; i < 15; ++i) {
    gt.push_back({i * 20.0, 0, i * 20.0 + 10, 10});
    pred.push_back({(14 - i) * 20.0 + 1, 1, (14 - i) * 20.0 + 11, 11});
  }
  const auto m = match_boxes(pred, gt);
  ASSERT_EQ(m.size(), 15u);
  for (const auto& x : m) EXPECT_EQ(x.pred, 14 - x.gt);
}

TEST(Accuracy, ExactSingleBox) {
  const auto gt = single_target({10, 20, 110, 220}, {60, 120});
  const auto acc = accuracy_reward(single_pred({10, 20, 110, 220}, {60, 120}), gt, RewardConfig{});
  EXPECT_EQ(acc.iou, 1.0);
  EXPECT_EQ(acc.box_l1, 1.0);
  EXPECT_EQ(acc.keypoint, 1.0);
}

TEST(Accuracy, FarDisjointBox) {
  const auto gt = single_target({10, 20, 110, 220}, {60, 120});
  const auto acc = accuracy_reward(single_pred({300, 300, 400, 400}, {350, 350}), gt, RewardConfig{});
  EXPECT_EQ(acc.iou, 0.0);
  EXPECT_EQ(acc.box_l1, 0.0);
  EXPECT_EQ(acc.keypoint, 0.0);
}

TEST(Accuracy, TwoBoxHandExample) {
  const GroundTruthTarget gt{{{0, 0, 10, 10}, {100, 100, 120, 120}}, {{{5, 5}}, {{110, 110}}}, "grasp", "whole",
                             640, 480};
  const PredictionSet pred{{{1, 1, 10, 10}, {100, 100, 118, 118}}, {{{5, 5}}, {{110, 110}}}};
  EXPECT_DOUBLE_EQ(box_l1(pred.boxes[0], gt.boxes[0]), 2.0);
  EXPECT_DOUBLE_EQ(box_l1(pred.boxes[1], gt.boxes[1]), 4.0);
  const auto acc = accuracy_reward(pred, gt, RewardConfig{});
  EXPECT_EQ(acc.iou, 1.0);
  EXPECT_EQ(acc.box_l1, 1.0);
  EXPECT_EQ(acc.keypoint, 1.0);
}

TEST(Accuracy, IncrementsUseLargerCount) {
  // K = 1 prediction against N = 2 targets: one satisfied pair is worth 1/2.
  const GroundTruthTarget gt{{{0, 0, 10, 10}, {100, 100, 120, 120}}, {{{5, 5}}, {{110, 110}}}, "grasp", "whole",
                             640, 480};
  const auto acc = accuracy_reward(single_pred({0, 0, 10, 10}, {5, 5}), gt, RewardConfig{});
  EXPECT_EQ(acc.iou, 0.5);
  EXPECT_EQ(acc.box_l1, 0.5);
  EXPECT_EQ(acc.keypoint, 0.5);
}

TEST(Accuracy, KeypointFractionPerPair) {
  GroundTruthTarget gt = single_target({0, 0, 100, 100}, {10, 10});
  gt.keypoint_sets[0].push_back({50, 50});
  const PredictionSet pred{{{0, 0, 100, 100}}, {{{10, 10}, {90, 90}}}};
  EXPECT_EQ(accuracy_reward(pred, gt, RewardConfig{}).keypoint, 0.5);
}

TEST(Accuracy, ThresholdsAreStrict) {
  const RewardConfig cfg;
  const auto gt = single_target({0, 0, 100, 100}, {50, 50});
  // box L1 exactly 10 and keypoint L1 exactly 30 do not count
  const auto at = accuracy_reward(single_pred({0, 0, 100, 90}, {80, 50}), gt, cfg);
  EXPECT_EQ(at.box_l1, 0.0);
  EXPECT_EQ(at.keypoint, 0.0);
  // IoU exactly 0.5 does not count
  const auto half = accuracy_reward(single_pred({0, 0, 100, 50}, {50, 50}), gt, cfg);
  EXPECT_EQ(box_iou({0, 0, 100, 50}, {0, 0, 100, 100}), 0.5);
  EXPECT_EQ(half.iou, 0.0);
}

TEST(Accuracy, PredictionOrderDoesNotMatter) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 300; ++trial) {
    GroundTruthTarget gt{{}, {}, "grasp", "whole", 200, 200};
    PredictionSet pred;
    for (int i = 0; i < 3; ++i) {
      const auto b = oracle::random_box(rng);
      gt.boxes.push_back(b);
      gt.keypoint_sets.push_back({{b.x1 + 1, b.y1 + 1}});
    }
    for (int i = 0; i < 4; ++i) {
      const auto b = oracle::random_box(rng);
      pred.boxes.push_back(b);
      pred.keypoint_sets.push_back({{b.x1 + 2, b.y1 + 2}});
    }
    const auto base = accuracy_reward(pred, gt, RewardConfig{});
    PredictionSet rev{{pred.boxes.rbegin(), pred.boxes.rend()},
                      {pred.keypoint_sets.rbegin(), pred.keypoint_sets.rend()}};
    const auto flipped = accuracy_reward(rev, gt, RewardConfig{});
    ASSERT_EQ(base.iou, flipped.iou);
    ASSERT_EQ(base.box_l1, flipped.box_l1);
    ASSERT_EQ(base.keypoint, flipped.keypoint);
  }
}

TEST(NonRepeat, Examples) {
  EXPECT_EQ(non_repeat_reward("The mug has a handle."), 1.0);
  EXPECT_EQ(non_repeat_reward("One. Two! Three? one"), 0.75);
  EXPECT_EQ(non_repeat_reward(""), 0.0);
  EXPECT_EQ(non_repeat_reward("  \n "), 0.0);
}

TEST(NonRepeat, NormalizationFoldsCaseSpaceAndPunctuation) {
  EXPECT_EQ(non_repeat_reward("Grip  the handle.\ngrip the HANDLE!"), 0.5);
  EXPECT_EQ(non_repeat_reward("Grip, the handle. grip the handle"), 0.5);
}

TEST(NonRepeat, NearDuplicatesOnlyWhenEnabled) {
  const std::string text = "the red mug has a long curved handle on the left. "
                           "the red mug has a long curved handle on the right.";
  EXPECT_EQ(non_repeat_reward(text), 1.0);
  RewardConfig cfg;
  cfg.near_duplicate = true;
  cfg.near_duplicate_jaccard = 0.6;
  EXPECT_EQ(non_repeat_reward(text, cfg), 0.5);
}

TEST(ScoreRollout, FullyCorrect) {
  const auto gt = single_target({10, 20, 110, 220}, {60, 120});
  const RawRollout raw{rollout("Locate the mug. The handle is on the right.",
                               "{bbox:[10,20,110,220], point:[60,120], aff_methods: grasp, aff_parts: handle (whole)}"),
                       640, 480};
  const auto r = score_rollout(raw, gt, RewardConfig{});
  EXPECT_EQ(r.think_format, 1);
  EXPECT_EQ(r.answer_format, 1);
  EXPECT_EQ(r.non_repeat, 1.0);
  EXPECT_EQ(r.acc_iou, 1.0);
  EXPECT_EQ(r.acc_box_l1, 1.0);
  EXPECT_EQ(r.acc_keypoint, 1.0);
  EXPECT_EQ(r.total, 5.0);
  EXPECT_FALSE(r.format_error);
}

TEST(ScoreRollout, MissingAnswerCloseScoresZero) {
  const auto gt = single_target({10, 20, 110, 220}, {60, 120});
  const auto r = score_rollout({"<think>A.</think><answer>{bbox:[10,20,110,220]", 640, 480}, gt, RewardConfig{});
  EXPECT_EQ(r.think_format, 0);
  EXPECT_EQ(r.total, 0.0);
  EXPECT_EQ(r.format_error, ErrorCode::MalformedTags);
}

TEST(ScoreRollout, DisjointBoxKeepsFormatAndNonRepeat) {
  const auto gt = single_target({10, 20, 110, 220}, {60, 120});
  const RawRollout raw{rollout("Look left. Look left.",
                               "{bbox:[300,300,400,400], point:[350,350], aff_methods: grasp, aff_parts: handle}"),
                       640, 480};
  const auto r = score_rollout(raw, gt, RewardConfig{});
  EXPECT_EQ(r.non_repeat, 0.5);
  EXPECT_EQ(r.total, 1.0 + 0.5);
}

TEST(ScoreRollout, BadAnswerGatesAccuracy) {
  const auto gt = single_target({10, 20, 110, 220}, {60, 120});
  const RawRollout raw{rollout("Fine.", "{bbox:[10,20,110,220], point:[60,120], aff_methods: grasp}"), 640, 480};
  const auto r = score_rollout(raw, gt, RewardConfig{});
  EXPECT_EQ(r.think_format, 1);
  EXPECT_EQ(r.answer_format, 0);
  EXPECT_EQ(r.acc_iou + r.acc_box_l1 + r.acc_keypoint, 0.0);
  EXPECT_EQ(r.format_error, ErrorCode::MissingKey);
  EXPECT_EQ(r.total, 0.5 + 1.0);
}

TEST(ScoreRollout, WeightsApply) {
  const auto gt = single_target({10, 20, 110, 220}, {60, 120});
  const RawRollout raw{rollout("A.", "{bbox:[10,20,110,220], point:[60,120], aff_methods: grasp, aff_parts: x}"),
                       640, 480};
  RewardConfig cfg;
  cfg.w_fmt = 2.0;
  cfg.w_rep = 0.0;
  cfg.w_acc = 0.5;
  EXPECT_EQ(score_rollout(raw, gt, cfg).total, 2.0 + 1.5);
}

TEST(ScoreRollout, SubRewardsBoundedOnRandomText) {
  std::mt19937_64 rng(31);
  const auto gt = single_target({10, 20, 110, 220}, {60, 120});
  std::uniform_int_distribution<int> v(0, 640);
  for (int i = 0; i < 2000; ++i) {
    int x1 = v(rng), x2 = v(rng), y1 = v(rng) % 480, y2 = v(rng) % 480;
    const auto text = rollout("Step. Step. Other step.",
                              "{bbox:[" + std::to_string(x1) + "," + std::to_string(y1) + "," +
                                  std::to_string(x2) + "," + std::to_string(y2) + "], point:[" +
                                  std::to_string(x1) + "," + std::to_string(y1) +
                                  "], aff_methods: grasp, aff_parts: handle}");
    const auto r = score_rollout({text, 640, 480}, gt, RewardConfig{});
    for (double c : {r.non_repeat, r.acc_iou, r.acc_box_l1, r.acc_keypoint}) {
      ASSERT_GE(c, 0.0);
      ASSERT_LE(c, 1.0);
    }
    ASSERT_EQ(r.total, (r.think_format + r.answer_format) / 2.0 + r.non_repeat +
                           (r.acc_iou + r.acc_box_l1 + r.acc_keypoint));
  }
}
