#pragma once

// Verifiable reward suite: thinking/answer format checks, sentence-level
// repetition penalty, and one-to-one box matching accuracy.

#include <affgr/error.hpp>
#include <affgr/schema.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace affgr {

struct GroundTruthTarget {
  std::vector<Box2D> boxes;
  std::vector<std::vector<Point2D>> keypoint_sets;  // parallel to boxes
  std::string aff_method;
  std::string aff_part;
  int image_width = 0;
  int image_height = 0;
};

struct PredictionSet {
  std::vector<Box2D> boxes;
  std::vector<std::vector<Point2D>> keypoint_sets;  // parallel to boxes
};

enum class MatchingStrategy { Optimal, Greedy };

struct RewardConfig {
  double iou_threshold = 0.5;
  double box_l1_threshold_px = 10.0;
  double keypoint_l1_threshold_px = 30.0;
  double w_fmt = 1.0;
  double w_rep = 1.0;
  double w_acc = 1.0;
  MatchingStrategy matching = MatchingStrategy::Optimal;
  // Off by default: only exact (normalized) sentence repeats are penalized.
  bool near_duplicate = false;
  int near_duplicate_ngram = 3;
  double near_duplicate_jaccard = 0.8;
};

struct BoxMatch {
  std::size_t pred = 0;
  std::size_t gt = 0;
  double iou = 0.0;

  friend bool operator==(const BoxMatch&, const BoxMatch&) = default;
};

struct AccuracyReward {
  double iou = 0.0;
  double box_l1 = 0.0;
  double keypoint = 0.0;
};

struct RewardBreakdown {
  int think_format = 0;
  int answer_format = 0;
  double non_repeat = 0.0;
  double acc_iou = 0.0;
  double acc_box_l1 = 0.0;
  double acc_keypoint = 0.0;
  double total = 0.0;
  std::vector<BoxMatch> matching;
  std::optional<ErrorCode> format_error;
};

inline double box_iou(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Sum of absolute corner deltas over (x_min, y_min, x_max, y_max).
inline double box_l1(const Box2D& a, const Box2D& b) {
  return std::abs(a.x1 - b.x1) + std::abs(a.y1 - b.y1) + std::abs(a.x2 - b.x2) +
         std::abs(a.y2 - b.y2);
}

inline double keypoint_l1(const Point2D& a, const Point2D& b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

/// The answer's keypoints all belong to its first box; further boxes carry none.
inline PredictionSet prediction_from_answer(const StructuredAnswer& ans) {
  PredictionSet p;
  p.boxes = ans.boxes;
  p.keypoint_sets.assign(ans.boxes.size(), {});
  if (!p.keypoint_sets.empty()) p.keypoint_sets.front() = ans.keypoints;
  return p;
}

namespace detail {

using IouMatrix = std::vector<std::vector<double>>;  // [gt][pred]

inline IouMatrix iou_matrix(const std::vector<Box2D>& pred, const std::vector<Box2D>& gt) {
  IouMatrix m(gt.size(), std::vector<double>(pred.size(), 0.0));
  for (std::size_t g = 0; g < gt.size(); ++g)
    for (std::size_t p = 0; p < pred.size(); ++p) m[g][p] = box_iou(pred[p], gt[g]);
  return m;
}

constexpr double kTieTolerance = 1e-12;
constexpr std::size_t kMaxDpPreds = 12;

// Exact search over gt in index order with a bitmask of used predictions.
// Among equal totals, earlier gts prefer being matched, then lower pred index.
inline std::vector<BoxMatch> match_optimal_dp(const IouMatrix& m, std::size_t num_pred) {
  const std::size_t n = m.size();
  const std::size_t states = std::size_t{1} << num_pred;
  std::vector<double> best((n + 1) * states, 0.0);
  auto at = [&](std::size_t i, std::size_t mask) -> double& { return best[i * states + mask]; };

  auto choose = [&](std::size_t i, std::size_t mask) {
    double value = -1.0;
    std::optional<std::size_t> pick;
    for (std::size_t p = 0; p < num_pred; ++p) {
      if ((mask >> p) & 1U || m[i][p] <= 0.0) continue;
      const double v = m[i][p] + at(i + 1, mask | (std::size_t{1} << p));
      if (v > value + kTieTolerance) {
        value = v;
        pick = p;
      }
    }
    const double skip = at(i + 1, mask);
    if (skip > value + kTieTolerance) {
      value = skip;
      pick.reset();
    }
    return std::pair{value, pick};
  };

  for (std::size_t i = n; i-- > 0;)
    for (std::size_t mask = 0; mask < states; ++mask) at(i, mask) = choose(i, mask).first;

  std::vector<BoxMatch> out;
  std::size_t mask = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto [value, pick] = choose(i, mask);
    if (pick) {
      out.push_back({*pick, i, m[i][*pick]});
      mask |= std::size_t{1} << *pick;
    }
  }
  return out;
}

// Kuhn-Munkres with potentials, minimizing cost over rows <= cols.
inline std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t rows = cost.size();
  const std::size_t cols = rows ? cost[0].size() : 0;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<std::size_t> p(cols + 1, 0), way(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> row_to_col(rows, 0);
  for (std::size_t j = 1; j <= cols; ++j)
    if (p[j]) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

inline std::vector<BoxMatch> match_optimal_hungarian(const IouMatrix& m, std::size_t num_pred) {
  const std::size_t n = m.size();
  std::vector<BoxMatch> out;
  if (n <= num_pred) {
    std::vector<std::vector<double>> cost(n, std::vector<double>(num_pred));
    for (std::size_t g = 0; g < n; ++g)
      for (std::size_t p = 0; p < num_pred; ++p) cost[g][p] = -m[g][p];
    const auto assign = hungarian(cost);
    for (std::size_t g = 0; g < n; ++g)
      if (m[g][assign[g]] > 0.0) out.push_back({assign[g], g, m[g][assign[g]]});
  } else {
    std::vector<std::vector<double>> cost(num_pred, std::vector<double>(n));
    for (std::size_t p = 0; p < num_pred; ++p)
      for (std::size_t g = 0; g < n; ++g) cost[p][g] = -m[g][p];
    const auto assign = hungarian(cost);
    for (std::size_t p = 0; p < num_pred; ++p)
      if (m[assign[p]][p] > 0.0) out.push_back({p, assign[p], m[assign[p]][p]});
  }
  std::sort(out.begin(), out.end(),
            [](const BoxMatch& a, const BoxMatch& b) { return a.gt < b.gt; });
  return out;
}

inline std::vector<BoxMatch> match_greedy(const IouMatrix& m, std::size_t num_pred) {
  std::vector<BoxMatch> pairs;
  for (std::size_t g = 0; g < m.size(); ++g)
    for (std::size_t p = 0; p < num_pred; ++p)
      if (m[g][p] > 0.0) pairs.push_back({p, g, m[g][p]});
  std::stable_sort(pairs.begin(), pairs.end(), [](const BoxMatch& a, const BoxMatch& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.gt != b.gt) return a.gt < b.gt;
    return a.pred < b.pred;
  });
  std::vector<char> gt_used(m.size(), 0), pred_used(num_pred, 0);
  std::vector<BoxMatch> out;
  for (const auto& pr : pairs) {
    if (gt_used[pr.gt] || pred_used[pr.pred]) continue;
    gt_used[pr.gt] = pred_used[pr.pred] = 1;
    out.push_back(pr);
  }
  std::sort(out.begin(), out.end(),
            [](const BoxMatch& a, const BoxMatch& b) { return a.gt < b.gt; });
  return out;
}

}  // namespace detail

/// One-to-one assignment of predicted to ground-truth boxes by IoU. Pairs
/// with zero IoU are never matched. Result is ordered by gt index.
inline std::vector<BoxMatch> match_boxes(const std::vector<Box2D>& pred,
                                         const std::vector<Box2D>& gt,
                                         MatchingStrategy strategy = MatchingStrategy::Optimal) {
  const auto m = detail::iou_matrix(pred, gt);
  if (pred.empty() || gt.empty()) return {};
  if (strategy == MatchingStrategy::Greedy) return detail::match_greedy(m, pred.size());
  if (pred.size() <= detail::kMaxDpPreds) return detail::match_optimal_dp(m, pred.size());
  return detail::match_optimal_hungarian(m, pred.size());
}

inline std::vector<BoxMatch> match_boxes(const PredictionSet& pred, const GroundTruthTarget& gt,
                                         const RewardConfig& cfg) {
  return match_boxes(pred.boxes, gt.boxes, cfg.matching);
}

inline double total_iou(const std::vector<BoxMatch>& matches) {
  double s = 0.0;
  for (const auto& m : matches) s += m.iou;
  return s;
}

/// Each satisfied criterion on a matched pair adds 1/max(N,K).
inline AccuracyReward accuracy_reward(const PredictionSet& pred, const GroundTruthTarget& gt,
                                      const std::vector<BoxMatch>& matches,
                                      const RewardConfig& cfg) {
  AccuracyReward r;
  const std::size_t denom = std::max(pred.boxes.size(), gt.boxes.size());
  if (denom == 0) return r;
  std::size_t iou_hits = 0, l1_hits = 0;
  double keypoint_credit = 0.0;
  for (const auto& m : matches) {
    if (m.iou > cfg.iou_threshold) ++iou_hits;
    if (box_l1(pred.boxes[m.pred], gt.boxes[m.gt]) < cfg.box_l1_threshold_px) ++l1_hits;
    const auto& gt_kp = m.gt < gt.keypoint_sets.size() ? gt.keypoint_sets[m.gt]
                                                       : std::vector<Point2D>{};
    const auto& pred_kp = m.pred < pred.keypoint_sets.size() ? pred.keypoint_sets[m.pred]
                                                             : std::vector<Point2D>{};
    if (gt_kp.empty()) continue;
    std::size_t kp_hits = 0;
    for (std::size_t j = 0; j < gt_kp.size() && j < pred_kp.size(); ++j)
      if (keypoint_l1(pred_kp[j], gt_kp[j]) < cfg.keypoint_l1_threshold_px) ++kp_hits;
    keypoint_credit += static_cast<double>(kp_hits) / static_cast<double>(gt_kp.size());
  }
  const double d = static_cast<double>(denom);
  r.iou = static_cast<double>(iou_hits) / d;
  r.box_l1 = static_cast<double>(l1_hits) / d;
  r.keypoint = keypoint_credit / d;
  return r;
}

inline AccuracyReward accuracy_reward(const PredictionSet& pred, const GroundTruthTarget& gt,
                                      const RewardConfig& cfg) {
  return accuracy_reward(pred, gt, match_boxes(pred, gt, cfg), cfg);
}

namespace detail {

inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    // lowercase, punctuation stripped, whitespace collapsed
    std::string norm;
    bool pending_space = false;
    for (char c : cur) {
      const auto uc = static_cast<unsigned char>(c);
      if (std::ispunct(uc)) continue;
      if (is_space(c)) {
        pending_space = !norm.empty();
        continue;
      }
      if (pending_space) norm.push_back(' ');
      pending_space = false;
      norm.push_back(static_cast<char>(std::tolower(uc)));
    }
    if (!norm.empty()) out.push_back(std::move(norm));
    cur.clear();
  };
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?' || c == '\n') flush();
    else cur.push_back(c);
  }
  flush();
  return out;
}

inline std::set<std::string> word_ngrams(const std::string& sentence, int n) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start < sentence.size()) {
    std::size_t end = sentence.find(' ', start);
    if (end == std::string::npos) end = sentence.size();
    words.push_back(sentence.substr(start, end - start));
    start = end + 1;
  }
  std::set<std::string> grams;
  const std::size_t width = static_cast<std::size_t>(std::max(1, n));
  if (words.size() < width) {
    grams.insert(sentence);
    return grams;
  }
  for (std::size_t i = 0; i + width <= words.size(); ++i) {
    std::string g = words[i];
    for (std::size_t k = 1; k < width; ++k) g += " " + words[i + k];
    grams.insert(std::move(g));
  }
  return grams;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t inter = 0;
  for (const auto& g : a) inter += b.count(g);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

}  // namespace detail

/// 1 - (duplicate sentences / sentences); 0 for text with no sentences.
inline double non_repeat_reward(std::string_view think_text, const RewardConfig& cfg = {}) {
  const auto sentences = detail::split_sentences(think_text);
  if (sentences.empty()) return 0.0;
  std::size_t duplicates = 0;
  std::set<std::string> seen;
  std::vector<std::set<std::string>> previous_grams;
  for (const auto& s : sentences) {
    bool dup = !seen.insert(s).second;
    if (cfg.near_duplicate) {
      auto grams = detail::word_ngrams(s, cfg.near_duplicate_ngram);
      for (const auto& prev : previous_grams) {
        if (dup) break;
        dup = detail::jaccard(grams, prev) >= cfg.near_duplicate_jaccard;
      }
      previous_grams.push_back(std::move(grams));
    }
    if (dup) ++duplicates;
  }
  return 1.0 - static_cast<double>(duplicates) / static_cast<double>(sentences.size());
}

inline RewardBreakdown score_rollout(const RawRollout& raw, const GroundTruthTarget& gt,
                                     const RewardConfig& cfg) {
  RewardBreakdown r;
  std::optional<ThinkAnswerPair> pair;
  try {
    pair = parse_think_answer(raw);
    r.think_format = 1;
  } catch (const Error& e) {
    r.format_error = e.code();
  }
  std::optional<StructuredAnswer> answer;
  if (pair) {
    r.non_repeat = non_repeat_reward(pair->think_text, cfg);
    try {
      answer = parse_structured_answer(pair->answer_text, raw.image_width, raw.image_height);
      r.answer_format = 1;
    } catch (const Error& e) {
      r.format_error = e.code();
    }
  }
  if (answer) {
    const auto pred = prediction_from_answer(*answer);
    r.matching = match_boxes(pred, gt, cfg);
    const auto acc = accuracy_reward(pred, gt, r.matching, cfg);
    r.acc_iou = acc.iou;
    r.acc_box_l1 = acc.box_l1;
    r.acc_keypoint = acc.keypoint;
  }
  r.total = cfg.w_fmt * (r.think_format + r.answer_format) / 2.0 + cfg.w_rep * r.non_repeat +
            cfg.w_acc * (r.acc_iou + r.acc_box_l1 + r.acc_keypoint);
  return r;
}

}  // namespace affgr
