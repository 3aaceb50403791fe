#pragma once

// Benchmark segmentation metrics: gIoU (mean of per-sample IoU) and cIoU
// (summed intersections over summed unions), with per-subset tables.

#include <affgr/error.hpp>
#include <affgr/mask.hpp>

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace affgr {

struct EvalPair {
  AffordanceMask gt;
  AffordanceMask pred;
  std::string subset;
};

inline double g_iou(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptySet, "no evaluation pairs");
  double sum = 0.0;
  for (const auto& p : pairs) sum += mask_iou(p.gt, p.pred);
  return sum / static_cast<double>(pairs.size());
}

/// Empty-vs-empty pairs drop out of both sums.
inline double c_iou(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptySet, "no evaluation pairs");
  std::size_t inter = 0, uni = 0;
  for (const auto& p : pairs) {
    const auto c = overlap_counts(p.gt, p.pred);
    inter += c.intersection;
    uni += c.uni;
  }
  if (uni == 0) throw Error(ErrorCode::ZeroUnion, "every pair is empty-vs-empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct SubsetRow {
  std::string subset;
  double giou = 0.0;
  double ciou = 0.0;
  std::size_t count = 0;
};

/// One row per subset tag, sorted by tag. A subset made only of
/// empty-vs-empty pairs reports cIoU 1.0, matching its gIoU.
inline std::vector<SubsetRow> subset_report(std::span<const EvalPair> pairs) {
  struct Acc {
    double iou_sum = 0.0;
    std::size_t inter = 0, uni = 0, count = 0;
  };
  std::map<std::string, Acc> groups;
  for (const auto& p : pairs) {
    const auto c = overlap_counts(p.gt, p.pred);
    auto& a = groups[p.subset];
    a.iou_sum += c.uni ? static_cast<double>(c.intersection) / static_cast<double>(c.uni) : 1.0;
    a.inter += c.intersection;
    a.uni += c.uni;
    ++a.count;
  }
  std::vector<SubsetRow> rows;
  rows.reserve(groups.size());
  for (const auto& [name, a] : groups) {
    rows.push_back({name, a.iou_sum / static_cast<double>(a.count),
                    a.uni ? static_cast<double>(a.inter) / static_cast<double>(a.uni) : 1.0,
                    a.count});
  }
  return rows;
}

}  // namespace affgr
