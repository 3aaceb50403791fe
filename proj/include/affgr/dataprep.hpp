#pragma once

// Box-point prompt generation from affordance masks, the segmenter
// self-consistency gate, and structural validation of CoT training records.

#include <affgr/error.hpp>
#include <affgr/mask.hpp>
#include <affgr/schema.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace affgr {

/// Bookkeeping figures of the source post-training split.
struct DatasetStats {
  static constexpr int total_samples = 42400;
  static constexpr int cot_cold_start = 3313;
  static constexpr int rl_post_training = 39087;
};

inline constexpr double kDefaultGateThreshold = 0.6;

/// Extremal foreground pixels; the far corner is exclusive (max + 1).
inline Box2D mask_to_bbox(const AffordanceMask& mask) {
  int min_c = mask.width, min_r = mask.height, max_c = -1, max_r = -1;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(c, r)) continue;
      min_c = std::min(min_c, c);
      max_c = std::max(max_c, c);
      min_r = std::min(min_r, r);
      max_r = std::max(max_r, r);
    }
  }
  if (max_c < 0) throw Error(ErrorCode::EmptyMask, "mask has no foreground pixels");
  return {static_cast<double>(min_c), static_cast<double>(min_r), static_cast<double>(max_c + 1),
          static_cast<double>(max_r + 1)};
}

namespace detail {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), in place.
inline void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z, int n) {
  constexpr double inf = 1e30;
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  auto intersect = [&](int q, int p) {
    return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance from each pixel center to the nearest
/// background pixel center, treating everything outside the image as
/// background. Background pixels get 0.
inline std::vector<std::int64_t> squared_distance_transform(const AffordanceMask& mask) {
  const int w = mask.width + 2, h = mask.height + 2;  // one-pixel background frame
  constexpr double inf = 1e30;
  std::vector<double> grid(static_cast<std::size_t>(w) * h, 0.0);
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      if (mask.at(c, r)) grid[static_cast<std::size_t>(r + 1) * w + (c + 1)] = inf;

  const int n = std::max(w, h);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) f[r] = grid[static_cast<std::size_t>(r) * w + c];
    detail::edt_1d(f, d, v, z, h);
    for (int r = 0; r < h; ++r) grid[static_cast<std::size_t>(r) * w + c] = d[r];
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) f[c] = grid[static_cast<std::size_t>(r) * w + c];
    detail::edt_1d(f, d, v, z, w);
    for (int c = 0; c < w; ++c) grid[static_cast<std::size_t>(r) * w + c] = d[c];
  }

  std::vector<std::int64_t> out(mask.size(), 0);
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      out[mask.index(c, r)] =
          static_cast<std::int64_t>(grid[static_cast<std::size_t>(r + 1) * w + (c + 1)]);
  return out;
}

struct InscribedCircle {
  int col = 0;
  int row = 0;
  std::int64_t squared_radius = 0;

  Point2D center() const { return {col + 0.5, row + 0.5}; }
};

/// Foreground pixel farthest from background; ties go to the smallest row,
/// then the smallest column.
inline InscribedCircle largest_inscribed_circle(const AffordanceMask& mask) {
  const auto dist = squared_distance_transform(mask);
  InscribedCircle best{-1, -1, 0};
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(c, r)) continue;
      const auto d = dist[mask.index(c, r)];
      if (best.col < 0 || d > best.squared_radius) best = {c, r, d};
    }
  }
  if (best.col < 0) throw Error(ErrorCode::EmptyMask, "mask has no foreground pixels");
  return best;
}

inline Point2D inscribed_circle_center(const AffordanceMask& mask) {
  return largest_inscribed_circle(mask).center();
}

struct PromptPair {
  Box2D bbox;
  Point2D point;
  std::string mask_id;
};

inline PromptPair make_prompt(const AffordanceMask& mask, std::string mask_id = {}) {
  return {mask_to_bbox(mask), inscribed_circle_center(mask), std::move(mask_id)};
}

/// Stand-in for the promptable segmenter: (image_ref, prompt) -> mask.
/// Implementations must be safe to call concurrently.
using SegmenterOracle = std::function<AffordanceMask(const std::string& image_ref,
                                                     const PromptPair& prompt)>;

/// Fills the prompt box. A crude segmenter useful as a baseline.
inline AffordanceMask fill_box(const PromptPair& prompt, int width, int height) {
  AffordanceMask m(width, height);
  const int c0 = std::max(0, static_cast<int>(prompt.bbox.x1));
  const int r0 = std::max(0, static_cast<int>(prompt.bbox.y1));
  const int c1 = std::min(width, static_cast<int>(prompt.bbox.x2));
  const int r1 = std::min(height, static_cast<int>(prompt.bbox.y2));
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m.set(c, r);
  return m;
}

struct GateRecord {
  std::string id;
  std::string image_ref;
  AffordanceMask mask;
};

struct GateResult {
  std::string id;
  PromptPair prompt;
  double gate_iou = 0.0;
  bool keep = false;
};

/// Re-segments from the derived prompt and keeps the record unless the
/// reconstruction IoU falls below the threshold.
inline GateResult self_consistency_gate(const GateRecord& record, const SegmenterOracle& oracle,
                                        double threshold = kDefaultGateThreshold) {
  GateResult out;
  out.id = record.id;
  out.prompt = make_prompt(record.mask, record.id);
  AffordanceMask predicted;
  try {
    predicted = oracle(record.image_ref, out.prompt);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::OracleFailure, "record '" + record.id + "': " + e.what());
  }
  if (predicted.width != record.mask.width || predicted.height != record.mask.height ||
      predicted.bits.size() != record.mask.bits.size()) {
    throw Error(ErrorCode::OracleFailure,
                "record '" + record.id + "': oracle returned a mask of the wrong size");
  }
  out.gate_iou = mask_iou(record.mask, predicted);
  out.keep = !(out.gate_iou < threshold);
  return out;
}

struct CoTRecord {
  std::string id;
  std::string image_ref;
  std::string instruction;
  std::string reasoning;
  std::string answer_text;
  std::string aff_method;
  std::string aff_part;
  std::optional<double> gate_iou;
  int image_width = 0;
  int image_height = 0;
};

enum class CotIssue {
  EmptyInstruction,
  EmptyReasoning,
  MalformedTags,
  AnswerSchema,
  PointOutsideBox,
  LabelMismatch,
  GateBelowThreshold,
};

constexpr std::string_view to_string(CotIssue issue) {
  switch (issue) {
    case CotIssue::EmptyInstruction: return "EmptyInstruction";
    case CotIssue::EmptyReasoning: return "EmptyReasoning";
    case CotIssue::MalformedTags: return "MalformedTags";
    case CotIssue::AnswerSchema: return "AnswerSchema";
    case CotIssue::PointOutsideBox: return "PointOutsideBox";
    case CotIssue::LabelMismatch: return "LabelMismatch";
    case CotIssue::GateBelowThreshold: return "GateBelowThreshold";
  }
  return "Unknown";
}

struct CotValidation {
  std::vector<CotIssue> issues;
  std::vector<std::string> details;

  bool ok() const { return issues.empty(); }
  bool has(CotIssue issue) const {
    return std::find(issues.begin(), issues.end(), issue) != issues.end();
  }
};

inline CotValidation validate_cot_record(const CoTRecord& rec,
                                         double gate_threshold = kDefaultGateThreshold) {
  CotValidation report;
  auto fail = [&](CotIssue issue, std::string detail) {
    report.issues.push_back(issue);
    report.details.push_back(std::move(detail));
  };
  if (detail::all_space(rec.instruction)) fail(CotIssue::EmptyInstruction, "instruction is empty");
  if (detail::all_space(rec.reasoning)) fail(CotIssue::EmptyReasoning, "reasoning is empty");

  try {
    parse_think_answer("<think>" + rec.reasoning + "</think><answer>" + rec.answer_text +
                       "</answer>");
  } catch (const Error& e) {
    fail(CotIssue::MalformedTags, e.what());
  }

  try {
    const auto ans = parse_structured_answer(rec.answer_text, rec.image_width, rec.image_height);
    for (const auto& p : ans.keypoints) {
      if (!ans.bbox().contains(p)) {
        fail(CotIssue::PointOutsideBox, "keypoint (" + detail::format_number(p.x) + "," +
                                            detail::format_number(p.y) + ") outside bbox");
        break;
      }
    }
    auto norm = [](std::string_view s) { return detail::to_lower(detail::trim(s)); };
    if (norm(ans.aff_method) != norm(rec.aff_method) || norm(ans.aff_part) != norm(rec.aff_part)) {
      fail(CotIssue::LabelMismatch, "record labels disagree with the answer");
    }
  } catch (const Error& e) {
    fail(CotIssue::AnswerSchema, e.what());
  }

  if (rec.gate_iou && *rec.gate_iou < gate_threshold) {
    fail(CotIssue::GateBelowThreshold, "gate IoU " + std::to_string(*rec.gate_iou));
  }
  return report;
}

}  // namespace affgr
