#pragma once

// JSON Lines record schemas shared by the command-line tools and any
// in-process caller. Field names here are the wire contract.

#include <affgr/dataprep.hpp>
#include <affgr/error.hpp>
#include <affgr/graspgeom.hpp>
#include <affgr/grpo.hpp>
#include <affgr/io.hpp>
#include <affgr/rewards.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace affgr::records {

using nlohmann::json;

struct Line {
  std::size_t number = 0;
  json value;
};

inline std::vector<Line> parse_jsonl(std::string_view text, const std::string& name) {
  std::vector<Line> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json v = json::parse(line, nullptr, false);
    if (v.is_discarded() || !v.is_object()) {
      throw Error(ErrorCode::Format, name + ":" + std::to_string(n) + ": not a JSON object");
    }
    out.push_back({n, std::move(v)});
  }
  return out;
}

inline std::vector<Line> read_jsonl(const std::filesystem::path& path) {
  return parse_jsonl(io::read_file(path), path.string());
}

namespace detail {

[[noreturn]] inline void schema_error(const std::string& where, const std::string& why) {
  throw Error(ErrorCode::Format, where + ": " + why);
}

inline const json& field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) schema_error(where, std::string("missing field '") + key + "'");
  return *it;
}

inline std::string str(const json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  if (!v.is_string()) schema_error(where, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

inline double num(const json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  if (!v.is_number()) schema_error(where, std::string("'") + key + "' must be a number");
  return v.get<double>();
}

inline int positive_int(const json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  if (!v.is_number_integer() || v.get<long long>() <= 0 || v.get<long long>() > (1 << 24)) {
    schema_error(where, std::string("'") + key + "' must be a positive integer");
  }
  return v.get<int>();
}

inline std::vector<double> numbers(const json& v, std::size_t arity, const std::string& where,
                                   const char* what) {
  if (!v.is_array() || v.size() != arity) {
    schema_error(where, std::string(what) + " must be an array of " + std::to_string(arity) + " numbers");
  }
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) schema_error(where, std::string(what) + " must contain numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

inline json to_json(const Box2D& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }
inline json to_json(const Point2D& p) { return json::array({p.x, p.y}); }

// ---------------------------------------------------------------- ground truth

struct GroundTruthRecord {
  std::string id;
  GroundTruthTarget target;
};

inline GroundTruthRecord ground_truth_from_json(const json& j, const std::string& where) {
  using namespace detail;
  GroundTruthRecord r;
  r.id = str(j, "id", where);
  auto& t = r.target;
  t.image_width = positive_int(j, "image_width", where);
  t.image_height = positive_int(j, "image_height", where);
  t.aff_method = str(j, "aff_method", where);
  t.aff_part = str(j, "aff_part", where);
  const auto& boxes = field(j, "boxes", where);
  if (!boxes.is_array() || boxes.empty()) schema_error(where, "'boxes' must be a non-empty array");
  for (const auto& b : boxes) {
    const auto v = numbers(b, 4, where, "box");
    Box2D box{v[0], v[1], v[2], v[3]};
    if (!box.valid()) schema_error(where, "box needs x1 < x2 and y1 < y2");
    t.boxes.push_back(box);
  }
  const auto& kps = field(j, "keypoints", where);
  if (!kps.is_array() || kps.size() != t.boxes.size()) {
    schema_error(where, "'keypoints' must hold one point list per box");
  }
  for (const auto& set : kps) {
    if (!set.is_array() || set.empty()) schema_error(where, "each keypoint list must be non-empty");
    std::vector<Point2D> pts;
    for (const auto& p : set) {
      const auto v = numbers(p, 2, where, "keypoint");
      if (v[0] < 0 || v[1] < 0 || v[0] > t.image_width || v[1] > t.image_height) {
        schema_error(where, "keypoint outside image");
      }
      pts.push_back({v[0], v[1]});
    }
    t.keypoint_sets.push_back(std::move(pts));
  }
  return r;
}

inline json to_json(const GroundTruthRecord& r) {
  json boxes = json::array(), kps = json::array();
  for (const auto& b : r.target.boxes) boxes.push_back(to_json(b));
  for (const auto& set : r.target.keypoint_sets) {
    json pts = json::array();
    for (const auto& p : set) pts.push_back(to_json(p));
    kps.push_back(std::move(pts));
  }
  return {{"id", r.id},
          {"image_width", r.target.image_width},
          {"image_height", r.target.image_height},
          {"boxes", boxes},
          {"keypoints", kps},
          {"aff_method", r.target.aff_method},
          {"aff_part", r.target.aff_part}};
}

// ---------------------------------------------------------------- rollouts

struct RolloutInput {
  std::string rollout_id;
  std::string group_id;
  std::string gt_id;
  std::string text;
};

inline RolloutInput rollout_from_json(const json& j, const std::string& where) {
  using namespace detail;
  return {str(j, "rollout_id", where), str(j, "group_id", where), str(j, "gt_id", where),
          str(j, "text", where)};
}

inline json to_json(const RolloutInput& r) {
  return {{"rollout_id", r.rollout_id}, {"group_id", r.group_id}, {"gt_id", r.gt_id}, {"text", r.text}};
}

inline json reward_to_json(const RolloutInput& in, const RewardBreakdown& r) {
  json matching = json::array();
  for (const auto& m : r.matching) matching.push_back(json::array({m.pred, m.gt}));
  return {{"rollout_id", in.rollout_id},
          {"group_id", in.group_id},
          {"gt_id", in.gt_id},
          {"think_format", r.think_format},
          {"answer_format", r.answer_format},
          {"non_repeat", r.non_repeat},
          {"acc_iou", r.acc_iou},
          {"acc_box_l1", r.acc_box_l1},
          {"acc_keypoint", r.acc_keypoint},
          {"total", r.total},
          {"matching", matching},
          {"format_error", r.format_error ? json(std::string(to_string(*r.format_error))) : json(nullptr)},
          {"error", nullptr}};
}

inline json reward_error_to_json(const RolloutInput& in, const std::string& error) {
  return {{"rollout_id", in.rollout_id}, {"group_id", in.group_id}, {"gt_id", in.gt_id},
          {"think_format", 0}, {"answer_format", 0}, {"non_repeat", 0.0}, {"acc_iou", 0.0},
          {"acc_box_l1", 0.0}, {"acc_keypoint", 0.0}, {"total", 0.0},
          {"matching", json::array()}, {"format_error", nullptr}, {"error", error}};
}

// ---------------------------------------------------------------- GRPO

/// Accepts "reward", or "total" as written by the scorer.
inline RolloutRecord rollout_record_from_json(const json& j, const std::string& where) {
  using namespace detail;
  RolloutRecord r;
  r.rollout_id = str(j, "rollout_id", where);
  r.group_id = str(j, "group_id", where);
  r.reward = j.contains("reward") ? num(j, "reward", where) : num(j, "total", where);
  r.logprob_current = num(j, "logprob_current", where);
  r.logprob_old = num(j, "logprob_old", where);
  r.logprob_ref = num(j, "logprob_ref", where);
  return r;
}

inline json to_json(const RolloutRecord& r) {
  return {{"rollout_id", r.rollout_id}, {"group_id", r.group_id}, {"reward", r.reward},
          {"logprob_current", r.logprob_current}, {"logprob_old", r.logprob_old},
          {"logprob_ref", r.logprob_ref}};
}

inline json group_to_json(const std::string& group_id, const std::vector<RolloutRecord>& group,
                          const GrpoResult& res) {
  json rollouts = json::array();
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& d = res.rollouts[i];
    rollouts.push_back({{"rollout_id", group[i].rollout_id}, {"reward", group[i].reward},
                        {"advantage", d.advantage}, {"s1", d.s1}, {"s2", d.s2}, {"kl", d.kl},
                        {"term", d.term}});
  }
  return {{"group_id", group_id},     {"size", group.size()},          {"objective", res.objective},
          {"mean_surrogate", res.mean_surrogate}, {"mean_kl", res.mean_kl}, {"rollouts", rollouts}};
}

// ---------------------------------------------------------------- dataprep

inline json prompt_to_json(const GateResult& g, const std::string& image_ref, const std::string& mask) {
  return {{"id", g.id},           {"image_ref", image_ref},
          {"mask", mask},         {"bbox", to_json(g.prompt.bbox)},
          {"point", to_json(g.prompt.point)}, {"gate_iou", g.gate_iou},
          {"keep", g.keep},       {"error", nullptr}};
}

inline json prompt_error_to_json(const std::string& id, const std::string& image_ref,
                                 const std::string& mask, const std::string& error) {
  return {{"id", id},       {"image_ref", image_ref}, {"mask", mask},   {"bbox", nullptr},
          {"point", nullptr}, {"gate_iou", 0.0},        {"keep", false}, {"error", error}};
}

inline CoTRecord cot_from_json(const json& j, const std::string& where) {
  using namespace detail;
  CoTRecord r;
  r.id = str(j, "id", where);
  r.image_ref = str(j, "image_ref", where);
  r.instruction = str(j, "instruction", where);
  r.reasoning = str(j, "reasoning", where);
  r.answer_text = str(j, "answer", where);
  r.aff_method = str(j, "aff_method", where);
  r.aff_part = str(j, "aff_part", where);
  r.image_width = positive_int(j, "image_width", where);
  r.image_height = positive_int(j, "image_height", where);
  if (j.contains("gate_iou") && !j.at("gate_iou").is_null()) r.gate_iou = num(j, "gate_iou", where);
  return r;
}

inline json to_json(const CoTRecord& r) {
  return {{"id", r.id}, {"image_ref", r.image_ref}, {"instruction", r.instruction},
          {"reasoning", r.reasoning}, {"answer", r.answer_text}, {"aff_method", r.aff_method},
          {"aff_part", r.aff_part}, {"gate_iou", r.gate_iou ? json(*r.gate_iou) : json(nullptr)},
          {"image_width", r.image_width}, {"image_height", r.image_height}};
}

inline json cot_report_to_json(const CoTRecord& r, const CotValidation& v) {
  json issues = json::array();
  for (auto i : v.issues) issues.push_back(std::string(to_string(i)));
  return {{"id", r.id}, {"ok", v.ok()}, {"issues", issues}, {"details", v.details}};
}

// ---------------------------------------------------------------- grasps

inline GraspCandidate candidate_from_json(const json& j, const std::string& where,
                                          double default_finger_depth, double default_finger_height) {
  using namespace detail;
  GraspCandidate g;
  const auto c = numbers(field(j, "center", where), 3, where, "center");
  g.center = Vec3(c[0], c[1], c[2]);
  const auto r = numbers(field(j, "rotation", where), 9, where, "rotation");
  for (int i = 0; i < 9; ++i) g.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
  g.width = num(j, "width", where);
  g.score = num(j, "score", where);
  g.finger_depth = j.contains("finger_depth") ? num(j, "finger_depth", where) : default_finger_depth;
  g.finger_height = j.contains("finger_height") ? num(j, "finger_height", where) : default_finger_height;
  return g;
}

inline json to_json(const GraspCandidate& g) {
  json rot = json::array();
  for (int i = 0; i < 9; ++i) rot.push_back(g.rotation(i / 3, i % 3));
  return {{"center", json::array({g.center.x(), g.center.y(), g.center.z()})},
          {"rotation", rot},
          {"width", g.width},
          {"finger_depth", g.finger_depth},
          {"finger_height", g.finger_height},
          {"score", g.score}};
}

inline json selected_to_json(std::size_t rank, const SelectedGrasp& s, const GraspCandidate& g) {
  json out = to_json(g);
  out["rank"] = rank;
  out["index"] = s.index;
  out["iou"] = s.iou;
  return out;
}

inline json outcome_to_json(std::size_t index, const CandidateOutcome& o) {
  json out = {{"index", index},
              {"stage", std::string(to_string(o.stage))},
              {"offending_points", o.offending_points},
              {"iou", nullptr},
              {"box_voxels", nullptr},
              {"target_voxels", nullptr},
              {"intersection", nullptr},
              {"rank", o.rank ? json(*o.rank) : json(nullptr)}};
  if (o.iou) {
    out["iou"] = o.iou->iou;
    out["box_voxels"] = o.iou->box_voxels;
    out["target_voxels"] = o.iou->target_voxels;
    out["intersection"] = o.iou->intersection;
  }
  return out;
}

// ---------------------------------------------------------------- schema check

/// Validates one JSONL line of the given record kind; throws Error(Format).
inline void check_record(std::string_view kind, const json& j, const std::string& where) {
  using namespace detail;
  auto require = [&](const char* key, auto pred, const char* want) {
    const auto& v = field(j, key, where);
    if (!pred(v)) schema_error(where, std::string("'") + key + "' must be " + want);
  };
  auto is_num = [](const json& v) { return v.is_number(); };
  auto is_str = [](const json& v) { return v.is_string(); };
  auto is_bool = [](const json& v) { return v.is_boolean(); };
  auto is_flag = [](const json& v) { return v.is_number_integer() && (v == 0 || v == 1); };
  auto is_unit = [](const json& v) { return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0; };
  auto is_str_or_null = [](const json& v) { return v.is_string() || v.is_null(); };
  auto is_arr = [](const json& v) { return v.is_array(); };
  auto is_uint = [](const json& v) { return v.is_number_unsigned(); };

  if (kind == "ground-truth") {
    ground_truth_from_json(j, where);
  } else if (kind == "rollouts") {
    rollout_from_json(j, where);
  } else if (kind == "rewards") {
    require("rollout_id", is_str, "a string");
    require("group_id", is_str, "a string");
    require("gt_id", is_str, "a string");
    require("think_format", is_flag, "0 or 1");
    require("answer_format", is_flag, "0 or 1");
    for (const char* k : {"non_repeat", "acc_iou", "acc_box_l1", "acc_keypoint"}) require(k, is_unit, "in [0, 1]");
    require("total", [](const json& v) { return v.is_number() && v.get<double>() >= 0.0; }, "non-negative");
    require("matching", is_arr, "an array");
    for (const auto& m : j.at("matching"))
      if (!m.is_array() || m.size() != 2 || !m[0].is_number_unsigned() || !m[1].is_number_unsigned())
        schema_error(where, "matching entries must be [pred, gt] index pairs");
    require("format_error", is_str_or_null, "a string or null");
    require("error", is_str_or_null, "a string or null");
  } else if (kind == "logprobs") {
    rollout_record_from_json(j, where);
  } else if (kind == "advantages") {
    require("group_id", is_str, "a string");
    require("size", is_uint, "a count");
    for (const char* k : {"objective", "mean_surrogate", "mean_kl"}) require(k, is_num, "a number");
    require("rollouts", is_arr, "an array");
    if (j.at("rollouts").size() != j.at("size").get<std::size_t>()) schema_error(where, "size disagrees with rollouts");
    for (const auto& r : j.at("rollouts")) {
      if (!r.is_object() || !r.contains("rollout_id") || !r.at("rollout_id").is_string())
        schema_error(where, "rollout entries need a rollout_id");
      for (const char* k : {"reward", "advantage", "s1", "s2", "kl", "term"})
        if (!r.contains(k) || !r.at(k).is_number()) schema_error(where, std::string("rollout entry needs numeric '") + k + "'");
      if (r.at("kl").get<double>() < 0.0) schema_error(where, "kl must be non-negative");
    }
  } else if (kind == "prompts") {
    require("id", is_str, "a string");
    require("image_ref", is_str, "a string");
    require("mask", is_str, "a string");
    require("gate_iou", is_unit, "in [0, 1]");
    require("keep", is_bool, "a boolean");
    require("error", is_str_or_null, "a string or null");
    if (j.at("error").is_null()) {
      numbers(field(j, "bbox", where), 4, where, "bbox");
      numbers(field(j, "point", where), 2, where, "point");
    }
  } else if (kind == "cot") {
    cot_from_json(j, where);
  } else if (kind == "cot-report") {
    require("id", is_str, "a string");
    require("ok", is_bool, "a boolean");
    require("issues", is_arr, "an array");
    require("details", is_arr, "an array");
  } else if (kind == "candidates") {
    candidate_from_json(j, where, 0.04, 0.02);
  } else if (kind == "grasps") {
    candidate_from_json(j, where, 0.04, 0.02);
    require("rank", is_uint, "a rank");
    require("index", is_uint, "an index");
    require("iou", is_unit, "in [0, 1]");
  } else if (kind == "grasp-diagnostics") {
    require("index", is_uint, "an index");
    require("stage", is_str, "a string");
    require("offending_points", is_uint, "a count");
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown record kind '" + std::string(kind) + "'");
  }
}

inline const std::vector<std::string_view>& record_kinds() {
  static const std::vector<std::string_view> kinds = {
      "ground-truth", "rollouts", "rewards", "logprobs", "advantages", "prompts",
      "cot", "cot-report", "candidates", "grasps", "grasp-diagnostics"};
  return kinds;
}

}  // namespace affgr::records
