#pragma once

// Flat run configuration. Precedence: built-in defaults < JSON config file
// < AFFGR_* environment variables < command-line overrides. Unknown keys
// are rejected at every layer.

#include <affgr/dataprep.hpp>
#include <affgr/error.hpp>
#include <affgr/graspgeom.hpp>
#include <affgr/grpo.hpp>
#include <affgr/rewards.hpp>

#include <nlohmann/json.hpp>

#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace affgr {

enum class ValueKind { Number, Integer, Boolean, OptionalNumber, Matching };

struct ConfigKey {
  std::string_view name;
  ValueKind kind;
  nlohmann::json default_value;
  std::string_view help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      // rewards
      {"iou_threshold", ValueKind::Number, 0.5, "box IoU must exceed this (strict)"},
      {"box_l1_threshold_px", ValueKind::Number, 10.0, "corner L1 sum must be below this"},
      {"keypoint_l1_threshold_px", ValueKind::Number, 30.0, "keypoint L1 must be below this"},
      {"w_fmt", ValueKind::Number, 1.0, "weight of the averaged format checks"},
      {"w_rep", ValueKind::Number, 1.0, "weight of the non-repeat reward"},
      {"w_acc", ValueKind::Number, 1.0, "weight of the accuracy components"},
      {"matching", ValueKind::Matching, "optimal", "box assignment: optimal | greedy"},
      {"near_duplicate", ValueKind::Boolean, false, "also penalize n-gram near-duplicate sentences"},
      {"near_duplicate_ngram", ValueKind::Integer, 3, "word n-gram length for near-duplicates"},
      {"near_duplicate_jaccard", ValueKind::Number, 0.8, "n-gram Jaccard counted as a repeat"},
      // grpo
      {"epsilon", ValueKind::Number, 0.2, "ratio clip radius"},
      {"beta", ValueKind::Number, 0.04, "KL penalty weight"},
      {"std_floor", ValueKind::Number, 1e-8, "lower bound on the group reward std"},
      {"group_size", ValueKind::Integer, 8, "responses sampled per prompt"},
      // dataprep
      {"gate_threshold", ValueKind::Number, 0.6, "records with gate IoU below this are discarded"},
      // grasp selection
      {"voxel", ValueKind::Number, 0.005, "voxel edge for 3D IoU (m)"},
      {"clearance", ValueKind::Number, 0.003, "scene points this close to the target never collide (m)"},
      {"top_k", ValueKind::Integer, 10, "candidates kept by target IoU"},
      {"iou_min", ValueKind::OptionalNumber, nullptr, "optional minimum target IoU"},
      {"nms_trans", ValueKind::Number, 0.02, "NMS center distance (m)"},
      {"nms_rot", ValueKind::Number, 0.5235987755982988, "NMS rotation angle (rad)"},
      {"max_open_width", ValueKind::Number, 0.085, "gripper stroke (m)"},
      {"finger_depth", ValueKind::Number, 0.04, "default finger depth (m)"},
      {"finger_height", ValueKind::Number, 0.02, "default finger height (m)"},
      {"finger_thickness", ValueKind::Number, 0.01, "finger thickness (m)"},
      {"base_depth", ValueKind::Number, 0.02, "palm depth behind the fingers (m)"},
      // training hyperparameters, recorded only
      {"sft_learning_rate", ValueKind::Number, 1e-5, "metadata: cold-start learning rate"},
      {"sft_batch_size", ValueKind::Integer, 32, "metadata: cold-start batch size"},
      {"sft_epochs", ValueKind::Integer, 1, "metadata: cold-start epochs"},
      {"rl_learning_rate", ValueKind::Number, 1e-6, "metadata: RL learning rate"},
      {"rl_weight_decay", ValueKind::Number, 0.01, "metadata: RL weight decay"},
      {"rl_batch_size", ValueKind::Integer, 16, "metadata: RL batch size"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[std::string(k.name)] = k.default_value;
  }

  /// Sets one key, coercing strings from the environment or the command line.
  void set(std::string_view key, const nlohmann::json& value, std::string_view origin = "override") {
    const ConfigKey* spec = find(key);
    if (!spec) throw Error(ErrorCode::InvalidArgument, std::string(origin) + ": unknown config key '" + std::string(key) + "'");
    values_[std::string(key)] = coerce(*spec, value, origin);
  }

  void set_string(std::string_view key, std::string_view text, std::string_view origin = "override") {
    nlohmann::json v = nlohmann::json::parse(text, nullptr, false);
    if (v.is_discarded()) v = std::string(text);
    set(key, v, origin);
  }

  void merge_json(const nlohmann::json& obj, std::string_view origin = "config") {
    if (!obj.is_object()) throw Error(ErrorCode::InvalidArgument, std::string(origin) + ": config must be a JSON object");
    for (const auto& [k, v] : obj.items()) set(k, v, origin);
  }

  /// Applies AFFGR_<KEY> variables from a "NAME=value" list such as environ.
  void merge_env(const std::vector<std::string>& environment) {
    constexpr std::string_view prefix = "AFFGR_";
    for (const auto& entry : environment) {
      if (entry.rfind(prefix, 0) != 0) continue;
      const auto eq = entry.find('=');
      if (eq == std::string::npos) continue;
      std::string key = entry.substr(prefix.size(), eq - prefix.size());
      for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      set_string(key, std::string_view(entry).substr(eq + 1), "environment " + entry.substr(0, eq));
    }
  }

  /// Applies a "key=value" override.
  void merge_assignment(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidArgument, "override must be key=value: '" + std::string(assignment) + "'");
    }
    set_string(assignment.substr(0, eq), assignment.substr(eq + 1), "--set");
  }

  const nlohmann::json& get(std::string_view key) const {
    auto it = values_.find(std::string(key));
    if (it == values_.end()) throw Error(ErrorCode::InvalidArgument, "unknown config key '" + std::string(key) + "'");
    return it->second;
  }
  double number(std::string_view key) const { return get(key).get<double>(); }
  int integer(std::string_view key) const { return get(key).get<int>(); }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : values_) out[k] = v;
    return out;
  }

  RewardConfig rewards() const {
    RewardConfig c;
    c.iou_threshold = number("iou_threshold");
    c.box_l1_threshold_px = number("box_l1_threshold_px");
    c.keypoint_l1_threshold_px = number("keypoint_l1_threshold_px");
    c.w_fmt = number("w_fmt");
    c.w_rep = number("w_rep");
    c.w_acc = number("w_acc");
    c.matching = get("matching") == "greedy" ? MatchingStrategy::Greedy : MatchingStrategy::Optimal;
    c.near_duplicate = get("near_duplicate").get<bool>();
    c.near_duplicate_ngram = integer("near_duplicate_ngram");
    c.near_duplicate_jaccard = number("near_duplicate_jaccard");
    return c;
  }

  GrpoConfig grpo() const {
    return {number("epsilon"), number("beta"), number("std_floor"), integer("group_size")};
  }

  double gate_threshold() const { return number("gate_threshold"); }

  GraspSelectConfig grasp() const {
    GraspSelectConfig c;
    c.voxel = number("voxel");
    c.clearance = number("clearance");
    c.top_k = integer("top_k");
    if (!get("iou_min").is_null()) c.iou_min = number("iou_min");
    c.nms_trans = number("nms_trans");
    c.nms_rot = number("nms_rot");
    c.max_open_width = number("max_open_width");
    c.geometry.finger_thickness = number("finger_thickness");
    c.geometry.base_depth = number("base_depth");
    return c;
  }

 private:
  static const ConfigKey* find(std::string_view key) {
    for (const auto& k : config_keys())
      if (k.name == key) return &k;
    return nullptr;
  }

  static nlohmann::json coerce(const ConfigKey& spec, const nlohmann::json& v, std::string_view origin) {
    auto bad = [&](const char* want) -> nlohmann::json {
      throw Error(ErrorCode::InvalidArgument, std::string(origin) + ": '" + std::string(spec.name) +
                                                  "' expects " + want + ", got " + v.dump());
    };
    switch (spec.kind) {
      case ValueKind::Number:
        if (!v.is_number()) return bad("a number");
        if (v.get<double>() <= 0.0 && spec.name.rfind("w_", 0) != 0 && spec.name != "beta") {
          return bad("a positive number");
        }
        if (v.get<double>() < 0.0) return bad("a non-negative number");
        if (spec.name == "epsilon" && v.get<double>() >= 1.0) return bad("a number in (0, 1)");
        return v.get<double>();
      case ValueKind::Integer:
        if (!v.is_number_integer() || v.get<long long>() < 1) return bad("a positive integer");
        return v;
      case ValueKind::Boolean:
        if (!v.is_boolean()) return bad("true or false");
        return v;
      case ValueKind::OptionalNumber:
        if (v.is_null() || (v.is_string() && (v == "none" || v == "null"))) return nullptr;
        if (!v.is_number()) return bad("a number or null");
        return v.get<double>();
      case ValueKind::Matching:
        if (v != "optimal" && v != "greedy") return bad("\"optimal\" or \"greedy\"");
        return v;
    }
    return v;
  }

  std::map<std::string, nlohmann::json> values_;
};

}  // namespace affgr
