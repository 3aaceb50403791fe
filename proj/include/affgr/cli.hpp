#pragma once

// Batch commands behind the `affgr` executable. Each command is a pure
// function of its input files and configuration and returns a process exit
// code:
//   0 success, 1 usage error, 2 malformed input, 3 oracle failure,
//   4 no feasible grasp.

#include <affgr/config.hpp>
#include <affgr/dataprep.hpp>
#include <affgr/error.hpp>
#include <affgr/graspgeom.hpp>
#include <affgr/grpo.hpp>
#include <affgr/io.hpp>
#include <affgr/metrics.hpp>
#include <affgr/parallel.hpp>
#include <affgr/records.hpp>
#include <affgr/rewards.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace affgr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kMalformedInput = 2,
  kOracleFailure = 3,
  kNoFeasibleGrasp = 4,
};

/// Writes to `path`, or to `fallback` when the path is empty.
inline void emit(const fs::path& path, const std::string& text, std::ostream& fallback) {
  if (path.empty()) fallback << text;
  else io::write_file(path, text);
}

inline std::string jsonl(const std::vector<json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

inline bool is_mask_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pgm" || ext == ".agm";
}

inline std::vector<std::string> list_masks(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_mask_file(e.path())) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

// ------------------------------------------------------------------ prep

struct PrepOptions {
  fs::path masks_dir;
  fs::path records;  // optional JSONL {id, image_ref, mask}
  std::string oracle = "identity";
  fs::path output;
  double gate_threshold = kDefaultGateThreshold;
  int jobs = 1;
};

/// Oracle specs: identity | empty | box | dir:<path>. `masks` maps record
/// index to the ground-truth mask so `identity` can echo it back.
inline SegmenterOracle make_oracle(const std::string& spec,
                                   const std::map<std::string, AffordanceMask>& by_image,
                                   const std::map<std::string, std::string>& mask_file_of) {
  if (spec == "identity") {
    return [&by_image](const std::string& image_ref, const PromptPair&) { return by_image.at(image_ref); };
  }
  if (spec == "empty") {
    return [&by_image](const std::string& image_ref, const PromptPair&) {
      const auto& m = by_image.at(image_ref);
      return AffordanceMask(m.width, m.height);
    };
  }
  if (spec == "box") {
    return [&by_image](const std::string& image_ref, const PromptPair& p) {
      const auto& m = by_image.at(image_ref);
      return fill_box(p, m.width, m.height);
    };
  }
  if (spec.rfind("dir:", 0) == 0) {
    const fs::path dir = spec.substr(4);
    return [dir, &mask_file_of](const std::string& image_ref, const PromptPair&) {
      return io::read_mask(dir / mask_file_of.at(image_ref));
    };
  }
  throw Error(ErrorCode::InvalidArgument, "unknown oracle '" + spec + "' (identity | empty | box | dir:<path>)");
}

inline int cmd_prep(const PrepOptions& opt, std::ostream& out, std::ostream& log) {
  struct Item {
    std::string id, image_ref, mask_file;
  };
  std::vector<Item> items;
  std::map<std::string, AffordanceMask> by_image;
  std::map<std::string, std::string> mask_file_of;
  try {
    if (opt.records.empty()) {
      for (const auto& name : list_masks(opt.masks_dir))
        items.push_back({fs::path(name).stem().string(), name, name});
    } else {
      for (const auto& line : records::read_jsonl(opt.records)) {
        const std::string where = opt.records.string() + ":" + std::to_string(line.number);
        items.push_back({records::detail::str(line.value, "id", where),
                         records::detail::str(line.value, "image_ref", where),
                         records::detail::str(line.value, "mask", where)});
      }
    }
    for (const auto& it : items) {
      if (by_image.count(it.image_ref)) {
        throw Error(ErrorCode::Format, "duplicate image_ref '" + it.image_ref + "'");
      }
      by_image.emplace(it.image_ref, io::read_mask(opt.masks_dir / it.mask_file));
      mask_file_of.emplace(it.image_ref, it.mask_file);
    }
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }

  SegmenterOracle oracle;
  try {
    oracle = make_oracle(opt.oracle, by_image, mask_file_of);
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kUsage;
  }

  std::vector<json> lines(items.size());
  try {
    parallel_for(items.size(), opt.jobs, [&](std::size_t i) {
      const auto& it = items[i];
      const GateRecord rec{it.id, it.image_ref, by_image.at(it.image_ref)};
      if (rec.mask.empty()) {
        lines[i] = records::prompt_error_to_json(it.id, it.image_ref, it.mask_file, "EmptyMask");
        return;
      }
      const auto gate = self_consistency_gate(rec, oracle, opt.gate_threshold);
      lines[i] = records::prompt_to_json(gate, it.image_ref, it.mask_file);
    });
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::OracleFailure ? kOracleFailure : kMalformedInput;
  }
  std::size_t kept = 0;
  for (const auto& l : lines) kept += l.at("keep").get<bool>();
  emit(opt.output, jsonl(lines), out);
  log << "kept " << kept << " / " << items.size() << "\n";
  return kOk;
}

// ------------------------------------------------------------------ score

struct ScoreOptions {
  fs::path rollouts;
  fs::path ground_truth;
  fs::path output;
  int jobs = 1;
};

inline int cmd_score(const ScoreOptions& opt, const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  std::vector<records::RolloutInput> rollouts;
  std::map<std::string, GroundTruthTarget> gts;
  try {
    for (const auto& line : records::read_jsonl(opt.ground_truth)) {
      auto rec = records::ground_truth_from_json(
          line.value, opt.ground_truth.string() + ":" + std::to_string(line.number));
      if (!gts.emplace(rec.id, std::move(rec.target)).second) {
        throw Error(ErrorCode::Format, "duplicate ground-truth id '" + rec.id + "'");
      }
    }
    for (const auto& line : records::read_jsonl(opt.rollouts))
      rollouts.push_back(records::rollout_from_json(
          line.value, opt.rollouts.string() + ":" + std::to_string(line.number)));
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }

  const RewardConfig rc = cfg.rewards();
  std::vector<json> lines(rollouts.size());
  parallel_for(rollouts.size(), opt.jobs, [&](std::size_t i) {
    const auto& r = rollouts[i];
    auto it = gts.find(r.gt_id);
    if (it == gts.end()) {
      lines[i] = records::reward_error_to_json(r, "missing ground truth '" + r.gt_id + "'");
      return;
    }
    const RawRollout raw{r.text, it->second.image_width, it->second.image_height};
    lines[i] = records::reward_to_json(r, score_rollout(raw, it->second, rc));
  });
  emit(opt.output, jsonl(lines), out);
  return kOk;
}

// ------------------------------------------------------------------ advantages

struct AdvantageOptions {
  fs::path input;
  fs::path output;
  bool require_full_groups = true;
};

/// Groups are emitted sorted by group_id, rollouts sorted by rollout_id, so
/// the output does not depend on input order.
inline int cmd_advantages(const AdvantageOptions& opt, const RunConfig& cfg, std::ostream& out,
                          std::ostream& log) {
  const GrpoConfig gc = cfg.grpo();
  std::map<std::string, std::vector<RolloutRecord>> groups;
  try {
    for (const auto& line : records::read_jsonl(opt.input)) {
      auto r = records::rollout_record_from_json(line.value,
                                                 opt.input.string() + ":" + std::to_string(line.number));
      groups[r.group_id].push_back(std::move(r));
    }
    for (auto& [id, members] : groups) {
      std::sort(members.begin(), members.end(),
                [](const RolloutRecord& a, const RolloutRecord& b) { return a.rollout_id < b.rollout_id; });
      for (std::size_t i = 1; i < members.size(); ++i)
        if (members[i].rollout_id == members[i - 1].rollout_id)
          throw Error(ErrorCode::Format, "group '" + id + "' repeats rollout '" + members[i].rollout_id + "'");
      if (opt.require_full_groups && members.size() != static_cast<std::size_t>(gc.group_size)) {
        throw Error(ErrorCode::Format, "group '" + id + "' has " + std::to_string(members.size()) +
                                           " rollouts, expected " + std::to_string(gc.group_size));
      }
    }
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }

  std::vector<json> lines;
  try {
    for (const auto& [id, members] : groups)
      lines.push_back(records::group_to_json(id, members, grpo_objective(members, gc)));
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }
  emit(opt.output, jsonl(lines), out);
  return kOk;
}

// ------------------------------------------------------------------ eval

struct EvalOptions {
  fs::path pred_dir;
  fs::path gt_dir;
  fs::path subsets;  // optional JSON {"file": "subset"}
  fs::path json_output;
};

inline std::string percent(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100.0 * v;
  return s.str();
}

inline std::string format_report(const std::vector<SubsetRow>& rows) {
  std::size_t name_width = 6;
  for (const auto& r : rows) name_width = std::max(name_width, r.subset.size());
  std::ostringstream s;
  s << std::left << std::setw(static_cast<int>(name_width)) << "subset" << "  " << std::right
    << std::setw(6) << "gIoU" << "  " << std::setw(6) << "cIoU" << "  " << std::setw(6) << "N" << "\n";
  for (const auto& r : rows) {
    s << std::left << std::setw(static_cast<int>(name_width)) << r.subset << "  " << std::right
      << std::setw(6) << percent(r.giou) << "  " << std::setw(6) << percent(r.ciou) << "  "
      << std::setw(6) << r.count << "\n";
  }
  return s.str();
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& log) {
  std::vector<EvalPair> pairs;
  try {
    const auto gt_names = list_masks(opt.gt_dir);
    const auto pred_names = list_masks(opt.pred_dir);
    std::vector<std::string> unpaired;
    std::set_symmetric_difference(gt_names.begin(), gt_names.end(), pred_names.begin(),
                                  pred_names.end(), std::back_inserter(unpaired));
    if (!unpaired.empty()) throw Error(ErrorCode::Format, "unpaired mask file '" + unpaired.front() + "'");
    if (gt_names.empty()) throw Error(ErrorCode::Format, "no mask files in " + opt.gt_dir.string());

    std::map<std::string, std::string> subset_of;
    if (!opt.subsets.empty()) {
      const json j = json::parse(io::read_file(opt.subsets), nullptr, false);
      if (!j.is_object()) throw Error(ErrorCode::Format, opt.subsets.string() + ": expected {\"file\": \"subset\"}");
      for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) throw Error(ErrorCode::Format, opt.subsets.string() + ": subset names must be strings");
        subset_of[k] = v.get<std::string>();
      }
    }
    for (const auto& name : gt_names) {
      auto it = subset_of.find(name);
      EvalPair p{io::read_mask(opt.gt_dir / name), io::read_mask(opt.pred_dir / name),
                 it == subset_of.end() ? "all" : it->second};
      if (p.gt.width != p.pred.width || p.gt.height != p.pred.height) {
        throw Error(ErrorCode::DimensionMismatch, name + ": prediction and ground truth sizes differ");
      }
      pairs.push_back(std::move(p));
    }
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }

  const auto rows = subset_report(pairs);
  if (!opt.json_output.empty()) {
    json j = json::array();
    for (const auto& r : rows)
      j.push_back({{"subset", r.subset}, {"giou", r.giou}, {"ciou", r.ciou}, {"count", r.count}});
    io::write_file(opt.json_output, json{{"rows", j}}.dump(2) + "\n");
  }
  out << format_report(rows);
  return kOk;
}

// ------------------------------------------------------------------ grasp-select

struct GraspOptions {
  fs::path depth;
  fs::path camera;
  fs::path mask;
  fs::path candidates;
  fs::path output;
  fs::path diagnostics;     // optional per-candidate JSONL
  fs::path target_cloud;    // optional dump of the semantics-aligned subcloud
  int jobs = 1;
};

inline int cmd_grasp_select(const GraspOptions& opt, const RunConfig& cfg, std::ostream& out,
                            std::ostream& log) {
  GraspSelectConfig gc = cfg.grasp();
  gc.jobs = opt.jobs;
  ScenePointCloud scene;
  TargetSubCloud target;
  std::vector<GraspCandidate> candidates;
  try {
    const auto depth = io::read_depth(opt.depth);
    const auto camera = io::read_camera(opt.camera);
    const auto mask = io::read_mask(opt.mask);
    scene = back_project(depth, camera);
    target = extract_subcloud(scene, mask);
    for (const auto& line : records::read_jsonl(opt.candidates)) {
      const std::string where = opt.candidates.string() + ":" + std::to_string(line.number);
      candidates.push_back(records::candidate_from_json(line.value, where, cfg.number("finger_depth"),
                                                        cfg.number("finger_height")));
      validate_candidate(candidates.back(), candidates.size() - 1);
    }
    if (candidates.empty()) throw Error(ErrorCode::Format, opt.candidates.string() + ": no candidates");
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }
  if (!opt.target_cloud.empty()) io::write_cloud(opt.target_cloud, target.points);

  auto write_diagnostics = [&](const GraspSelection& sel) {
    if (opt.diagnostics.empty()) return;
    std::vector<json> lines;
    for (std::size_t i = 0; i < sel.outcomes.size(); ++i)
      lines.push_back(records::outcome_to_json(i, sel.outcomes[i]));
    io::write_file(opt.diagnostics, jsonl(lines));
  };

  try {
    const auto sel = select_grasps(candidates, scene, target, gc);
    write_diagnostics(sel);
    std::vector<json> lines;
    for (std::size_t r = 0; r < sel.selected.size(); ++r)
      lines.push_back(records::selected_to_json(r, sel.selected[r], candidates[sel.selected[r].index]));
    emit(opt.output, jsonl(lines), out);
    return kOk;
  } catch (const NoFeasibleGrasp& e) {
    write_diagnostics(e.diagnostics());
    emit(opt.output, "", out);
    log << "NoFeasibleGrasp: " << e.reason() << "\n";
    return kNoFeasibleGrasp;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }
}

// ------------------------------------------------------------------ small tools

inline int cmd_validate_cot(const fs::path& input, const fs::path& output, const RunConfig& cfg,
                            std::ostream& out, std::ostream& log) {
  std::vector<json> lines;
  std::size_t ok = 0;
  try {
    for (const auto& line : records::read_jsonl(input)) {
      const auto rec = records::cot_from_json(line.value, input.string() + ":" + std::to_string(line.number));
      const auto report = validate_cot_record(rec, cfg.gate_threshold());
      ok += report.ok();
      lines.push_back(records::cot_report_to_json(rec, report));
    }
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }
  emit(output, jsonl(lines), out);
  log << "valid " << ok << " / " << lines.size() << "\n";
  return kOk;
}

struct LowRankOptions {
  fs::path base, up, down, input, output;
};

/// Applies the adapter to every column of the k x n input matrix.
inline int cmd_lowrank(const LowRankOptions& opt, std::ostream& log) {
  try {
    const LowRankAdapter a{io::read_matrix(opt.base), io::read_matrix(opt.up), io::read_matrix(opt.down)};
    const Eigen::MatrixXd xs = io::read_matrix(opt.input);
    io::write_matrix(opt.output, lowrank_apply(a, xs));
    return kOk;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }
}

struct BackprojectOptions {
  fs::path depth, camera, mask, output;
};

/// Writes valid scene points (or only masked ones when a mask is given).
inline int cmd_backproject(const BackprojectOptions& opt, std::ostream& log) {
  try {
    const auto scene = back_project(io::read_depth(opt.depth), io::read_camera(opt.camera));
    std::vector<Vec3> pts;
    if (!opt.mask.empty()) {
      pts = extract_subcloud(scene, io::read_mask(opt.mask)).points;
    } else {
      for (std::size_t i = 0; i < scene.points.size(); ++i)
        if (scene.valid[i]) pts.push_back(scene.points[i]);
    }
    io::write_cloud(opt.output, pts);
    return kOk;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kMalformedInput;
  }
}

inline int cmd_schema_check(std::string_view kind, const fs::path& input, std::ostream& log) {
  try {
    std::size_t n = 0;
    for (const auto& line : records::read_jsonl(input)) {
      records::check_record(kind, line.value, input.string() + ":" + std::to_string(line.number));
      ++n;
    }
    log << "ok: " << n << " " << kind << " records\n";
    return kOk;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidArgument ? kUsage : kMalformedInput;
  }
}

}  // namespace affgr::cli
