#include <affgr/cli.hpp>
#include <affgr/synth.hpp>

#include <CLI11.hpp>

#include <iostream>

extern char** environ;

namespace {

namespace fs = std::filesystem;
using namespace affgr;

int write_tabletop(const fs::path& dir) {
  const auto scene = synth::make_tabletop();
  fs::create_directories(dir);
  io::write_depth(dir / "depth.agd", scene.depth);
  io::write_file(dir / "camera.json", io::camera_to_json(scene.camera).dump(2) + "\n");
  io::write_mask(dir / "mask.pgm", scene.mask);
  io::write_mask(dir / "empty_mask.pgm", AffordanceMask(scene.mask.width, scene.mask.height));
  std::string lines;
  for (const auto& g : scene.candidates) lines += records::to_json(g).dump() + "\n";
  io::write_file(dir / "candidates.jsonl", lines);
  std::cerr << "planted candidate index " << scene.planted << "\n";
  return cli::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affordance reasoning and grasp selection batch tools"};
  app.require_subcommand(1);

  fs::path config_file;
  std::vector<std::string> overrides;
  int jobs = 1;
  std::uint64_t seed = 0;
  app.add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override a config key (key=value), repeatable");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "reserved; the core is deterministic");

  cli::PrepOptions prep;
  auto* c_prep = app.add_subcommand("prep", "box-point prompts and self-consistency gate");
  c_prep->add_option("--masks", prep.masks_dir, "mask directory")->required();
  c_prep->add_option("--records", prep.records, "JSONL {id, image_ref, mask}; default: every mask in --masks");
  c_prep->add_option("--oracle", prep.oracle, "identity | empty | box | dir:<path>");
  c_prep->add_option("-o,--output", prep.output, "prompts JSONL (default stdout)");

  cli::ScoreOptions score;
  auto* c_score = app.add_subcommand("score", "reward breakdown per rollout");
  c_score->add_option("--rollouts", score.rollouts)->required();
  c_score->add_option("--ground-truth", score.ground_truth)->required();
  c_score->add_option("-o,--output", score.output);

  cli::AdvantageOptions adv;
  auto* c_adv = app.add_subcommand("advantages", "group advantages and clipped objective");
  c_adv->add_option("--input", adv.input, "JSONL with group_id, rollout_id, reward, logprob_*")->required();
  c_adv->add_option("-o,--output", adv.output);

  cli::EvalOptions eval;
  auto* c_eval = app.add_subcommand("eval", "gIoU / cIoU report");
  c_eval->add_option("--pred", eval.pred_dir)->required();
  c_eval->add_option("--gt", eval.gt_dir)->required();
  c_eval->add_option("--subsets", eval.subsets, "JSON {\"file\": \"subset\"}");
  c_eval->add_option("--json", eval.json_output, "also write the report as JSON");

  cli::GraspOptions grasp;
  auto* c_grasp = app.add_subcommand("grasp-select", "filter and rank grasp candidates");
  c_grasp->add_option("--depth", grasp.depth)->required();
  c_grasp->add_option("--camera", grasp.camera)->required();
  c_grasp->add_option("--mask", grasp.mask)->required();
  c_grasp->add_option("--candidates", grasp.candidates)->required();
  c_grasp->add_option("-o,--output", grasp.output);
  c_grasp->add_option("--diagnostics", grasp.diagnostics, "per-candidate stage JSONL");
  c_grasp->add_option("--target-cloud", grasp.target_cloud, "write the target subcloud (.jsonl or AGP1)");

  fs::path cot_in, cot_out;
  auto* c_cot = app.add_subcommand("validate-cot", "structural checks on reasoning records");
  c_cot->add_option("--input", cot_in)->required();
  c_cot->add_option("-o,--output", cot_out);

  cli::LowRankOptions lr;
  auto* c_lr = app.add_subcommand("lowrank", "apply W0 x + up (down^T x) to each column of --input");
  c_lr->add_option("--base", lr.base)->required();
  c_lr->add_option("--up", lr.up)->required();
  c_lr->add_option("--down", lr.down)->required();
  c_lr->add_option("--input", lr.input)->required();
  c_lr->add_option("-o,--output", lr.output)->required();

  cli::BackprojectOptions bp;
  auto* c_bp = app.add_subcommand("backproject", "depth image to point cloud");
  c_bp->add_option("--depth", bp.depth)->required();
  c_bp->add_option("--camera", bp.camera)->required();
  c_bp->add_option("--mask", bp.mask, "keep only masked pixels");
  c_bp->add_option("-o,--output", bp.output)->required();

  std::string kind;
  fs::path schema_in;
  auto* c_schema = app.add_subcommand("schema-check", "validate a JSONL file against a record schema");
  std::vector<std::string> kinds;
  for (auto k : records::record_kinds()) kinds.emplace_back(k);
  c_schema->add_option("kind", kind)->required()->check(CLI::IsMember(kinds));
  c_schema->add_option("file", schema_in)->required();

  auto* c_config = app.add_subcommand("config", "print the effective configuration");

  fs::path synth_dir;
  auto* c_synth = app.add_subcommand("synth-tabletop", "write the synthetic tabletop fixture");
  c_synth->add_option("dir", synth_dir)->required();

  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  try {
    if (!config_file.empty()) {
      const auto j = nlohmann::json::parse(io::read_file(config_file), nullptr, false);
      if (j.is_discarded()) throw Error(ErrorCode::Format, config_file.string() + ": not valid JSON");
      cfg.merge_json(j, config_file.string());
    }
    std::vector<std::string> env;
    for (char** e = environ; e && *e; ++e) env.emplace_back(*e);
    cfg.merge_env(env);
    for (const auto& o : overrides) cfg.merge_assignment(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kUsage;
  }
  prep.gate_threshold = cfg.gate_threshold();
  prep.jobs = score.jobs = grasp.jobs = jobs;

  try {
    if (*c_prep) return cli::cmd_prep(prep, std::cout, std::cerr);
    if (*c_score) return cli::cmd_score(score, cfg, std::cout, std::cerr);
    if (*c_adv) return cli::cmd_advantages(adv, cfg, std::cout, std::cerr);
    if (*c_eval) return cli::cmd_eval(eval, std::cout, std::cerr);
    if (*c_grasp) return cli::cmd_grasp_select(grasp, cfg, std::cout, std::cerr);
    if (*c_cot) return cli::cmd_validate_cot(cot_in, cot_out, cfg, std::cout, std::cerr);
    if (*c_lr) return cli::cmd_lowrank(lr, std::cerr);
    if (*c_bp) return cli::cmd_backproject(bp, std::cerr);
    if (*c_schema) return cli::cmd_schema_check(kind, schema_in, std::cerr);
    if (*c_config) {
      std::cout << cfg.to_json().dump(2) << "\n";
      return cli::kOk;
    }
    if (*c_synth) return write_tabletop(synth_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::Io ? cli::kMalformedInput : cli::kUsage;
  }
  return cli::kUsage;
}
