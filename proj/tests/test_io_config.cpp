#include <affgr/config.hpp>
#include <affgr/io.hpp>
#include <affgr/records.hpp>

#include <gtest/gtest.h>

#include <cstring>

#include "oracles.hpp"

using namespace affgr;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an affgr::Error";
  return ErrorCode::InvalidArgument;
}

AffordanceMask sample_mask() {
  AffordanceMask m(5, 3);
  m.set(0, 0);
  m.set(4, 2);
  m.set(2, 1);
  return m;
}

}  // namespace

TEST(MaskFiles, PgmAndAgmRoundTrip) {
  const auto m = sample_mask();
  EXPECT_EQ(io::parse_mask(io::encode_mask_pgm(m)), m);
  EXPECT_EQ(io::parse_mask(io::encode_mask_agm(m)), m);
  const auto agm = io::encode_mask_agm(m);
  EXPECT_EQ(agm.substr(0, 4), "AGM1");
  EXPECT_EQ(agm.size(), 4u + 8u + 15u);
  EXPECT_EQ(static_cast<unsigned char>(agm[4]), 5u);  // little-endian width
  EXPECT_EQ(static_cast<unsigned char>(agm[8]), 3u);
}

TEST(MaskFiles, PgmHeaderVariants) {
  // comments and arbitrary whitespace in the header, nonzero = foreground
  const std::string pgm = std::string("P5 # mask\n2\t2\n# max\n255\n") + '\0' + '\7' + '\0' + '\377';
  const auto m = io::parse_mask(pgm);
  EXPECT_FALSE(m.at(0, 0));
  EXPECT_TRUE(m.at(1, 0));
  EXPECT_TRUE(m.at(1, 1));
}

TEST(MaskFiles, CorruptInputs) {
  EXPECT_EQ(code_of([] { io::parse_mask("P5\n2 2\n255\n\1"); }), ErrorCode::Format);
  EXPECT_EQ(code_of([] { io::parse_mask("AGM1\2\0\0\0"); }), ErrorCode::Format);
  EXPECT_EQ(code_of([] { io::parse_mask("JUNK"); }), ErrorCode::Format);
  auto trailing = io::encode_mask_agm(sample_mask()) + "x";
  EXPECT_EQ(code_of([&] { io::parse_mask(trailing); }), ErrorCode::Format);
}

TEST(DepthFiles, RoundTripAsFloat32) {
  DepthFrame d{3, 2, {0.5, 0.0, 1.25, 2.0, 0.125, 3.0}};
  const auto bytes = io::encode_depth(d);
  EXPECT_EQ(bytes.size(), 4u + 8u + 6u * 4u);
  const auto back = io::parse_depth(bytes);
  EXPECT_EQ(back.width, 3);
  EXPECT_EQ(back.height, 2);
  EXPECT_EQ(back.depths, d.depths);
}

TEST(MatrixFiles, RoundTripBitExact) {
  Eigen::MatrixXd m(2, 3);
  m << 1.0 / 3.0, -2.5, 1e-300, 4.0, 0.1, -0.0;
  const auto back = io::parse_matrix(io::encode_matrix(m));
  ASSERT_EQ(back.rows(), 2);
  ASSERT_EQ(back.cols(), 3);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(back(i / 3, i % 3), m(i / 3, i % 3));
  // row-major: the second stored value is m(0, 1)
  const auto bytes = io::encode_matrix(m);
  double second;
  std::memcpy(&second, bytes.data() + 12 + 8, 8);
  EXPECT_EQ(second, -2.5);
}

TEST(CloudFiles, BothEncodings) {
  const std::vector<Vec3> pts = {{0.5, -1.0, 2.0}, {0.25, 0.125, -4.0}};
  EXPECT_EQ(io::parse_cloud(io::encode_cloud_agp(pts)), pts);
  EXPECT_EQ(io::parse_cloud(io::encode_cloud_jsonl(pts)), pts);
  EXPECT_EQ(code_of([] { io::parse_cloud("[1,2]\n"); }), ErrorCode::Format);
}

TEST(CameraFiles, JsonRoundTrip) {
  CameraModel cam;
  cam.fx = 600;
  cam.fy = 610;
  cam.cx = 320;
  cam.cy = 240;
  cam.rotation = Eigen::AngleAxisd(0.3, Vec3::UnitY()).toRotationMatrix();
  cam.translation = Vec3(0.1, 0.2, 0.3);
  const auto back = io::camera_from_json(io::camera_to_json(cam));
  EXPECT_EQ(back.fx, cam.fx);
  EXPECT_EQ(back.rotation, cam.rotation);
  EXPECT_EQ(back.translation, cam.translation);
  auto bad = io::camera_to_json(cam);
  bad["fx"] = -1;
  EXPECT_EQ(code_of([&] { io::camera_from_json(bad); }), ErrorCode::InvalidCamera);
  bad.erase("fx");
  EXPECT_EQ(code_of([&] { io::camera_from_json(bad); }), ErrorCode::Format);
}

TEST(Config, DefaultsMatchModules) {
  const RunConfig cfg;
  const auto r = cfg.rewards();
  const RewardConfig rd;
  EXPECT_EQ(r.iou_threshold, rd.iou_threshold);
  EXPECT_EQ(r.box_l1_threshold_px, rd.box_l1_threshold_px);
  EXPECT_EQ(r.keypoint_l1_threshold_px, rd.keypoint_l1_threshold_px);
  EXPECT_EQ(r.matching, rd.matching);
  const auto g = cfg.grpo();
  const GrpoConfig gd;
  EXPECT_EQ(g.epsilon, gd.epsilon);
  EXPECT_EQ(g.beta, gd.beta);
  EXPECT_EQ(g.std_floor, gd.std_floor);
  EXPECT_EQ(g.group_size, 8);
  const auto s = cfg.grasp();
  const GraspSelectConfig sd;
  EXPECT_EQ(s.voxel, sd.voxel);
  EXPECT_EQ(s.top_k, 10);
  EXPECT_EQ(s.nms_trans, 0.02);
  EXPECT_EQ(s.max_open_width, 0.085);
  EXPECT_FALSE(s.iou_min);
  EXPECT_EQ(cfg.gate_threshold(), 0.6);
  EXPECT_EQ(cfg.number("finger_depth"), GraspCandidate{}.finger_depth);
}

TEST(Config, LayeredOverrides) {
  RunConfig cfg;
  cfg.merge_json(nlohmann::json{{"top_k", 5}, {"epsilon", 0.1}});
  cfg.merge_env({"PATH=/bin", "AFFGR_TOP_K=7", "AFFGR_MATCHING=greedy", "AFFGR_IOU_MIN=0.2"});
  cfg.merge_assignment("top_k=3");
  EXPECT_EQ(cfg.integer("top_k"), 3);
  EXPECT_EQ(cfg.number("epsilon"), 0.1);
  EXPECT_EQ(cfg.rewards().matching, MatchingStrategy::Greedy);
  EXPECT_EQ(cfg.grasp().iou_min, 0.2);
  cfg.merge_assignment("iou_min=null");
  EXPECT_FALSE(cfg.grasp().iou_min);
}

TEST(Config, Rejections) {
  RunConfig cfg;
  EXPECT_EQ(code_of([&] { cfg.merge_assignment("colour=red"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { cfg.merge_env({"AFFGR_NOPE=1"}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { cfg.merge_assignment("top_k=0"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { cfg.merge_assignment("top_k=2.5"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { cfg.merge_assignment("epsilon=1.5"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { cfg.merge_assignment("voxel=-1"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { cfg.merge_assignment("matching=random"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { cfg.merge_assignment("novalue"); }), ErrorCode::InvalidArgument);
  cfg.merge_assignment("beta=0");
  EXPECT_EQ(cfg.grpo().beta, 0.0);
}

TEST(Records, JsonlLineNumbersInErrors) {
  try {
    records::parse_jsonl("{\"a\":1}\n\n{oops\n", "in.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Format);
    EXPECT_NE(std::string(e.what()).find("in.jsonl:3"), std::string::npos) << e.what();
  }
}

TEST(Records, GroundTruthRoundTrip) {
  const auto j = nlohmann::json::parse(
      R"({"id":"g1","image_width":640,"image_height":480,"boxes":[[10,20,110,220]],"keypoints":[[[60,120]]],"aff_method":"grasp","aff_part":"handle"})");
  const auto rec = records::ground_truth_from_json(j, "t");
  EXPECT_EQ(rec.target.boxes[0], (Box2D{10, 20, 110, 220}));
  EXPECT_EQ(records::to_json(rec), j);
  auto bad = j;
  bad["keypoints"] = nlohmann::json::array();
  EXPECT_EQ(code_of([&] { records::ground_truth_from_json(bad, "t"); }), ErrorCode::Format);
}

TEST(Records, SchemaCheckKinds) {
  for (auto kind : records::record_kinds()) EXPECT_FALSE(kind.empty());
  EXPECT_EQ(code_of([] { records::check_record("nonsense", nlohmann::json::object(), "t"); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { records::check_record("rollouts", nlohmann::json{{"rollout_id", "a"}}, "t"); }),
            ErrorCode::Format);
  records::check_record("rollouts",
                        nlohmann::json{{"rollout_id", "a"}, {"group_id", "g"}, {"gt_id", "x"}, {"text", "t"}}, "t");
}
