#pragma once

// Grasp selection geometry: depth back-projection, mask-guided subcloud
// extraction, closing-volume 3D IoU against the target, collision and
// width feasibility, confidence NMS and Top-K selection.

#include <affgr/error.hpp>
#include <affgr/mask.hpp>
#include <affgr/parallel.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace affgr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline bool is_rotation(const Mat3& r, double tol = 1e-6) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// Pinhole intrinsics plus camera-to-world extrinsics.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::InvalidCamera, "focal lengths must be positive");
    if (!is_rotation(rotation)) throw Error(ErrorCode::InvalidCamera, "rotation is not a proper rotation");
  }
};

/// Depth along the optical axis in meters; 0 or non-finite marks invalid.
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<double> depths;

  bool valid(std::size_t i) const { return std::isfinite(depths[i]) && depths[i] > 0.0; }
};

/// Pixel-ordered cloud; invalid pixels keep their slot with valid = 0.
struct ScenePointCloud {
  int width = 0;
  int height = 0;
  std::vector<Vec3> points;
  std::vector<std::uint8_t> valid;

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
  }
};

struct TargetSubCloud {
  std::vector<Vec3> points;
  std::vector<std::size_t> pixels;  // row-major source pixel of each point

  bool empty() const { return points.empty(); }
};

/// Rotation columns are (closing, approach, lateral) axes.
struct GraspCandidate {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  double width = 0.08;
  double finger_depth = 0.04;
  double finger_height = 0.02;
  double score = 0.0;
};

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 half_extents = Vec3::Ones();

  double volume() const { return 8.0 * half_extents.prod(); }

  bool contains(const Vec3& p, double tol = 1e-9) const {
    const Vec3 local = rotation.transpose() * (p - center);
    return (local.cwiseAbs() - half_extents).maxCoeff() <= tol;
  }

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out;
    for (int i = 0; i < 8; ++i) {
      const Vec3 sign((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
      out[static_cast<std::size_t>(i)] = center + rotation * sign.cwiseProduct(half_extents);
    }
    return out;
  }
};

inline ScenePointCloud back_project(const DepthFrame& depth, const CameraModel& cam) {
  cam.validate();
  const std::size_t n = static_cast<std::size_t>(depth.width) * depth.height;
  if (depth.width <= 0 || depth.height <= 0 || depth.depths.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "depth buffer does not match its dimensions");
  }
  ScenePointCloud cloud{depth.width, depth.height, std::vector<Vec3>(n, Vec3::Zero()),
                        std::vector<std::uint8_t>(n, 0)};
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * depth.width + u;
      if (!depth.valid(i)) continue;
      const double d = depth.depths[i];
      const Vec3 p((u - cam.cx) * d / cam.fx, (v - cam.cy) * d / cam.fy, d);
      cloud.points[i] = cam.rotation * p + cam.translation;
      cloud.valid[i] = 1;
    }
  }
  return cloud;
}

struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Inverse of back_project for a single world point.
inline PixelDepth forward_project(const Vec3& world, const CameraModel& cam) {
  const Vec3 p = cam.rotation.transpose() * (world - cam.translation);
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, p.z()};
}

inline TargetSubCloud extract_subcloud(const ScenePointCloud& cloud, const AffordanceMask& mask) {
  if (mask.width != cloud.width || mask.height != cloud.height) {
    throw Error(ErrorCode::DimensionMismatch, "mask and cloud dimensions differ");
  }
  TargetSubCloud out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (cloud.valid[i] && mask.bits[i]) {
      out.points.push_back(cloud.points[i]);
      out.pixels.push_back(i);
    }
  }
  return out;
}

inline OrientedBox closing_volume(const GraspCandidate& g) {
  return {g.center, g.rotation, Vec3(g.width / 2.0, g.finger_depth / 2.0, g.finger_height / 2.0)};
}

namespace detail {

using Polygon = std::vector<Vec3>;

inline std::vector<Polygon> box_faces(const OrientedBox& b) {
  const auto c = b.corners();
  // corner index bits: 1 = +x, 2 = +y, 4 = +z
  static constexpr std::array<std::array<int, 4>, 6> kFaces{{
      {1, 3, 7, 5},  // +x
      {0, 4, 6, 2},  // -x
      {2, 6, 7, 3},  // +y
      {0, 1, 5, 4},  // -y
      {4, 5, 7, 6},  // +z
      {0, 2, 3, 1},  // -z
  }};
  std::vector<Polygon> faces;
  for (const auto& f : kFaces) {
    faces.push_back({c[static_cast<std::size_t>(f[0])], c[static_cast<std::size_t>(f[1])],
                     c[static_cast<std::size_t>(f[2])], c[static_cast<std::size_t>(f[3])]});
  }
  return faces;
}

inline Vec3 polygon_area_vector(const Polygon& poly) {
  Vec3 acc = Vec3::Zero();
  for (std::size_t i = 1; i + 1 < poly.size(); ++i)
    acc += (poly[i] - poly[0]).cross(poly[i + 1] - poly[0]);
  return 0.5 * acc;
}

// Keeps the part of a convex polyhedron with normal . x <= offset.
inline std::vector<Polygon> clip_polyhedron(const std::vector<Polygon>& faces, const Vec3& normal,
                                            double offset, double eps) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& f : faces)
    for (const auto& p : f) {
      const double s = normal.dot(p) - offset;
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  if (hi <= eps) return faces;
  if (lo >= -eps) return {};

  std::vector<Polygon> out;
  std::vector<Vec3> cap;
  for (const auto& face : faces) {
    Polygon clipped;
    for (std::size_t i = 0; i < face.size(); ++i) {
      const Vec3& a = face[i];
      const Vec3& b = face[(i + 1) % face.size()];
      const double sa = normal.dot(a) - offset;
      const double sb = normal.dot(b) - offset;
      const bool ina = sa <= eps, inb = sb <= eps;
      if (ina) {
        clipped.push_back(a);
        if (std::abs(sa) <= eps) cap.push_back(a);
      }
      if (ina != inb && std::abs(sa) > eps && std::abs(sb) > eps) {
        const Vec3 x = a + (sa / (sa - sb)) * (b - a);
        clipped.push_back(x);
        cap.push_back(x);
      }
    }
    if (clipped.size() >= 3) out.push_back(std::move(clipped));
  }

  std::vector<Vec3> unique;
  for (const auto& p : cap) {
    const bool seen = std::any_of(unique.begin(), unique.end(),
                                  [&](const Vec3& q) { return (p - q).norm() <= 10.0 * eps; });
    if (!seen) unique.push_back(p);
  }
  if (unique.size() >= 3) {
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : unique) centroid += p;
    centroid /= static_cast<double>(unique.size());
    const Vec3 u = normal.unitOrthogonal();
    const Vec3 v = normal.cross(u);
    std::sort(unique.begin(), unique.end(), [&](const Vec3& a, const Vec3& b) {
      return std::atan2((a - centroid).dot(v), (a - centroid).dot(u)) <
             std::atan2((b - centroid).dot(v), (b - centroid).dot(u));
    });
    out.push_back(std::move(unique));
  }
  return out;
}

// Cone decomposition from an interior reference point; orientation-free.
inline double convex_volume(const std::vector<Polygon>& faces) {
  Vec3 ref = Vec3::Zero();
  std::size_t count = 0;
  for (const auto& f : faces)
    for (const auto& p : f) ref += p, ++count;
  if (count == 0) return 0.0;
  ref /= static_cast<double>(count);
  double volume = 0.0;
  for (const auto& f : faces) {
    const Vec3 area = polygon_area_vector(f);
    const double a = area.norm();
    if (a <= 0.0) continue;
    volume += a * std::abs((area / a).dot(f[0] - ref)) / 3.0;
  }
  return volume;
}

}  // namespace detail

/// Exact intersection volume: box b clipped by the six half-spaces of box a.
inline double box_overlap_volume(const OrientedBox& a, const OrientedBox& b) {
  // work relative to a's center
  OrientedBox local_b = b;
  local_b.center = b.center - a.center;
  auto faces = detail::box_faces(local_b);
  const double scale = a.half_extents.sum() + b.half_extents.sum() + (b.center - a.center).norm();
  const double eps = 1e-12 * scale;
  for (int axis = 0; axis < 3 && !faces.empty(); ++axis) {
    const Vec3 n = a.rotation.col(axis);
    faces = detail::clip_polyhedron(faces, n, a.half_extents[axis], eps);
    if (!faces.empty()) faces = detail::clip_polyhedron(faces, -n, a.half_extents[axis], eps);
  }
  return std::min({detail::convex_volume(faces), a.volume(), b.volume()});
}

inline double box_iou_3d(const OrientedBox& a, const OrientedBox& b) {
  const double inter = box_overlap_volume(a, b);
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct TargetIou {
  double iou = 0.0;
  bool empty_target = false;
  bool empty_box = false;
  std::size_t box_voxels = 0;
  std::size_t target_voxels = 0;
  std::size_t intersection = 0;
};

/// Voxel IoU between the closing volume and the occupied target voxels. The
/// grid is anchored at the target centroid and aligned with the candidate's
/// axes, so the score is unchanged by a rigid motion of the whole scene.
inline TargetIou grasp_target_iou(const GraspCandidate& g, const TargetSubCloud& target,
                                  double voxel = 0.005) {
  if (!(voxel > 0.0)) throw Error(ErrorCode::InvalidArgument, "voxel size must be positive");
  TargetIou out;
  if (target.empty()) {
    out.empty_target = true;
    return out;
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : target.points) centroid += p;
  centroid /= static_cast<double>(target.points.size());

  const Mat3 rt = g.rotation.transpose();
  using Key = std::array<std::int64_t, 3>;
  std::vector<Key> keys;
  keys.reserve(target.points.size());
  for (const auto& p : target.points) {
    const Vec3 q = rt * (p - centroid) / voxel;
    keys.push_back({static_cast<std::int64_t>(std::floor(q.x() + 0.5)),
                    static_cast<std::int64_t>(std::floor(q.y() + 0.5)),
                    static_cast<std::int64_t>(std::floor(q.z() + 0.5))});
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  out.target_voxels = keys.size();

  // voxel centers k * voxel inside |k * voxel - offset| <= half extent
  constexpr double tol = 1e-9;
  const Vec3 offset = rt * (g.center - centroid) / voxel;
  const Vec3 half = closing_volume(g).half_extents / voxel;
  Key lo{}, hi{};
  std::size_t box_count = 1;
  for (int i = 0; i < 3; ++i) {
    lo[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::ceil(offset[i] - half[i] - tol));
    hi[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor(offset[i] + half[i] + tol));
    const auto span = hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)] + 1;
    box_count = span > 0 ? box_count * static_cast<std::size_t>(span) : 0;
  }
  out.box_voxels = box_count;
  if (box_count == 0) {
    out.empty_box = true;
    return out;
  }
  for (const auto& k : keys) {
    bool inside = true;
    for (std::size_t i = 0; i < 3; ++i) inside = inside && k[i] >= lo[i] && k[i] <= hi[i];
    out.intersection += inside;
  }
  const std::size_t uni = out.box_voxels + out.target_voxels - out.intersection;
  out.iou = static_cast<double>(out.intersection) / static_cast<double>(uni);
  return out;
}

/// Solid parts of a parallel-jaw gripper around its closing volume.
struct GripperGeometry {
  double finger_thickness = 0.01;
  double base_depth = 0.02;
};

/// Two fingers flanking the closing volume along the closing axis, and a
/// palm behind it along the approach axis.
inline std::array<OrientedBox, 3> gripper_bodies(const GraspCandidate& g,
                                                 const GripperGeometry& geo = {}) {
  const double hw = g.width / 2.0, hd = g.finger_depth / 2.0, hh = g.finger_height / 2.0;
  const double ht = geo.finger_thickness / 2.0;
  auto body = [&](const Vec3& local_center, const Vec3& half) {
    return OrientedBox{g.center + g.rotation * local_center, g.rotation, half};
  };
  return {body(Vec3(hw + ht, 0, 0), Vec3(ht, hd, hh)),
          body(Vec3(-hw - ht, 0, 0), Vec3(ht, hd, hh)),
          body(Vec3(0, -hd - geo.base_depth / 2.0, 0),
               Vec3(hw + geo.finger_thickness, geo.base_depth / 2.0, hh))};
}

namespace detail {

// Uniform hash grid answering "is any target point within r of p".
class ProximityIndex {
 public:
  ProximityIndex(const std::vector<Vec3>& points, double radius)
      : points_(points), radius_(radius), cell_(std::max(radius, 1e-4)) {
    for (std::size_t i = 0; i < points_.size(); ++i) cells_[key(cell_of(points_[i]))].push_back(i);
  }

  bool near(const Vec3& p) const {
    const auto c = cell_of(p);
    const double r2 = radius_ * radius_;
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (auto i : it->second)
            if ((points_[i] - p).squaredNorm() <= r2) return true;
        }
    return false;
  }

 private:
  using Cell = std::array<std::int64_t, 3>;

  Cell cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
            static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }
  static std::uint64_t key(const Cell& c) {
    auto mix = [](std::int64_t v) { return static_cast<std::uint64_t>(v) * 0x9E3779B97F4A7C15ULL; };
    return mix(c[0]) ^ (mix(c[1]) >> 1) ^ (mix(c[2]) << 1) ^ static_cast<std::uint64_t>(c[2]);
  }

  const std::vector<Vec3>& points_;
  double radius_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace detail

struct CollisionResult {
  bool feasible = true;
  std::size_t offending = 0;
};

namespace detail {

inline CollisionResult collision_check(const GraspCandidate& g, const ScenePointCloud& scene,
                                       const ProximityIndex& exempt, const GripperGeometry& geo) {
  const auto bodies = gripper_bodies(g, geo);
  CollisionResult out;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    if (!scene.valid[i]) continue;
    const Vec3& p = scene.points[i];
    const bool hit = std::any_of(bodies.begin(), bodies.end(),
                                 [&](const OrientedBox& b) { return b.contains(p); });
    if (hit && !exempt.near(p)) ++out.offending;
  }
  out.feasible = out.offending == 0;
  return out;
}

}  // namespace detail

/// Scene points inside a finger or the palm collide unless they lie within
/// `clearance` of some target point.
inline CollisionResult collision_check(const GraspCandidate& g, const ScenePointCloud& scene,
                                       const TargetSubCloud& target, double clearance,
                                       const GripperGeometry& geo = {}) {
  if (clearance < 0.0) throw Error(ErrorCode::InvalidArgument, "clearance must be non-negative");
  const detail::ProximityIndex exempt(target.points, clearance);
  return detail::collision_check(g, scene, exempt, geo);
}

/// Geodesic angle between two rotations, in radians.
inline double rotation_angle(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

inline constexpr double kDefaultNmsTranslation = 0.02;
inline constexpr double kDefaultNmsRotation = std::numbers::pi / 6.0;

/// Greedy NMS in descending score order (ties by index). A candidate is
/// suppressed only when a kept one is close in BOTH translation and rotation.
/// Returns kept indices into `candidates`, best first.
inline std::vector<std::size_t> grasp_nms(const std::vector<GraspCandidate>& candidates,
                                          double trans_thresh = kDefaultNmsTranslation,
                                          double rot_thresh = kDefaultNmsRotation) {
  if (!(trans_thresh > 0.0) || !(rot_thresh > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "NMS thresholds must be positive");
  }
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].score > candidates[b].score;
  });
  std::vector<std::size_t> kept;
  for (auto i : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return (candidates[i].center - candidates[k].center).norm() <= trans_thresh &&
             rotation_angle(candidates[i].rotation, candidates[k].rotation) <= rot_thresh;
    });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

struct GraspSelectConfig {
  double voxel = 0.005;
  double clearance = 0.003;
  int top_k = 10;
  std::optional<double> iou_min;
  double nms_trans = kDefaultNmsTranslation;
  double nms_rot = kDefaultNmsRotation;
  double max_open_width = 0.085;  // Robotiq 2F-85 stroke
  GripperGeometry geometry;
  int jobs = 1;
};

/// Where each candidate left the pipeline.
enum class GraspStage { Selected, Width, Collision, NoOverlap, IouThreshold, TopK, Nms };

constexpr std::string_view to_string(GraspStage s) {
  switch (s) {
    case GraspStage::Selected: return "selected";
    case GraspStage::Width: return "width";
    case GraspStage::Collision: return "collision";
    case GraspStage::NoOverlap: return "no-overlap";
    case GraspStage::IouThreshold: return "iou-threshold";
    case GraspStage::TopK: return "top-k";
    case GraspStage::Nms: return "nms";
  }
  return "unknown";
}

struct CandidateOutcome {
  GraspStage stage = GraspStage::Selected;
  std::size_t offending_points = 0;
  std::optional<TargetIou> iou;
  std::optional<std::size_t> rank;
};

struct SelectedGrasp {
  std::size_t index = 0;
  double iou = 0.0;
  double score = 0.0;
};

struct GraspSelection {
  std::vector<SelectedGrasp> selected;   // final ranking, best first
  std::vector<std::size_t> pre_nms;      // Top-K survivors in IoU order
  std::vector<CandidateOutcome> outcomes;  // parallel to the input
};

class NoFeasibleGrasp : public Error {
 public:
  NoFeasibleGrasp(std::string reason, GraspSelection diagnostics)
      : Error(ErrorCode::NoFeasibleGrasp, reason),
        reason_(std::move(reason)),
        diagnostics_(std::move(diagnostics)) {}

  /// One of: empty-target, width, collision, no-overlap, iou-threshold.
  const std::string& reason() const noexcept { return reason_; }
  const GraspSelection& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string reason_;
  GraspSelection diagnostics_;
};

inline void validate_candidate(const GraspCandidate& g, std::size_t index) {
  if (!is_rotation(g.rotation)) {
    throw Error(ErrorCode::InvalidArgument,
                "candidate " + std::to_string(index) + " rotation is not orthonormal");
  }
  if (!(g.finger_depth > 0.0) || !(g.finger_height > 0.0)) {
    throw Error(ErrorCode::InvalidArgument,
                "candidate " + std::to_string(index) + " finger dimensions must be positive");
  }
}

/// Feasibility filter, Top-K by target IoU, then confidence-ranked NMS.
/// Throws NoFeasibleGrasp naming the stage that emptied the list.
inline GraspSelection select_grasps(const std::vector<GraspCandidate>& candidates,
                                    const ScenePointCloud& scene, const TargetSubCloud& target,
                                    const GraspSelectConfig& cfg = {}) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no grasp candidates");
  if (cfg.top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be at least 1");
  for (std::size_t i = 0; i < candidates.size(); ++i) validate_candidate(candidates[i], i);

  GraspSelection sel;
  sel.outcomes.assign(candidates.size(), {});
  if (target.empty()) {
    for (auto& o : sel.outcomes) o.stage = GraspStage::NoOverlap;
    throw NoFeasibleGrasp("empty-target", std::move(sel));
  }

  std::vector<std::size_t> alive;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double w = candidates[i].width;
    if (!(w > 0.0) || w > cfg.max_open_width) sel.outcomes[i].stage = GraspStage::Width;
    else alive.push_back(i);
  }
  if (alive.empty()) throw NoFeasibleGrasp("width", std::move(sel));

  // Stage 1b + 2: collision and target IoU per surviving candidate.
  const detail::ProximityIndex exempt(target.points, cfg.clearance);
  std::vector<CollisionResult> collisions(alive.size());
  std::vector<TargetIou> ious(alive.size());
  parallel_for(alive.size(), cfg.jobs, [&](std::size_t j) {
    const auto& g = candidates[alive[j]];
    collisions[j] = detail::collision_check(g, scene, exempt, cfg.geometry);
    if (collisions[j].feasible) ious[j] = grasp_target_iou(g, target, cfg.voxel);
  });

  std::vector<std::size_t> feasible;
  for (std::size_t j = 0; j < alive.size(); ++j) {
    auto& o = sel.outcomes[alive[j]];
    o.offending_points = collisions[j].offending;
    if (!collisions[j].feasible) {
      o.stage = GraspStage::Collision;
      continue;
    }
    o.iou = ious[j];
    feasible.push_back(alive[j]);
  }
  if (feasible.empty()) throw NoFeasibleGrasp("collision", std::move(sel));

  std::vector<std::size_t> overlapping;
  for (auto i : feasible) {
    if (sel.outcomes[i].iou->iou > 0.0) overlapping.push_back(i);
    else sel.outcomes[i].stage = GraspStage::NoOverlap;
  }
  if (overlapping.empty()) throw NoFeasibleGrasp("no-overlap", std::move(sel));

  std::vector<std::size_t> passing;
  for (auto i : overlapping) {
    if (cfg.iou_min && sel.outcomes[i].iou->iou < *cfg.iou_min) {
      sel.outcomes[i].stage = GraspStage::IouThreshold;
    } else {
      passing.push_back(i);
    }
  }
  if (passing.empty()) throw NoFeasibleGrasp("iou-threshold", std::move(sel));

  std::stable_sort(passing.begin(), passing.end(), [&](std::size_t a, std::size_t b) {
    const double ia = sel.outcomes[a].iou->iou, ib = sel.outcomes[b].iou->iou;
    if (ia != ib) return ia > ib;
    return candidates[a].score > candidates[b].score;
  });
  const std::size_t k = std::min(passing.size(), static_cast<std::size_t>(cfg.top_k));
  for (std::size_t j = k; j < passing.size(); ++j) sel.outcomes[passing[j]].stage = GraspStage::TopK;
  passing.resize(k);
  sel.pre_nms = passing;

  // Stage 3: confidence ranking + NMS over the Top-K survivors.
  std::vector<GraspCandidate> shortlist;
  shortlist.reserve(passing.size());
  std::vector<std::size_t> by_index = passing;
  std::sort(by_index.begin(), by_index.end());
  for (auto i : by_index) shortlist.push_back(candidates[i]);
  const auto kept = grasp_nms(shortlist, cfg.nms_trans, cfg.nms_rot);
  for (auto i : by_index) sel.outcomes[i].stage = GraspStage::Nms;
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const std::size_t i = by_index[kept[r]];
    sel.outcomes[i].stage = GraspStage::Selected;
    sel.outcomes[i].rank = r;
    sel.selected.push_back({i, sel.outcomes[i].iou->iou, candidates[i].score});
  }
  return sel;
}

}  // namespace affgr
