#pragma once

// Synthetic tabletop scene: a top-down camera 0.6 m above a table with a
// target block and a taller distractor block, plus grasp candidates with one
// planted top-down grasp on the target.

#include <affgr/graspgeom.hpp>
#include <affgr/mask.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace affgr::synth {

struct Block {
  double x0, x1, y0, y1, height;
};

struct TabletopScene {
  CameraModel camera;
  DepthFrame depth;
  AffordanceMask mask;
  std::vector<GraspCandidate> candidates;
  std::size_t planted = 0;
};

inline constexpr double kCameraHeight = 0.6;

/// Closing axis world x, approach straight down, lateral world y.
inline Mat3 top_down(double yaw = 0.0) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 r;
  r.col(0) = Vec3(c, s, 0);
  r.col(1) = Vec3(0, 0, -1);
  r.col(2) = r.col(0).cross(r.col(1));
  return r;
}

inline TabletopScene make_tabletop(int width = 160, int height = 120) {
  TabletopScene s;
  s.camera.fx = s.camera.fy = 150.0;
  s.camera.cx = width / 2.0;
  s.camera.cy = height / 2.0;
  s.camera.rotation = Mat3(Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal());
  s.camera.translation = Vec3(0, 0, kCameraHeight);

  const Block target{-0.03, 0.03, -0.02, 0.02, 0.05};
  const Block distractor{0.12, 0.18, -0.03, 0.03, 0.08};

  s.depth.width = width;
  s.depth.height = height;
  s.depth.depths.assign(static_cast<std::size_t>(width) * height, kCameraHeight);
  s.mask = AffordanceMask(width, height);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * width + u;
      // top faces only; the nearest face wins
      for (const Block* b : {&target, &distractor}) {
        const double d = kCameraHeight - b->height;
        const double x = (u - s.camera.cx) * d / s.camera.fx;
        const double y = -(v - s.camera.cy) * d / s.camera.fy;
        if (x < b->x0 || x > b->x1 || y < b->y0 || y > b->y1 || d >= s.depth.depths[i]) continue;
        s.depth.depths[i] = d;
        s.mask.bits[i] = b == &target;
      }
    }
  }

  auto grasp = [](Vec3 c, double yaw, double width, double score) {
    GraspCandidate g;
    g.center = c;
    g.rotation = top_down(yaw);
    g.width = width;
    g.score = score;
    return g;
  };
  // Planted: centered on the target top, closing across its long side.
  s.candidates.push_back(grasp(Vec3(0, 0, target.height), 0.0, 0.075, 0.6));
  s.planted = 0;
  // Confident decoys in free space above the table: no target overlap.
  for (int k = 0; k < 10; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 10.0;
    s.candidates.push_back(
        grasp(Vec3(-0.15 + 0.05 * std::cos(a), 0.12 + 0.05 * std::sin(a), 0.15), a, 0.07, 0.95 - 0.01 * k));
  }
  // Less confident decoys clipping the edge of the target.
  for (int k = 0; k < 10; ++k) {
    const double dy = (k % 2 ? 1.0 : -1.0) * (0.022 + 0.002 * (k / 2));
    const double dz = 0.002 * k;
    s.candidates.push_back(grasp(Vec3(0.004 * (k - 5), dy, target.height + dz), 0.05 * k, 0.075, 0.5 - 0.02 * k));
  }
  return s;
}

}  // namespace affgr::synth
