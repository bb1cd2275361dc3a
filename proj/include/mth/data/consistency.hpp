#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mth/types.hpp"

namespace mth {

/// A body part adjacent to each joint, used when stamping a joint's exact
/// depth into the maps it belongs to.
inline constexpr std::array<uint8_t, kNumJoints> kJointPrimaryPart = {
    10,  // R.Ankle  -> Lower R.Leg
    9,   // R.Knee   -> Upper R.Leg
    9,   // R.Hip    -> Upper R.Leg
    12,  // L.Hip    -> Upper L.Leg
    12,  // L.Knee   -> Upper L.Leg
    13,  // L.Ankle  -> Lower L.Leg
    2,   // Pelvis   -> Torso
    2,   // Thorax   -> Torso
    1,   // Upper Neck -> Head
    1,   // Head Top   -> Head
    4,   // R.Wrist  -> Lower R.Arm
    3,   // R.Elbow  -> Upper R.Arm
    3,   // R.Shoulder -> Upper R.Arm
    6,   // L.Shoulder -> Upper L.Arm
    6,   // L.Elbow    -> Upper L.Arm
    7,   // L.Wrist    -> Lower L.Arm
};

/// Write each visible joint's exact depth (and an adjacent part label) into
/// the maps at the joint's pixel. Joints that turn out to sit behind nearer
/// geometry are flagged invisible instead. Keeps the mask/depth/joint
/// consistency contract exact through resampling transforms.
inline void restamp_visible_joints(Sample& s) {
  for (int j = 0; j < kNumJoints; ++j) {
    if (!s.visible[static_cast<size_t>(j)]) continue;
    const Vec2& p = s.joints2d[static_cast<size_t>(j)];
    int ix = static_cast<int>(std::floor(p.x));
    int iy = static_cast<int>(std::floor(p.y));
    if (ix < 0 || ix >= s.width || iy < 0 || iy >= s.height) {
      s.visible[static_cast<size_t>(j)] = false;
      continue;
    }
    float z = static_cast<float>(s.joints3d[static_cast<size_t>(j)].z);
    float cur = s.depth.at(iy, ix);
    if (cur < z - 0.5f) {
      s.visible[static_cast<size_t>(j)] = false;  // occluded by nearer geometry
      continue;
    }
    s.depth.at(iy, ix) = z;
    s.part_mask.at(iy, ix) = kJointPrimaryPart[static_cast<size_t>(j)];
  }
}

/// Modal-consistency pass: (a) mask foreground == finite-depth pixels,
/// (b) visible 2D joints equal projected 3D joints within 0.5 px,
/// (c) visible joint z-values lie within the foreground depth range.
inline std::vector<std::string> validate_sample(const Sample& s) {
  std::vector<std::string> violations;
  auto flag = [&](const std::string& msg) {
    violations.push_back(s.subject_id + "/" + s.frame_id + ": " + msg);
  };

  float fg_min = 0, fg_max = 0;
  bool any_fg = false;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      bool fg_mask = s.part_mask.at(y, x) != kBackgroundPart;
      bool fg_depth = std::isfinite(s.depth.at(y, x));
      if (fg_mask != fg_depth) {
        flag("mask/depth disagreement at (" + std::to_string(x) + "," +
             std::to_string(y) + ")");
        break;  // one message per modality pair is enough
      }
      if (fg_depth) {
        float d = s.depth.at(y, x);
        if (!any_fg) {
          fg_min = fg_max = d;
          any_fg = true;
        } else {
          fg_min = std::min(fg_min, d);
          fg_max = std::max(fg_max, d);
        }
      }
    }

  for (int j = 0; j < kNumJoints; ++j) {
    if (!s.visible[static_cast<size_t>(j)]) continue;
    std::string jn(joint_name(j));
    const Vec2& p2 = s.joints2d[static_cast<size_t>(j)];
    if (p2.x < 0 || p2.x >= s.width || p2.y < 0 || p2.y >= s.height)
      flag("visible joint " + jn + " outside frame");
    Vec2 proj = project(s.intrinsics, s.joints3d[static_cast<size_t>(j)]);
    if (std::abs(proj.x - p2.x) > 0.5 || std::abs(proj.y - p2.y) > 0.5)
      flag("joint " + jn + " 2D/3D projection mismatch");
    double z = s.joints3d[static_cast<size_t>(j)].z;
    if (!any_fg || z < fg_min - 0.01 || z > fg_max + 0.01)
      flag("joint " + jn + " depth outside foreground range");
  }
  return violations;
}

inline std::vector<std::string> validate_dataset(const std::vector<Sample>& samples) {
  std::vector<std::string> all;
  for (const Sample& s : samples) {
    auto v = validate_sample(s);
    all.insert(all.end(), v.begin(), v.end());
  }
  return all;
}

}  // namespace mth
