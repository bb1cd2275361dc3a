#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "mth/core/rng.hpp"
#include "mth/data/consistency.hpp"
#include "mth/types.hpp"

namespace mth {

struct SyntheticFigureParams {
  uint64_t seed = 1;
  int resolution = 256;
  double depth_min_mm = 1900;    // root depth range
  double depth_max_mm = 2500;
  double body_scale_lo = 0.9;
  double body_scale_hi = 1.1;
  double width_scale_lo = 0.9;
  double width_scale_hi = 1.15;
  double pose_amplitude = 1.0;   // scales joint-angle ranges
  int background_mode = 1;       // 0 flat, 1 gradient, 2 noise
  int frames_per_subject = 10;

  void validate() const {
    if (resolution < 32) throw std::invalid_argument("synthetic: resolution too small");
    if (!(depth_min_mm < depth_max_mm))
      throw std::invalid_argument("synthetic: depth range is empty");
    if (!(body_scale_lo <= body_scale_hi) || body_scale_lo <= 0 ||
        !(width_scale_lo <= width_scale_hi) || width_scale_lo <= 0)
      throw std::invalid_argument("synthetic: degenerate scale range");
    if (pose_amplitude < 0 || pose_amplitude > 1.5)
      throw std::invalid_argument("synthetic: pose amplitude out of range");
  }
};

/// One rendered capsule: a body part between two 3D endpoints.
struct LimbCapsule {
  uint8_t part = 0;
  Vec3 a, b;
  double radius_mm = 0;
};

struct FigureGeometry {
  std::vector<LimbCapsule> limbs;
};

namespace detail {

inline Vec3 step_dir(const Vec3& from, double len, double theta, double phi,
                     double down_sign) {
  // theta: in-plane angle from the rest axis (down when down_sign=+1, up when
  // -1); phi: tilt toward/away from the camera.
  return {from.x + len * std::sin(theta) * std::cos(phi),
          from.y + down_sign * len * std::cos(theta) * std::cos(phi),
          from.z + len * std::sin(phi)};
}

inline float hash_noise(uint64_t seed, int x, int y) {
  Rng r(hash_combine(seed, (static_cast<uint64_t>(x) << 32) |
                               static_cast<uint32_t>(y)));
  return static_cast<float>(r.uniform());
}

inline constexpr std::array<std::array<float, 3>, kNumParts> kPartPalette = {{
    {0.0f, 0.0f, 0.0f},     // Background (unused)
    {0.85f, 0.70f, 0.55f},  // Head
    {0.30f, 0.45f, 0.75f},  // Torso
    {0.75f, 0.30f, 0.30f},  // Upper R.Arm
    {0.85f, 0.45f, 0.35f},  // Lower R.Arm
    {0.95f, 0.65f, 0.50f},  // R.Hand
    {0.30f, 0.65f, 0.35f},  // Upper L.Arm
    {0.45f, 0.80f, 0.45f},  // Lower L.Arm
    {0.60f, 0.95f, 0.60f},  // L.Hand
    {0.55f, 0.35f, 0.65f},  // Upper R.Leg
    {0.70f, 0.45f, 0.80f},  // Lower R.Leg
    {0.85f, 0.60f, 0.95f},  // R.Feet
    {0.65f, 0.55f, 0.25f},  // Upper L.Leg
    {0.80f, 0.70f, 0.35f},  // Lower L.Leg
    {0.95f, 0.85f, 0.45f},  // L.Feet
}};

}  // namespace detail

/// Deterministic 2.5D articulated figure: a 3D kinematic tree rendered as
/// planar capsules with depth interpolated along each limb. Ground truth is
/// exact by construction, which is what the codec and metric tests need.
inline Sample generate_figure(const SyntheticFigureParams& params,
                              uint64_t sample_seed, const std::string& subject_id,
                              const std::string& frame_id,
                              FigureGeometry* geometry_out = nullptr) {
  params.validate();
  Rng rng(sample_seed);
  const int res = params.resolution;
  const double amp = params.pose_amplitude;
  const double deg = std::numbers::pi / 180.0;

  CameraIntrinsics cam;
  cam.fx = cam.fy = 0.75 * res;
  cam.cx = res / 2.0 + rng.uniform(-3.0, 3.0) * res / 256.0;
  cam.cy = res / 2.0 + rng.uniform(-3.0, 3.0) * res / 256.0;

  const double scale = rng.uniform(params.body_scale_lo, params.body_scale_hi);
  const double wscale = rng.uniform(params.width_scale_lo, params.width_scale_hi);
  const double z0 = rng.uniform(params.depth_min_mm, params.depth_max_mm);
  const double u0 = cam.cx + rng.uniform(-6.0, 6.0) * res / 256.0;
  const double v0 = cam.cy + rng.uniform(-4.0, 4.0) * res / 256.0;

  auto a = [&](double lo, double hi) { return rng.uniform(lo * amp, hi * amp); };

  std::array<Vec3, kNumJoints> J{};
  auto joint = [&](Joint j) -> Vec3& { return J[static_cast<size_t>(j)]; };

  joint(Joint::Pelvis) = back_project(cam, u0, v0, z0);
  // spine up
  joint(Joint::Thorax) = detail::step_dir(joint(Joint::Pelvis), 480 * scale,
                                          a(-18, 18) * deg, a(-12, 12) * deg, -1);
  joint(Joint::UpperNeck) = detail::step_dir(joint(Joint::Thorax), 130 * scale,
                                             a(-15, 15) * deg, a(-10, 10) * deg, -1);
  joint(Joint::HeadTop) = detail::step_dir(joint(Joint::UpperNeck), 200 * scale,
                                           a(-15, 15) * deg, a(-10, 10) * deg, -1);
  // hips
  for (int side = 0; side < 2; ++side) {
    Joint hip = side == 0 ? Joint::RHip : Joint::LHip;
    double sx = side == 0 ? -1.0 : 1.0;
    joint(hip) = {joint(Joint::Pelvis).x + sx * 100 * scale,
                  joint(Joint::Pelvis).y + rng.uniform(-15.0, 15.0) * scale,
                  joint(Joint::Pelvis).z + a(-40, 40)};
    Joint knee = side == 0 ? Joint::RKnee : Joint::LKnee;
    Joint ankle = side == 0 ? Joint::RAnkle : Joint::LAnkle;
    joint(knee) = detail::step_dir(joint(hip), 420 * scale, a(-35, 35) * deg,
                                   a(-22, 22) * deg, 1);
    joint(ankle) = detail::step_dir(joint(knee), 400 * scale, a(-30, 30) * deg,
                                    a(-22, 22) * deg, 1);
  }
  // shoulders and arms
  for (int side = 0; side < 2; ++side) {
    Joint sh = side == 0 ? Joint::RShoulder : Joint::LShoulder;
    Joint el = side == 0 ? Joint::RElbow : Joint::LElbow;
    Joint wr = side == 0 ? Joint::RWrist : Joint::LWrist;
    double sx = side == 0 ? -1.0 : 1.0;
    joint(sh) = {joint(Joint::Thorax).x + sx * 190 * scale,
                 joint(Joint::Thorax).y + rng.uniform(-20.0, 30.0) * scale,
                 joint(Joint::Thorax).z + a(-50, 50)};
    joint(el) = detail::step_dir(joint(sh), 280 * scale, a(-75, 75) * deg,
                                 a(-30, 30) * deg, 1);
    joint(wr) = detail::step_dir(joint(el), 250 * scale, a(-80, 80) * deg,
                                 a(-30, 30) * deg, 1);
  }

  // capsule list in PartId order of labels
  FigureGeometry geom;
  auto limb = [&](int part, Joint pa, Joint pb, double radius) {
    geom.limbs.push_back({static_cast<uint8_t>(part), joint(pa), joint(pb),
                          radius * wscale * scale});
  };
  limb(1, Joint::UpperNeck, Joint::HeadTop, 90);
  limb(2, Joint::Pelvis, Joint::Thorax, 135);
  limb(3, Joint::RShoulder, Joint::RElbow, 52);
  limb(4, Joint::RElbow, Joint::RWrist, 46);
  limb(6, Joint::LShoulder, Joint::LElbow, 52);
  limb(7, Joint::LElbow, Joint::LWrist, 46);
  limb(9, Joint::RHip, Joint::RKnee, 70);
  limb(10, Joint::RKnee, Joint::RAnkle, 56);
  limb(12, Joint::LHip, Joint::LKnee, 70);
  limb(13, Joint::LKnee, Joint::LAnkle, 56);

  // hands extend the forearms, feet point sideways-down; their far endpoints
  // are not joints
  auto extremity = [&](int part, Joint from_j, Joint toward_j, double len,
                       double radius) {
    Vec3 from = joint(from_j);
    Vec3 toward = joint(toward_j);
    double dx = from.x - toward.x, dy = from.y - toward.y, dz = from.z - toward.z;
    double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (norm < 1e-9) norm = 1;
    Vec3 tip{from.x + len * scale * dx / norm, from.y + len * scale * dy / norm,
             from.z + len * scale * dz / norm};
    geom.limbs.push_back({static_cast<uint8_t>(part), from, tip,
                          radius * wscale * scale});
  };
  extremity(5, Joint::RWrist, Joint::RElbow, 85, 52);
  extremity(8, Joint::LWrist, Joint::LElbow, 85, 52);
  for (int side = 0; side < 2; ++side) {
    Joint ankle = side == 0 ? Joint::RAnkle : Joint::LAnkle;
    double sx = side == 0 ? -1.0 : 1.0;
    double theta = rng.uniform(55.0, 115.0) * deg;
    double phi = a(-20, 20) * deg;
    Vec3 from = joint(ankle);
    Vec3 tip{from.x + sx * 130 * scale * std::sin(theta) * std::cos(phi),
             from.y + 130 * scale * std::cos(theta) * std::cos(phi),
             from.z + 130 * scale * std::sin(phi)};
    geom.limbs.push_back({static_cast<uint8_t>(side == 0 ? 11 : 14), from, tip,
                          48 * wscale * scale});
  }

  // rasterize: nearest limb wins by smaller depth
  Sample s;
  s.width = s.height = res;
  s.intrinsics = cam;
  s.subject_id = subject_id;
  s.frame_id = frame_id;
  s.part_mask = Tensor<uint8_t>({res, res});
  s.depth = Tensor<float>({res, res}, kBackgroundDepth);
  for (const LimbCapsule& lc : geom.limbs) {
    Vec2 a2 = project(cam, lc.a);
    Vec2 b2 = project(cam, lc.b);
    double zmid = 0.5 * (lc.a.z + lc.b.z);
    double r_px = lc.radius_mm * cam.fx / zmid;
    int x0 = std::max(0, static_cast<int>(std::floor(std::min(a2.x, b2.x) - r_px)));
    int x1 = std::min(res - 1, static_cast<int>(std::ceil(std::max(a2.x, b2.x) + r_px)));
    int y0 = std::max(0, static_cast<int>(std::floor(std::min(a2.y, b2.y) - r_px)));
    int y1 = std::min(res - 1, static_cast<int>(std::ceil(std::max(a2.y, b2.y) + r_px)));
    double ex = b2.x - a2.x, ey = b2.y - a2.y;
    double len2 = ex * ex + ey * ey;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double px = x + 0.5, py = y + 0.5;
        double t = len2 > 1e-12
                       ? std::clamp(((px - a2.x) * ex + (py - a2.y) * ey) / len2, 0.0, 1.0)
                       : 0.0;
        double qx = a2.x + t * ex - px, qy = a2.y + t * ey - py;
        if (qx * qx + qy * qy > r_px * r_px) continue;
        float d = static_cast<float>(lc.a.z + t * (lc.b.z - lc.a.z));
        if (d < s.depth.at(y, x)) {
          s.depth.at(y, x) = d;
          s.part_mask.at(y, x) = lc.part;
        }
      }
  }

  s.joints3d = J;
  for (int j = 0; j < kNumJoints; ++j) {
    Vec2 p = project(cam, J[static_cast<size_t>(j)]);
    s.joints2d[static_cast<size_t>(j)] = p;
    s.visible[static_cast<size_t>(j)] =
        p.x >= 0 && p.x < res && p.y >= 0 && p.y < res;
  }
  restamp_visible_joints(s);

  // shade the figure by depth over a seeded background
  s.image = Tensor<float>({3, res, res});
  float fg_min = 0, fg_max = 0;
  bool any = false;
  for (size_t i = 0; i < s.depth.numel(); ++i) {
    if (!std::isfinite(s.depth[i])) continue;
    if (!any) {
      fg_min = fg_max = s.depth[i];
      any = true;
    } else {
      fg_min = std::min(fg_min, s.depth[i]);
      fg_max = std::max(fg_max, s.depth[i]);
    }
  }
  float span = std::max(1.0f, fg_max - fg_min);
  uint64_t tex_seed = rng.next_u64();
  float base = static_cast<float>(0.25 + 0.3 * rng.uniform());
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      float r, g, b;
      uint8_t part = s.part_mask.at(y, x);
      if (part == kBackgroundPart) {
        switch (params.background_mode) {
          case 0: r = g = b = base; break;
          case 2: {
            float n = 0.15f + 0.25f * detail::hash_noise(tex_seed, x, y);
            r = g = b = n;
            break;
          }
          default: {
            float fy = static_cast<float>(y) / res;
            r = base * (0.6f + 0.4f * fy);
            g = base * (0.7f + 0.3f * fy);
            b = base * (0.8f + 0.2f * (1.0f - fy));
            break;
          }
        }
      } else {
        const auto& c = detail::kPartPalette[part];
        float shade = 0.55f + 0.45f * (1.0f - (s.depth.at(y, x) - fg_min) / span);
        float dither = 0.04f * (detail::hash_noise(tex_seed ^ 0x5bf3u, x, y) - 0.5f);
        r = c[0] * shade + dither;
        g = c[1] * shade + dither;
        b = c[2] * shade + dither;
      }
      s.image.at(0, y, x) = std::clamp(r, 0.0f, 1.0f);
      s.image.at(1, y, x) = std::clamp(g, 0.0f, 1.0f);
      s.image.at(2, y, x) = std::clamp(b, 0.0f, 1.0f);
    }

  if (geometry_out) *geometry_out = geom;
  return s;
}

inline std::vector<Sample> generate_synthetic(const SyntheticFigureParams& params,
                                              int n) {
  params.validate();
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    uint64_t seed = derive_seed(params.seed, "sample", static_cast<uint64_t>(i));
    std::string subject = "s" + std::to_string(i / params.frames_per_subject);
    std::string frame = "f" + std::to_string(i);
    out.push_back(generate_figure(params, seed, subject, frame));
  }
  return out;
}

}  // namespace mth
