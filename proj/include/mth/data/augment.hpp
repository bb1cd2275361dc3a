#pragma once

#include <cmath>
#include <numbers>

#include "mth/core/rng.hpp"
#include "mth/data/consistency.hpp"
#include "mth/types.hpp"

namespace mth {

struct AugmentParams {
  double scale_lo = 0.75;
  double scale_hi = 1.25;
  double rot_deg = 30.0;
  double color_jitter = 0.2;

  void validate() const {
    if (!(scale_lo <= 1.0 && 1.0 <= scale_hi) || rot_deg < 0 || color_jitter < 0)
      throw std::invalid_argument("augment: ranges must contain the identity");
  }
};

namespace detail {

struct Affine2 {
  // dst = M * (src - c) + c
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1;
  double cx = 0, cy = 0;

  Vec2 apply(const Vec2& p) const {
    double dx = p.x - cx, dy = p.y - cy;
    return {m00 * dx + m01 * dy + cx, m10 * dx + m11 * dy + cy};
  }

  Affine2 inverse() const {
    double det = m00 * m11 - m01 * m10;
    return {m11 / det, -m01 / det, -m10 / det, m00 / det, cx, cy};
  }

  bool is_identity() const {
    return m00 == 1 && m01 == 0 && m10 == 0 && m11 == 1;
  }
};

inline float bilinear_sample(const Tensor<float>& img, int channel, double x,
                             double y) {
  // pixel (i,j) carries its value at center (i+0.5, j+0.5); outside is black
  int h = img.dim(1), w = img.dim(2);
  double fx = x - 0.5, fy = y - 0.5;
  int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  double ax = fx - x0, ay = fy - y0;
  auto at = [&](int yy, int xx) -> float {
    if (xx < 0 || xx >= w || yy < 0 || yy >= h) return 0.0f;
    return img.at(channel, yy, xx);
  };
  return static_cast<float>((1 - ax) * (1 - ay) * at(y0, x0) +
                            ax * (1 - ay) * at(y0, x0 + 1) +
                            (1 - ax) * ay * at(y0 + 1, x0) +
                            ax * ay * at(y0 + 1, x0 + 1));
}

}  // namespace detail

/// One composed affine (rotation about the crop center with isotropic scale)
/// applied identically to every modality; color jitter touches the image
/// only. Joint x/y in camera coordinates are re-derived by back-projecting
/// the transformed pixel at the unchanged depth, so the 2D/3D projection
/// consistency stays exact.
inline Sample augment(const Sample& in, const AugmentParams& params, Rng& rng) {
  params.validate();
  double scale = rng.uniform(params.scale_lo, params.scale_hi);
  double theta = rng.uniform(-params.rot_deg, params.rot_deg) *
                 std::numbers::pi / 180.0;
  double gains[3], offsets[3];
  for (int c = 0; c < 3; ++c) {
    gains[c] = 1.0 + rng.uniform(-params.color_jitter, params.color_jitter);
    offsets[c] = 0.25 * rng.uniform(-params.color_jitter, params.color_jitter);
  }

  detail::Affine2 fwd;
  fwd.cx = in.width / 2.0;
  fwd.cy = in.height / 2.0;
  fwd.m00 = scale * std::cos(theta);
  fwd.m01 = -scale * std::sin(theta);
  fwd.m10 = scale * std::sin(theta);
  fwd.m11 = scale * std::cos(theta);

  Sample out = in;
  if (!fwd.is_identity()) {
    detail::Affine2 inv = fwd.inverse();
    out.part_mask = Tensor<uint8_t>({in.height, in.width});
    out.depth = Tensor<float>({in.height, in.width}, kBackgroundDepth);
    out.image = Tensor<float>({3, in.height, in.width});
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        Vec2 src = inv.apply({x + 0.5, y + 0.5});
        int sx = static_cast<int>(std::floor(src.x));
        int sy = static_cast<int>(std::floor(src.y));
        if (sx >= 0 && sx < in.width && sy >= 0 && sy < in.height) {
          out.part_mask.at(y, x) = in.part_mask.at(sy, sx);
          out.depth.at(y, x) = in.depth.at(sy, sx);
        }
        for (int c = 0; c < 3; ++c)
          out.image.at(c, y, x) = detail::bilinear_sample(in.image, c, src.x, src.y);
      }
    for (int j = 0; j < kNumJoints; ++j) {
      Vec2 p = fwd.apply(in.joints2d[static_cast<size_t>(j)]);
      out.joints2d[static_cast<size_t>(j)] = p;
      double z = in.joints3d[static_cast<size_t>(j)].z;
      Vec3 cam = back_project(in.intrinsics, p.x, p.y, z);
      out.joints3d[static_cast<size_t>(j)] = cam;
      out.visible[static_cast<size_t>(j)] =
          in.visible[static_cast<size_t>(j)] && p.x >= 0 && p.x < in.width &&
          p.y >= 0 && p.y < in.height;
    }
    restamp_visible_joints(out);
  }

  if (params.color_jitter > 0) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
          out.image.at(c, y, x) = std::clamp(
              static_cast<float>(out.image.at(c, y, x) * gains[c] + offsets[c]),
              0.0f, 1.0f);
  }
  return out;
}

}  // namespace mth
