#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mth/types.hpp"

namespace mth {

// ---------------------------------------------------------------------------
// Depth quantization
// ---------------------------------------------------------------------------

/// Uniform binning of metric depth into n_bins foreground bins plus one
/// background bin (index n_bins). Immutable once fitted.
class DepthQuantizer {
 public:
  DepthQuantizer() = default;

  DepthQuantizer(double d_min, double d_max, int n_bins)
      : d_min_(d_min), d_max_(d_max), n_bins_(n_bins) {
    if (n_bins <= 0) throw std::invalid_argument("quantizer: n_bins must be positive");
    if (d_min >= d_max) throw std::invalid_argument("quantizer: d_min must be < d_max");
  }

  /// Fit to the foreground depth range of one sample. A degenerate range
  /// (all foreground pixels at the same depth) is expanded by +-1mm.
  static DepthQuantizer fit(const Tensor<float>& depth,
                            const Tensor<uint8_t>& part_mask, int n_bins) {
    double lo, hi;
    if (!foreground_range(depth, part_mask, &lo, &hi))
      throw std::invalid_argument("quantizer: no foreground pixels");
    return from_range(lo, hi, n_bins);
  }

  /// Fit to the union of the foreground depth range and the z-values of
  /// visible joints, so encoded joints never clamp.
  static DepthQuantizer fit_with_joints(
      const Tensor<float>& depth, const Tensor<uint8_t>& part_mask,
      const std::array<Vec3, kNumJoints>& joints3d,
      const std::array<bool, kNumJoints>& visible, int n_bins) {
    double lo = 0, hi = 0;
    bool any = foreground_range(depth, part_mask, &lo, &hi);
    for (int j = 0; j < kNumJoints; ++j) {
      if (!visible[static_cast<size_t>(j)]) continue;
      double z = joints3d[static_cast<size_t>(j)].z;
      if (!any) {
        lo = hi = z;
        any = true;
      } else {
        lo = std::min(lo, z);
        hi = std::max(hi, z);
      }
    }
    if (!any)
      throw std::invalid_argument("quantizer: no foreground pixels or visible joints");
    return from_range(lo, hi, n_bins);
  }

  int n_bins() const { return n_bins_; }
  int background_bin() const { return n_bins_; }
  double d_min() const { return d_min_; }
  double d_max() const { return d_max_; }
  double bin_width() const { return (d_max_ - d_min_) / n_bins_; }

  /// Non-finite depth is background. Finite depth clamps into [0, n_bins-1];
  /// in particular quantize(d) == n_bins-1 for any d >= d_max.
  int quantize(double d) const {
    if (!std::isfinite(d)) return n_bins_;
    int b = static_cast<int>(std::floor((d - d_min_) / bin_width()));
    return std::clamp(b, 0, n_bins_ - 1);
  }

  /// Center of a foreground bin.
  double dequantize(int bin) const {
    if (bin < 0 || bin >= n_bins_)
      throw std::out_of_range("quantizer: dequantize of non-foreground bin");
    return d_min_ + (bin + 0.5) * bin_width();
  }

  std::vector<double> edges() const {
    std::vector<double> e(static_cast<size_t>(n_bins_) + 1);
    for (int i = 0; i <= n_bins_; ++i)
      e[static_cast<size_t>(i)] = d_min_ + i * bin_width();
    return e;
  }

  /// Plain-text key-value record embedded in prediction files.
  std::string to_kv() const {
    std::ostringstream os;
    os.precision(17);
    os << "d_min=" << d_min_ << " d_max=" << d_max_ << " n_bins=" << n_bins_;
    return os.str();
  }

  static DepthQuantizer from_kv(const std::string& text) {
    double lo = 0, hi = 0;
    int n = 0;
    std::istringstream is(text);
    std::string tok;
    int seen = 0;
    while (is >> tok) {
      size_t eq = tok.find('=');
      if (eq == std::string::npos) continue;
      std::string key = tok.substr(0, eq);
      std::string val = tok.substr(eq + 1);
      if (key == "d_min") { lo = std::stod(val); ++seen; }
      else if (key == "d_max") { hi = std::stod(val); ++seen; }
      else if (key == "n_bins") { n = std::stoi(val); ++seen; }
    }
    if (seen != 3) throw std::invalid_argument("quantizer: malformed record: " + text);
    return DepthQuantizer(lo, hi, n);
  }

  bool operator==(const DepthQuantizer&) const = default;

 private:
  static DepthQuantizer from_range(double lo, double hi, int n_bins) {
    if (lo == hi) {
      lo -= 1.0;  // degenerate range: widen by 1mm each side
      hi += 1.0;
    }
    return DepthQuantizer(lo, hi, n_bins);
  }

  static bool foreground_range(const Tensor<float>& depth,
                               const Tensor<uint8_t>& part_mask, double* lo,
                               double* hi) {
    if (!depth.same_shape_dims(part_mask))
      throw std::invalid_argument("quantizer: depth/mask shape mismatch");
    bool any = false;
    for (size_t i = 0; i < depth.numel(); ++i) {
      if (part_mask[i] == kBackgroundPart) continue;
      double d = depth[i];
      if (!any) {
        *lo = *hi = d;
        any = true;
      } else {
        *lo = std::min(*lo, d);
        *hi = std::max(*hi, d);
      }
    }
    return any;
  }

  double d_min_ = 0;
  double d_max_ = 0;
  int n_bins_ = 0;
};

struct HeatmapParams {
  double sigma_xy = 1.0;  // cells at heatmap resolution
  double sigma_z = 1.0;   // depth bins
};

namespace detail {

inline int stride_for(int input_resolution, int resolution) {
  if (resolution <= 0 || input_resolution <= 0 ||
      input_resolution % resolution != 0)
    throw std::invalid_argument("input resolution not divisible by heatmap resolution");
  return input_resolution / resolution;
}

/// Per-axis Gaussian table g[d] = exp(-d^2 / (2 sigma^2)) for |d| <= radius.
struct GaussTable {
  explicit GaussTable(double sigma) : radius(static_cast<int>(std::ceil(4.0 * sigma))) {
    values.resize(static_cast<size_t>(radius) + 1);
    for (int d = 0; d <= radius; ++d)
      values[static_cast<size_t>(d)] =
          std::exp(-0.5 * (static_cast<double>(d) * d) / (sigma * sigma));
  }
  double operator()(int d) const {
    int a = std::abs(d);
    return a > radius ? 0.0 : values[static_cast<size_t>(a)];
  }
  int radius;
  std::vector<double> values;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// 2D pose heatmaps
// ---------------------------------------------------------------------------

/// Unnormalized Gaussians, peak value exactly 1 at the joint's heatmap cell;
/// invisible joints give an all-zero channel.
inline Tensor<float> encode_pose2d(const std::array<Vec2, kNumJoints>& joints2d,
                                   const std::array<bool, kNumJoints>& visible,
                                   const HeatmapParams& params, int resolution,
                                   int input_resolution) {
  int s = detail::stride_for(input_resolution, resolution);
  detail::GaussTable g(params.sigma_xy);
  Tensor<float> out({kNumJoints, resolution, resolution});
  for (int j = 0; j < kNumJoints; ++j) {
    if (!visible[static_cast<size_t>(j)]) continue;
    int cx = static_cast<int>(std::floor(joints2d[static_cast<size_t>(j)].x / s));
    int cy = static_cast<int>(std::floor(joints2d[static_cast<size_t>(j)].y / s));
    if (cx < 0 || cx >= resolution || cy < 0 || cy >= resolution) continue;
    int y0 = std::max(0, cy - g.radius), y1 = std::min(resolution - 1, cy + g.radius);
    int x0 = std::max(0, cx - g.radius), x1 = std::min(resolution - 1, cx + g.radius);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        out.at(j, y, x) = static_cast<float>(g(y - cy) * g(x - cx));
  }
  return out;
}

struct Pose2dDecode {
  std::array<Vec2, kNumJoints> joints{};       // px at input resolution
  std::array<float, kNumJoints> confidence{};  // peak value per channel
};

/// Argmax per channel mapped to the input-resolution cell center
/// (c*s + s/2); ties break to the smallest row-major index.
inline Pose2dDecode decode_pose2d(const Tensor<float>& heatmaps,
                                  int input_resolution) {
  if (heatmaps.ndim() != 3 || heatmaps.dim(0) != kNumJoints)
    throw std::invalid_argument("decode_pose2d: expected {16,R,R} tensor");
  int r = heatmaps.dim(1);
  int s = detail::stride_for(input_resolution, r);
  Pose2dDecode out;
  for (int j = 0; j < kNumJoints; ++j) {
    float best = heatmaps.at(j, 0, 0);
    int by = 0, bx = 0;
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) {
        float v = heatmaps.at(j, y, x);
        if (v > best) {
          best = v;
          by = y;
          bx = x;
        }
      }
    out.joints[static_cast<size_t>(j)] = {bx * s + s / 2.0, by * s + s / 2.0};
    out.confidence[static_cast<size_t>(j)] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Body part segmentation
// ---------------------------------------------------------------------------

/// Nearest-neighbor downsample of a label map, sampling at cell centers.
inline Tensor<uint8_t> downsample_labels(const Tensor<uint8_t>& mask, int resolution) {
  int sh = detail::stride_for(mask.dim(0), resolution);
  int sw = detail::stride_for(mask.dim(1), resolution);
  Tensor<uint8_t> out({resolution, resolution});
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x)
      out.at(y, x) = mask.at(y * sh + sh / 2, x * sw + sw / 2);
  return out;
}

inline Tensor<float> downsample_depth(const Tensor<float>& depth, int resolution) {
  int sh = detail::stride_for(depth.dim(0), resolution);
  int sw = detail::stride_for(depth.dim(1), resolution);
  Tensor<float> out({resolution, resolution});
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x)
      out.at(y, x) = depth.at(y * sh + sh / 2, x * sw + sw / 2);
  return out;
}

inline Tensor<float> encode_parts(const Tensor<uint8_t>& part_mask, int resolution) {
  for (size_t i = 0; i < part_mask.numel(); ++i)
    if (part_mask[i] >= kNumParts)
      throw std::invalid_argument("encode_parts: label out of range");
  Tensor<uint8_t> small = downsample_labels(part_mask, resolution);
  Tensor<float> out({kNumParts, resolution, resolution});
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x)
      out.at(small.at(y, x), y, x) = 1.0f;
  return out;
}

/// Per-pixel argmax over channels; full ties resolve to the smallest channel
/// index, i.e. Background.
inline Tensor<uint8_t> decode_parts(const Tensor<float>& logits) {
  if (logits.ndim() != 3) throw std::invalid_argument("decode_parts: expected {C,R,R}");
  int c = logits.dim(0), r = logits.dim(1);
  Tensor<uint8_t> out({r, logits.dim(2)});
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < logits.dim(2); ++x) {
      float best = logits.at(0, y, x);
      int bc = 0;
      for (int ch = 1; ch < c; ++ch) {
        float v = logits.at(ch, y, x);
        if (v > best) {
          best = v;
          bc = ch;
        }
      }
      out.at(y, x) = static_cast<uint8_t>(bc);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Full-body depth
// ---------------------------------------------------------------------------

inline DepthQuantizer fit_depth_quantizer(const Tensor<float>& depth,
                                          const Tensor<uint8_t>& part_mask,
                                          int n_bins = 19) {
  return DepthQuantizer::fit(depth, part_mask, n_bins);
}

inline Tensor<float> encode_depth(const Tensor<float>& depth,
                                  const Tensor<uint8_t>& part_mask,
                                  const DepthQuantizer& q, int resolution) {
  Tensor<float> d = downsample_depth(depth, resolution);
  Tensor<uint8_t> m = downsample_labels(part_mask, resolution);
  Tensor<float> out({q.n_bins() + 1, resolution, resolution});
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      int bin = m.at(y, x) == kBackgroundPart ? q.background_bin()
                                              : q.quantize(d.at(y, x));
      out.at(bin, y, x) = 1.0f;
    }
  return out;
}

/// Per-pixel bin argmax, background bin included.
inline Tensor<int32_t> decode_depth_bins(const Tensor<float>& logits) {
  if (logits.ndim() != 3) throw std::invalid_argument("decode_depth: expected {C,R,R}");
  int c = logits.dim(0), r = logits.dim(1);
  Tensor<int32_t> out({r, logits.dim(2)});
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < logits.dim(2); ++x) {
      float best = logits.at(0, y, x);
      int bc = 0;
      for (int ch = 1; ch < c; ++ch) {
        float v = logits.at(ch, y, x);
        if (v > best) {
          best = v;
          bc = ch;
        }
      }
      out.at(y, x) = bc;
    }
  return out;
}

struct DepthDecode {
  Tensor<float> depth_mm;        // +inf where background
  Tensor<uint8_t> background;    // 1 where background bin won
  Tensor<int32_t> bins;          // raw argmax, 0..n_bins
};

inline DepthDecode decode_depth(const Tensor<float>& logits, const DepthQuantizer& q) {
  if (logits.dim(0) != q.n_bins() + 1)
    throw std::invalid_argument("decode_depth: channel count does not match quantizer");
  DepthDecode out;
  out.bins = decode_depth_bins(logits);
  int r = out.bins.dim(0), c = out.bins.dim(1);
  out.depth_mm = Tensor<float>({r, c});
  out.background = Tensor<uint8_t>({r, c});
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < c; ++x) {
      int b = out.bins.at(y, x);
      if (b == q.background_bin()) {
        out.depth_mm.at(y, x) = kBackgroundDepth;
        out.background.at(y, x) = 1;
      } else {
        out.depth_mm.at(y, x) = static_cast<float>(q.dequantize(b));
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// 3D pose volumes
// ---------------------------------------------------------------------------

/// Joint j occupies the channel block [bins*j, bins*(j+1)); within the block
/// a separable 3D Gaussian peaks with value 1 at (x_cell, y_cell, z_bin).
inline Tensor<float> encode_pose3d(const std::array<Vec3, kNumJoints>& joints3d,
                                   const std::array<bool, kNumJoints>& visible,
                                   const CameraIntrinsics& intrinsics,
                                   const DepthQuantizer& q,
                                   const HeatmapParams& params, int resolution,
                                   int input_resolution) {
  if (q.n_bins() <= 0) throw std::invalid_argument("encode_pose3d: invalid quantizer");
  int s = detail::stride_for(input_resolution, resolution);
  detail::GaussTable gxy(params.sigma_xy);
  detail::GaussTable gz(params.sigma_z);
  int bins = q.n_bins();
  Tensor<float> out({bins * kNumJoints, resolution, resolution});
  for (int j = 0; j < kNumJoints; ++j) {
    if (!visible[static_cast<size_t>(j)]) continue;
    const Vec3& p = joints3d[static_cast<size_t>(j)];
    Vec2 px = project(intrinsics, p);
    if (px.x < 0 || px.x >= input_resolution || px.y < 0 || px.y >= input_resolution)
      continue;  // projects outside the crop: treated as invisible
    int cx = static_cast<int>(std::floor(px.x / s));
    int cy = static_cast<int>(std::floor(px.y / s));
    int cz = q.quantize(p.z);
    int z0 = std::max(0, cz - gz.radius), z1 = std::min(bins - 1, cz + gz.radius);
    int y0 = std::max(0, cy - gxy.radius), y1 = std::min(resolution - 1, cy + gxy.radius);
    int x0 = std::max(0, cx - gxy.radius), x1 = std::min(resolution - 1, cx + gxy.radius);
    for (int z = z0; z <= z1; ++z) {
      double wz = gz(z - cz);
      for (int y = y0; y <= y1; ++y) {
        double wy = gxy(y - cy);
        for (int x = x0; x <= x1; ++x)
          out.at(bins * j + z, y, x) = static_cast<float>(wz * wy * gxy(x - cx));
      }
    }
  }
  return out;
}

/// Per joint block: argmax over the (z, y, x) volume, ties to the smallest
/// flattened index; z from the bin center, x/y back-projected at that depth.
inline std::array<Vec3, kNumJoints> decode_pose3d(const Tensor<float>& volume,
                                                  const CameraIntrinsics& intrinsics,
                                                  const DepthQuantizer& q,
                                                  int input_resolution) {
  int bins = q.n_bins();
  if (volume.ndim() != 3 || volume.dim(0) != bins * kNumJoints)
    throw std::invalid_argument("decode_pose3d: volume does not match quantizer/joints");
  int r = volume.dim(1);
  int s = detail::stride_for(input_resolution, r);
  std::array<Vec3, kNumJoints> out{};
  for (int j = 0; j < kNumJoints; ++j) {
    float best = volume.at(bins * j, 0, 0);
    int bz = 0, by = 0, bx = 0;
    for (int z = 0; z < bins; ++z)
      for (int y = 0; y < r; ++y)
        for (int x = 0; x < r; ++x) {
          float v = volume.at(bins * j + z, y, x);
          if (v > best) {
            best = v;
            bz = z;
            by = y;
            bx = x;
          }
        }
    double depth = q.dequantize(bz);
    out[static_cast<size_t>(j)] =
        back_project(intrinsics, bx * s + s / 2.0, by * s + s / 2.0, depth);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Target bundles
// ---------------------------------------------------------------------------

/// The encoded supervision tensors for one sample, keyed by task, plus the
/// per-sample quantizers needed to decode predictions again.
struct TargetBundle {
  std::optional<Tensor<float>> pose2d;
  std::optional<Tensor<float>> parts;
  std::optional<Tensor<float>> depth;
  std::optional<Tensor<float>> pose3d;
  DepthQuantizer q_depth;
  DepthQuantizer q_pose3d;

  const std::optional<Tensor<float>>& get(Task t) const {
    switch (t) {
      case Task::Pose2D: return pose2d;
      case Task::PartSeg: return parts;
      case Task::Depth: return depth;
      case Task::Pose3D: return pose3d;
    }
    throw std::logic_error("bad task");
  }
};

inline TargetBundle encode_targets(const Sample& sample, TaskSet tasks,
                                   const HeatmapParams& params, int resolution,
                                   int n_bins = 19) {
  TargetBundle out;
  int input_res = sample.width;
  if (tasks.contains(Task::Pose2D))
    out.pose2d = encode_pose2d(sample.joints2d, sample.visible, params,
                               resolution, input_res);
  if (tasks.contains(Task::PartSeg))
    out.parts = encode_parts(sample.part_mask, resolution);
  if (tasks.contains(Task::Depth)) {
    out.q_depth = fit_depth_quantizer(sample.depth, sample.part_mask, n_bins);
    out.depth = encode_depth(sample.depth, sample.part_mask, out.q_depth, resolution);
  }
  if (tasks.contains(Task::Pose3D)) {
    out.q_pose3d = DepthQuantizer::fit_with_joints(
        sample.depth, sample.part_mask, sample.joints3d, sample.visible, n_bins);
    out.pose3d = encode_pose3d(sample.joints3d, sample.visible, sample.intrinsics,
                               out.q_pose3d, params, resolution, input_res);
  }
  return out;
}

}  // namespace mth
