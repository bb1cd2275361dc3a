#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mth/codecs.hpp"
#include "mth/metrics.hpp"
#include "mth/nn/model.hpp"

namespace mth {

/// Decoded-side predictions for one sample, keyed by task. Produced by the
/// model's final stack or fed directly by oracle tests.
struct TaskPredictions {
  std::optional<Tensor<float>> pose2d, parts, depth, pose3d;

  const std::optional<Tensor<float>>& get(Task t) const {
    switch (t) {
      case Task::Pose2D: return pose2d;
      case Task::PartSeg: return parts;
      case Task::Depth: return depth;
      case Task::Pose3D: return pose3d;
    }
    throw std::logic_error("bad task");
  }
  std::optional<Tensor<float>>& get(Task t) {
    return const_cast<std::optional<Tensor<float>>&>(
        static_cast<const TaskPredictions*>(this)->get(t));
  }
};

/// Per-frame errors feeding the success-rate curves: one overall value per
/// frame plus a per-part/per-joint breakdown (NaN where the label is absent
/// or invisible that frame). Overall values: mean visible-joint pixel error
/// (2d), misclassified pixel percentage (seg), full-body RMSE in bins
/// (depth), frame MJD in mm (3d).
struct FrameErrorRecord {
  std::string frame_id;
  double overall = 0;
  std::vector<double> per_label;
};

struct FrameErrors {
  std::vector<FrameErrorRecord> pose2d, seg, depth, pose3d;

  std::vector<FrameErrorRecord>& get(Task t) {
    switch (t) {
      case Task::Pose2D: return pose2d;
      case Task::PartSeg: return seg;
      case Task::Depth: return depth;
      case Task::Pose3D: return pose3d;
    }
    throw std::logic_error("bad task");
  }
  const std::vector<FrameErrorRecord>& get(Task t) const {
    return const_cast<FrameErrors*>(this)->get(t);
  }

  /// Column labels of the per-label breakdown for each task.
  static std::vector<std::string> labels(Task t) {
    std::vector<std::string> out;
    if (t == Task::Pose2D || t == Task::Pose3D)
      for (int j = 0; j < kNumJoints; ++j) out.emplace_back(joint_name(j));
    else
      for (int p = 0; p < kNumParts; ++p) out.emplace_back(part_name(p));
    return out;
  }
};

struct MetricAccums {
  SegAccumulator seg;
  PckhAccumulator pckh;
  DepthRmseAccumulator depth;
  MjdAccumulator mjd;
  FrameErrors errors;
  size_t count = 0;

  void merge(const MetricAccums& other) {
    seg.merge(other.seg);
    pckh.merge(other.pckh);
    depth.merge(other.depth);
    mjd.merge(other.mjd);
    for (Task t : kAllTasks) {
      auto& dst = errors.get(t);
      const auto& src = other.errors.get(t);
      dst.insert(dst.end(), src.begin(), src.end());
    }
    count += other.count;
  }
};

/// Decode one sample's predictions and fold every applicable metric into the
/// accumulators. Quantizers are refitted from the ground truth, the same way
/// they were fitted when the targets were encoded.
inline void accumulate_sample(MetricAccums& acc, TaskSet tasks, const Sample& s,
                              const TaskPredictions& preds, int resolution,
                              int n_bins) {
  ++acc.count;
  if (tasks.contains(Task::Pose2D)) {
    const auto& p = preds.get(Task::Pose2D);
    if (!p) throw std::invalid_argument("accumulate: missing 2d prediction");
    Pose2dDecode dec = decode_pose2d(*p, s.width);
    double head = head_length(s.joints2d);
    acc.pckh.add(dec.joints, s.joints2d, s.visible, head);
    FrameErrorRecord rec{s.frame_id, 0, std::vector<double>(kNumJoints, kMetricMissing)};
    double err = 0;
    int n = 0;
    for (int j = 0; j < kNumJoints; ++j) {
      if (!s.visible[static_cast<size_t>(j)]) continue;
      double e = std::hypot(
          dec.joints[static_cast<size_t>(j)].x - s.joints2d[static_cast<size_t>(j)].x,
          dec.joints[static_cast<size_t>(j)].y - s.joints2d[static_cast<size_t>(j)].y);
      rec.per_label[static_cast<size_t>(j)] = e;
      err += e;
      ++n;
    }
    if (n) {
      rec.overall = err / n;
      acc.errors.pose2d.push_back(std::move(rec));
    }
  }
  if (tasks.contains(Task::PartSeg)) {
    const auto& p = preds.get(Task::PartSeg);
    if (!p) throw std::invalid_argument("accumulate: missing seg prediction");
    Tensor<uint8_t> pred_labels = decode_parts(*p);
    Tensor<uint8_t> gt_labels = downsample_labels(s.part_mask, resolution);
    acc.seg.add(pred_labels, gt_labels);
    FrameErrorRecord rec{s.frame_id, 0, std::vector<double>(kNumParts, kMetricMissing)};
    std::array<size_t, kNumParts> part_pixels{}, part_wrong{};
    size_t wrong = 0;
    for (size_t i = 0; i < pred_labels.numel(); ++i) {
      ++part_pixels[gt_labels[i]];
      if (pred_labels[i] != gt_labels[i]) {
        ++wrong;
        ++part_wrong[gt_labels[i]];
      }
    }
    rec.overall = 100.0 * static_cast<double>(wrong) /
                  static_cast<double>(pred_labels.numel());
    for (int part = 0; part < kNumParts; ++part)
      if (part_pixels[static_cast<size_t>(part)])
        rec.per_label[static_cast<size_t>(part)] =
            100.0 * static_cast<double>(part_wrong[static_cast<size_t>(part)]) /
            static_cast<double>(part_pixels[static_cast<size_t>(part)]);
    acc.errors.seg.push_back(std::move(rec));
  }
  if (tasks.contains(Task::Depth)) {
    const auto& p = preds.get(Task::Depth);
    if (!p) throw std::invalid_argument("accumulate: missing depth prediction");
    DepthQuantizer q = fit_depth_quantizer(s.depth, s.part_mask, n_bins);
    Tensor<uint8_t> gt_labels = downsample_labels(s.part_mask, resolution);
    Tensor<float> gt_depth = downsample_depth(s.depth, resolution);
    Tensor<int32_t> gt_bins({resolution, resolution});
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x)
        gt_bins.at(y, x) = gt_labels.at(y, x) == kBackgroundPart
                               ? q.background_bin()
                               : q.quantize(gt_depth.at(y, x));
    Tensor<int32_t> pred_bins = decode_depth_bins(*p);
    acc.depth.add(pred_bins, gt_bins, gt_labels);
    FrameErrorRecord rec{s.frame_id, depth_rmse(pred_bins, gt_bins),
                         std::vector<double>(kNumParts, kMetricMissing)};
    for (int part = 0; part < kNumParts; ++part) {
      Tensor<uint8_t> region({resolution, resolution});
      bool any = false;
      for (size_t i = 0; i < gt_labels.numel(); ++i) {
        region[i] = gt_labels[i] == part;
        any = any || region[i];
      }
      if (any)
        rec.per_label[static_cast<size_t>(part)] = depth_rmse(pred_bins, gt_bins, &region);
    }
    acc.errors.depth.push_back(std::move(rec));
  }
  if (tasks.contains(Task::Pose3D)) {
    const auto& p = preds.get(Task::Pose3D);
    if (!p) throw std::invalid_argument("accumulate: missing 3d prediction");
    DepthQuantizer q = DepthQuantizer::fit_with_joints(s.depth, s.part_mask,
                                                       s.joints3d, s.visible, n_bins);
    auto dec = decode_pose3d(*p, s.intrinsics, q, s.width);
    acc.mjd.add(dec, s.joints3d, s.visible);
    auto d = mjd(dec, s.joints3d);
    FrameErrorRecord rec{s.frame_id, 0, std::vector<double>(kNumJoints, kMetricMissing)};
    double err = 0;
    int n = 0;
    for (int j = 0; j < kNumJoints; ++j) {
      if (!s.visible[static_cast<size_t>(j)]) continue;
      rec.per_label[static_cast<size_t>(j)] = d[static_cast<size_t>(j)];
      err += d[static_cast<size_t>(j)];
      ++n;
    }
    if (n) {
      rec.overall = err / n;
      acc.errors.pose3d.push_back(std::move(rec));
    }
  }
}

/// Sections for inactive tasks are absent from the report, not zero.
inline MetricsReport finalize_report(const MetricAccums& acc, TaskSet tasks,
                                     const std::string& combo) {
  MetricsReport report;
  report.task_combo = combo;
  report.sample_count = acc.count;
  if (tasks.contains(Task::PartSeg)) report.seg = MetricsReport::finalize(acc.seg);
  if (tasks.contains(Task::Pose2D)) report.pose2d = MetricsReport::finalize(acc.pckh);
  if (tasks.contains(Task::Depth)) report.depth = MetricsReport::finalize(acc.depth);
  if (tasks.contains(Task::Pose3D)) report.pose3d = MetricsReport::finalize(acc.mjd);
  return report;
}

struct EvalResult {
  MetricsReport report;
  MetricAccums accums;
};

/// Run the model over a test stream and decode every final-stack prediction.
inline EvalResult evaluate(MultiTaskModel<float>& model,
                           const std::vector<Sample>& test) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test stream");
  nn::NoGradGuard no_grad;
  const ModelConfig& mc = model.config();
  int in_res = mc.hg.input_resolution;
  EvalResult result;
  for (const Sample& s : test) {
    if (s.width != in_res || s.height != in_res)
      throw std::invalid_argument("evaluate: sample resolution does not match model input");
    Tensor<float> image({1, 3, in_res, in_res});
    std::copy(s.image.data(), s.image.data() + s.image.numel(), image.data());
    auto out = model.forward(image);
    TaskPredictions preds;
    for (Task t : model.tasks().list()) {
      const Tensor<float>& batched = out.at(mc.hg.stacks - 1, t).value();
      Tensor<float> single({batched.dim(1), batched.dim(2), batched.dim(3)});
      std::copy(batched.data(), batched.data() + single.numel(), single.data());
      preds.get(t) = std::move(single);
    }
    accumulate_sample(result.accums, model.tasks(), s, preds, mc.hg.resolution,
                      mc.bins);
  }
  result.report = finalize_report(result.accums, model.tasks(), model.tasks().str());
  return result;
}

}  // namespace mth
