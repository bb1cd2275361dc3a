#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mth/types.hpp"

namespace mth {

inline constexpr double kMetricMissing = std::numeric_limits<double>::quiet_NaN();

inline bool metric_present(double v) { return !std::isnan(v); }

/// Arithmetic mean over present (non-NaN) entries.
inline double mean_of_present(const double* values, size_t n) {
  double sum = 0;
  size_t count = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!metric_present(values[i])) continue;
    sum += values[i];
    ++count;
  }
  return count ? sum / static_cast<double>(count) : kMetricMissing;
}

inline double mean_of_present(const std::vector<double>& values) {
  return mean_of_present(values.data(), values.size());
}

// ---------------------------------------------------------------------------
// Frame-level metric primitives
// ---------------------------------------------------------------------------

/// Per-class IOU in percent. Classes absent from both prediction and ground
/// truth come back as NaN ("missing") and are excluded from means.
inline std::vector<double> iou_per_class(const Tensor<uint8_t>& pred,
                                         const Tensor<uint8_t>& gt, int n_classes) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("iou: shape mismatch");
  std::vector<size_t> inter(static_cast<size_t>(n_classes), 0);
  std::vector<size_t> uni(static_cast<size_t>(n_classes), 0);
  for (size_t i = 0; i < pred.numel(); ++i) {
    int p = pred[i], g = gt[i];
    if (p >= n_classes || g >= n_classes)
      throw std::invalid_argument("iou: label out of range");
    if (p == g) {
      ++inter[static_cast<size_t>(p)];
      ++uni[static_cast<size_t>(p)];
    } else {
      ++uni[static_cast<size_t>(p)];
      ++uni[static_cast<size_t>(g)];
    }
  }
  std::vector<double> out(static_cast<size_t>(n_classes), kMetricMissing);
  for (int c = 0; c < n_classes; ++c)
    if (uni[static_cast<size_t>(c)] > 0)
      out[static_cast<size_t>(c)] = 100.0 * static_cast<double>(inter[static_cast<size_t>(c)]) /
                                    static_cast<double>(uni[static_cast<size_t>(c)]);
  return out;
}

/// Mean over present classes; index 0 (background) is dropped when excluded.
inline double mean_iou(const std::vector<double>& per_class, bool include_background) {
  if (per_class.empty()) throw std::invalid_argument("mean_iou: empty input");
  size_t start = include_background ? 0 : 1;
  return mean_of_present(per_class.data() + start, per_class.size() - start);
}

/// Joint correct iff its Euclidean error <= alpha * head_len (inclusive).
inline std::array<bool, kNumJoints> pckh(const std::array<Vec2, kNumJoints>& pred,
                                         const std::array<Vec2, kNumJoints>& gt,
                                         double head_len, double alpha = 0.5) {
  if (!(head_len > 0)) throw std::invalid_argument("pckh: degenerate head length");
  std::array<bool, kNumJoints> out{};
  double thr = alpha * head_len;
  for (int j = 0; j < kNumJoints; ++j) {
    double dx = pred[static_cast<size_t>(j)].x - gt[static_cast<size_t>(j)].x;
    double dy = pred[static_cast<size_t>(j)].y - gt[static_cast<size_t>(j)].y;
    out[static_cast<size_t>(j)] = std::sqrt(dx * dx + dy * dy) <= thr;
  }
  return out;
}

inline double head_length(const std::array<Vec2, kNumJoints>& gt) {
  const Vec2& top = gt[static_cast<size_t>(Joint::HeadTop)];
  const Vec2& neck = gt[static_cast<size_t>(Joint::UpperNeck)];
  return std::hypot(top.x - neck.x, top.y - neck.y);
}

/// Per-joint Euclidean distance in camera-frame millimetres; no root
/// alignment or Procrustes.
inline std::array<double, kNumJoints> mjd(const std::array<Vec3, kNumJoints>& pred,
                                          const std::array<Vec3, kNumJoints>& gt) {
  std::array<double, kNumJoints> out{};
  for (int j = 0; j < kNumJoints; ++j) {
    double dx = pred[static_cast<size_t>(j)].x - gt[static_cast<size_t>(j)].x;
    double dy = pred[static_cast<size_t>(j)].y - gt[static_cast<size_t>(j)].y;
    double dz = pred[static_cast<size_t>(j)].z - gt[static_cast<size_t>(j)].z;
    out[static_cast<size_t>(j)] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return out;
}

/// RMSE over bin indices, optionally restricted to a region mask.
inline double depth_rmse(const Tensor<int32_t>& pred_bins,
                         const Tensor<int32_t>& gt_bins,
                         const Tensor<uint8_t>* region_mask = nullptr) {
  if (!pred_bins.same_shape(gt_bins)) throw std::invalid_argument("depth_rmse: shape mismatch");
  if (region_mask && !region_mask->same_shape_dims(pred_bins))
    throw std::invalid_argument("depth_rmse: region mask shape mismatch");
  double sq = 0;
  size_t n = 0;
  for (size_t i = 0; i < pred_bins.numel(); ++i) {
    if (region_mask && !(*region_mask)[i]) continue;
    double d = static_cast<double>(pred_bins[i]) - static_cast<double>(gt_bins[i]);
    sq += d * d;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("depth_rmse: empty region");
  return std::sqrt(sq / static_cast<double>(n));
}

/// Percentage of frames with error strictly below each threshold.
inline std::vector<double> success_rate_curve(const std::vector<double>& errors,
                                              const std::vector<double>& thresholds) {
  std::vector<double> out(thresholds.size(), 0.0);
  if (errors.empty()) return out;
  for (size_t t = 0; t < thresholds.size(); ++t) {
    size_t hits = 0;
    for (double e : errors)
      if (e < thresholds[t]) ++hits;
    out[t] = 100.0 * static_cast<double>(hits) / static_cast<double>(errors.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Accumulators (single-writer; merge() combines parallel shards)
// ---------------------------------------------------------------------------

/// IOU accumulation by global pixel counts (micro-averaged).
class SegAccumulator {
 public:
  void add(const Tensor<uint8_t>& pred, const Tensor<uint8_t>& gt) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("seg accumulate: shape mismatch");
    for (size_t i = 0; i < pred.numel(); ++i) {
      int p = pred[i], g = gt[i];
      if (p >= kNumParts || g >= kNumParts)
        throw std::invalid_argument("seg accumulate: label out of range");
      if (p == g) {
        ++inter_[static_cast<size_t>(p)];
        ++uni_[static_cast<size_t>(p)];
      } else {
        ++uni_[static_cast<size_t>(p)];
        ++uni_[static_cast<size_t>(g)];
      }
    }
  }

  void merge(const SegAccumulator& other) {
    for (size_t c = 0; c < kNumParts; ++c) {
      inter_[c] += other.inter_[c];
      uni_[c] += other.uni_[c];
    }
  }

  std::vector<double> per_class() const {
    std::vector<double> out(kNumParts, kMetricMissing);
    for (size_t c = 0; c < kNumParts; ++c)
      if (uni_[c] > 0)
        out[c] = 100.0 * static_cast<double>(inter_[c]) / static_cast<double>(uni_[c]);
    return out;
  }

 private:
  std::array<size_t, kNumParts> inter_{};
  std::array<size_t, kNumParts> uni_{};
};

/// PCKh accumulation by global joint counts (micro-averaged); only joints
/// visible in the ground truth are scored.
class PckhAccumulator {
 public:
  void add(const std::array<Vec2, kNumJoints>& pred,
           const std::array<Vec2, kNumJoints>& gt,
           const std::array<bool, kNumJoints>& visible, double head_len,
           double alpha = 0.5) {
    auto ok = pckh(pred, gt, head_len, alpha);
    for (int j = 0; j < kNumJoints; ++j) {
      if (!visible[static_cast<size_t>(j)]) continue;
      ++total_[static_cast<size_t>(j)];
      if (ok[static_cast<size_t>(j)]) ++correct_[static_cast<size_t>(j)];
    }
  }

  void merge(const PckhAccumulator& other) {
    for (size_t j = 0; j < kNumJoints; ++j) {
      correct_[j] += other.correct_[j];
      total_[j] += other.total_[j];
    }
  }

  std::array<double, kNumJoints> per_joint() const {
    std::array<double, kNumJoints> out;
    for (size_t j = 0; j < kNumJoints; ++j)
      out[j] = total_[j] ? 100.0 * static_cast<double>(correct_[j]) /
                               static_cast<double>(total_[j])
                         : kMetricMissing;
    return out;
  }

 private:
  std::array<size_t, kNumJoints> correct_{};
  std::array<size_t, kNumJoints> total_{};
};

/// Depth RMSE accumulation: per-frame RMSE values averaged across frames
/// (macro). Per-part rows use the ground-truth part masks as regions.
class DepthRmseAccumulator {
 public:
  void add(const Tensor<int32_t>& pred_bins, const Tensor<int32_t>& gt_bins,
           const Tensor<uint8_t>& gt_labels) {
    full_sum_ += depth_rmse(pred_bins, gt_bins);
    ++full_count_;
    for (int part = 0; part < kNumParts; ++part) {
      Tensor<uint8_t> region({gt_labels.dim(0), gt_labels.dim(1)});
      bool any = false;
      for (size_t i = 0; i < gt_labels.numel(); ++i) {
        region[i] = gt_labels[i] == part;
        any = any || region[i];
      }
      if (!any) continue;
      region_sum_[static_cast<size_t>(part)] += depth_rmse(pred_bins, gt_bins, &region);
      ++region_count_[static_cast<size_t>(part)];
    }
  }

  void merge(const DepthRmseAccumulator& other) {
    full_sum_ += other.full_sum_;
    full_count_ += other.full_count_;
    for (size_t p = 0; p < kNumParts; ++p) {
      region_sum_[p] += other.region_sum_[p];
      region_count_[p] += other.region_count_[p];
    }
  }

  std::array<double, kNumParts> per_region() const {
    std::array<double, kNumParts> out;
    for (size_t p = 0; p < kNumParts; ++p)
      out[p] = region_count_[p]
                   ? region_sum_[p] / static_cast<double>(region_count_[p])
                   : kMetricMissing;
    return out;
  }

  double full_body() const {
    return full_count_ ? full_sum_ / static_cast<double>(full_count_) : kMetricMissing;
  }

 private:
  std::array<double, kNumParts> region_sum_{};
  std::array<size_t, kNumParts> region_count_{};
  double full_sum_ = 0;
  size_t full_count_ = 0;
};

/// MJD accumulation: per-joint distances averaged across frames (macro),
/// scored on joints visible in the ground truth.
class MjdAccumulator {
 public:
  void add(const std::array<Vec3, kNumJoints>& pred,
           const std::array<Vec3, kNumJoints>& gt,
           const std::array<bool, kNumJoints>& visible) {
    auto d = mjd(pred, gt);
    for (size_t j = 0; j < kNumJoints; ++j) {
      if (!visible[j]) continue;
      sum_[j] += d[j];
      ++count_[j];
    }
  }

  void merge(const MjdAccumulator& other) {
    for (size_t j = 0; j < kNumJoints; ++j) {
      sum_[j] += other.sum_[j];
      count_[j] += other.count_[j];
    }
  }

  std::array<double, kNumJoints> per_joint() const {
    std::array<double, kNumJoints> out;
    for (size_t j = 0; j < kNumJoints; ++j)
      out[j] = count_[j] ? sum_[j] / static_cast<double>(count_[j]) : kMetricMissing;
    return out;
  }

 private:
  std::array<double, kNumJoints> sum_{};
  std::array<size_t, kNumJoints> count_{};
};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// The 3D tables report 15 joints: every joint except Pelvis, in canonical
/// order.
inline std::vector<int> mjd_table_joints() {
  std::vector<int> out;
  for (int j = 0; j < kNumJoints; ++j)
    if (j != static_cast<int>(Joint::Pelvis)) out.push_back(j);
  return out;
}

struct SegSection {
  std::array<double, kNumParts> iou{};
  double mean_incl_background = kMetricMissing;
  double mean_excl_background = kMetricMissing;
};

struct Pose2dSection {
  std::array<double, kNumJoints> pckh{};
  double mean = kMetricMissing;
};

struct DepthSection {
  std::array<double, kNumParts> rmse{};       // bin units, per GT-mask region
  double mean_body_parts = kMetricMissing;    // mean of the 15 region rows
  double mean_full_body = kMetricMissing;
};

struct Pose3dSection {
  std::array<double, kNumJoints> mjd{};
  double mean = kMetricMissing;            // over the 15-joint table list
  double mean_all_joints = kMetricMissing;
};

struct MetricsReport {
  std::string task_combo;
  size_t sample_count = 0;
  std::optional<SegSection> seg;
  std::optional<Pose2dSection> pose2d;
  std::optional<DepthSection> depth;
  std::optional<Pose3dSection> pose3d;

  static SegSection finalize(const SegAccumulator& acc) {
    SegSection s;
    auto pc = acc.per_class();
    std::copy(pc.begin(), pc.end(), s.iou.begin());
    s.mean_incl_background = mean_iou(pc, true);
    s.mean_excl_background = mean_iou(pc, false);
    return s;
  }

  static Pose2dSection finalize(const PckhAccumulator& acc) {
    Pose2dSection s;
    s.pckh = acc.per_joint();
    s.mean = mean_of_present(s.pckh.data(), s.pckh.size());
    return s;
  }

  static DepthSection finalize(const DepthRmseAccumulator& acc) {
    DepthSection s;
    s.rmse = acc.per_region();
    s.mean_body_parts = mean_of_present(s.rmse.data(), s.rmse.size());
    s.mean_full_body = acc.full_body();
    return s;
  }

  static Pose3dSection finalize(const MjdAccumulator& acc) {
    Pose3dSection s;
    s.mjd = acc.per_joint();
    std::vector<double> table;
    for (int j : mjd_table_joints()) table.push_back(s.mjd[static_cast<size_t>(j)]);
    s.mean = mean_of_present(table);
    s.mean_all_joints = mean_of_present(s.mjd.data(), s.mjd.size());
    return s;
  }

  std::string to_csv() const;
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// Signed per-part/per-joint improvement in each metric's "better"
/// direction: IOU/PCKh candidate-baseline, RMSE/MJD baseline-candidate.
struct ImprovementMap {
  std::optional<std::array<double, kNumParts>> iou;
  std::optional<std::array<double, kNumJoints>> pckh;
  std::optional<std::array<double, kNumParts>> depth_rmse;
  std::optional<std::array<double, kNumJoints>> mjd;
  double iou_mean = kMetricMissing;
  double pckh_mean = kMetricMissing;
  double depth_mean = kMetricMissing;  // over Mean Body Parts
  double mjd_mean = kMetricMissing;
};

inline ImprovementMap improvement_map(const MetricsReport& baseline,
                                      const MetricsReport& candidate) {
  ImprovementMap out;
  if (baseline.seg && candidate.seg) {
    out.iou.emplace();
    for (size_t p = 0; p < kNumParts; ++p)
      (*out.iou)[p] = candidate.seg->iou[p] - baseline.seg->iou[p];
    out.iou_mean = candidate.seg->mean_incl_background - baseline.seg->mean_incl_background;
  }
  if (baseline.pose2d && candidate.pose2d) {
    out.pckh.emplace();
    for (size_t j = 0; j < kNumJoints; ++j)
      (*out.pckh)[j] = candidate.pose2d->pckh[j] - baseline.pose2d->pckh[j];
    out.pckh_mean = candidate.pose2d->mean - baseline.pose2d->mean;
  }
  if (baseline.depth && candidate.depth) {
    out.depth_rmse.emplace();
    for (size_t p = 0; p < kNumParts; ++p)
      (*out.depth_rmse)[p] = baseline.depth->rmse[p] - candidate.depth->rmse[p];
    out.depth_mean = baseline.depth->mean_body_parts - candidate.depth->mean_body_parts;
  }
  if (baseline.pose3d && candidate.pose3d) {
    out.mjd.emplace();
    for (size_t j = 0; j < kNumJoints; ++j)
      (*out.mjd)[j] = baseline.pose3d->mjd[j] - candidate.pose3d->mjd[j];
    out.mjd_mean = baseline.pose3d->mean - candidate.pose3d->mean;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_value(double v) {
  if (!metric_present(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "# conventions: iou,pckh micro-averaged by global counts; "
        "depth_rmse,mjd macro-averaged per frame\n";
  os << "# depth_rmse unit is bin indices; mjd is camera-frame mm without alignment\n";
  os << "task_combo,metric,part_or_joint,value,unit\n";
  auto row = [&](const std::string& metric, std::string_view label, double v,
                 const std::string& unit) {
    os << task_combo << "," << metric << "," << label << ","
       << detail::fmt_value(v) << "," << unit << "\n";
  };
  if (seg) {
    for (int p = 0; p < kNumParts; ++p)
      row("iou", part_name(p), seg->iou[static_cast<size_t>(p)], "percent");
    row("iou", "Mean", seg->mean_incl_background, "percent");
    row("iou_excl_background", "Mean", seg->mean_excl_background, "percent");
  }
  if (pose2d) {
    for (int j = 0; j < kNumJoints; ++j)
      row("pckh", joint_name(j), pose2d->pckh[static_cast<size_t>(j)], "percent");
    row("pckh", "Mean", pose2d->mean, "percent");
  }
  if (depth) {
    for (int p = 0; p < kNumParts; ++p)
      row("depth_rmse", part_name(p), depth->rmse[static_cast<size_t>(p)], "bins");
    row("depth_rmse", "Mean Body Parts", depth->mean_body_parts, "bins");
    row("depth_rmse", "Mean Full Body", depth->mean_full_body, "bins");
  }
  if (pose3d) {
    for (int j = 0; j < kNumJoints; ++j)
      row("mjd", joint_name(j), pose3d->mjd[static_cast<size_t>(j)], "mm");
    row("mjd", "Mean", pose3d->mean, "mm");
    row("mjd", "Mean All Joints", pose3d->mean_all_joints, "mm");
  }
  return os.str();
}

inline nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["task_combo"] = task_combo;
  j["sample_count"] = sample_count;
  j["conventions"] = {
      {"iou", "micro-averaged by global pixel counts"},
      {"pckh", "micro-averaged by global joint counts; ground-truth head length"},
      {"depth_rmse", "macro-averaged per frame; unit = bin indices; ground-truth masks"},
      {"mjd", "macro-averaged per frame; camera-frame mm; no alignment"}};
  auto put = [](nlohmann::json& dst, double v) {
    if (metric_present(v))
      dst = v;
    else
      dst = nullptr;
  };
  if (seg) {
    nlohmann::json rows = nlohmann::json::array();
    for (int p = 0; p < kNumParts; ++p) {
      nlohmann::json r;
      r["label"] = part_name(p);
      put(r["value"], seg->iou[static_cast<size_t>(p)]);
      rows.push_back(r);
    }
    j["iou"]["rows"] = rows;
    put(j["iou"]["mean"], seg->mean_incl_background);
    put(j["iou"]["mean_excl_background"], seg->mean_excl_background);
  }
  if (pose2d) {
    nlohmann::json rows = nlohmann::json::array();
    for (int jt = 0; jt < kNumJoints; ++jt) {
      nlohmann::json r;
      r["label"] = joint_name(jt);
      put(r["value"], pose2d->pckh[static_cast<size_t>(jt)]);
      rows.push_back(r);
    }
    j["pckh"]["rows"] = rows;
    put(j["pckh"]["mean"], pose2d->mean);
  }
  if (depth) {
    nlohmann::json rows = nlohmann::json::array();
    for (int p = 0; p < kNumParts; ++p) {
      nlohmann::json r;
      r["label"] = part_name(p);
      put(r["value"], depth->rmse[static_cast<size_t>(p)]);
      rows.push_back(r);
    }
    j["depth_rmse"]["rows"] = rows;
    put(j["depth_rmse"]["mean_body_parts"], depth->mean_body_parts);
    put(j["depth_rmse"]["mean_full_body"], depth->mean_full_body);
  }
  if (pose3d) {
    nlohmann::json rows = nlohmann::json::array();
    for (int jt = 0; jt < kNumJoints; ++jt) {
      nlohmann::json r;
      r["label"] = joint_name(jt);
      put(r["value"], pose3d->mjd[static_cast<size_t>(jt)]);
      rows.push_back(r);
    }
    j["mjd"]["rows"] = rows;
    put(j["mjd"]["mean"], pose3d->mean);
    put(j["mjd"]["mean_all_joints"], pose3d->mean_all_joints);
  }
  return j;
}

inline MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.task_combo = j.at("task_combo").get<std::string>();
  r.sample_count = j.value("sample_count", size_t{0});
  auto get = [](const nlohmann::json& v) {
    return v.is_null() ? kMetricMissing : v.get<double>();
  };
  if (j.contains("iou")) {
    SegSection s;
    const auto& rows = j.at("iou").at("rows");
    for (size_t p = 0; p < kNumParts; ++p) s.iou[p] = get(rows.at(p).at("value"));
    s.mean_incl_background = get(j.at("iou").at("mean"));
    s.mean_excl_background = get(j.at("iou").at("mean_excl_background"));
    r.seg = s;
  }
  if (j.contains("pckh")) {
    Pose2dSection s;
    const auto& rows = j.at("pckh").at("rows");
    for (size_t jt = 0; jt < kNumJoints; ++jt) s.pckh[jt] = get(rows.at(jt).at("value"));
    s.mean = get(j.at("pckh").at("mean"));
    r.pose2d = s;
  }
  if (j.contains("depth_rmse")) {
    DepthSection s;
    const auto& rows = j.at("depth_rmse").at("rows");
    for (size_t p = 0; p < kNumParts; ++p) s.rmse[p] = get(rows.at(p).at("value"));
    s.mean_body_parts = get(j.at("depth_rmse").at("mean_body_parts"));
    s.mean_full_body = get(j.at("depth_rmse").at("mean_full_body"));
    r.depth = s;
  }
  if (j.contains("mjd")) {
    Pose3dSection s;
    const auto& rows = j.at("mjd").at("rows");
    for (size_t jt = 0; jt < kNumJoints; ++jt) s.mjd[jt] = get(rows.at(jt).at("value"));
    s.mean = get(j.at("mjd").at("mean"));
    s.mean_all_joints = get(j.at("mjd").at("mean_all_joints"));
    r.pose3d = s;
  }
  return r;
}

}  // namespace mth
