#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mth/core/tensor.hpp"

namespace mth {

inline constexpr int kNumJoints = 16;
inline constexpr int kNumParts = 15;  // 14 body parts + background
inline constexpr int kBackgroundPart = 0;
inline constexpr float kBackgroundDepth = std::numeric_limits<float>::infinity();

// ---------------------------------------------------------------------------
// Label vocabularies
// ---------------------------------------------------------------------------

enum class Joint : int {
  RAnkle = 0, RKnee, RHip, LHip, LKnee, LAnkle, Pelvis, Thorax,
  UpperNeck, HeadTop, RWrist, RElbow, RShoulder, LShoulder, LElbow, LWrist,
};

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "R.Ankle", "R.Knee",  "R.Hip",      "L.Hip",      "L.Knee",  "L.Ankle",
    "Pelvis",  "Thorax",  "Upper Neck", "Head Top",   "R.Wrist", "R.Elbow",
    "R.Shoulder", "L.Shoulder", "L.Elbow", "L.Wrist",
};

inline constexpr std::array<std::string_view, kNumParts> kPartNames = {
    "Background",  "Head",        "Torso",       "Upper R.Arm", "Lower R.Arm",
    "R.Hand",      "Upper L.Arm", "Lower L.Arm", "L.Hand",      "Upper R.Leg",
    "Lower R.Leg", "R.Feet",      "Upper L.Leg", "Lower L.Leg", "L.Feet",
};

inline std::string_view joint_name(int index) {
  if (index < 0 || index >= kNumJoints)
    throw std::out_of_range("joint index out of range");
  return kJointNames[static_cast<size_t>(index)];
}

inline std::string_view part_name(int index) {
  if (index < 0 || index >= kNumParts)
    throw std::out_of_range("part index out of range");
  return kPartNames[static_cast<size_t>(index)];
}

inline std::optional<int> joint_index(std::string_view name) {
  for (int i = 0; i < kNumJoints; ++i)
    if (kJointNames[static_cast<size_t>(i)] == name) return i;
  return std::nullopt;
}

inline std::optional<int> part_index(std::string_view name) {
  for (int i = 0; i < kNumParts; ++i)
    if (kPartNames[static_cast<size_t>(i)] == name) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

enum class Task : uint8_t { Pose2D = 0, PartSeg = 1, Depth = 2, Pose3D = 3 };

inline constexpr std::array<Task, 4> kAllTasks = {Task::Pose2D, Task::PartSeg,
                                                  Task::Depth, Task::Pose3D};

inline std::string_view task_token(Task t) {
  switch (t) {
    case Task::Pose2D: return "2d";
    case Task::PartSeg: return "seg";
    case Task::Depth: return "depth";
    case Task::Pose3D: return "3d";
  }
  throw std::logic_error("bad task");
}

/// Non-empty subset of the four tasks with a fixed canonical order
/// (2d, seg, depth, 3d) and a canonical "+"-joined string form.
class TaskSet {
 public:
  TaskSet() = default;
  TaskSet(std::initializer_list<Task> ts) {
    for (Task t : ts) bits_ |= bit(t);
  }

  static TaskSet parse(std::string_view text);

  bool contains(Task t) const { return bits_ & bit(t); }
  bool empty() const { return bits_ == 0; }
  int size() const {
    int n = 0;
    for (Task t : kAllTasks) n += contains(t) ? 1 : 0;
    return n;
  }

  std::vector<Task> list() const {
    std::vector<Task> out;
    for (Task t : kAllTasks)
      if (contains(t)) out.push_back(t);
    return out;
  }

  std::string str() const {
    std::string s;
    for (Task t : kAllTasks) {
      if (!contains(t)) continue;
      if (!s.empty()) s += "+";
      s += task_token(t);
    }
    return s;
  }

  uint8_t bits() const { return bits_; }

  bool operator==(const TaskSet& other) const { return bits_ == other.bits_; }
  bool operator<(const TaskSet& other) const { return bits_ < other.bits_; }

  /// All 15 non-empty subsets, in bitmask order.
  static std::vector<TaskSet> all_nonempty() {
    std::vector<TaskSet> out;
    for (uint8_t m = 1; m < 16; ++m) {
      TaskSet s;
      s.bits_ = m;
      out.push_back(s);
    }
    return out;
  }

 private:
  static uint8_t bit(Task t) { return static_cast<uint8_t>(1u << static_cast<uint8_t>(t)); }
  uint8_t bits_ = 0;
};

inline TaskSet TaskSet::parse(std::string_view text) {
  TaskSet set;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t next = text.find('+', pos);
    std::string_view token = text.substr(pos, next == std::string_view::npos
                                                  ? std::string_view::npos
                                                  : next - pos);
    bool known = false;
    for (Task t : kAllTasks) {
      if (token == task_token(t)) {
        set.bits_ |= bit(t);
        known = true;
        break;
      }
    }
    if (!known)
      throw std::invalid_argument("unknown task token \"" + std::string(token) + "\"");
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  if (set.empty()) throw std::invalid_argument("empty task set");
  return set;
}

inline TaskSet parse_task_set(std::string_view text) { return TaskSet::parse(text); }

// ---------------------------------------------------------------------------
// Output tensor shape contract
// ---------------------------------------------------------------------------

struct TensorShape3 {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  bool operator==(const TensorShape3&) const = default;
};

/// Channel counts depend only on the label vocabularies and bin count;
/// spatial dims scale with the heatmap resolution.
inline TensorShape3 output_shape(Task task, int resolution, int bins,
                                 int joints, int parts) {
  if (resolution <= 0 || bins <= 0 || joints <= 0 || parts <= 0)
    throw std::invalid_argument("output_shape: all hyperparameters must be positive");
  switch (task) {
    case Task::Pose2D: return {resolution, resolution, joints};
    case Task::PartSeg: return {resolution, resolution, parts};
    case Task::Depth: return {resolution, resolution, bins + 1};
    case Task::Pose3D: return {resolution, resolution, bins * joints};
  }
  throw std::logic_error("bad task");
}

// ---------------------------------------------------------------------------
// Geometry and samples
// ---------------------------------------------------------------------------

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;

  void validate(int width, int height) const {
    if (fx <= 0 || fy <= 0)
      throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
      throw std::invalid_argument("intrinsics: principal point outside image");
  }
};

inline Vec2 project(const CameraIntrinsics& k, const Vec3& p) {
  return {k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy};
}

inline Vec3 back_project(const CameraIntrinsics& k, double u, double v, double z) {
  return {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
}

/// One annotated human crop. Depth is metric millimetres with +inf marking
/// background; joints outside the crop carry visible = false rather than
/// being clamped.
struct Sample {
  int width = 0, height = 0;
  Tensor<float> image;                          // {3, H, W}, intensities in [0,1]
  std::array<Vec2, kNumJoints> joints2d{};      // pixel coords in crop frame
  std::array<Vec3, kNumJoints> joints3d{};      // camera-frame mm
  std::array<bool, kNumJoints> visible{};
  Tensor<uint8_t> part_mask;                    // {H, W}, labels 0..14
  Tensor<float> depth;                          // {H, W}, mm; +inf = background
  CameraIntrinsics intrinsics;
  std::string subject_id;
  std::string frame_id;
};

}  // namespace mth
