#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mth/nn/layers.hpp"
#include "mth/types.hpp"

namespace mth {

struct HourglassConfig {
  int stacks = 2;
  int features = 256;
  int depth = 4;             // halvings inside each hourglass
  int resolution = 64;       // heatmap resolution R
  int input_resolution = 256;

  void validate() const {
    if (stacks < 1 || features < 4 || depth < 1 || resolution < 2)
      throw std::invalid_argument("hourglass config: non-positive field");
    if (features % 4 != 0)
      throw std::invalid_argument("hourglass config: features must be divisible by 4");
    if (resolution % (1 << depth) != 0)
      throw std::invalid_argument("hourglass config: resolution must be divisible by 2^depth");
    if (input_resolution != 4 * resolution)
      throw std::invalid_argument("hourglass config: input resolution must be 4x heatmap resolution");
  }
};

struct ModelConfig {
  HourglassConfig hg;
  int bins = 19;
  int joints = kNumJoints;
  int parts = kNumParts;

  void validate() const {
    hg.validate();
    if (bins < 1 || joints < 1 || parts < 1)
      throw std::invalid_argument("model config: non-positive vocabulary size");
  }

  int task_channels(Task t) const {
    return output_shape(t, hg.resolution, bins, joints, parts).channels;
  }
};

namespace nn {

/// Shared stem: 7x7 stride-2 conv, residual, 2x max-pool, two residuals;
/// maps {N,3,4R,4R} to {N,F,R,R}.
template <typename T>
struct Stem {
  Conv2d<T> c1;
  GroupNorm<T> g1;
  Residual<T> r1, r2, r3;

  Stem() = default;
  Stem(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int features) {
    c1 = Conv2d<T>(ps, prefix + "/conv1", rng, 3, features / 4, 7, 2);
    g1 = GroupNorm<T>(ps, prefix + "/norm1", features / 4);
    r1 = Residual<T>(ps, prefix + "/res1", rng, features / 4, features / 2);
    r2 = Residual<T>(ps, prefix + "/res2", rng, features / 2, features / 2);
    r3 = Residual<T>(ps, prefix + "/res3", rng, features / 2, features);
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> y = relu(g1(c1(x)));
    y = r1(y);
    y = maxpool2(y);
    y = r2(y);
    return r3(y);
  }
};

/// One encoder-decoder hourglass. Each recursion level halves the
/// resolution; skip residuals rejoin at matching resolutions on the way up,
/// so depth D visits D+1 resolutions down to R / 2^D.
template <typename T>
struct Hourglass {
  struct Level {
    Residual<T> up1, low1, low3;
  };
  std::vector<Level> levels;
  Residual<T> bottom;

  Hourglass() = default;
  Hourglass(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int depth,
            int features) {
    levels.resize(static_cast<size_t>(depth));
    for (int d = 0; d < depth; ++d) {
      std::string lp = prefix + "/down" + std::to_string(d + 1);
      levels[static_cast<size_t>(d)].up1 = Residual<T>(ps, lp + "/up1", rng, features, features);
      levels[static_cast<size_t>(d)].low1 = Residual<T>(ps, lp + "/low1", rng, features, features);
      levels[static_cast<size_t>(d)].low3 = Residual<T>(ps, lp + "/low3", rng, features, features);
    }
    bottom = Residual<T>(ps, prefix + "/bottom", rng, features, features);
  }

  Var<T> operator()(const Var<T>& x) const { return forward_level(0, x); }

 private:
  Var<T> forward_level(size_t d, const Var<T>& x) const {
    const Level& lv = levels[d];
    Var<T> up = lv.up1(x);
    Var<T> low = lv.low1(maxpool2(x));
    Var<T> mid = (d + 1 < levels.size()) ? forward_level(d + 1, low) : bottom(low);
    Var<T> out = upsample2(lv.low3(mid));
    return add(up, out);
  }
};

/// One stack of a stream: hourglass, post residual, 1x1 feature layer, task
/// head, and (except on the last stack) the 1x1 remaps that feed the next
/// stack's input.
template <typename T>
struct StreamStack {
  Hourglass<T> hg;
  Residual<T> post;
  Conv2d<T> lin;
  GroupNorm<T> lin_gn;
  Conv2d<T> head;
  Conv2d<T> remap_feat, remap_pred;
  bool has_remap = false;

  StreamStack() = default;
  StreamStack(ParamStore<T>& ps, const std::string& prefix, Rng& rng,
              const HourglassConfig& cfg, int out_channels, bool last) {
    hg = Hourglass<T>(ps, prefix + "/hg", rng, cfg.depth, cfg.features);
    post = Residual<T>(ps, prefix + "/post", rng, cfg.features, cfg.features);
    lin = Conv2d<T>(ps, prefix + "/lin", rng, cfg.features, cfg.features, 1, 1);
    lin_gn = GroupNorm<T>(ps, prefix + "/lin_norm", cfg.features);
    head = Conv2d<T>(ps, prefix + "/head", rng, cfg.features, out_channels, 1, 1,
                     /*gain=*/0.01);
    if (!last) {
      remap_feat = Conv2d<T>(ps, prefix + "/remap_feat", rng, cfg.features,
                             cfg.features, 1, 1);
      remap_pred = Conv2d<T>(ps, prefix + "/remap_pred", rng, out_channels,
                             cfg.features, 1, 1);
      has_remap = true;
    }
  }

  struct Out {
    Var<T> pred;
    Var<T> next;  // defined only when has_remap
  };

  Out operator()(const Var<T>& x) const {
    Var<T> f = relu(lin_gn(lin(post(hg(x)))));
    Out out;
    out.pred = head(f);
    if (has_remap) out.next = add(add(x, remap_feat(f)), remap_pred(out.pred));
    return out;
  }
};

template <typename T>
struct Stream {
  Task task;
  std::vector<StreamStack<T>> stacks;
};

/// Cross-stream fusion between consecutive stacks: concatenate all stream
/// features, then per stream re-project (|T|F -> |T|F) and compress
/// (|T|F -> F) with stream-specific residual modules.
template <typename T>
struct FusionBlock {
  struct PerStream {
    Residual<T> expand, compress;
  };
  std::vector<PerStream> streams;

  FusionBlock() = default;
  FusionBlock(ParamStore<T>& ps, const std::string& prefix, Rng& rng,
              const std::vector<Task>& tasks, int features) {
    int total = static_cast<int>(tasks.size()) * features;
    streams.resize(tasks.size());
    for (size_t i = 0; i < tasks.size(); ++i) {
      std::string sp = prefix + "/" + std::string(task_token(tasks[i]));
      streams[i].expand = Residual<T>(ps, sp + "/expand", rng, total, total);
      streams[i].compress = Residual<T>(ps, sp + "/compress", rng, total, features);
    }
  }

  std::vector<Var<T>> operator()(const std::vector<Var<T>>& xs) const {
    if (xs.size() != streams.size() || xs.size() < 2)
      throw std::invalid_argument("fuse: expected one feature map per stream (>= 2)");
    for (size_t i = 1; i < xs.size(); ++i)
      if (!xs[i].value().same_shape(xs[0].value()))
        throw std::invalid_argument("fuse: stream shape mismatch");
    Var<T> cat = concat_channels(xs);
    std::vector<Var<T>> out(xs.size());
    for (size_t i = 0; i < xs.size(); ++i)
      out[i] = streams[i].compress(streams[i].expand(cat));
    return out;
  }
};

/// Predictions for every (stack, task) pair; tasks are indexed in the task
/// set's canonical order.
template <typename T>
struct ForwardOutput {
  std::vector<Task> tasks;
  std::vector<std::vector<Var<T>>> preds;  // [stack][task index]

  const Var<T>& at(int stack, Task t) const {
    for (size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i] == t) return preds[static_cast<size_t>(stack)][i];
    throw std::out_of_range("forward output: task not active");
  }
};

}  // namespace nn

/// Shared stem, one stacked-hourglass stream per active task, cross-stream
/// fusion between consecutive stacks. A single-task set degenerates to a
/// plain stacked hourglass with no fusion blocks.
template <typename T>
class MultiTaskModel {
 public:
  MultiTaskModel(TaskSet tasks, const ModelConfig& cfg, uint64_t seed)
      : tasks_(tasks), cfg_(cfg), seed_(seed) {
    if (tasks.empty()) throw std::invalid_argument("build_model: empty task set");
    cfg.validate();
    Rng rng(derive_seed(seed, "init"));
    stem_ = nn::Stem<T>(params_, "stem", rng, cfg.hg.features);
    for (Task t : tasks.list()) {
      nn::Stream<T> stream;
      stream.task = t;
      for (int k = 0; k < cfg.hg.stacks; ++k) {
        std::string prefix = "stream/" + std::string(task_token(t)) + "/stack" +
                             std::to_string(k + 1);
        stream.stacks.emplace_back(params_, prefix, rng, cfg.hg,
                                   cfg.task_channels(t), k + 1 == cfg.hg.stacks);
      }
      streams_.push_back(std::move(stream));
    }
    if (tasks.size() >= 2) {
      for (int k = 0; k < cfg.hg.stacks - 1; ++k)
        fusions_.emplace_back(params_, "fusion" + std::to_string(k + 1), rng,
                              tasks.list(), cfg.hg.features);
    }
  }

  nn::ForwardOutput<T> forward(const Tensor<T>& images) {
    if (images.ndim() != 4 || images.dim(1) != 3 ||
        images.dim(2) != cfg_.hg.input_resolution ||
        images.dim(3) != cfg_.hg.input_resolution)
      throw std::invalid_argument("forward: expected {N,3," +
                                  std::to_string(cfg_.hg.input_resolution) + "," +
                                  std::to_string(cfg_.hg.input_resolution) + "} input");
    if (!images.all_finite())
      throw std::invalid_argument("forward: non-finite input");
    nn::Var<T> x0 = stem_(nn::Var<T>(images));
    std::vector<nn::Var<T>> xs(streams_.size(), x0);
    nn::ForwardOutput<T> out;
    out.tasks = tasks_.list();
    out.preds.resize(static_cast<size_t>(cfg_.hg.stacks));
    for (int k = 0; k < cfg_.hg.stacks; ++k) {
      std::vector<nn::Var<T>> next(streams_.size());
      for (size_t i = 0; i < streams_.size(); ++i) {
        auto stack_out = streams_[i].stacks[static_cast<size_t>(k)](xs[i]);
        out.preds[static_cast<size_t>(k)].push_back(stack_out.pred);
        if (k + 1 < cfg_.hg.stacks) next[i] = stack_out.next;
      }
      if (k + 1 < cfg_.hg.stacks)
        xs = streams_.size() >= 2 ? fusions_[static_cast<size_t>(k)](next)
                                  : std::move(next);
    }
    return out;
  }

  const TaskSet& tasks() const { return tasks_; }
  const ModelConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }
  size_t parameter_count() const { return params_.total_scalars(); }

  int stream_count() const { return static_cast<int>(streams_.size()); }
  int fusion_count() const { return static_cast<int>(fusions_.size()); }
  nn::Stem<T>& stem() { return stem_; }
  nn::Stream<T>& stream(size_t i) { return streams_[i]; }
  nn::FusionBlock<T>& fusion(size_t k) { return fusions_[k]; }

 private:
  TaskSet tasks_;
  ModelConfig cfg_;
  uint64_t seed_;
  nn::ParamStore<T> params_;
  nn::Stem<T> stem_;
  std::vector<nn::Stream<T>> streams_;
  std::vector<nn::FusionBlock<T>> fusions_;
};

}  // namespace mth
