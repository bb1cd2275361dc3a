#pragma once

#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mth/codecs.hpp"
#include "mth/data/augment.hpp"
#include "mth/losses.hpp"
#include "mth/train/checkpoint.hpp"
#include "mth/train/rmsprop.hpp"

namespace mth {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 5;
  double learning_rate = 1e-3;
  double rms_decay = 0.99;
  double epsilon = 1e-8;
  uint64_t seed = 1;
  int eval_every = 0;            // epochs between eval passes; 0 = end only
  std::string checkpoint_dir;
  bool deterministic = true;
  bool augment = false;
  double weight_decay = 0.0;     // hook, off by default
  double grad_clip = 0.0;        // hook, off by default
  std::array<double, 4> task_weights = {1, 1, 1, 1};
  HeatmapParams heatmap;
  AugmentParams augment_params;

  void validate() const {
    if (epochs < 0 || batch_size < 1 || learning_rate <= 0 || rms_decay <= 0 ||
        rms_decay >= 1 || epsilon <= 0)
      throw std::invalid_argument("train config: invalid optimizer settings");
  }
};

/// Size-aware header for the line-oriented training log.
inline constexpr const char* kTrainLogHeader = "step,epoch,stack,task,loss,wallclock_ms";

/// Owns one optimization run: deterministic data order and augmentation
/// streams are derived from (seed, epoch, sample index), so a resumed
/// session replays exactly the steps an uninterrupted one would take.
class TrainSession {
 public:
  TrainSession(MultiTaskModel<float>& model, const std::vector<Sample>& train_data,
               const TrainConfig& cfg)
      : model_(model), data_(train_data), cfg_(cfg),
        optimizer_(cfg.learning_rate, cfg.rms_decay, cfg.epsilon,
                   cfg.weight_decay, cfg.grad_clip) {
    cfg.validate();
    if (data_.empty()) throw std::invalid_argument("train: empty training stream");
    for (const Sample& s : data_)
      if (s.width != model.config().hg.input_resolution ||
          s.height != model.config().hg.input_resolution)
        throw std::invalid_argument("train: sample resolution does not match model input");
    optimizer_.attach(model_.params());
  }

  uint64_t step() const { return step_; }
  uint64_t epoch() const { return step_ / steps_per_epoch(); }
  uint64_t steps_per_epoch() const {
    return (data_.size() + static_cast<size_t>(cfg_.batch_size) - 1) /
           static_cast<size_t>(cfg_.batch_size);
  }

  RmsProp& optimizer() { return optimizer_; }

  /// Run exactly n optimizer steps.
  void run_steps(uint64_t n, std::ostream* log = nullptr) {
    for (uint64_t i = 0; i < n; ++i) one_step(log);
  }

  /// Run whole epochs, checkpointing after each when a directory is set.
  void run_epochs(int n_epochs, std::ostream* log = nullptr) {
    uint64_t spe = steps_per_epoch();
    for (int e = 0; e < n_epochs; ++e) {
      for (uint64_t i = 0; i < spe; ++i) one_step(log);
      if (!cfg_.checkpoint_dir.empty())
        save(cfg_.checkpoint_dir + "/checkpoint.mth");
    }
  }

  void save(const std::string& path) const {
    CheckpointMeta meta;
    meta.task_set = model_.tasks().str();
    meta.model_config = model_.config();
    meta.step = step_;
    meta.epoch = epoch();
    meta.seed = cfg_.seed;
    meta.init_seed = model_.seed();
    save_checkpoint(path, model_, &optimizer_, meta);
  }

  void resume(const std::string& path) {
    CheckpointMeta meta = load_checkpoint(path, model_, &optimizer_);
    if (meta.seed != cfg_.seed)
      throw std::runtime_error("resume: checkpoint was trained with a different seed");
    step_ = meta.step;
  }

  const LossReport& last_report() const { return last_report_; }

 private:
  void one_step(std::ostream* log) {
    auto t0 = std::chrono::steady_clock::now();
    uint64_t spe = steps_per_epoch();
    uint64_t e = step_ / spe;
    uint64_t pos = step_ % spe;
    if (e != order_epoch_ || order_.empty()) {
      order_.resize(data_.size());
      for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
      Rng rng(derive_seed(cfg_.seed, "order", e));
      rng.shuffle(order_);
      order_epoch_ = e;
    }
    size_t begin = static_cast<size_t>(pos) * static_cast<size_t>(cfg_.batch_size);
    size_t end = std::min(begin + static_cast<size_t>(cfg_.batch_size), data_.size());
    int batch = static_cast<int>(end - begin);

    const ModelConfig& mc = model_.config();
    int in_res = mc.hg.input_resolution;
    int r = mc.hg.resolution;
    Tensor<float> images({batch, 3, in_res, in_res});
    TargetBatch<float> targets;
    for (Task t : model_.tasks().list()) {
      TensorShape3 sh = output_shape(t, r, mc.bins, mc.joints, mc.parts);
      targets.get(t) = Tensor<float>({batch, sh.channels, sh.rows, sh.cols});
    }
    for (int b = 0; b < batch; ++b) {
      size_t idx = order_[begin + static_cast<size_t>(b)];
      const Sample* s = &data_[idx];
      Sample augmented;
      if (cfg_.augment) {
        Rng rng(derive_seed(cfg_.seed, "augment", hash_combine(e, idx)));
        augmented = augment(*s, cfg_.augment_params, rng);
        s = &augmented;
      }
      TargetBundle bundle = encode_targets(*s, model_.tasks(), cfg_.heatmap, r, mc.bins);
      size_t img_plane = static_cast<size_t>(3) * in_res * in_res;
      std::copy(s->image.data(), s->image.data() + img_plane,
                images.data() + static_cast<size_t>(b) * img_plane);
      for (Task t : model_.tasks().list()) {
        const Tensor<float>& src = *bundle.get(t);
        Tensor<float>& dst = *targets.get(t);
        std::copy(src.data(), src.data() + src.numel(),
                  dst.data() + static_cast<size_t>(b) * src.numel());
      }
    }

    model_.params().zero_grads();
    auto outputs = model_.forward(images);
    auto [loss_var, report] = total_loss(outputs, targets, model_.tasks(),
                                         cfg_.task_weights);
    if (!report.all_finite()) {
      for (const auto& term : report.terms)
        if (!std::isfinite(term.value))
          throw std::runtime_error(
              "training aborted at step " + std::to_string(step_) +
              ": non-finite loss (stack " + std::to_string(term.stack) +
              ", task " + std::string(task_token(term.task)) + ")");
      throw std::runtime_error("training aborted: non-finite total loss");
    }
    nn::backward(loss_var);
    optimizer_.step(model_.params());
    last_report_ = report;
    ++step_;

    if (log) {
      double ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
      for (const auto& term : report.terms)
        (*log) << step_ << "," << e << "," << term.stack << ","
               << task_token(term.task) << "," << term.value << "," << ms << "\n";
    }
  }

  MultiTaskModel<float>& model_;
  const std::vector<Sample>& data_;
  TrainConfig cfg_;
  RmsProp optimizer_;
  uint64_t step_ = 0;
  uint64_t order_epoch_ = ~0ull;
  std::vector<size_t> order_;
  LossReport last_report_;
};

struct TrainResult {
  uint64_t steps = 0;
  LossReport final_losses;
};

inline TrainResult train(MultiTaskModel<float>& model,
                         const std::vector<Sample>& train_data,
                         const TrainConfig& cfg, std::ostream* log = nullptr) {
  TrainSession session(model, train_data, cfg);
  if (log) (*log) << kTrainLogHeader << "\n";
  session.run_epochs(cfg.epochs, log);
  return {session.step(), session.last_report()};
}

}  // namespace mth
