#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mth/nn/model.hpp"
#include "mth/types.hpp"

namespace mth {

/// RMSE over every element of the tensor: sqrt(sum((p-t)^2) / numel).
/// At pred == target the subgradient 0 is used.
template <typename T>
nn::Var<T> heatmap_rmse_loss(const nn::Var<T>& pred, const Tensor<T>& target) {
  const Tensor<T>& pv = pred.value();
  if (!pv.same_shape(target))
    throw std::invalid_argument("heatmap_rmse_loss: shape mismatch " +
                                pv.shape_str() + " vs " + target.shape_str());
  double sq = 0;
  for (size_t i = 0; i < pv.numel(); ++i) {
    double d = static_cast<double>(pv[i]) - static_cast<double>(target[i]);
    if (!std::isfinite(d)) throw std::invalid_argument("heatmap_rmse_loss: non-finite input");
    sq += d * d;
  }
  double n = static_cast<double>(pv.numel());
  double loss = std::sqrt(sq / n);
  Tensor<T> out({1});
  out[0] = static_cast<T>(loss);
  auto tgt = std::make_shared<Tensor<T>>(target);
  return nn::make_op<T>(std::move(out), {pred}, [tgt, loss, n](nn::Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad || loss <= 0) return;
    p.ensure_grad();
    double g = static_cast<double>(self.grad[0]) / (n * loss);
    for (size_t i = 0; i < p.value.numel(); ++i)
      p.grad[i] += static_cast<T>(g * (static_cast<double>(p.value[i]) - (*tgt)[i]));
  });
}

namespace detail {

template <typename T>
void check_one_hot(const Tensor<T>& target, int channels, size_t pixels,
                   size_t plane) {
  size_t per_sample = static_cast<size_t>(channels) * plane;
  for (size_t px = 0; px < pixels; ++px) {
    size_t n = px / plane, hw = px % plane;
    T sum{0};
    for (int c = 0; c < channels; ++c) {
      T v = target[n * per_sample + static_cast<size_t>(c) * plane + hw];
      if (v != T{0} && v != T{1})
        throw std::invalid_argument("spatial_cross_entropy: target is not one-hot");
      sum += v;
    }
    if (sum != T{1})
      throw std::invalid_argument("spatial_cross_entropy: target is not one-hot");
  }
}

}  // namespace detail

/// Per-pixel softmax over channels, NLL of the target class, averaged over
/// all pixels (weighted by the target class when class_weights is given).
template <typename T>
nn::Var<T> spatial_cross_entropy(const nn::Var<T>& logits,
                                 const Tensor<T>& target_onehot,
                                 const std::vector<T>* class_weights = nullptr) {
  const Tensor<T>& lv = logits.value();
  if (!lv.same_shape(target_onehot))
    throw std::invalid_argument("spatial_cross_entropy: shape mismatch");
  if (lv.ndim() != 3 && lv.ndim() != 4)
    throw std::invalid_argument("spatial_cross_entropy: expected {C,H,W} or {N,C,H,W}");
  int channels = lv.ndim() == 3 ? lv.dim(0) : lv.dim(1);
  size_t plane = static_cast<size_t>(lv.dim(lv.ndim() - 2)) * lv.dim(lv.ndim() - 1);
  size_t pixels = lv.numel() / static_cast<size_t>(channels);
  if (class_weights && static_cast<int>(class_weights->size()) != channels)
    throw std::invalid_argument("spatial_cross_entropy: weight count != channels");
  detail::check_one_hot(target_onehot, channels, pixels, plane);

  size_t per_sample = static_cast<size_t>(channels) * plane;
  double nll_sum = 0, weight_sum = 0;
  for (size_t px = 0; px < pixels; ++px) {
    size_t n = px / plane, hw = px % plane;
    double mx = -1e300;
    int tc = 0;
    for (int c = 0; c < channels; ++c) {
      double v = lv[n * per_sample + static_cast<size_t>(c) * plane + hw];
      if (!std::isfinite(v))
        throw std::invalid_argument("spatial_cross_entropy: non-finite logits");
      mx = std::max(mx, v);
      if (target_onehot[n * per_sample + static_cast<size_t>(c) * plane + hw] == T{1})
        tc = c;
    }
    double sum = 0;
    for (int c = 0; c < channels; ++c)
      sum += std::exp(
          static_cast<double>(lv[n * per_sample + static_cast<size_t>(c) * plane + hw]) - mx);
    double lse = mx + std::log(sum);
    double nll = lse - static_cast<double>(
                           lv[n * per_sample + static_cast<size_t>(tc) * plane + hw]);
    double w = class_weights ? static_cast<double>((*class_weights)[static_cast<size_t>(tc)]) : 1.0;
    nll_sum += w * nll;
    weight_sum += w;
  }
  double loss = weight_sum > 0 ? nll_sum / weight_sum : 0.0;

  Tensor<T> out({1});
  out[0] = static_cast<T>(loss);
  auto tgt = std::make_shared<Tensor<T>>(target_onehot);
  auto wts = class_weights ? std::make_shared<std::vector<T>>(*class_weights) : nullptr;
  auto dims = std::make_shared<std::array<size_t, 3>>(
      std::array<size_t, 3>{static_cast<size_t>(channels), plane, pixels});
  return nn::make_op<T>(
      std::move(out), {logits}, [tgt, wts, dims, weight_sum](nn::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad || weight_sum <= 0) return;
        p.ensure_grad();
        auto [channels, plane, pixels] = *dims;
        size_t per_sample = channels * plane;
        double g = static_cast<double>(self.grad[0]) / weight_sum;
        std::vector<double> sm(channels);
        for (size_t px = 0; px < pixels; ++px) {
          size_t n = px / plane, hw = px % plane;
          double mx = -1e300;
          size_t tc = 0;
          for (size_t c = 0; c < channels; ++c) {
            double v = p.value[n * per_sample + c * plane + hw];
            mx = std::max(mx, v);
            if ((*tgt)[n * per_sample + c * plane + hw] == T{1}) tc = c;
          }
          double sum = 0;
          for (size_t c = 0; c < channels; ++c) {
            sm[c] = std::exp(static_cast<double>(p.value[n * per_sample + c * plane + hw]) - mx);
            sum += sm[c];
          }
          double w = wts ? static_cast<double>((*wts)[tc]) : 1.0;
          for (size_t c = 0; c < channels; ++c) {
            double grad = g * w * (sm[c] / sum - (c == tc ? 1.0 : 0.0));
            p.grad[n * per_sample + c * plane + hw] += static_cast<T>(grad);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Multi-task objective
// ---------------------------------------------------------------------------

/// Batched supervision tensors, one per active task.
template <typename T>
struct TargetBatch {
  std::optional<Tensor<T>> pose2d, parts, depth, pose3d;

  const std::optional<Tensor<T>>& get(Task t) const {
    switch (t) {
      case Task::Pose2D: return pose2d;
      case Task::PartSeg: return parts;
      case Task::Depth: return depth;
      case Task::Pose3D: return pose3d;
    }
    throw std::logic_error("bad task");
  }
  std::optional<Tensor<T>>& get(Task t) {
    return const_cast<std::optional<Tensor<T>>&>(
        static_cast<const TargetBatch*>(this)->get(t));
  }
};

struct LossReport {
  struct Term {
    int stack = 0;  // 1-based
    Task task = Task::Pose2D;
    double value = 0;
  };
  std::vector<Term> terms;
  double total = 0;

  bool all_finite() const {
    if (!std::isfinite(total)) return false;
    for (const Term& t : terms)
      if (!std::isfinite(t.value)) return false;
    return true;
  }
};

/// Unweighted sum over stacks and active tasks; pose terms use RMSE,
/// segmentation and depth use spatial cross-entropy. The optional per-task
/// weights hook defaults to 1 everywhere and leaves the sum untouched then.
template <typename T>
std::pair<nn::Var<T>, LossReport> total_loss(
    const nn::ForwardOutput<T>& outputs, const TargetBatch<T>& targets,
    TaskSet tasks, const std::array<double, 4>& task_weights = {1, 1, 1, 1}) {
  LossReport report;
  nn::Var<T> total;
  for (size_t k = 0; k < outputs.preds.size(); ++k) {
    for (size_t i = 0; i < outputs.tasks.size(); ++i) {
      Task t = outputs.tasks[i];
      if (!tasks.contains(t)) continue;
      const auto& target = targets.get(t);
      if (!target)
        throw std::invalid_argument("total_loss: missing target for active task " +
                                    std::string(task_token(t)));
      const nn::Var<T>& pred = outputs.preds[k][i];
      nn::Var<T> term;
      if (t == Task::Pose2D || t == Task::Pose3D)
        term = heatmap_rmse_loss(pred, *target);
      else
        term = spatial_cross_entropy(pred, *target);
      double w = task_weights[static_cast<size_t>(t)];
      if (w != 1.0) term = nn::scale(term, static_cast<T>(w));
      report.terms.push_back(
          {static_cast<int>(k) + 1, t, static_cast<double>(term.value()[0])});
      total = total.defined() ? nn::add(total, term) : term;
    }
  }
  for (const auto& term : report.terms) report.total += term.value;
  return {total, report};
}

}  // namespace mth
