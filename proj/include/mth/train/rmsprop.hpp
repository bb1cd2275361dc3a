#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mth/nn/layers.hpp"

namespace mth {

/// Plain uncentered RMSprop, no momentum:
///   a <- rho * a + (1 - rho) * g^2
///   theta <- theta - lr * g / (sqrt(a) + eps)
/// Optional weight decay and global-norm clipping hooks default off.
class RmsProp {
 public:
  RmsProp(double lr = 1e-3, double rho = 0.99, double eps = 1e-8,
          double weight_decay = 0.0, double grad_clip = 0.0)
      : lr_(lr), rho_(rho), eps_(eps), weight_decay_(weight_decay),
        grad_clip_(grad_clip) {}

  void attach(nn::ParamStore<float>& params) {
    accum_.clear();
    for (size_t i = 0; i < params.count(); ++i)
      accum_.push_back(Tensor<float>::zeros_like(params.var(i).value()));
  }

  void step(nn::ParamStore<float>& params) {
    if (accum_.size() != params.count())
      throw std::logic_error("rmsprop: optimizer not attached to this model");
    float clip_factor = 1.0f;
    if (grad_clip_ > 0) {
      double norm_sq = 0;
      for (size_t i = 0; i < params.count(); ++i) {
        const Tensor<float>& g = params.var(i).grad();
        for (size_t j = 0; j < g.numel(); ++j)
          norm_sq += static_cast<double>(g[j]) * g[j];
      }
      double norm = std::sqrt(norm_sq);
      if (norm > grad_clip_) clip_factor = static_cast<float>(grad_clip_ / norm);
    }
    for (size_t i = 0; i < params.count(); ++i) {
      Tensor<float>& theta = params.var(i).value();
      const Tensor<float>& g = params.var(i).grad();
      Tensor<float>& a = accum_[i];
      for (size_t j = 0; j < theta.numel(); ++j) {
        float grad = g[j] * clip_factor;
        if (weight_decay_ > 0) grad += static_cast<float>(weight_decay_) * theta[j];
        a[j] = static_cast<float>(rho_) * a[j] +
               static_cast<float>(1.0 - rho_) * grad * grad;
        float update = static_cast<float>(lr_) * grad /
                       (std::sqrt(a[j]) + static_cast<float>(eps_));
        theta[j] -= update;
        if (!std::isfinite(theta[j]))
          throw std::runtime_error("rmsprop: non-finite update in parameter " +
                                   params.name(i));
      }
    }
  }

  size_t count() const { return accum_.size(); }
  Tensor<float>& accumulator(size_t i) { return accum_[i]; }
  const Tensor<float>& accumulator(size_t i) const { return accum_[i]; }

  double lr() const { return lr_; }

 private:
  double lr_, rho_, eps_, weight_decay_, grad_clip_;
  std::vector<Tensor<float>> accum_;
};

/// Scalar reference of the same rule, for the unit tests that pin the update
/// arithmetic.
inline void rmsprop_reference_update(double& theta, double& accum, double grad,
                                     double lr, double rho, double eps) {
  accum = rho * accum + (1.0 - rho) * grad * grad;
  theta -= lr * grad / (std::sqrt(accum) + eps);
}

}  // namespace mth
