#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mth/core/rng.hpp"
#include "mth/nn/ops.hpp"

namespace mth::nn {

/// Owns every learnable tensor of a model, in creation order. The order is
/// deterministic for a given (task set, config), which fixes both the
/// initialization draw sequence and the checkpoint layout.
template <typename T>
class ParamStore {
 public:
  Var<T> create(std::string name, std::vector<int> shape) {
    Var<T> v(Tensor<T>(std::move(shape)), /*requires_grad=*/true);
    params_.emplace_back(std::move(name), v);
    return v;
  }

  size_t count() const { return params_.size(); }
  const std::string& name(size_t i) const { return params_[i].first; }
  Var<T>& var(size_t i) { return params_[i].second; }
  const Var<T>& var(size_t i) const { return params_[i].second; }

  Var<T>* find(const std::string& name) {
    for (auto& [n, v] : params_)
      if (n == name) return &v;
    return nullptr;
  }

  size_t total_scalars() const {
    size_t n = 0;
    for (const auto& [_, v] : params_) n += v.value().numel();
    return n;
  }

  void zero_grads() {
    for (auto& [_, v] : params_) v.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Uniform fan-in init, U(-sqrt(6/fan_in), +sqrt(6/fan_in)), optionally
/// shrunk by a gain (heads use 0.01 so early losses track the targets).
template <typename T>
void init_conv_weight(Tensor<T>& w, Rng& rng, double gain = 1.0) {
  int fan_in = w.dim(1) * w.dim(2) * w.dim(3);
  double bound = gain * std::sqrt(6.0 / fan_in);
  for (size_t i = 0; i < w.numel(); ++i)
    w[i] = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// Modules
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2d {
  Var<T> w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int cin,
         int cout, int kernel, int stride_, double gain = 1.0)
      : stride(stride_), pad(kernel / 2) {
    w = ps.create(prefix + "/weight", {cout, cin, kernel, kernel});
    b = ps.create(prefix + "/bias", {cout});
    init_conv_weight(w.value(), rng, gain);
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct GroupNorm {
  Var<T> gamma, beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(ParamStore<T>& ps, const std::string& prefix, int channels)
      : groups(group_norm_groups(channels)) {
    gamma = ps.create(prefix + "/scale", {channels});
    beta = ps.create(prefix + "/shift", {channels});
    gamma.value().fill(T{1});
  }

  Var<T> operator()(const Var<T>& x) const {
    return group_norm(x, gamma, beta, groups);
  }
};

/// Pre-activation bottleneck: norm-relu-1x1 (to cout/2), norm-relu-3x3,
/// norm-relu-1x1 (to cout), plus identity skip (1x1 projection when the
/// channel count changes).
template <typename T>
struct Residual {
  GroupNorm<T> gn1, gn2, gn3;
  Conv2d<T> c1, c2, c3;
  std::optional<Conv2d<T>> skip;

  Residual() = default;
  Residual(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int cin, int cout) {
    int mid = std::max(1, cout / 2);
    gn1 = GroupNorm<T>(ps, prefix + "/norm1", cin);
    c1 = Conv2d<T>(ps, prefix + "/conv1", rng, cin, mid, 1, 1);
    gn2 = GroupNorm<T>(ps, prefix + "/norm2", mid);
    c2 = Conv2d<T>(ps, prefix + "/conv2", rng, mid, mid, 3, 1);
    gn3 = GroupNorm<T>(ps, prefix + "/norm3", mid);
    c3 = Conv2d<T>(ps, prefix + "/conv3", rng, mid, cout, 1, 1);
    if (cin != cout) skip = Conv2d<T>(ps, prefix + "/skip", rng, cin, cout, 1, 1);
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> y = c1(relu(gn1(x)));
    y = c2(relu(gn2(y)));
    y = c3(relu(gn3(y)));
    Var<T> s = skip ? (*skip)(x) : x;
    return add(s, y);
  }
};

}  // namespace mth::nn
