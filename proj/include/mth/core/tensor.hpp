#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mth {

/// Dense row-major tensor. Shape is dynamic; element type is the template
/// parameter so the same numeric code runs in float for training and in
/// double for gradient checks.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_numel(shape_), T{});
  }

  Tensor(std::vector<int> shape, T fill_value) : shape_(std::move(shape)) {
    data_.assign(checked_numel(shape_), fill_value);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  // Indexed access for the common ranks.
  T& at(int a, int b) { return data_[flat2(a, b)]; }
  const T& at(int a, int b) const { return data_[flat2(a, b)]; }
  T& at(int a, int b, int c) { return data_[flat3(a, b, c)]; }
  const T& at(int a, int b, int c) const { return data_[flat3(a, b, c)]; }
  T& at(int a, int b, int c, int d) { return data_[flat4(a, b, c, d)]; }
  const T& at(int a, int b, int c, int d) const { return data_[flat4(a, b, c, d)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  template <typename U>
  bool same_shape_dims(const Tensor<U>& other) const {
    return shape_ == other.shape();
  }

  void fill(T v) { data_.assign(data_.size(), v); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  size_t flat2(int a, int b) const {
    assert(ndim() == 2);
    return static_cast<size_t>(a) * shape_[1] + b;
  }
  size_t flat3(int a, int b, int c) const {
    assert(ndim() == 3);
    return (static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c;
  }
  size_t flat4(int a, int b, int c, int d) const {
    assert(ndim() == 4);
    return ((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
  }

  static size_t checked_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

}  // namespace mth
