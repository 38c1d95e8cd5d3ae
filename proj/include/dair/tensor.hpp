#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dair/common.hpp"

namespace dair {

// Dense n-dimensional array, row-major, last axis fastest. The canonical
// image layout throughout is batch x channels x height x width. A rank-0
// tensor (empty shape) is a scalar with one element.
template <typename T = float>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    for (int64_t d : shape_) {
      if (d <= 0) throw StructuralError("tensor extents must be positive");
    }
    data_.assign(static_cast<size_t>(numel_of(shape_)), T(0));
  }

  static Tensor full(std::vector<int64_t> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return full({}, value); }

  static Tensor from_data(std::vector<int64_t> shape, std::vector<T> data) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      throw StructuralError("tensor data length does not match shape product");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 4-d accessor for the NCHW layout.
  T& at(int64_t n, int64_t c, int64_t y, int64_t x) {
    return data_[static_cast<size_t>(index4(n, c, y, x))];
  }
  const T& at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return data_[static_cast<size_t>(index4(n, c, y, x))];
  }

  int64_t index4(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return ((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    std::vector<U> data(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) data[i] = static_cast<U>(data_[i]);
    return Tensor<U>::from_data(shape_, std::move(data));
  }

  static int64_t numel_of(const std::vector<int64_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), int64_t{1},
                           std::multiplies<int64_t>());
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

inline std::string shape_string(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
void require_shape4(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4)
    throw StructuralError(std::string(what) + " must be rank 4, got " +
                          shape_string(t.shape()));
}

}  // namespace dair
