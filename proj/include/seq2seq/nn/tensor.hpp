#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "seq2seq/common.hpp"

namespace seq2seq::nn {

// Dense row-major tensor. Value semantics; shapes are small int vectors.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), T(0)) {}
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != static_cast<std::size_t>(count(shape)))
      throw ShapeError("tensor data size does not match shape " + shape_str());
  }

  static long long count(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) {
      if (d <= 0) throw ShapeError("non-positive tensor dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  long long numel() const { return static_cast<long long>(data.size()); }
  bool empty() const { return data.empty(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // 4D accessor (N,C,H,W); used by tests and slow paths
  T& at4(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at4(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
  }

  Tensor reshaped(std::vector<int> s) const {
    if (count(s) != numel())
      throw ShapeError("cannot reshape " + shape_str() + " to new element count");
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t;
    t.shape = shape;
    t.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<U>(data[i]);
    return t;
  }

  T min() const { return *std::min_element(data.begin(), data.end()); }
  T max() const { return *std::max_element(data.begin(), data.end()); }

  double sum() const {
    double s = 0;
    for (T v : data) s += static_cast<double>(v);
    return s;
  }
  double mean() const { return data.empty() ? 0.0 : sum() / static_cast<double>(data.size()); }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

}  // namespace seq2seq::nn
