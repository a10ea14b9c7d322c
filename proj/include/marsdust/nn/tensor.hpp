// Dense float32 tensor with NHWC convention for 4-d image batches.
#pragma once

#include <numeric>
#include <vector>

#include "marsdust/common.hpp"
#include "marsdust/rng.hpp"

namespace marsdust::nn {

struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(count(shape), 0.f);
  }
  Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == count(shape), "tensor: data/shape mismatch");
  }

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      require(d >= 0, "tensor: negative dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  size_t size() const { return data.size(); }
  int dim(size_t i) const { return shape.at(i); }
  int rank() const { return static_cast<int>(shape.size()); }

  float& operator[](size_t i) { return data[i]; }
  float operator[](size_t i) const { return data[i]; }

  // NHWC element access for rank-4 tensors
  float& at(int n, int y, int x, int c) {
    return data[((static_cast<size_t>(n) * shape[1] + y) * shape[2] + x) * shape[3] + c];
  }
  float at(int n, int y, int x, int c) const {
    return data[((static_cast<size_t>(n) * shape[1] + y) * shape[2] + x) * shape[3] + c];
  }

  Tensor reshaped(std::vector<int> s) const {
    require(count(s) == size(), "tensor: reshape element count mismatch");
    return Tensor(std::move(s), data);
  }

  void fill(float v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(0.f); }

  void add_scaled(const Tensor& other, float scale) {
    require(other.size() == size(), "tensor: add_scaled size mismatch");
    for (size_t i = 0; i < data.size(); ++i) data[i] += scale * other.data[i];
  }

  static Tensor randn(std::vector<int> s, Rng& rng, float stddev = 1.f) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = static_cast<float>(rng.next_normal(0.0, stddev));
    return t;
  }
};

}  // namespace marsdust::nn
