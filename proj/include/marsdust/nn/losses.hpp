// Loss functions returning (scalar loss, gradient w.r.t. the first argument).
// All losses are means over every element (or every sample for the
// classification losses), so gradients carry the 1/n factor already.
#pragma once

#include "marsdust/nn/tensor.hpp"

namespace marsdust::nn {

struct LossResult {
  double value = 0;
  Tensor grad;
};

inline LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  require(pred.size() == target.size(), "mse_loss: size mismatch");
  LossResult r;
  r.grad = Tensor(pred.shape);
  const double n = static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = double(pred.data[i]) - target.data[i];
    r.value += d * d;
    r.grad.data[i] = static_cast<float>(2.0 * d / n);
  }
  r.value /= n;
  return r;
}

inline LossResult l1_loss(const Tensor& pred, const Tensor& target) {
  require(pred.size() == target.size(), "l1_loss: size mismatch");
  LossResult r;
  r.grad = Tensor(pred.shape);
  const double n = static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = double(pred.data[i]) - target.data[i];
    r.value += std::abs(d);
    r.grad.data[i] = static_cast<float>((d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / n);
  }
  r.value /= n;
  return r;
}

// Binary cross-entropy on probabilities (inputs already through a sigmoid).
inline LossResult bce_loss(const Tensor& pred, const Tensor& target, double eps = 1e-7) {
  require(pred.size() == target.size(), "bce_loss: size mismatch");
  LossResult r;
  r.grad = Tensor(pred.shape);
  const double n = static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    double p = std::clamp(double(pred.data[i]), eps, 1.0 - eps);
    double t = target.data[i];
    r.value += -(t * std::log(p) + (1 - t) * std::log(1 - p));
    r.grad.data[i] = static_cast<float>((p - t) / (p * (1 - p)) / n);
  }
  r.value /= n;
  return r;
}

// Numerically stable BCE on raw logits.
inline LossResult sigmoid_bce_with_logits(const Tensor& logits, const Tensor& target) {
  require(logits.size() == target.size(), "sigmoid_bce_with_logits: size mismatch");
  LossResult r;
  r.grad = Tensor(logits.shape);
  const double n = static_cast<double>(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    double z = logits.data[i], t = target.data[i];
    r.value += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    double sig = 1.0 / (1.0 + std::exp(-z));
    r.grad.data[i] = static_cast<float>((sig - t) / n);
  }
  r.value /= n;
  return r;
}

inline std::vector<double> softmax_row(const float* z, int c) {
  double mx = z[0];
  for (int i = 1; i < c; ++i) mx = std::max(mx, double(z[i]));
  std::vector<double> p(c);
  double s = 0;
  for (int i = 0; i < c; ++i) {
    p[i] = std::exp(double(z[i]) - mx);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

// Sparse categorical cross-entropy on logits [N, C] with integer labels.
inline LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require(logits.rank() == 2, "softmax_cross_entropy: logits must be [N, C]");
  const int n = logits.dim(0), c = logits.dim(1);
  require(labels.size() == static_cast<size_t>(n), "softmax_cross_entropy: label count");
  LossResult r;
  r.grad = Tensor(logits.shape);
  for (int i = 0; i < n; ++i) {
    require(labels[i] >= 0 && labels[i] < c, "softmax_cross_entropy: label out of range");
    auto p = softmax_row(logits.data.data() + static_cast<size_t>(i) * c, c);
    r.value += -std::log(std::max(p[labels[i]], 1e-300));
    for (int j = 0; j < c; ++j)
      r.grad.data[static_cast<size_t>(i) * c + j] =
          static_cast<float>((p[j] - (j == labels[i] ? 1.0 : 0.0)) / n);
  }
  r.value /= n;
  return r;
}

}  // namespace marsdust::nn
