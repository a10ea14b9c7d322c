// Adam optimizer over a flat parameter list.
#pragma once

#include "marsdust/nn/layers.hpp"

namespace marsdust::nn {

class Adam {
 public:
  explicit Adam(std::vector<Param*> params, double lr = 3e-4, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-7)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (Param* p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (size_t k = 0; k < params_.size(); ++k) {
      Param* p = params_[k];
      if (!p->trainable) continue;
      p->ensure_grad();
      for (size_t i = 0; i < p->value.size(); ++i) {
        double g = p->grad.data[i];
        double m = b1_ * m_[k].data[i] + (1 - b1_) * g;
        double v = b2_ * v_[k].data[i] + (1 - b2_) * g * g;
        m_[k].data[i] = static_cast<float>(m);
        v_[k].data[i] = static_cast<float>(v);
        p->value.data[i] -=
            static_cast<float>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace marsdust::nn
