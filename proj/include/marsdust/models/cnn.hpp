// Small convolutional dusty/not-dusty classifier.
//
// Stack: conv3x3(32) - pool2 - conv3x3(64) - pool2 - conv3x3(64) - flatten -
// dense(64) - dense(2). Convolutions are unpadded; ReLU follows every conv and
// the first dense layer. The receptive field of the last conv layer works out
// to 18 pixels (3 -> 4 -> 8 -> 10 -> 18 through the stack). The network emits
// logits; softmax lives in the loss during training and in predict_proba at
// inference.
#pragma once

#include "marsdust/nn/losses.hpp"
#include "marsdust/nn/network.hpp"

namespace marsdust::models {

struct Cnn {
  static constexpr int input_h = 64;
  static constexpr int input_w = 64;
  static constexpr int input_c = 1;

  nn::Sequential net;

  explicit Cnn(uint64_t seed = 0) {
    Rng rng(seed);
    net.add<nn::Conv2d>(1, 32, 3, 1, 0, rng);   // 64 -> 62
    net.add<nn::ReLU>();
    net.add<nn::MaxPool2d>(2);                  // 62 -> 31
    net.add<nn::Conv2d>(32, 64, 3, 1, 0, rng);  // 31 -> 29
    net.add<nn::ReLU>();
    net.add<nn::MaxPool2d>(2);                  // 29 -> 14
    net.add<nn::Conv2d>(64, 64, 3, 1, 0, rng);  // 14 -> 12
    net.add<nn::ReLU>();
    net.add<nn::Flatten>();                     // 12*12*64 = 9216
    net.add<nn::Dense>(9216, 64, rng);
    net.add<nn::ReLU>();
    net.add<nn::Dense>(64, 2, rng);
  }

  // Receptive field of the final conv layer (layers before Flatten).
  int final_conv_receptive_field() const {
    nn::ReceptiveField rf;
    for (size_t i = 0; i < 8; ++i) const_cast<Cnn*>(this)->net.layer(i).update_rf(rf);
    return rf.size;
  }

  nn::Tensor logits(const nn::Tensor& x, bool training = false) {
    require(x.rank() == 4 && x.dim(1) == input_h && x.dim(2) == input_w &&
                x.dim(3) == input_c,
            "cnn: expected input of shape [n,64,64,1]");
    return net.forward(x, training);
  }

  // Row-wise softmax probabilities, shape [n, 2].
  nn::Tensor predict_proba(const nn::Tensor& x) {
    nn::Tensor z = logits(x, false);
    for (int i = 0; i < z.dim(0); ++i) {
      auto p = nn::softmax_row(z.data.data() + static_cast<size_t>(i) * 2, 2);
      z.data[i * 2] = static_cast<float>(p[0]);
      z.data[i * 2 + 1] = static_cast<float>(p[1]);
    }
    return z;
  }

  size_t param_count() {
    size_t n = 0;
    for (auto* p : net.params()) n += p->value.size();
    return n;
  }
};

inline Cnn build_cnn(uint64_t seed = 0) { return Cnn(seed); }

}  // namespace marsdust::models
