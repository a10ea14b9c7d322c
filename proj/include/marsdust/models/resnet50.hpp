// ResNet-50 backbone (inference only) plus the transfer-learning head.
//
// The backbone follows the standard v1 bottleneck layout: a 7x7/2 stem with
// batch norm and a 3x3/2 max pool, then four stages of bottleneck blocks
// ([3, 4, 6, 3] blocks; filters 64/128/256/512 expanded 4x) where the first
// block of stages 3-5 downsamples by 2 via its 1x1 convs and a projection
// shortcut. Batch norm runs in inference mode with eps = 1.001e-5. A 224x224x3
// input yields a 7x7x2048 feature map, flattened to 100352 features.
//
// Backbone parameters are created frozen (non-trainable) and are never touched
// by head training; only the dense/dropout head learns. Weights load from an
// NPZ in this library's own format. Parameter naming, for converters from
// other formats:
//   stem.conv.{w,b}      stem.bn.{gamma,beta,mean,var}
//   s<2-5>.b<i>.conv<1-3>.{w,b}   s<2-5>.b<i>.bn<1-3>.{gamma,beta,mean,var}
//   s<2-5>.b0.proj.{w,b}          s<2-5>.b0.projbn.{gamma,beta,mean,var}
// Conv kernels are row-major [k*k*in_ch, out_ch] with the (ky, kx, c_in)
// index flattened in that order, which matches a channels-last HWIO kernel
// flattened flat.
#pragma once

#include "marsdust/nn/losses.hpp"
#include "marsdust/nn/network.hpp"

namespace marsdust::models {

namespace detail {

// One bottleneck residual block: 1x1 (possibly strided) -> 3x3 -> 1x1 expand,
// each followed by batch norm, with ReLU between and after the residual add.
struct Bottleneck {
  nn::Conv2d c1, c2, c3;
  nn::BatchNorm2d n1, n2, n3;
  std::unique_ptr<nn::Conv2d> proj;
  std::unique_ptr<nn::BatchNorm2d> projbn;

  Bottleneck(int in_ch, int f, int out_ch, int stride, Rng& rng)
      : c1(in_ch, f, 1, stride, 0, rng),
        c2(f, f, 3, 1, 1, rng),
        c3(f, out_ch, 1, 1, 0, rng),
        n1(f, 0.99, 1.001e-5),
        n2(f, 0.99, 1.001e-5),
        n3(out_ch, 0.99, 1.001e-5) {
    if (in_ch != out_ch || stride != 1) {
      proj = std::make_unique<nn::Conv2d>(in_ch, out_ch, 1, stride, 0, rng);
      projbn = std::make_unique<nn::BatchNorm2d>(out_ch, 0.99, 1.001e-5);
    }
  }

  nn::Tensor forward(const nn::Tensor& x) {
    nn::Tensor y = n1.forward(c1.forward(x, false), false);
    for (auto& v : y.data) v = std::max(v, 0.0f);
    y = n2.forward(c2.forward(y, false), false);
    for (auto& v : y.data) v = std::max(v, 0.0f);
    y = n3.forward(c3.forward(y, false), false);
    nn::Tensor s = proj ? projbn->forward(proj->forward(x, false), false) : x;
    require(s.shape == y.shape, "bottleneck: shortcut shape mismatch");
    for (size_t i = 0; i < y.size(); ++i) y.data[i] = std::max(y.data[i] + s.data[i], 0.0f);
    return y;
  }

  void collect(const std::string& prefix, std::vector<nn::Param*>& out) {
    auto tag = [&](nn::Layer& l, const std::string& base,
                   std::initializer_list<const char*> names) {
      auto ps = l.params();
      size_t i = 0;
      for (const char* n : names) out.push_back(ps[i]), ps[i++]->name = prefix + base + n;
    };
    tag(c1, ".conv1", {".w", ".b"});
    tag(n1, ".bn1", {".gamma", ".beta", ".mean", ".var"});
    tag(c2, ".conv2", {".w", ".b"});
    tag(n2, ".bn2", {".gamma", ".beta", ".mean", ".var"});
    tag(c3, ".conv3", {".w", ".b"});
    tag(n3, ".bn3", {".gamma", ".beta", ".mean", ".var"});
    if (proj) {
      tag(*proj, ".proj", {".w", ".b"});
      tag(*projbn, ".projbn", {".gamma", ".beta", ".mean", ".var"});
    }
  }
};

}  // namespace detail

class ResNet50Backbone {
 public:
  static constexpr int input_h = 224;
  static constexpr int input_w = 224;
  static constexpr int input_c = 3;
  static constexpr int feature_dim = 7 * 7 * 2048;

  explicit ResNet50Backbone(uint64_t seed = 0) {
    Rng rng(seed);
    stem_ = std::make_unique<nn::Conv2d>(3, 64, 7, 2, 3, rng);
    stem_bn_ = std::make_unique<nn::BatchNorm2d>(64, 0.99, 1.001e-5);
    pool_ = std::make_unique<nn::MaxPool2d>(3, 2, 1);

    const int filters[4] = {64, 128, 256, 512};
    const int blocks[4] = {3, 4, 6, 3};
    int in_ch = 64;
    for (int s = 0; s < 4; ++s) {
      int f = filters[s], out_ch = 4 * f;
      for (int b = 0; b < blocks[s]; ++b) {
        int stride = (b == 0 && s > 0) ? 2 : 1;
        stages_[s].push_back(
            std::make_unique<detail::Bottleneck>(b == 0 ? in_ch : out_ch, f, out_ch, stride, rng));
      }
      in_ch = out_ch;
    }
    for (auto* p : params()) p->trainable = false;
  }

  // [n, 224, 224, 3] -> [n, 100352]; runs the batch one image at a time to
  // keep peak im2col memory flat.
  nn::Tensor features(const nn::Tensor& x) {
    require(x.rank() == 4 && x.dim(1) == input_h && x.dim(2) == input_w &&
                x.dim(3) == input_c,
            "resnet50: expected input of shape [n,224,224,3]");
    int n = x.dim(0);
    const size_t stride = static_cast<size_t>(input_h) * input_w * input_c;
    nn::Tensor out({n, feature_dim});
    for (int i = 0; i < n; ++i) {
      nn::Tensor one({1, input_h, input_w, input_c});
      std::copy_n(x.data.begin() + static_cast<size_t>(i) * stride, stride, one.data.begin());
      nn::Tensor f = forward_one(one);
      require(f.size() == static_cast<size_t>(feature_dim), "resnet50: bad feature size");
      std::copy(f.data.begin(), f.data.end(),
                out.data.begin() + static_cast<size_t>(i) * feature_dim);
    }
    return out;
  }

  std::vector<nn::Param*> params() {
    std::vector<nn::Param*> out;
    auto tag = [&](nn::Layer& l, const std::string& base,
                   std::initializer_list<const char*> names) {
      auto ps = l.params();
      size_t i = 0;
      for (const char* n : names) out.push_back(ps[i]), ps[i++]->name = base + n;
    };
    tag(*stem_, "stem.conv", {".w", ".b"});
    tag(*stem_bn_, "stem.bn", {".gamma", ".beta", ".mean", ".var"});
    for (int s = 0; s < 4; ++s)
      for (size_t b = 0; b < stages_[s].size(); ++b)
        stages_[s][b]->collect("s" + std::to_string(s + 2) + ".b" + std::to_string(b), out);
    return out;
  }

  size_t param_count() {
    size_t n = 0;
    for (auto* p : params()) n += p->value.size();
    return n;
  }

  // L-inf distance to a snapshot taken with snapshot(); 0 means bit-identical.
  static std::vector<std::vector<float>> snapshot(std::vector<nn::Param*> params) {
    std::vector<std::vector<float>> out;
    for (auto* p : params) out.push_back(p->value.data);
    return out;
  }
  static float max_abs_delta(std::vector<nn::Param*> params,
                             const std::vector<std::vector<float>>& snap) {
    require(params.size() == snap.size(), "max_abs_delta: snapshot mismatch");
    float d = 0;
    for (size_t i = 0; i < params.size(); ++i) {
      require(params[i]->value.data.size() == snap[i].size(), "max_abs_delta: size mismatch");
      for (size_t j = 0; j < snap[i].size(); ++j)
        d = std::max(d, std::abs(params[i]->value.data[j] - snap[i][j]));
    }
    return d;
  }

 private:
  nn::Tensor forward_one(const nn::Tensor& x) {
    nn::Tensor y = stem_bn_->forward(stem_->forward(x, false), false);
    for (auto& v : y.data) v = std::max(v, 0.0f);
    y = pool_->forward(y, false);
    for (auto& stage : stages_)
      for (auto& block : stage) y = block->forward(y);
    return y.reshaped({1, feature_dim});
  }

  std::unique_ptr<nn::Conv2d> stem_;
  std::unique_ptr<nn::BatchNorm2d> stem_bn_;
  std::unique_ptr<nn::MaxPool2d> pool_;
  std::array<std::vector<std::unique_ptr<detail::Bottleneck>>, 4> stages_;
};

// Resolves where backbone weights come from. Accepted values for `source`:
// a file path, "random" (keep the seeded initialization; useful for tests and
// offline smoke runs), or "auto" (use the MARSDUST_RESNET50_WEIGHTS
// environment variable). Anything unavailable raises with a remediation hint.
inline void load_resnet50_weights(ResNet50Backbone& net, const std::string& source) {
  std::string src = source.empty() ? "auto" : source;
  if (src == "auto") {
    const char* env = std::getenv("MARSDUST_RESNET50_WEIGHTS");
    if (!env || !*env)
      throw ConfigError(
          "resnet50: no pretrained weights configured; set MARSDUST_RESNET50_WEIGHTS "
          "to a weight NPZ (converted per the naming scheme in models/resnet50.hpp) "
          "or pass weights=random for an untrained backbone");
    src = env;
  }
  if (src == "random") return;  // keep the seeded constructor init
  if (!fs::exists(src))
    throw ConfigError("resnet50: weight file not found: " + src +
                      " (set MARSDUST_RESNET50_WEIGHTS or pass weights=random)");
  nn::load_weights(src, net.params());
}

}  // namespace marsdust::models
