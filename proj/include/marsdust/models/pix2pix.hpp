// Conditional-GAN denoiser: U-Net generator, 70x70 PatchGAN discriminator,
// adversarial + L1 objective, paired-data training loop.
//
// Generator: 8 stride-2 4x4 conv blocks (64 no-norm, 128, 256, 512 x5) take
// 256x256 down to a 1x1 bottleneck; 8 transposed-conv blocks mirror back up
// with skip concatenation from the encoder, dropout 0.5 on the first three,
// and a final tanh. Discriminator: concatenated (input, candidate) pair
// through 4x4 convs with strides 2,2,2,1,1 -> a 30x30x1 logit map whose
// receptive field is 70x70. Weights init N(0, 0.02); batch-norm layers in the
// generator normalize by current-batch statistics even at inference, the
// usual conditional-GAN convention.
#pragma once

#include <array>

#include "marsdust/metrics.hpp"
#include "marsdust/nn/losses.hpp"
#include "marsdust/nn/network.hpp"
#include "marsdust/nn/optim.hpp"
#include "marsdust/noise.hpp"
#include "marsdust/tensorize.hpp"

namespace marsdust::models {

struct GanConfig {
  int image_size = 256;
  double generator_lr = 2e-4;
  double discriminator_lr = 2e-4;
  double adam_beta1 = 0.5;
  int epochs = 10;
  double lambda_l1 = 100.0;
  int batch_size = 1;

  void validate() const {
    require(image_size == 256, "gan config: image_size is fixed at 256");
    require(generator_lr > 0 && discriminator_lr > 0, "gan config: learning rates must be > 0");
    require(lambda_l1 > 0, "gan config: lambda_l1 must be > 0");
    require(epochs >= 1 && batch_size >= 1, "gan config: epochs and batch size must be >= 1");
  }
};

struct GanLossRecord {
  double gen_total = 0;
  double gen_adversarial = 0;
  double gen_l1 = 0;
  double disc_loss = 0;
};

namespace detail {

inline nn::Tensor concat_c(const nn::Tensor& a, const nn::Tensor& b) {
  require(a.rank() == 4 && b.rank() == 4 && a.dim(0) == b.dim(0) && a.dim(1) == b.dim(1) &&
              a.dim(2) == b.dim(2),
          "concat_c: mismatched spatial shapes");
  int ca = a.dim(3), cb = b.dim(3);
  nn::Tensor out({a.dim(0), a.dim(1), a.dim(2), ca + cb});
  size_t rows = a.size() / ca;
  for (size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data.begin() + r * ca, ca, out.data.begin() + r * (ca + cb));
    std::copy_n(b.data.begin() + r * cb, cb, out.data.begin() + r * (ca + cb) + ca);
  }
  return out;
}

inline std::pair<nn::Tensor, nn::Tensor> split_c(const nn::Tensor& g, int ca) {
  int c = g.dim(3), cb = c - ca;
  require(ca > 0 && cb > 0, "split_c: bad channel split");
  nn::Tensor a({g.dim(0), g.dim(1), g.dim(2), ca});
  nn::Tensor b({g.dim(0), g.dim(1), g.dim(2), cb});
  size_t rows = g.size() / c;
  for (size_t r = 0; r < rows; ++r) {
    std::copy_n(g.data.begin() + r * c, ca, a.data.begin() + r * ca);
    std::copy_n(g.data.begin() + r * c + ca, cb, b.data.begin() + r * cb);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace detail

// --- generator -------------------------------------------------------------

class UnetGenerator {
 public:
  static constexpr int image_size = 256;

  explicit UnetGenerator(uint64_t seed = 0) : init_seed_(seed) {
    Rng rng(seed);
    const int dch[8] = {64, 128, 256, 512, 512, 512, 512, 512};
    int cin = 1;
    for (int i = 0; i < 8; ++i) {
      downs_[i].conv = std::make_unique<nn::Conv2d>(cin, dch[i], 4, 2, 1, rng,
                                                    nn::Init::normal002, /*bias=*/false);
      if (i > 0) downs_[i].bn = make_gan_bn(dch[i]);
      cin = dch[i];
    }
    // deconv input = previous up output + skip channels (after the concat)
    const int uin[7] = {512, 1024, 1024, 1024, 1024, 512, 256};
    const int uch[7] = {512, 512, 512, 512, 256, 128, 64};
    for (int i = 0; i < 7; ++i) {
      ups_[i].deconv = std::make_unique<nn::ConvTranspose2d>(uin[i], uch[i], 4, 2, 1, rng,
                                                             nn::Init::normal002, false);
      ups_[i].bn = make_gan_bn(uch[i]);
      if (i < 3) ups_[i].drop = std::make_unique<nn::Dropout>(0.5, derive_seed(seed, 900 + i));
    }
    final_ = std::make_unique<nn::ConvTranspose2d>(128, 1, 4, 2, 1, rng,
                                                   nn::Init::normal002, true);
  }

  nn::Tensor forward(const nn::Tensor& x, bool training) {
    require(x.rank() == 4 && x.dim(1) == image_size && x.dim(2) == image_size && x.dim(3) == 1,
            "generator: expected input [n,256,256,1]");
    skips_.clear();
    concat_channels_.clear();
    nn::Tensor cur = x;
    for (auto& d : downs_) {
      cur = d.forward(cur, training);
      skips_.push_back(cur);
    }
    down_dims_.clear();
    for (const auto& s : skips_) down_dims_.push_back(s.dim(1));

    for (int i = 0; i < 7; ++i) {
      cur = ups_[i].forward(cur, training);
      cur = detail::concat_c(cur, skips_[6 - i]);
      concat_channels_.push_back(cur.dim(3));
    }
    cur = final_->forward(cur, training);
    return tanh_.forward(cur, training);
  }

  // Backpropagates through the skip graph; parameter gradients accumulate.
  void backward(const nn::Tensor& grad_out) {
    nn::Tensor g = tanh_.backward(grad_out);
    g = final_->backward(g);
    std::array<nn::Tensor, 8> skip_grads;  // gradient flowing into skips_[k]
    for (int i = 6; i >= 0; --i) {
      auto [gu, gskip] = detail::split_c(g, g.dim(3) - skips_[6 - i].dim(3));
      skip_grads[6 - i] = std::move(gskip);
      g = ups_[i].backward(gu);
    }
    // g now targets d8's output; fold in skip gradients on the way down
    for (int i = 7; i >= 0; --i) {
      if (i < 7) g.add_scaled(skip_grads[i], 1.0f);
      g = downs_[i].backward(g);
    }
  }

  std::vector<nn::Param*> params() {
    std::vector<nn::Param*> out;
    for (int i = 0; i < 8; ++i) downs_[i].collect("d" + std::to_string(i + 1), out);
    for (int i = 0; i < 7; ++i) ups_[i].collect("u" + std::to_string(i + 1), out);
    collect_layer(*final_, "final", out);
    return out;
  }

  // introspection for shape-walk checks (valid after a forward pass)
  const std::vector<int>& down_spatial_dims() const { return down_dims_; }
  const std::vector<int>& concat_channels() const { return concat_channels_; }
  uint64_t init_seed() const { return init_seed_; }

 private:
  static std::unique_ptr<nn::BatchNorm2d> make_gan_bn(int c) {
    auto bn = std::make_unique<nn::BatchNorm2d>(c, 0.99, 1e-3);
    bn->batch_stats_in_eval = true;
    return bn;
  }

  static void collect_layer(nn::Layer& l, const std::string& base,
                            std::vector<nn::Param*>& out) {
    static const char* conv_names[] = {".w", ".b"};
    static const char* bn_names[] = {".gamma", ".beta", ".mean", ".var"};
    auto ps = l.params();
    const char** names = ps.size() == 4 ? bn_names : conv_names;
    for (size_t j = 0; j < ps.size(); ++j) {
      ps[j]->name = base + names[j];
      out.push_back(ps[j]);
    }
  }

  struct Down {
    std::unique_ptr<nn::Conv2d> conv;
    std::unique_ptr<nn::BatchNorm2d> bn;
    nn::LeakyReLU act{0.2f};

    nn::Tensor forward(const nn::Tensor& x, bool t) {
      nn::Tensor y = conv->forward(x, t);
      if (bn) y = bn->forward(y, t);
      return act.forward(y, t);
    }
    nn::Tensor backward(const nn::Tensor& g) {
      nn::Tensor gg = act.backward(g);
      if (bn) gg = bn->backward(gg);
      return conv->backward(gg);
    }
    void collect(const std::string& base, std::vector<nn::Param*>& out) {
      collect_layer(*conv, base + ".conv", out);
      if (bn) collect_layer(*bn, base + ".bn", out);
    }
  };

  struct Up {
    std::unique_ptr<nn::ConvTranspose2d> deconv;
    std::unique_ptr<nn::BatchNorm2d> bn;
    std::unique_ptr<nn::Dropout> drop;
    nn::ReLU act;

    nn::Tensor forward(const nn::Tensor& x, bool t) {
      nn::Tensor y = deconv->forward(x, t);
      y = bn->forward(y, t);
      if (drop) y = drop->forward(y, t);
      return act.forward(y, t);
    }
    nn::Tensor backward(const nn::Tensor& g) {
      nn::Tensor gg = act.backward(g);
      if (drop) gg = drop->backward(gg);
      gg = bn->backward(gg);
      return deconv->backward(gg);
    }
    void collect(const std::string& base, std::vector<nn::Param*>& out) {
      collect_layer(*deconv, base + ".deconv", out);
      collect_layer(*bn, base + ".bn", out);
    }
  };

  uint64_t init_seed_ = 0;
  std::array<Down, 8> downs_;
  std::array<Up, 7> ups_;
  std::unique_ptr<nn::ConvTranspose2d> final_;
  nn::Tanh tanh_;
  std::vector<nn::Tensor> skips_;
  std::vector<int> down_dims_, concat_channels_;
};

inline UnetGenerator build_generator(uint64_t seed = 0) { return UnetGenerator(seed); }

// --- discriminator ---------------------------------------------------------

class PatchDiscriminator {
 public:
  nn::Sequential net;

  explicit PatchDiscriminator(uint64_t seed = 0) {
    Rng rng(seed);
    net.add<nn::Conv2d>(2, 64, 4, 2, 1, rng, nn::Init::normal002, false);
    net.add<nn::LeakyReLU>(0.2f);
    net.add<nn::Conv2d>(64, 128, 4, 2, 1, rng, nn::Init::normal002, false);
    net.add<nn::BatchNorm2d>(128);
    net.add<nn::LeakyReLU>(0.2f);
    net.add<nn::Conv2d>(128, 256, 4, 2, 1, rng, nn::Init::normal002, false);
    net.add<nn::BatchNorm2d>(256);
    net.add<nn::LeakyReLU>(0.2f);
    net.add<nn::Conv2d>(256, 512, 4, 1, 1, rng, nn::Init::normal002, false);
    net.add<nn::BatchNorm2d>(512);
    net.add<nn::LeakyReLU>(0.2f);
    net.add<nn::Conv2d>(512, 1, 4, 1, 1, rng, nn::Init::normal002, true);
  }

  // (input, candidate) -> 30x30x1 logit map
  nn::Tensor logits(const nn::Tensor& input, const nn::Tensor& candidate, bool training) {
    require(input.shape == candidate.shape, "discriminator: pair shape mismatch");
    return net.forward(detail::concat_c(input, candidate), training);
  }

  int receptive_field() const { return net.receptive_field().size; }
};

inline PatchDiscriminator build_discriminator(uint64_t seed = 0) {
  return PatchDiscriminator(seed);
}

// --- losses ----------------------------------------------------------------

inline GanLossRecord gan_losses(const nn::Tensor& disc_real_logits,
                                const nn::Tensor& disc_fake_logits,
                                const nn::Tensor& fake_image, const nn::Tensor& target_image,
                                double lambda_l1) {
  require(disc_real_logits.shape == disc_fake_logits.shape, "gan_losses: logit shape mismatch");
  require(fake_image.shape == target_image.shape, "gan_losses: image shape mismatch");
  nn::Tensor ones(disc_fake_logits.shape), zeros(disc_fake_logits.shape);
  ones.fill(1.f);
  GanLossRecord r;
  r.gen_adversarial = nn::sigmoid_bce_with_logits(disc_fake_logits, ones).value;
  r.gen_l1 = nn::l1_loss(fake_image, target_image).value;
  r.gen_total = r.gen_adversarial + lambda_l1 * r.gen_l1;
  r.disc_loss = nn::sigmoid_bce_with_logits(disc_real_logits, ones).value +
                nn::sigmoid_bce_with_logits(disc_fake_logits, zeros).value;
  return r;
}

inline void check_finite(const GanLossRecord& r, const std::string& context) {
  if (!(std::isfinite(r.gen_total) && std::isfinite(r.gen_adversarial) &&
        std::isfinite(r.gen_l1) && std::isfinite(r.disc_loss)))
    throw Error("pix2pix training diverged (non-finite loss) at " + context +
                ": gen_total=" + std::to_string(r.gen_total) +
                " gen_adv=" + std::to_string(r.gen_adversarial) +
                " gen_l1=" + std::to_string(r.gen_l1) +
                " disc=" + std::to_string(r.disc_loss));
}

// --- paired preprocessing --------------------------------------------------

// Resize to 286, identically random-crop to 256, identically mirror, scale to
// [-1,1]. Eval mode: deterministic resize straight to 256, no augmentation.
inline std::pair<nn::Tensor, nn::Tensor> preprocess_pair(const ImagePatch& noisy,
                                                         const ImagePatch& clean,
                                                         bool train_mode, uint64_t seed) {
  require(noisy.height == clean.height && noisy.width == clean.width,
          "preprocess_pair: pair members differ in size");
  require(noisy.height > 0, "preprocess_pair: empty images");
  const int S = UnetGenerator::image_size;

  NormalizedImage a = normalize(noisy, NormMode::unit);
  NormalizedImage b = normalize(clean, NormMode::unit);
  int oy = 0, ox = 0;
  bool mirror = false;
  if (train_mode) {
    a = resize(a, S + 30, S + 30);
    b = resize(b, S + 30, S + 30);
    Rng rng(seed);
    oy = static_cast<int>(rng.next_u64() % 31);
    ox = static_cast<int>(rng.next_u64() % 31);
    mirror = rng.next_double() < 0.5;
  } else {
    a = resize(a, S, S);
    b = resize(b, S, S);
  }

  auto to_tensor = [&](const NormalizedImage& img) {
    nn::Tensor t({1, S, S, 1});
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        int sx = mirror ? (ox + S - 1 - x) : (ox + x);
        t.data[static_cast<size_t>(y) * S + x] = img.at(oy + y, sx) * 2.0f - 1.0f;
      }
    return t;
  };
  return {to_tensor(a), to_tensor(b)};
}

// --- training --------------------------------------------------------------

struct Pix2Pix {
  UnetGenerator gen;
  PatchDiscriminator disc;

  explicit Pix2Pix(uint64_t seed = 0)
      : gen(derive_seed(seed, 1)), disc(derive_seed(seed, 2)) {}
};

struct GanHistory {
  std::vector<GanLossRecord> steps;
  std::vector<GanLossRecord> epoch_means;

  nlohmann::json to_json() const {
    auto rec = [](const GanLossRecord& r) {
      return nlohmann::json{{"gen_total", r.gen_total},
                            {"gen_adversarial", r.gen_adversarial},
                            {"gen_l1", r.gen_l1},
                            {"disc_loss", r.disc_loss}};
    };
    nlohmann::json st = nlohmann::json::array(), ep = nlohmann::json::array();
    for (const auto& r : steps) st.push_back(rec(r));
    for (const auto& r : epoch_means) ep.push_back(rec(r));
    return {{"steps", st}, {"epoch_means", ep}};
  }
};

inline void save_generator(UnetGenerator& gen, const fs::path& file,
                           nlohmann::json meta = {}) {
  meta["architecture"] = "pix2pix_generator";
  meta["init_seed"] = gen.init_seed();
  nn::save_weights(file, gen.params(), meta);
}

inline UnetGenerator load_generator(const fs::path& file) {
  // peek at the metadata first so dropout streams rebuild from the same seed
  nlohmann::json meta = nlohmann::json::parse(NpzReader(file).text("meta.json"));
  require(meta.value("architecture", "") == std::string("pix2pix_generator"),
          "load_generator: not a pix2pix generator artifact: " + file.string());
  UnetGenerator gen(meta.value("init_seed", uint64_t{0}));
  nn::load_weights(file, gen.params());
  return gen;
}

// Alternating generator/discriminator updates with per-epoch re-augmentation.
// If checkpoint_dir is nonempty, the generator and the loss history are
// written there after every epoch. Any non-finite loss aborts.
inline GanHistory train_pix2pix(Pix2Pix& model, const std::vector<NoisyPair>& pairs,
                                const GanConfig& cfg, uint64_t seed,
                                const fs::path& checkpoint_dir = {}) {
  cfg.validate();
  require(!pairs.empty(), "train_pix2pix: empty paired set");
  const size_t n = pairs.size();

  auto gparams = model.gen.params();
  auto dparams = model.disc.net.params();
  nn::Adam opt_g(gparams, cfg.generator_lr, cfg.adam_beta1);
  nn::Adam opt_d(dparams, cfg.discriminator_lr, cfg.adam_beta1);

  GanHistory hist;
  size_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(seed, static_cast<uint64_t>(epoch)));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    order_rng.shuffle(order);

    GanLossRecord epoch_sum;
    size_t epoch_steps = 0;
    for (size_t at = 0; at < n; at += static_cast<size_t>(cfg.batch_size)) {
      size_t b = std::min(n - at, static_cast<size_t>(cfg.batch_size));
      const int S = UnetGenerator::image_size;
      nn::Tensor x({static_cast<int>(b), S, S, 1}), t(x.shape);
      const size_t row = static_cast<size_t>(S) * S;
      for (size_t i = 0; i < b; ++i) {
        size_t idx = order[at + i];
        auto [xi, ti] = preprocess_pair(pairs[idx].noisy, pairs[idx].clean, true,
                                        derive_seed(seed, (static_cast<uint64_t>(epoch) << 32) |
                                                              idx));
        std::copy(xi.data.begin(), xi.data.end(), x.data.begin() + i * row);
        std::copy(ti.data.begin(), ti.data.end(), t.data.begin() + i * row);
      }

      // generator update (discriminator gradients from this pass are
      // discarded when opt_d.zero_grad() runs below)
      nn::Tensor fake = model.gen.forward(x, true);
      nn::Tensor fake_logits = model.disc.logits(x, fake, true);
      nn::Tensor ones(fake_logits.shape);
      ones.fill(1.f);
      auto adv = nn::sigmoid_bce_with_logits(fake_logits, ones);
      auto l1 = nn::l1_loss(fake, t);
      nn::Tensor dcat = model.disc.net.backward(adv.grad);
      nn::Tensor dfake = detail::split_c(dcat, 1).second;
      dfake.add_scaled(l1.grad, static_cast<float>(cfg.lambda_l1));
      opt_g.zero_grad();
      model.gen.backward(dfake);
      opt_g.step();

      // discriminator update on the same (pre-update) fake values
      opt_d.zero_grad();
      nn::Tensor real_logits = model.disc.logits(x, t, true);
      nn::Tensor ones_r(real_logits.shape), zeros_f(fake_logits.shape);
      ones_r.fill(1.f);
      auto loss_real = nn::sigmoid_bce_with_logits(real_logits, ones_r);
      model.disc.net.backward(loss_real.grad);
      nn::Tensor fake_logits2 = model.disc.logits(x, fake, true);
      auto loss_fake = nn::sigmoid_bce_with_logits(fake_logits2, zeros_f);
      model.disc.net.backward(loss_fake.grad);
      opt_d.step();

      GanLossRecord r;
      r.gen_adversarial = adv.value;
      r.gen_l1 = l1.value;
      r.gen_total = adv.value + cfg.lambda_l1 * l1.value;
      r.disc_loss = loss_real.value + loss_fake.value;
      check_finite(r, "epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      hist.steps.push_back(r);
      epoch_sum.gen_total += r.gen_total;
      epoch_sum.gen_adversarial += r.gen_adversarial;
      epoch_sum.gen_l1 += r.gen_l1;
      epoch_sum.disc_loss += r.disc_loss;
      ++epoch_steps;
      ++step;
    }

    GanLossRecord mean = epoch_sum;
    mean.gen_total /= epoch_steps;
    mean.gen_adversarial /= epoch_steps;
    mean.gen_l1 /= epoch_steps;
    mean.disc_loss /= epoch_steps;
    hist.epoch_means.push_back(mean);

    if (!checkpoint_dir.empty()) {
      fs::create_directories(checkpoint_dir);
      save_generator(model.gen,
                     checkpoint_dir / ("generator_epoch_" + std::to_string(epoch) + ".npz"),
                     {{"epoch", epoch}});
      std::ofstream f(checkpoint_dir / "history.json");
      f << hist.to_json().dump(2) << "\n";
    }
  }
  return hist;
}

// --- inference -------------------------------------------------------------

// [-1,1] 256x256 inputs -> [-1,1] 256x256 restorations. Images run one at a
// time so batch statistics stay per-image.
inline nn::Tensor translate(UnetGenerator& gen, const nn::Tensor& noisy) {
  require(noisy.rank() == 4 && noisy.dim(1) == UnetGenerator::image_size &&
              noisy.dim(2) == UnetGenerator::image_size && noisy.dim(3) == 1,
          "translate: expected input [n,256,256,1]");
  nn::Tensor out(noisy.shape);
  const size_t row = static_cast<size_t>(UnetGenerator::image_size) * UnetGenerator::image_size;
  for (int i = 0; i < noisy.dim(0); ++i) {
    nn::Tensor one({1, UnetGenerator::image_size, UnetGenerator::image_size, 1});
    std::copy_n(noisy.data.begin() + static_cast<size_t>(i) * row, row, one.data.begin());
    nn::Tensor y = gen.forward(one, false);
    std::copy(y.data.begin(), y.data.end(), out.data.begin() + static_cast<size_t>(i) * row);
  }
  return out;
}

// Full patch-level restoration: resize to 256, translate, map back to [0,1]
// at the original patch size (for metric comparison against the clean image).
inline std::vector<NormalizedImage> pix2pix_denoise_patches(
    UnetGenerator& gen, const std::vector<ImagePatch>& noisy) {
  std::vector<NormalizedImage> out;
  out.reserve(noisy.size());
  for (const auto& p : noisy) {
    nn::Tensor x = preprocess_pair(p, p, false, 0).first;
    nn::Tensor y = translate(gen, x);
    NormalizedImage img;
    img.height = img.width = UnetGenerator::image_size;
    img.channels = 1;
    img.mode = NormMode::unit;
    img.values.resize(y.size());
    for (size_t i = 0; i < y.size(); ++i)
      img.values[i] = std::clamp((y.data[i] + 1.0f) / 2.0f, 0.0f, 1.0f);
    out.push_back(resize(img, p.height, p.width));
  }
  return out;
}

}  // namespace marsdust::models
