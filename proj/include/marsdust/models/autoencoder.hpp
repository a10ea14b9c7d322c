// The convolutional autoencoder family: plain reconstruction training,
// denoising retraining, and a bottleneck/resolution study across four
// variants.
//
//   variant      input      bottleneck      z size
//   base100      100x100    25x25x1         625
//   down64       64x64      8x8x1           64
//   up128_z256   128x128    16x16x1         256
//   up128_z1024  128x128    32x32x1         1024
//
// Two-halving variants use the encoder conv3(32)-conv3(32)-pool-conv3(16)-
// conv3(1)-pool; three-halving variants insert one extra conv+pool stage.
// Decoders mirror with nearest-neighbor upsampling and end in a sigmoid, so
// outputs always land in [0,1]. Default training loss is per-pixel binary
// cross-entropy (matching the ~0.62 loss scale of the reference runs); mean
// squared error is available by flag.
#pragma once

#include "marsdust/metrics.hpp"
#include "marsdust/nn/losses.hpp"
#include "marsdust/nn/network.hpp"
#include "marsdust/nn/optim.hpp"
#include "marsdust/noise.hpp"
#include "marsdust/tensorize.hpp"

namespace marsdust::models {

enum class AEVariant { base100, down64, up128_z256, up128_z1024 };

inline const char* to_string(AEVariant v) {
  switch (v) {
    case AEVariant::base100: return "base100";
    case AEVariant::down64: return "down64";
    case AEVariant::up128_z256: return "up128_z256";
    case AEVariant::up128_z1024: return "up128_z1024";
  }
  return "";
}

inline AEVariant parse_ae_variant(const std::string& s) {
  for (AEVariant v : {AEVariant::base100, AEVariant::down64, AEVariant::up128_z256,
                      AEVariant::up128_z1024})
    if (s == to_string(v)) return v;
  throw ConfigError("unknown autoencoder variant '" + s +
                    "' (expected base100, down64, up128_z256 or up128_z1024)");
}

struct AEArchitecture {
  AEVariant variant = AEVariant::base100;
  int input_hw = 100;
  int bottleneck_hw = 25;
  int halvings = 2;

  size_t bottleneck_size() const {
    return static_cast<size_t>(bottleneck_hw) * bottleneck_hw;
  }

  static AEArchitecture of(AEVariant v) {
    switch (v) {
      case AEVariant::base100: return {v, 100, 25, 2};
      case AEVariant::down64: return {v, 64, 8, 3};
      case AEVariant::up128_z256: return {v, 128, 16, 3};
      case AEVariant::up128_z1024: return {v, 128, 32, 2};
    }
    throw ConfigError("unknown autoencoder variant");
  }
};

class Autoencoder {
 public:
  AEArchitecture arch;
  nn::Sequential net;
  size_t encoder_layers = 0;  // layer count up to and including the bottleneck
  uint64_t init_seed = 0;

  explicit Autoencoder(AEVariant v = AEVariant::base100, uint64_t seed = 0)
      : arch(AEArchitecture::of(v)), init_seed(seed) {
    Rng rng(seed);
    net.add<nn::Conv2d>(1, 32, 3, 1, 1, rng);
    net.add<nn::ReLU>();
    net.add<nn::Conv2d>(32, 32, 3, 1, 1, rng);
    net.add<nn::ReLU>();
    net.add<nn::MaxPool2d>(2);
    if (arch.halvings == 2) {
      net.add<nn::Conv2d>(32, 16, 3, 1, 1, rng);
      net.add<nn::ReLU>();
      net.add<nn::Conv2d>(16, 1, 3, 1, 1, rng);
      net.add<nn::ReLU>();
      net.add<nn::MaxPool2d>(2);
    } else {
      net.add<nn::Conv2d>(32, 16, 3, 1, 1, rng);
      net.add<nn::ReLU>();
      net.add<nn::MaxPool2d>(2);
      net.add<nn::Conv2d>(16, 1, 3, 1, 1, rng);
      net.add<nn::ReLU>();
      net.add<nn::MaxPool2d>(2);
    }
    encoder_layers = net.layer_count();

    net.add<nn::Upsample2x>();
    net.add<nn::Conv2d>(1, 16, 3, 1, 1, rng);
    net.add<nn::ReLU>();
    if (arch.halvings == 3) {
      net.add<nn::Upsample2x>();
    }
    net.add<nn::Conv2d>(16, 32, 3, 1, 1, rng);
    net.add<nn::ReLU>();
    net.add<nn::Upsample2x>();
    net.add<nn::Conv2d>(32, 32, 3, 1, 1, rng);
    net.add<nn::ReLU>();
    net.add<nn::Conv2d>(32, 1, 3, 1, 1, rng);
    net.add<nn::Sigmoid>();
  }

  nn::Tensor forward(const nn::Tensor& x, bool training = false) {
    check_input(x);
    return net.forward(x, training);
  }

  // Activation at the bottleneck, shape [n, hw, hw, 1].
  nn::Tensor bottleneck(const nn::Tensor& x) {
    check_input(x);
    nn::Tensor cur = x;
    for (size_t i = 0; i < encoder_layers; ++i) cur = net.layer(i).forward(cur, false);
    return cur;
  }

  // Restores a batch of noisy inputs; sigmoid output keeps values in [0,1].
  nn::Tensor denoise(const nn::Tensor& noisy) { return forward(noisy, false); }

  void check_input(const nn::Tensor& x) const {
    require(x.rank() == 4 && x.dim(1) == arch.input_hw && x.dim(2) == arch.input_hw &&
                x.dim(3) == 1,
            std::string("autoencoder(") + to_string(arch.variant) + "): expected input [n," +
                std::to_string(arch.input_hw) + "," + std::to_string(arch.input_hw) + ",1]");
  }
};

inline Autoencoder build_autoencoder(AEVariant v, uint64_t seed = 0) {
  return Autoencoder(v, seed);
}
inline Autoencoder build_autoencoder(const std::string& variant, uint64_t seed = 0) {
  return Autoencoder(parse_ae_variant(variant), seed);
}

// --- training --------------------------------------------------------------

enum class AELoss { bce, mse };

inline const char* to_string(AELoss l) { return l == AELoss::bce ? "bce" : "mse"; }
inline AELoss parse_ae_loss(const std::string& s) {
  if (s == "bce") return AELoss::bce;
  if (s == "mse") return AELoss::mse;
  throw ConfigError("unknown autoencoder loss '" + s + "' (expected bce or mse)");
}

struct AETrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 3e-4;
  AELoss loss = AELoss::bce;
};

struct AeHistory {
  std::vector<double> epoch_loss;  // mean per-sample training loss per epoch
  double final_loss() const {
    require(!epoch_loss.empty(), "history: no epochs recorded");
    return epoch_loss.back();
  }
};

// Shared minibatch loop mapping inputs to targets (reconstruction when they
// alias, denoising when inputs are the noisy variants).
inline AeHistory train_autoencoder(Autoencoder& model, const nn::Tensor& inputs,
                                   const nn::Tensor& targets, const AETrainConfig& cfg,
                                   uint64_t seed) {
  require(cfg.epochs >= 1 && cfg.batch_size >= 1 && cfg.learning_rate > 0,
          "train_autoencoder: bad config");
  model.check_input(inputs);
  require(inputs.shape == targets.shape, "train_autoencoder: unpaired input/target shapes");
  const size_t n = static_cast<size_t>(inputs.dim(0));
  require(n > 0, "train_autoencoder: empty dataset");
  const size_t row = inputs.size() / n;

  auto params = model.net.params();
  nn::Adam opt(params, cfg.learning_rate);
  AeHistory hist;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(epoch)));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);

    double total = 0;
    for (size_t at = 0; at < n; at += static_cast<size_t>(cfg.batch_size)) {
      size_t b = std::min(n - at, static_cast<size_t>(cfg.batch_size));
      nn::Tensor xb({static_cast<int>(b), inputs.dim(1), inputs.dim(2), 1});
      nn::Tensor tb(xb.shape);
      for (size_t i = 0; i < b; ++i) {
        std::copy_n(inputs.data.begin() + order[at + i] * row, row, xb.data.begin() + i * row);
        std::copy_n(targets.data.begin() + order[at + i] * row, row, tb.data.begin() + i * row);
      }
      nn::Tensor pred = model.net.forward(xb, true);
      auto loss = cfg.loss == AELoss::bce ? nn::bce_loss(pred, tb) : nn::mse_loss(pred, tb);
      total += loss.value * b;
      opt.zero_grad();
      model.net.backward(loss.grad);
      opt.step();
    }
    hist.epoch_loss.push_back(total / n);
  }
  return hist;
}

inline AeHistory train_reconstruction(Autoencoder& model, const nn::Tensor& clean,
                                      const AETrainConfig& cfg, uint64_t seed) {
  return train_autoencoder(model, clean, clean, cfg, seed);
}

inline AeHistory train_denoiser(Autoencoder& model, const nn::Tensor& noisy,
                                const nn::Tensor& clean, const AETrainConfig& cfg,
                                uint64_t seed) {
  return train_autoencoder(model, noisy, clean, cfg, seed);
}

// --- noise sweep -----------------------------------------------------------

struct SweepRow {
  double level = 0;
  MetricReport report;
};

// Evaluates the denoiser across noise levels: each level gets freshly
// generated dust noise on the clean set, the model restores it, and
// restored-vs-clean metrics are recorded.
inline std::vector<SweepRow> noise_sweep(Autoencoder& model,
                                         const std::vector<ImagePatch>& clean,
                                         const std::vector<double>& levels,
                                         double low_high_ratio, uint64_t seed) {
  require(!clean.empty(), "noise_sweep: empty clean set");
  for (size_t i = 1; i < levels.size(); ++i)
    require(levels[i] >= levels[i - 1], "noise_sweep: levels must be sorted ascending");

  std::vector<NormalizedImage> clean_norm;
  clean_norm.reserve(clean.size());
  for (const auto& p : clean) clean_norm.push_back(normalize(p, NormMode::unit));

  std::vector<SweepRow> rows;
  for (size_t li = 0; li < levels.size(); ++li) {
    auto pairs = make_noisy_dataset(clean, levels[li], low_high_ratio, derive_seed(seed, li));
    std::vector<NormalizedImage> noisy_norm;
    noisy_norm.reserve(pairs.size());
    for (const auto& pr : pairs) noisy_norm.push_back(normalize(pr.noisy, NormMode::unit));
    nn::Tensor restored = model.denoise(image_tensor(noisy_norm));
    SweepRow row;
    row.level = levels[li];
    row.report = evaluate_denoiser(tensor_images(restored), clean_norm);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "level,mae,psnr,ssim,msssim\n";
  for (const auto& r : rows)
    f << r.level << "," << r.report.mean_mae << "," << r.report.mean_psnr << ","
      << r.report.mean_ssim << "," << r.report.mean_msssim << "\n";
}

// --- artifacts -------------------------------------------------------------

inline void save_autoencoder(const Autoencoder& model, const fs::path& dir,
                             const nlohmann::json& extra = {}) {
  nlohmann::json meta = {{"architecture", "autoencoder"},
                         {"variant", to_string(model.arch.variant)},
                         {"input_hw", model.arch.input_hw},
                         {"bottleneck_hw", model.arch.bottleneck_hw},
                         {"init_seed", model.init_seed}};
  if (!extra.is_null() && !extra.empty())
    for (auto& [k, v] : extra.items()) meta[k] = v;
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "meta.json");
    if (!f) throw IoError("cannot write " + (dir / "meta.json").string());
    f << meta.dump(2) << "\n";
  }
  nn::save_weights(dir / "weights.npz", const_cast<Autoencoder&>(model).net.params(), meta);
}

inline Autoencoder load_autoencoder(const fs::path& dir) {
  std::ifstream f(dir / "meta.json");
  if (!f) throw IoError("no model metadata at " + (dir / "meta.json").string());
  auto meta = nlohmann::json::parse(f);
  require(meta.at("architecture") == "autoencoder",
          "load_autoencoder: not an autoencoder artifact: " + dir.string());
  Autoencoder model(parse_ae_variant(meta.at("variant").get<std::string>()),
                    meta.value("init_seed", 0ull));
  nn::load_weights(dir / "weights.npz", model.net.params());
  return model;
}

// Denoises raw patches of any size: unit-normalize, resize to the variant's
// input resolution, restore, resize back.
inline std::vector<NormalizedImage> ae_denoise_patches(Autoencoder& model,
                                                       const std::vector<ImagePatch>& noisy) {
  std::vector<NormalizedImage> out;
  out.reserve(noisy.size());
  for (const auto& p : noisy) {
    NormalizedImage sized =
        resize(normalize(p, NormMode::unit), model.arch.input_hw, model.arch.input_hw);
    nn::Tensor y = model.denoise(image_tensor({sized}));
    out.push_back(resize(tensor_images(y)[0], p.height, p.width));
  }
  return out;
}

}  // namespace marsdust::models
