#include <catch2/catch_amalgamated.hpp>

#include "marsdust/models/autoencoder.hpp"

using namespace marsdust;
using models::AELoss;
using models::AETrainConfig;
using models::AEVariant;
using models::Autoencoder;

namespace {

std::vector<ImagePatch> textured_patches(size_t n, int hw, uint64_t seed) {
  Rng rng(seed);
  std::vector<ImagePatch> out;
  for (size_t i = 0; i < n; ++i) {
    ImagePatch p;
    p.height = p.width = hw;
    p.pixels.resize(static_cast<size_t>(hw) * hw);
    // smooth horizontal ramp plus jitter, so images have real structure
    int base = 40 + static_cast<int>(rng.next_u64() % 120);
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x)
        p.pixels[static_cast<size_t>(y) * hw + x] = static_cast<uint8_t>(std::clamp<int>(
            base + x + static_cast<int>(rng.next_u64() % 11) - 5, 0, 255));
    out.push_back(std::move(p));
  }
  return out;
}

nn::Tensor unit_tensor(const std::vector<ImagePatch>& patches) {
  return patch_unit_tensor(patches);
}

}  // namespace

TEST_CASE("autoencoder variants: shape contract and bottleneck sizes") {
  struct Case {
    AEVariant v;
    int input_hw, bottleneck_hw;
    size_t z;
  };
  for (const Case& c : {Case{AEVariant::base100, 100, 25, 625},
                        Case{AEVariant::down64, 64, 8, 64},
                        Case{AEVariant::up128_z256, 128, 16, 256},
                        Case{AEVariant::up128_z1024, 128, 32, 1024}}) {
    Autoencoder model(c.v, 1);
    nn::Tensor x({2, c.input_hw, c.input_hw, 1});
    Rng rng(2);
    for (auto& v : x.data) v = static_cast<float>(rng.next_double());

    nn::Tensor y = model.forward(x);
    REQUIRE(y.shape == x.shape);
    for (float v : y.data) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }

    nn::Tensor z = model.bottleneck(x);
    REQUIRE(z.dim(0) == 2);
    REQUIRE(z.dim(1) == c.bottleneck_hw);
    REQUIRE(z.dim(2) == c.bottleneck_hw);
    REQUIRE(z.dim(3) == 1);
    REQUIRE(model.arch.bottleneck_size() == c.z);
    // compression: the code layer is strictly smaller than the input
    REQUIRE(model.arch.bottleneck_size() <
            static_cast<size_t>(c.input_hw) * c.input_hw);
  }
}

TEST_CASE("base100 encoder halves 100 -> 50 -> 25") {
  Autoencoder model(AEVariant::base100, 3);
  nn::Tensor x({1, 100, 100, 1});
  // walk through the encoder, recording the spatial size after each layer
  std::vector<int> sizes;
  nn::Tensor cur = x;
  for (size_t i = 0; i < model.encoder_layers; ++i) {
    cur = model.net.layer(i).forward(cur, false);
    sizes.push_back(cur.dim(1));
  }
  std::vector<int> distinct;
  for (int s : sizes)
    if (distinct.empty() || distinct.back() != s) distinct.push_back(s);
  REQUIRE(distinct == std::vector<int>{100, 50, 25});
}

TEST_CASE("autoencoder variant parsing") {
  REQUIRE(models::parse_ae_variant("up128_z256") == AEVariant::up128_z256);
  REQUIRE_THROWS_AS(models::parse_ae_variant("base101"), ConfigError);
  REQUIRE_THROWS_AS(models::build_autoencoder("huge", 1), ConfigError);
  REQUIRE(std::string(models::to_string(AEVariant::down64)) == "down64");
}

TEST_CASE("autoencoder rejects mismatched input shapes") {
  Autoencoder model(AEVariant::base100, 1);
  nn::Tensor wrong({1, 64, 64, 1});
  REQUIRE_THROWS_AS(model.forward(wrong), Error);
  Autoencoder small(AEVariant::down64, 1);
  nn::Tensor ok({2, 64, 64, 1});
  nn::Tensor target({3, 64, 64, 1});
  REQUIRE_THROWS_AS(models::train_denoiser(small, ok, target, {}, 1), Error);
}

TEST_CASE("reconstruction of a constant dataset reaches near-zero mse") {
  Autoencoder model(AEVariant::down64, 4);
  std::vector<ImagePatch> clean(2, ImagePatch::constant(64, 64, 128));
  auto x = unit_tensor(clean);
  AETrainConfig cfg;
  cfg.loss = AELoss::mse;
  cfg.epochs = 100;
  cfg.batch_size = 2;
  auto hist = models::train_reconstruction(model, x, cfg, 4);
  REQUIRE(hist.epoch_loss.size() == 100);
  REQUIRE(hist.final_loss() < 1e-3);
  REQUIRE(hist.final_loss() <= hist.epoch_loss.front());
}

TEST_CASE("zero-noise denoiser training equals reconstruction training") {
  auto clean = textured_patches(4, 64, 7);
  auto x = unit_tensor(clean);
  auto pairs = make_noisy_dataset(clean, 0.0, 0.5, 9);
  std::vector<ImagePatch> noisy;
  for (auto& p : pairs) noisy.push_back(p.noisy);
  auto xn = unit_tensor(noisy);
  REQUIRE(xn.data == x.data);  // level 0 leaves images untouched

  AETrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 4;
  Autoencoder a(AEVariant::down64, 11);
  auto ha = models::train_reconstruction(a, x, cfg, 21);
  Autoencoder b(AEVariant::down64, 11);
  auto hb = models::train_denoiser(b, xn, x, cfg, 21);
  REQUIRE(ha.epoch_loss.size() == hb.epoch_loss.size());
  for (size_t i = 0; i < ha.epoch_loss.size(); ++i)
    REQUIRE(ha.epoch_loss[i] == Catch::Approx(hb.epoch_loss[i]).margin(1e-12));
}

TEST_CASE("autoencoder training is deterministic and loss decreases") {
  auto clean = textured_patches(4, 64, 8);
  auto x = unit_tensor(clean);
  AETrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 2;
  Autoencoder a(AEVariant::down64, 5);
  auto ha = models::train_reconstruction(a, x, cfg, 6);
  Autoencoder b(AEVariant::down64, 5);
  auto hb = models::train_reconstruction(b, x, cfg, 6);
  REQUIRE(ha.epoch_loss.front() == hb.epoch_loss.front());
  REQUIRE(ha.epoch_loss.back() == hb.epoch_loss.back());
  REQUIRE(ha.final_loss() <= ha.epoch_loss.front());
}

TEST_CASE("noise sweep: level zero equals clean-through-model metrics") {
  Autoencoder model(AEVariant::down64, 6);
  auto clean = textured_patches(3, 64, 10);
  auto rows = models::noise_sweep(model, clean, {0.0, 0.5}, 0.5, 12);
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[0].level == 0.0);
  REQUIRE(rows[1].level == 0.5);
  REQUIRE(rows[0].report.n_pairs == 3);

  // level 0: the "noisy" input is the clean image itself
  std::vector<NormalizedImage> clean_norm;
  for (const auto& p : clean) clean_norm.push_back(normalize(p, NormMode::unit));
  auto restored = model.denoise(image_tensor(clean_norm));
  auto direct = evaluate_denoiser(tensor_images(restored), clean_norm);
  REQUIRE(rows[0].report.mean_ssim == Catch::Approx(direct.mean_ssim).margin(1e-12));
  REQUIRE(rows[0].report.mean_mae == Catch::Approx(direct.mean_mae).margin(1e-12));

  fs::path csv = fs::temp_directory_path() / "marsdust_test_sweep.csv";
  models::write_sweep_csv(csv, rows);
  std::ifstream f(csv);
  std::string header;
  std::getline(f, header);
  REQUIRE(header == "level,mae,psnr,ssim,msssim");
  size_t lines = 0;
  for (std::string line; std::getline(f, line);) lines += !line.empty();
  REQUIRE(lines == 2);
  fs::remove(csv);

  REQUIRE_THROWS_AS(models::noise_sweep(model, clean, {0.5, 0.1}, 0.5, 1), Error);
}

TEST_CASE("autoencoder artifacts round-trip") {
  Autoencoder model(AEVariant::up128_z256, 9);
  auto clean = textured_patches(2, 128, 13);
  auto x = unit_tensor(clean);
  AETrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  models::train_reconstruction(model, x, cfg, 14);

  fs::path dir = fs::temp_directory_path() / "marsdust_test_ae_model";
  fs::remove_all(dir);
  models::save_autoencoder(model, dir, {{"note", "unit-test"}});
  auto loaded = models::load_autoencoder(dir);
  REQUIRE(loaded.arch.variant == AEVariant::up128_z256);
  auto ya = model.denoise(x);
  auto yb = loaded.denoise(x);
  REQUIRE(ya.data == yb.data);
  fs::remove_all(dir);

  REQUIRE_THROWS_AS(models::load_autoencoder(fs::temp_directory_path() / "missing_ae"),
                    IoError);
}
