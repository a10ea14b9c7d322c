#include <catch2/catch_amalgamated.hpp>

#include "marsdust/models/pix2pix.hpp"

using namespace marsdust;
using models::GanConfig;
using models::GanLossRecord;
using models::PatchDiscriminator;
using models::Pix2Pix;
using models::UnetGenerator;

namespace {

ImagePatch gradient_patch(int h, int w, uint64_t seed, const std::string& id) {
  Rng rng(seed);
  ImagePatch p;
  p.id = id;
  p.height = h;
  p.width = w;
  p.pixels.resize(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 80.0 + 90.0 * x / std::max(1, w - 1) + rng.next_normal(0.0, 12.0);
      p.pixels[static_cast<size_t>(y) * w + x] =
          static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
    }
  return p;
}

ImagePatch inverted(const ImagePatch& p) {
  ImagePatch q = p;
  for (auto& v : q.pixels) v = static_cast<uint8_t>(255 - v);
  return q;
}

nn::Tensor small_image(uint64_t seed) {
  Rng rng(seed);
  nn::Tensor x({1, 256, 256, 1});
  for (auto& v : x.data) v = static_cast<float>(std::clamp(rng.next_normal(0.0, 0.5), -1.0, 1.0));
  return x;
}

}  // namespace

TEST_CASE("paired preprocessing maps endpoints to [-1,1]") {
  ImagePatch black = ImagePatch::constant(100, 100, 0, "b");
  ImagePatch white = ImagePatch::constant(100, 100, 255, "w");
  auto [x, t] = models::preprocess_pair(black, white, false, 0);
  REQUIRE(x.shape == std::vector<int>{1, 256, 256, 1});
  REQUIRE(t.shape == std::vector<int>{1, 256, 256, 1});
  for (float v : x.data) REQUIRE(v == -1.0f);
  for (float v : t.data) REQUIRE(v == 1.0f);

  auto [xa, ta] = models::preprocess_pair(black, white, true, 7);
  for (float v : xa.data) REQUIRE(v == -1.0f);
  for (float v : ta.data) REQUIRE(v == 1.0f);
}

TEST_CASE("paired preprocessing applies identical crop and mirror to both members") {
  // with clean = 255 - noisy, any *paired* spatial transform keeps
  // input + target == 0 pointwise in [-1,1] space; unpaired augmentation breaks it
  ImagePatch noisy = gradient_patch(100, 100, 11, "n");
  ImagePatch clean = inverted(noisy);
  for (uint64_t seed : {0ull, 1ull, 2ull, 99ull, 12345ull}) {
    auto [x, t] = models::preprocess_pair(noisy, clean, true, seed);
    for (size_t i = 0; i < x.size(); ++i)
      REQUIRE(std::abs(x.data[i] + t.data[i]) < 1e-5f);
  }
}

TEST_CASE("paired preprocessing is deterministic per seed and varies across seeds") {
  ImagePatch noisy = gradient_patch(100, 100, 3, "n");
  ImagePatch clean = gradient_patch(100, 100, 4, "c");
  auto [x1, t1] = models::preprocess_pair(noisy, clean, true, 42);
  auto [x2, t2] = models::preprocess_pair(noisy, clean, true, 42);
  REQUIRE(x1.data == x2.data);
  REQUIRE(t1.data == t2.data);

  bool any_differs = false;
  for (uint64_t s = 0; s < 8 && !any_differs; ++s) {
    auto [x3, t3] = models::preprocess_pair(noisy, clean, true, s);
    any_differs = x3.data != x1.data;
  }
  REQUIRE(any_differs);
}

TEST_CASE("paired preprocessing rejects mismatched pair sizes") {
  ImagePatch a = ImagePatch::constant(100, 100, 10, "a");
  ImagePatch b = ImagePatch::constant(64, 64, 10, "b");
  REQUIRE_THROWS_AS(models::preprocess_pair(a, b, true, 0), Error);
}

TEST_CASE("generator output is 256x256x1 in [-1,1] with a 1x1 bottleneck") {
  UnetGenerator gen(5);
  nn::Tensor x = small_image(1);
  nn::Tensor y = gen.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{1, 256, 256, 1});
  for (float v : y.data) {
    REQUIRE(v >= -1.0f);
    REQUIRE(v <= 1.0f);
  }

  // encoder halves spatial dims eight times: 128 ... 1
  REQUIRE(gen.down_spatial_dims() == std::vector<int>{128, 64, 32, 16, 8, 4, 2, 1});
  // after each decoder concat: decoder channels + mirrored encoder channels
  REQUIRE(gen.concat_channels() == std::vector<int>{1024, 1024, 1024, 1024, 512, 256, 128});
}

TEST_CASE("generator rejects wrong input shapes") {
  UnetGenerator gen(0);
  REQUIRE_THROWS_AS(gen.forward(nn::Tensor({1, 128, 128, 1}), false), Error);
  REQUIRE_THROWS_AS(gen.forward(nn::Tensor({1, 256, 256, 3}), false), Error);
}

TEST_CASE("generator inference is deterministic (dropout off, per-image batch stats)") {
  UnetGenerator gen(9);
  nn::Tensor x = small_image(2);
  nn::Tensor y1 = models::translate(gen, x);
  nn::Tensor y2 = models::translate(gen, x);
  REQUIRE(y1.data == y2.data);

  // while training-mode passes differ run to run because of dropout
  nn::Tensor a = gen.forward(x, true);
  nn::Tensor b = gen.forward(x, true);
  bool differs = false;
  for (size_t i = 0; i < a.size() && !differs; ++i) differs = a.data[i] != b.data[i];
  REQUIRE(differs);
}

TEST_CASE("translate batches give the same result as one-at-a-time calls") {
  UnetGenerator gen(13);
  nn::Tensor one = small_image(5), two = small_image(6);
  nn::Tensor both({2, 256, 256, 1});
  std::copy(one.data.begin(), one.data.end(), both.data.begin());
  std::copy(two.data.begin(), two.data.end(), both.data.begin() + one.size());
  nn::Tensor y_both = models::translate(gen, both);
  nn::Tensor y_one = models::translate(gen, one);
  nn::Tensor y_two = models::translate(gen, two);
  for (size_t i = 0; i < y_one.size(); ++i) {
    REQUIRE(y_both.data[i] == y_one.data[i]);
    REQUIRE(y_both.data[one.size() + i] == y_two.data[i]);
  }
}

TEST_CASE("discriminator emits a 30x30 logit map with receptive field 70") {
  PatchDiscriminator disc(3);
  REQUIRE(disc.receptive_field() == 70);

  nn::Tensor x = small_image(3), t = small_image(4);
  nn::Tensor logits = disc.logits(x, t, false);
  REQUIRE(logits.shape == std::vector<int>{1, 30, 30, 1});
  for (float v : logits.data) REQUIRE(std::isfinite(v));
}

TEST_CASE("discriminator logits respond only to their receptive field") {
  // receptive field of logit (0,0): input rows/cols < 70 (minus the one-pixel
  // border supplied by padding). A perturbation far outside must not move it,
  // one inside must.
  PatchDiscriminator disc(8);
  nn::Tensor x = small_image(7), t = small_image(8);
  nn::Tensor base = disc.logits(x, t, false);

  nn::Tensor t_far = t;
  for (int y = 150; y < 200; ++y)
    for (int xx = 150; xx < 200; ++xx) t_far.at(0, y, xx, 0) = 1.0f;
  nn::Tensor far = disc.logits(x, t_far, false);
  REQUIRE(far.at(0, 0, 0, 0) == base.at(0, 0, 0, 0));

  nn::Tensor t_near = t;
  for (int y = 10; y < 40; ++y)
    for (int xx = 10; xx < 40; ++xx) t_near.at(0, y, xx, 0) = 1.0f;
  nn::Tensor near = disc.logits(x, t_near, false);
  REQUIRE(near.at(0, 0, 0, 0) != base.at(0, 0, 0, 0));
}

TEST_CASE("gan losses match a scalar-loop oracle") {
  Rng rng(21);
  nn::Tensor rl({1, 30, 30, 1}), fl({1, 30, 30, 1});
  nn::Tensor fake({1, 8, 8, 1}), target({1, 8, 8, 1});
  for (auto& v : rl.data) v = static_cast<float>(rng.next_normal(0.0, 2.0));
  for (auto& v : fl.data) v = static_cast<float>(rng.next_normal(0.0, 2.0));
  for (auto& v : fake.data) v = static_cast<float>(rng.next_normal(0.0, 0.5));
  for (auto& v : target.data) v = static_cast<float>(rng.next_normal(0.0, 0.5));

  const double lambda = 100.0;
  GanLossRecord r = models::gan_losses(rl, fl, fake, target, lambda);

  auto bce = [](const nn::Tensor& logits, double label) {
    double s = 0;
    for (float z : logits.data) {
      double p = 1.0 / (1.0 + std::exp(-double(z)));
      s += -(label * std::log(p) + (1 - label) * std::log(1 - p));
    }
    return s / logits.size();
  };
  double l1 = 0;
  for (size_t i = 0; i < fake.size(); ++i) l1 += std::abs(double(fake.data[i]) - target.data[i]);
  l1 /= fake.size();

  REQUIRE(r.gen_adversarial == Catch::Approx(bce(fl, 1.0)).epsilon(1e-6));
  REQUIRE(r.gen_l1 == Catch::Approx(l1).epsilon(1e-6));
  REQUIRE(r.disc_loss == Catch::Approx(bce(rl, 1.0) + bce(fl, 0.0)).epsilon(1e-6));
}

TEST_CASE("generator total equals adversarial plus weighted L1") {
  Rng rng(22);
  nn::Tensor rl({2, 30, 30, 1}), fl({2, 30, 30, 1});
  nn::Tensor fake({2, 16, 16, 1}), target({2, 16, 16, 1});
  for (auto& v : rl.data) v = static_cast<float>(rng.next_normal(0.0, 1.0));
  for (auto& v : fl.data) v = static_cast<float>(rng.next_normal(0.0, 1.0));
  for (auto& v : fake.data) v = static_cast<float>(rng.next_normal(0.0, 0.3));
  for (auto& v : target.data) v = static_cast<float>(rng.next_normal(0.0, 0.3));

  for (double lambda : {1.0, 100.0, 250.0}) {
    GanLossRecord r = models::gan_losses(rl, fl, fake, target, lambda);
    REQUIRE(std::abs(r.gen_total - (r.gen_adversarial + lambda * r.gen_l1)) < 1e-5);
  }
}

TEST_CASE("indifferent discriminator (all-zero logits) scores 2 ln 2") {
  nn::Tensor rl({1, 30, 30, 1}), fl({1, 30, 30, 1});
  nn::Tensor img({1, 4, 4, 1});
  GanLossRecord r = models::gan_losses(rl, fl, img, img, 100.0);
  REQUIRE(r.disc_loss == Catch::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
  REQUIRE(r.gen_adversarial == Catch::Approx(std::log(2.0)).epsilon(1e-9));
  REQUIRE(r.gen_l1 == 0.0);
}

TEST_CASE("divergence guard rejects non-finite loss records") {
  GanLossRecord ok{1.0, 0.5, 0.005, 1.2};
  REQUIRE_NOTHROW(models::check_finite(ok, "t"));
  GanLossRecord bad = ok;
  bad.gen_total = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_WITH(models::check_finite(bad, "epoch 1, step 3"),
                      Catch::Matchers::ContainsSubstring("diverged") &&
                          Catch::Matchers::ContainsSubstring("epoch 1, step 3"));
  GanLossRecord inf = ok;
  inf.disc_loss = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(models::check_finite(inf, "t"), Error);
}

TEST_CASE("gan config validation") {
  GanConfig cfg;
  REQUIRE_NOTHROW(cfg.validate());
  GanConfig bad_size = cfg;
  bad_size.image_size = 128;
  REQUIRE_THROWS_AS(bad_size.validate(), Error);
  GanConfig bad_lr = cfg;
  bad_lr.generator_lr = 0;
  REQUIRE_THROWS_AS(bad_lr.validate(), Error);
  GanConfig bad_lambda = cfg;
  bad_lambda.lambda_l1 = -1;
  REQUIRE_THROWS_AS(bad_lambda.validate(), Error);
}

TEST_CASE("a few training steps run, log finite losses, and checkpoint") {
  std::vector<NoisyPair> pairs;
  for (int i = 0; i < 2; ++i) {
    NoisyPair p;
    p.clean = gradient_patch(100, 100, 30 + i, "c" + std::to_string(i));
    p.noisy = gradient_patch(100, 100, 40 + i, "n" + std::to_string(i));
    pairs.push_back(std::move(p));
  }

  GanConfig cfg;
  cfg.epochs = 1;
  Pix2Pix model(17);
  fs::path dir = fs::temp_directory_path() / "marsdust_p2p_ckpt";
  fs::remove_all(dir);
  auto hist = models::train_pix2pix(model, pairs, cfg, 99, dir);

  REQUIRE(hist.steps.size() == 2);
  REQUIRE(hist.epoch_means.size() == 1);
  for (const auto& r : hist.steps) {
    REQUIRE(std::isfinite(r.gen_total));
    REQUIRE(std::abs(r.gen_total - (r.gen_adversarial + cfg.lambda_l1 * r.gen_l1)) < 1e-5);
    REQUIRE(r.disc_loss > 0);
  }
  REQUIRE(fs::exists(dir / "generator_epoch_1.npz"));
  REQUIRE(fs::exists(dir / "history.json"));
  auto j = nlohmann::json::parse(std::ifstream(dir / "history.json"));
  REQUIRE(j["steps"].size() == 2);

  // checkpointed generator reproduces the live one
  UnetGenerator loaded = models::load_generator(dir / "generator_epoch_1.npz");
  nn::Tensor x = models::preprocess_pair(pairs[0].noisy, pairs[0].clean, false, 0).first;
  nn::Tensor y_live = models::translate(model.gen, x);
  nn::Tensor y_loaded = models::translate(loaded, x);
  REQUIRE(y_live.data == y_loaded.data);
  fs::remove_all(dir);
}

TEST_CASE("L1 term trains the generator toward the target on a tiny set") {
  // identity-ish task at high lambda: two fixed pairs, measure gen_l1 trend
  std::vector<NoisyPair> pairs;
  for (int i = 0; i < 2; ++i) {
    NoisyPair p;
    p.clean = gradient_patch(100, 100, 60 + i, "c" + std::to_string(i));
    p.noisy = p.clean;
    pairs.push_back(std::move(p));
  }
  GanConfig cfg;
  cfg.epochs = 4;
  Pix2Pix model(23);
  auto hist = models::train_pix2pix(model, pairs, cfg, 5);
  REQUIRE(hist.epoch_means.size() == 4);
  double first = hist.epoch_means.front().gen_l1;
  double last = hist.epoch_means.back().gen_l1;
  REQUIRE(last < first);
}

TEST_CASE("save/load generator round trip preserves outputs and metadata") {
  UnetGenerator gen(77);
  fs::path file = fs::temp_directory_path() / "marsdust_p2p_gen.npz";
  models::save_generator(gen, file, {{"note", "t"}});
  UnetGenerator back = models::load_generator(file);
  REQUIRE(back.init_seed() == 77u);

  nn::Tensor x = small_image(9);
  REQUIRE(models::translate(gen, x).data == models::translate(back, x).data);

  // refuse artifacts of a different architecture
  fs::path other = fs::temp_directory_path() / "marsdust_p2p_other.npz";
  {
    NpzWriter npz(other);
    npz.add_text("meta.json", nlohmann::json{{"architecture", "autoencoder"}}.dump());
    npz.close();
  }
  REQUIRE_THROWS_AS(models::load_generator(other), Error);
  fs::remove(file);
  fs::remove(other);
}
