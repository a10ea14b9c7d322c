#include <catch2/catch_amalgamated.hpp>

#include "marsdust/nn/losses.hpp"
#include "marsdust/nn/network.hpp"
#include "marsdust/nn/optim.hpp"

using namespace marsdust;
using namespace marsdust::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed, float scale = 1.f) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<float>(rng.next_normal(0.0, scale));
  return t;
}

// distinct well-separated values so max-pool argmax is FD-stable
Tensor staggered_tensor(std::vector<int> shape, uint64_t seed) {
  Tensor t(std::move(shape));
  std::vector<size_t> order(t.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  for (size_t i = 0; i < t.size(); ++i) t.data[order[i]] = 0.05f * static_cast<float>(i);
  return t;
}

void check_close(const Tensor& got, const Tensor& want, double atol, const char* what) {
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) {
    INFO(what << " element " << i);
    REQUIRE(got.data[i] == Catch::Approx(want.data[i]).margin(atol).epsilon(atol));
  }
}

// scalarize a tensor output against fixed random weights so the gradient
// check reduces to a single functional
double dot(const Tensor& a, const Tensor& r) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += double(a.data[i]) * r.data[i];
  return s;
}

// direct nested-loop convolution, sharing no code with the im2col path
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int k, int s, int p) {
  int n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = w.dim(1);
  int oh = (h + 2 * p - k) / s + 1, ow = (wd + 2 * p - k) / s + 1;
  Tensor y({n, oh, ow, co});
  for (int i = 0; i < n; ++i)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int c = 0; c < co; ++c) {
          double acc = b.size() ? b[c] : 0.0;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * s - p + ky, ix = ox * s - p + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              for (int cc = 0; cc < ci; ++cc)
                acc += double(x.at(i, iy, ix, cc)) *
                       w.data[(static_cast<size_t>((ky * k + kx) * ci + cc)) * co + c];
            }
          y.at(i, oy, ox, c) = static_cast<float>(acc);
        }
  return y;
}

// direct transposed convolution: scatter every input element through the kernel
Tensor naive_conv_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int k, int s,
                            int p, int co) {
  int n = x.dim(0), ih = x.dim(1), iw = x.dim(2), ci = x.dim(3);
  int oh = (ih - 1) * s + k - 2 * p, ow = (iw - 1) * s + k - 2 * p;
  Tensor y({n, oh, ow, co});
  for (int i = 0; i < n; ++i)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int c = 0; c < co; ++c) y.at(i, oy, ox, c) = b.size() ? b[c] : 0.f;
  for (int i = 0; i < n; ++i)
    for (int iy = 0; iy < ih; ++iy)
      for (int ix = 0; ix < iw; ++ix)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            int oy = iy * s - p + ky, ox = ix * s - p + kx;
            if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
            for (int c = 0; c < co; ++c)
              for (int cc = 0; cc < ci; ++cc)
                y.at(i, oy, ox, c) +=
                    x.at(i, iy, ix, cc) *
                    w.data[(static_cast<size_t>((ky * k + kx) * co + c)) * ci + cc];
          }
  return y;
}

// FD-checks input and parameter gradients of `layer` at input x
void gradient_check(Layer& layer, Tensor x, uint64_t seed, double atol = 2e-2) {
  Tensor y0 = layer.forward(x, true);
  Tensor r = random_tensor(y0.shape, seed);
  for (Param* p : layer.params()) p->zero_grad();
  layer.forward(x, true);
  Tensor dx = layer.backward(r);

  auto loss_at = [&]() { return dot(layer.forward(x, true), r); };
  Tensor dx_num = numeric_gradient(x, loss_at, 1e-2f);
  check_close(dx, dx_num, atol, "input grad");

  for (Param* p : layer.params()) {
    if (!p->trainable) continue;
    Tensor dp_num = numeric_gradient(p->value, loss_at, 1e-2f);
    check_close(p->grad, dp_num, atol, p->name.empty() ? "param grad" : p->name.c_str());
  }
}

}  // namespace

TEST_CASE("conv2d forward matches the naive nested-loop oracle") {
  Rng rng(1);
  SECTION("3x3 stride 1 pad 1") {
    Conv2d conv(3, 4, 3, 1, 1, rng);
    Tensor x = random_tensor({2, 5, 6, 3}, 11);
    Tensor y = conv.forward(x, false);
    Param* w = conv.params()[0];
    Param* b = conv.params()[1];
    Tensor ref = naive_conv(x, w->value, b->value, 3, 1, 1);
    REQUIRE(y.shape == std::vector<int>{2, 5, 6, 4});
    check_close(y, ref, 1e-4, "conv s1p1");
  }
  SECTION("4x4 stride 2 pad 1 halves even inputs") {
    Conv2d conv(2, 3, 4, 2, 1, rng);
    Tensor x = random_tensor({1, 8, 8, 2}, 12);
    Tensor y = conv.forward(x, false);
    Tensor ref = naive_conv(x, conv.params()[0]->value, conv.params()[1]->value, 4, 2, 1);
    REQUIRE(y.shape == std::vector<int>{1, 4, 4, 3});
    check_close(y, ref, 1e-4, "conv s2p1");
  }
  SECTION("7x7 stride 2 pad 3 (stem geometry)") {
    Conv2d conv(3, 4, 7, 2, 3, rng);
    Tensor x = random_tensor({1, 12, 12, 3}, 13);
    Tensor y = conv.forward(x, false);
    Tensor ref = naive_conv(x, conv.params()[0]->value, conv.params()[1]->value, 7, 2, 3);
    REQUIRE(y.shape == std::vector<int>{1, 6, 6, 4});
    check_close(y, ref, 1e-4, "conv s2p3");
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(2);
  Conv2d conv(2, 3, 3, 1, 1, rng);
  gradient_check(conv, random_tensor({2, 4, 4, 2}, 21), 22);

  Conv2d strided(2, 2, 4, 2, 1, rng);
  gradient_check(strided, random_tensor({1, 6, 6, 2}, 23), 24);
}

TEST_CASE("conv_transpose2d forward matches the naive scatter oracle") {
  Rng rng(3);
  ConvTranspose2d up(3, 2, 4, 2, 1, rng);
  Tensor x = random_tensor({2, 4, 5, 3}, 31);
  Tensor y = up.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{2, 8, 10, 2});
  Tensor ref =
      naive_conv_transpose(x, up.params()[0]->value, up.params()[1]->value, 4, 2, 1, 2);
  check_close(y, ref, 1e-4, "convT");
}

TEST_CASE("conv_transpose2d doubles spatial size with the pix2pix geometry") {
  Rng rng(4);
  ConvTranspose2d up(5, 5, 4, 2, 1, rng);
  for (int sz : {1, 2, 8}) {
    Tensor y = up.forward(Tensor({1, sz, sz, 5}), false);
    REQUIRE(y.dim(1) == 2 * sz);
    REQUIRE(y.dim(2) == 2 * sz);
  }
}

TEST_CASE("conv_transpose2d gradients match finite differences") {
  Rng rng(5);
  ConvTranspose2d up(2, 3, 4, 2, 1, rng);
  gradient_check(up, random_tensor({1, 3, 3, 2}, 51), 52);
}

TEST_CASE("dense layer gradients match finite differences") {
  Rng rng(6);
  Dense fc(5, 4, rng);
  gradient_check(fc, random_tensor({3, 5}, 61), 62);
}

TEST_CASE("maxpool takes window maxima and routes gradients to the argmax") {
  MaxPool2d pool(2);
  Tensor x({1, 4, 4, 1},
           {1, 5, 2, 0,
            3, 4, 1, 7,
            0, 0, 9, 2,
            8, 6, 3, 1});
  Tensor y = pool.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{1, 2, 2, 1});
  REQUIRE(y.data == std::vector<float>{5, 7, 8, 9});

  Tensor g({1, 2, 2, 1}, {10, 20, 30, 40});
  Tensor dx = pool.backward(g);
  REQUIRE(dx.data == std::vector<float>{0, 10, 0, 0,
                                        0, 0, 0, 20,
                                        0, 0, 40, 0,
                                        30, 0, 0, 0});
}

TEST_CASE("maxpool 3x3 stride 2 pad 1 gradient matches finite differences") {
  MaxPool2d pool(3, 2, 1);
  gradient_check(pool, staggered_tensor({1, 7, 7, 2}, 71), 72, 1e-3);
}

TEST_CASE("batchnorm training-mode gradients match finite differences") {
  BatchNorm2d bn(3);
  gradient_check(bn, random_tensor({2, 3, 3, 3}, 81), 82);
}

TEST_CASE("batchnorm inference mode applies the running-stat affine map") {
  BatchNorm2d bn(2, 0.99, 1e-3);
  auto ps = bn.params();  // gamma, beta, run_mean, run_var
  ps[0]->value.data = {2.f, 1.f};
  ps[1]->value.data = {0.5f, -1.f};
  ps[2]->value.data = {1.f, -2.f};
  ps[3]->value.data = {4.f, 0.25f};
  REQUIRE_FALSE(ps[2]->trainable);
  REQUIRE_FALSE(ps[3]->trainable);

  Tensor x({1, 1, 2, 2}, {3.f, 0.f, -1.f, 2.f});
  Tensor y = bn.forward(x, false);
  // channel 0: (x-1)/sqrt(4.001)*2+0.5 ; channel 1: (x+2)/sqrt(0.251)*1-1
  REQUIRE(y.data[0] == Catch::Approx((3 - 1) / std::sqrt(4.001) * 2 + 0.5).margin(1e-5));
  REQUIRE(y.data[1] == Catch::Approx((0 + 2) / std::sqrt(0.251) - 1).margin(1e-5));
  REQUIRE(y.data[2] == Catch::Approx((-1 - 1) / std::sqrt(4.001) * 2 + 0.5).margin(1e-5));
  REQUIRE(y.data[3] == Catch::Approx((2 + 2) / std::sqrt(0.251) - 1).margin(1e-5));
}

TEST_CASE("batchnorm batch_stats_in_eval normalizes by the batch without touching averages") {
  BatchNorm2d bn(2, 0.99, 1e-3);
  bn.batch_stats_in_eval = true;
  Tensor x = random_tensor({2, 4, 4, 2}, 95, 2.f);

  BatchNorm2d ref(2, 0.99, 1e-3);
  Tensor want = ref.forward(x, true);
  auto ps = bn.params();
  std::vector<float> mean_before = ps[2]->value.data, var_before = ps[3]->value.data;

  Tensor y = bn.forward(x, false);
  REQUIRE(y.data == want.data);
  REQUIRE(ps[2]->value.data == mean_before);
  REQUIRE(ps[3]->value.data == var_before);

  // default flag keeps the running-stat eval path
  BatchNorm2d plain(2, 0.99, 1e-3);
  Tensor z = plain.forward(x, false);
  REQUIRE(z.data != want.data);
}

TEST_CASE("batchnorm training normalizes batch statistics to zero mean unit variance") {
  BatchNorm2d bn(1);
  Tensor x = random_tensor({4, 5, 5, 1}, 91, 3.f);
  Tensor y = bn.forward(x, true);
  double mean = 0, var = 0;
  for (float v : y.data) mean += v;
  mean /= static_cast<double>(y.size());
  for (float v : y.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  REQUIRE(mean == Catch::Approx(0.0).margin(1e-5));
  REQUIRE(var == Catch::Approx(1.0).margin(1e-2));  // eps shrinks variance slightly
}

TEST_CASE("dropout masks deterministically and scales survivors") {
  Tensor x({1, 1000}, std::vector<float>(1000, 1.f));
  Dropout d1(0.3, 99);
  Tensor y = d1.forward(x, true);
  size_t kept = 0;
  for (float v : y.data) {
    REQUIRE((v == 0.f || v == Catch::Approx(1.f / 0.7f)));
    kept += v != 0.f;
  }
  REQUIRE(kept > 600);
  REQUIRE(kept < 800);

  // same seed, fresh layer -> identical mask
  Dropout d2(0.3, 99);
  REQUIRE(d2.forward(x, true).data == y.data);

  // backward applies the same mask
  Tensor g({1, 1000}, std::vector<float>(1000, 2.f));
  Tensor dx = d1.backward(g);
  for (size_t i = 0; i < dx.size(); ++i)
    REQUIRE(dx.data[i] == Catch::Approx(2.f * y.data[i]).margin(1e-6));

  // eval mode and rate 0 are identity
  REQUIRE(d1.forward(x, false).data == x.data);
  Dropout none(0.0, 1);
  REQUIRE(none.forward(x, true).data == x.data);
}

TEST_CASE("activation gradients match finite differences") {
  auto safe = random_tensor({2, 7}, 101);
  for (auto& v : safe.data)
    if (std::abs(v) < 0.05f) v = 0.1f;  // keep clear of the ReLU kink

  ReLU relu;
  gradient_check(relu, safe, 102, 1e-3);
  LeakyReLU leaky(0.2f);
  gradient_check(leaky, safe, 103, 1e-3);
  Sigmoid sig;
  gradient_check(sig, random_tensor({2, 7}, 104), 105, 1e-3);
  Tanh th;
  gradient_check(th, random_tensor({2, 7}, 106), 107, 1e-3);
}

TEST_CASE("upsample2x repeats pixels and pools gradients") {
  Tensor x({1, 2, 2, 1}, {1, 2, 3, 4});
  Upsample2x up;
  Tensor y = up.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{1, 4, 4, 1});
  REQUIRE(y.data == std::vector<float>{1, 1, 2, 2,
                                       1, 1, 2, 2,
                                       3, 3, 4, 4,
                                       3, 3, 4, 4});
  Tensor g({1, 4, 4, 1}, std::vector<float>(16, 1.f));
  REQUIRE(up.backward(g).data == std::vector<float>{4, 4, 4, 4});

  gradient_check(up, random_tensor({1, 3, 3, 2}, 111), 112, 1e-3);
}

TEST_CASE("flatten is a shape-only round trip") {
  Flatten f;
  Tensor x = random_tensor({2, 3, 4, 5}, 121);
  Tensor y = f.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{2, 60});
  REQUIRE(y.data == x.data);
  REQUIRE(f.backward(y).shape == x.shape);
}

TEST_CASE("loss gradients match finite differences and hand values") {
  Tensor pred = random_tensor({2, 6}, 131, 0.5f);
  Tensor target = random_tensor({2, 6}, 132, 0.5f);

  SECTION("mse") {
    auto r = mse_loss(pred, target);
    auto num = numeric_gradient(pred, [&]() { return mse_loss(pred, target).value; }, 1e-3f);
    check_close(r.grad, num, 1e-4, "mse grad");
  }
  SECTION("l1 away from kinks") {
    auto r = l1_loss(pred, target);
    auto num = numeric_gradient(pred, [&]() { return l1_loss(pred, target).value; }, 1e-4f);
    check_close(r.grad, num, 1e-4, "l1 grad");
  }
  SECTION("bce on probabilities") {
    Tensor p({1, 4}, {0.2f, 0.7f, 0.5f, 0.9f});
    Tensor t({1, 4}, {0.f, 1.f, 1.f, 0.f});
    auto r = bce_loss(p, t);
    double hand = -(std::log(0.8) + std::log(0.7) + std::log(0.5) + std::log(0.1)) / 4;
    REQUIRE(r.value == Catch::Approx(hand).margin(1e-6));
    auto num = numeric_gradient(p, [&]() { return bce_loss(p, t).value; }, 1e-4f);
    check_close(r.grad, num, 1e-3, "bce grad");
  }
  SECTION("sigmoid bce with logits agrees with sigmoid + bce") {
    Tensor z = random_tensor({3, 5}, 133, 2.f);
    Tensor t({3, 5});
    Rng rng(134);
    for (auto& v : t.data) v = rng.next_bool() ? 1.f : 0.f;
    auto direct = sigmoid_bce_with_logits(z, t);
    Sigmoid sig;
    auto composed = bce_loss(sig.forward(z, false), t);
    REQUIRE(direct.value == Catch::Approx(composed.value).margin(1e-6));
    auto num =
        numeric_gradient(z, [&]() { return sigmoid_bce_with_logits(z, t).value; }, 1e-3f);
    check_close(direct.grad, num, 1e-4, "bce-with-logits grad");
    // zero logits against ones targets: -log(1/2)
    Tensor zeros({2, 2});
    Tensor ones({2, 2}, {1, 1, 1, 1});
    REQUIRE(sigmoid_bce_with_logits(zeros, ones).value ==
            Catch::Approx(std::log(2.0)).margin(1e-9));
  }
  SECTION("softmax cross entropy") {
    Tensor z({2, 2}, {0.f, 0.f, 3.f, -1.f});
    std::vector<int> labels = {0, 1};
    auto r = softmax_cross_entropy(z, labels);
    // row 1: ln 2; row 2: -log(e^-1/(e^3+e^-1)) = log(1+e^4)
    double hand = (std::log(2.0) + std::log(1 + std::exp(4.0))) / 2;
    REQUIRE(r.value == Catch::Approx(hand).margin(1e-6));
    auto num = numeric_gradient(
        z, [&]() { return softmax_cross_entropy(z, labels).value; }, 1e-3f);
    check_close(r.grad, num, 1e-4, "softmax-ce grad");
    // gradient rows sum to zero
    REQUIRE(r.grad.data[0] + r.grad.data[1] == Catch::Approx(0.0).margin(1e-7));
  }
}

TEST_CASE("adam matches a double-precision reference implementation") {
  Param p;
  p.name = "w";
  p.value = Tensor({3}, {1.f, -2.f, 0.5f});
  Adam opt({&p}, 0.1, 0.9, 0.999, 1e-7);

  // independent reference state in double
  std::vector<double> w = {1, -2, 0.5}, m(3, 0), v(3, 0);
  std::vector<std::vector<float>> grads = {{0.5f, -1.f, 0.f}, {-0.2f, 0.3f, 1.f}};
  for (int t = 1; t <= 2; ++t) {
    p.zero_grad();
    p.grad.data = grads[t - 1];
    opt.step();
    for (int i = 0; i < 3; ++i) {
      double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      double mh = m[i] / (1 - std::pow(0.9, t));
      double vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-7);
    }
  }
  for (int i = 0; i < 3; ++i)
    REQUIRE(p.value.data[i] == Catch::Approx(w[i]).margin(1e-6));
}

TEST_CASE("adam skips non-trainable parameters") {
  Param frozen;
  frozen.name = "frozen";
  frozen.value = Tensor({2}, {1.f, 2.f});
  frozen.trainable = false;
  Adam opt({&frozen}, 0.5);
  frozen.zero_grad();
  frozen.grad.data = {10.f, 10.f};
  opt.step();
  REQUIRE(frozen.value.data == std::vector<float>{1.f, 2.f});
}

TEST_CASE("receptive-field arithmetic reproduces the classifier chain 3-4-8-10-18") {
  Rng rng(7);
  Sequential net;
  net.add<Conv2d>(1, 4, 3, 1, 0, rng);
  net.add<ReLU>();
  net.add<MaxPool2d>(2);
  net.add<Conv2d>(4, 4, 3, 1, 0, rng);
  net.add<ReLU>();
  net.add<MaxPool2d>(2);
  net.add<Conv2d>(4, 4, 3, 1, 0, rng);

  auto trace = net.rf_trace();
  std::vector<int> distinct;
  for (int v : trace)
    if (distinct.empty() || distinct.back() != v) distinct.push_back(v);
  REQUIRE(distinct == std::vector<int>{3, 4, 8, 10, 18});
  REQUIRE(net.receptive_field().size == 18);
}

TEST_CASE("receptive-field arithmetic gives 70 for the patch discriminator chain") {
  ReceptiveField rf;
  rf.apply(4, 2);
  rf.apply(4, 2);
  rf.apply(4, 2);
  rf.apply(4, 1);
  rf.apply(4, 1);
  REQUIRE(rf.size == 70);
}

TEST_CASE("sequential weight save/load restores outputs bit-exactly") {
  auto build = [](uint64_t seed) {
    Rng rng(seed);
    auto net = std::make_unique<Sequential>();
    net->add<Conv2d>(1, 3, 3, 1, 1, rng);
    net->add<ReLU>();
    net->add<Flatten>();
    net->add<Dense>(3 * 16, 4, rng);
    return net;
  };
  auto a = build(1);
  auto b = build(2);  // different init
  Tensor x = random_tensor({2, 4, 4, 1}, 141);
  Tensor ya = a->forward(x, false);
  REQUIRE(ya.data != b->forward(x, false).data);

  auto file = fs::temp_directory_path() / "marsdust_nn_weights.npz";
  save_weights(file, a->params(), {{"arch", "toy"}, {"seed", 1}});
  auto meta = load_weights(file, b->params());
  REQUIRE(meta["arch"] == "toy");
  REQUIRE(b->forward(x, false).data == ya.data);

  // loading into a mismatched architecture fails loudly
  Rng rng(3);
  Sequential other;
  other.add<Dense>(2, 2, rng);
  REQUIRE_THROWS_AS(load_weights(file, other.params()), Error);
  fs::remove(file);
}

TEST_CASE("a small MLP learns XOR end to end") {
  Rng rng(8);
  Sequential net;
  net.add<Dense>(2, 16, rng, Init::he_normal);
  net.add<ReLU>();
  net.add<Dense>(16, 1, rng, Init::he_normal);
  net.add<Sigmoid>();

  Tensor x({4, 2}, {0, 0, 0, 1, 1, 0, 1, 1});
  Tensor t({4, 1}, {0, 1, 1, 0});
  Adam opt(net.params(), 0.05);
  double first = 0, last = 0;
  for (int step = 0; step < 400; ++step) {
    Tensor y = net.forward(x, true);
    auto loss = bce_loss(y, t);
    if (step == 0) first = loss.value;
    last = loss.value;
    opt.zero_grad();
    net.backward(loss.grad);
    opt.step();
  }
  REQUIRE(last < 0.05);
  REQUIRE(last < first);
  Tensor y = net.forward(x, false);
  REQUIRE(y.data[0] < 0.5f);
  REQUIRE(y.data[1] > 0.5f);
  REQUIRE(y.data[2] > 0.5f);
  REQUIRE(y.data[3] < 0.5f);
}
