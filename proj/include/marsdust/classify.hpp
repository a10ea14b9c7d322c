// The three dusty/not-dusty classifiers behind one interface, plus training
// loops and on-disk model artifacts.
//
// A model artifact is a directory: `meta.json` (architecture id, input
// config, hyperparameters, seed, metrics) and, for models with weights,
// `weights.npz`. PCA+SVM stores its fitted arrays in the same NPZ. The
// transfer model stores only its head; the frozen backbone is rebuilt from
// the recorded seed/weight source on load.
//
// Class codes everywhere: 0 = not dusty, 1 = dusty. Probabilities are
// [p(not_dusty), p(dusty)]; predictions take the dusty class when its
// probability is >= 0.5.
#pragma once

#include "marsdust/dataset.hpp"
#include "marsdust/eval.hpp"
#include "marsdust/models/cnn.hpp"
#include "marsdust/models/resnet50.hpp"
#include "marsdust/nn/optim.hpp"
#include "marsdust/pca.hpp"
#include "marsdust/svm.hpp"

namespace marsdust {

struct TrainHyperparams {
  double learning_rate = 3e-4;
  int epochs = 10;
  int batch_size = 32;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0, train_accuracy = 0;
  double val_loss = 0, val_accuracy = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based epoch whose weights the model retains
  double best_val_accuracy = 0;

  nlohmann::json to_json() const {
    nlohmann::json eps = nlohmann::json::array();
    for (const auto& e : epochs)
      eps.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"train_accuracy", e.train_accuracy},
                     {"val_loss", e.val_loss},
                     {"val_accuracy", e.val_accuracy}});
    return {{"epochs", eps},
            {"best_epoch", best_epoch},
            {"best_val_accuracy", best_val_accuracy}};
  }
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string architecture() const = 0;
  // Per-image class probabilities [p(not_dusty), p(dusty)], each summing to 1.
  virtual std::vector<std::array<float, 2>> predict_proba(
      const std::vector<ImagePatch>& patches) = 0;
  virtual void save(const fs::path& dir) const = 0;

  std::vector<int> predict(const std::vector<ImagePatch>& patches) {
    auto proba = predict_proba(patches);
    std::vector<int> out(proba.size());
    for (size_t i = 0; i < proba.size(); ++i) out[i] = proba[i][1] >= 0.5f ? 1 : 0;
    return out;
  }
};

namespace detail {

inline void write_meta(const fs::path& dir, const nlohmann::json& meta) {
  fs::create_directories(dir);
  std::ofstream f(dir / "meta.json");
  if (!f) throw IoError("cannot write " + (dir / "meta.json").string());
  f << meta.dump(2) << "\n";
}

inline nlohmann::json read_meta(const fs::path& dir) {
  std::ifstream f(dir / "meta.json");
  if (!f) throw IoError("no model metadata at " + (dir / "meta.json").string());
  return nlohmann::json::parse(f);
}

// Gathers normalized+resized rows of `patches` into an [n, h, w, 1] tensor.
inline nn::Tensor patch_tensor(const std::vector<ImagePatch>& patches, int h, int w) {
  nn::Tensor x({static_cast<int>(patches.size()), h, w, 1});
  for (size_t i = 0; i < patches.size(); ++i) {
    NormalizedImage img = normalize(patches[i], NormMode::unit);
    if (img.height != h || img.width != w) img = resize(img, h, w);
    std::copy(img.values.begin(), img.values.end(),
              x.data.begin() + i * static_cast<size_t>(h) * w);
  }
  return x;
}

inline nn::Tensor rows(const nn::Tensor& x, const std::vector<size_t>& idx) {
  std::vector<int> shape = x.shape;
  shape[0] = static_cast<int>(idx.size());
  size_t row = x.size() / x.dim(0);
  nn::Tensor out(shape);
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(x.data.begin() + idx[i] * row, row, out.data.begin() + i * row);
  return out;
}

// Shared minibatch loop: Adam + softmax cross-entropy on 2-class logits.
// Restores the weights of the epoch with the best validation accuracy.
inline TrainHistory train_softmax_net(nn::Sequential& net, const nn::Tensor& xtr,
                                      const std::vector<int>& ytr, const nn::Tensor& xval,
                                      const std::vector<int>& yval,
                                      const TrainHyperparams& hp, uint64_t seed) {
  require(hp.epochs >= 1 && hp.batch_size >= 1 && hp.learning_rate > 0,
          "train: bad hyperparameters");
  const size_t ntr = ytr.size(), nval = yval.size();
  require(ntr > 0 && xtr.rank() >= 1 && static_cast<size_t>(xtr.dim(0)) == ntr,
          "train: empty/misaligned train set");
  require(nval == 0 || (xval.rank() >= 1 && static_cast<size_t>(xval.dim(0)) == nval),
          "train: misaligned val set");
  for (int y : ytr) require(y == 0 || y == 1, "train: labels must be 0/1");
  for (int y : yval) require(y == 0 || y == 1, "train: labels must be 0/1");
  // probe one sample so shape mismatches surface before any update
  {
    std::vector<size_t> probe{0};
    net.forward(rows(xtr, probe), false);
  }

  auto eval_split = [&](const nn::Tensor& x, const std::vector<int>& y, double& loss,
                        double& acc) {
    loss = 0, acc = 0;
    if (y.empty()) return;
    size_t correct = 0;
    for (size_t at = 0; at < y.size(); at += static_cast<size_t>(hp.batch_size)) {
      std::vector<size_t> idx;
      for (size_t i = at; i < std::min(y.size(), at + hp.batch_size); ++i) idx.push_back(i);
      nn::Tensor logits = net.forward(rows(x, idx), false);
      std::vector<int> yb;
      for (size_t i : idx) yb.push_back(y[i]);
      loss += nn::softmax_cross_entropy(logits, yb).value * idx.size();
      for (size_t i = 0; i < idx.size(); ++i)
        correct += (logits.data[i * 2 + 1] > logits.data[i * 2]) == (yb[i] == 1);
    }
    loss /= y.size();
    acc = double(correct) / y.size();
  };

  auto params = net.params();
  nn::Adam opt(params, hp.learning_rate);
  TrainHistory hist;
  std::vector<std::vector<float>> best;
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(epoch)));
    std::vector<size_t> order(ntr);
    for (size_t i = 0; i < ntr; ++i) order[i] = i;
    rng.shuffle(order);

    double tr_loss = 0;
    size_t tr_correct = 0;
    for (size_t at = 0; at < ntr; at += static_cast<size_t>(hp.batch_size)) {
      std::vector<size_t> idx(order.begin() + at,
                              order.begin() + std::min(ntr, at + hp.batch_size));
      std::vector<int> yb;
      for (size_t i : idx) yb.push_back(ytr[i]);
      nn::Tensor logits = net.forward(rows(xtr, idx), true);
      auto loss = nn::softmax_cross_entropy(logits, yb);
      tr_loss += loss.value * idx.size();
      for (size_t i = 0; i < idx.size(); ++i)
        tr_correct += (logits.data[i * 2 + 1] > logits.data[i * 2]) == (yb[i] == 1);
      opt.zero_grad();
      net.backward(loss.grad);
      opt.step();
    }

    EpochStats e;
    e.epoch = epoch;
    e.train_loss = tr_loss / ntr;
    e.train_accuracy = double(tr_correct) / ntr;
    eval_split(xval, yval, e.val_loss, e.val_accuracy);
    hist.epochs.push_back(e);

    double score = nval ? e.val_accuracy : e.train_accuracy;
    double best_score = nval ? hist.best_val_accuracy
                             : (hist.best_epoch ? hist.epochs[hist.best_epoch - 1].train_accuracy
                                                : 0);
    if (hist.best_epoch == 0 || score > best_score) {
      hist.best_epoch = epoch;
      hist.best_val_accuracy = e.val_accuracy;
      best.clear();
      for (auto* p : params) best.push_back(p->value.data);
    }
  }
  for (size_t i = 0; i < params.size(); ++i) params[i]->value.data = best[i];
  return hist;
}

inline std::vector<std::array<float, 2>> proba_from_logits(const nn::Tensor& logits) {
  std::vector<std::array<float, 2>> out(logits.dim(0));
  for (int i = 0; i < logits.dim(0); ++i) {
    auto p = nn::softmax_row(logits.data.data() + static_cast<size_t>(i) * 2, 2);
    out[i] = {static_cast<float>(p[0]), static_cast<float>(p[1])};
  }
  return out;
}

}  // namespace detail

// --- PCA + SVM baseline ----------------------------------------------------

struct PcaSvmTrainConfig {
  int n_components = 10;   // components fitted before elbow selection
  bool use_elbow = true;   // keep only the elbow-point count of components
  int keep_components = 0; // explicit override when use_elbow is false (0 = all)
  SvmConfig svm;
};

class PcaSvmClassifier : public Classifier {
 public:
  PCAModel pca;
  SvmModel svm;
  int input_h = 0, input_w = 0;

  std::string architecture() const override { return "pca_svm"; }

  // Fits PCA on flattened unit-normalized pixels, picks the component count
  // at the variance-ratio elbow, then trains the RBF-kernel SVM on the
  // projected features.
  static PcaSvmClassifier train(const std::vector<ImagePatch>& patches,
                                const std::vector<int>& labels,
                                const PcaSvmTrainConfig& cfg = {}, uint64_t seed = 0) {
    require(!patches.empty() && patches.size() == labels.size(),
            "pca_svm: empty or misaligned training data");
    PcaSvmClassifier c;
    c.input_h = patches[0].height;
    c.input_w = patches[0].width;
    auto flat = flatten_unit(patches, c.input_h, c.input_w);
    size_t d = static_cast<size_t>(c.input_h) * c.input_w;

    c.pca = fit_pca(flat, patches.size(), d, cfg.n_components, seed);
    int keep = cfg.n_components;
    if (cfg.use_elbow)
      keep = elbow_point(c.pca.explained_variance_ratio);
    else if (cfg.keep_components > 0)
      keep = cfg.keep_components;
    require(keep >= 1 && keep <= cfg.n_components, "pca_svm: bad component count");
    c.pca.truncate(keep);

    auto z = c.pca.transform(flat, patches.size());
    c.svm = fit_svm(z, labels, static_cast<size_t>(keep), cfg.svm);
    return c;
  }

  std::vector<std::array<float, 2>> predict_proba(
      const std::vector<ImagePatch>& patches) override {
    auto flat = flatten_unit(patches, input_h, input_w);
    auto z = pca.transform(flat, patches.size());
    auto f = svm.decision_values(z, patches.size());
    std::vector<std::array<float, 2>> out(f.size());
    for (size_t i = 0; i < f.size(); ++i) {
      // squashed decision value; monotone, 0.5 at the decision boundary
      float p = static_cast<float>(1.0 / (1.0 + std::exp(-f[i])));
      out[i] = {1.0f - p, p};
    }
    return out;
  }

  void save(const fs::path& dir) const override {
    nlohmann::json meta = {{"architecture", architecture()},
                           {"input", {{"height", input_h}, {"width", input_w},
                                      {"normalization", "unit"}}},
                           {"pca", {{"n_components", pca.n_components},
                                    {"randomized", pca.randomized}}},
                           {"svm", {{"gamma", svm.gamma}, {"b", svm.b},
                                    {"n_support", svm.dual_coef.size()}}}};
    detail::write_meta(dir, meta);
    NpzWriter npz(dir / "weights.npz");
    size_t d = pca.n_features, k = pca.n_components;
    npz.add_array("pca_mean", NpyArray::from(pca.mean, {d}));
    npz.add_array("pca_components", NpyArray::from(pca.components, {k, d}));
    npz.add_array("pca_explained_variance", NpyArray::from(pca.explained_variance, {k}));
    npz.add_array("pca_explained_variance_ratio",
                  NpyArray::from(pca.explained_variance_ratio, {k}));
    npz.add_array("svm_support_vectors",
                  NpyArray::from(svm.support_vectors, {svm.dual_coef.size(), svm.n_features}));
    npz.add_array("svm_dual_coef", NpyArray::from(svm.dual_coef, {svm.dual_coef.size()}));
    npz.close();
  }

  static PcaSvmClassifier load(const fs::path& dir, const nlohmann::json& meta) {
    PcaSvmClassifier c;
    c.input_h = meta.at("input").at("height").get<int>();
    c.input_w = meta.at("input").at("width").get<int>();
    NpzReader npz(dir / "weights.npz");
    c.pca.mean = npz.array("pca_mean").as<float>();
    auto comp = npz.array("pca_components");
    c.pca.components = comp.as<float>();
    c.pca.n_components = static_cast<int>(comp.shape[0]);
    c.pca.n_features = comp.shape[1];
    c.pca.explained_variance = npz.array("pca_explained_variance").as<double>();
    c.pca.explained_variance_ratio =
        npz.array("pca_explained_variance_ratio").as<double>();
    c.pca.randomized = meta.at("pca").at("randomized").get<bool>();
    auto sv = npz.array("svm_support_vectors");
    c.svm.support_vectors = sv.as<float>();
    c.svm.n_features = sv.shape[1];
    c.svm.dual_coef = npz.array("svm_dual_coef").as<double>();
    c.svm.gamma = meta.at("svm").at("gamma").get<double>();
    c.svm.b = meta.at("svm").at("b").get<double>();
    return c;
  }

 private:
  static std::vector<float> flatten_unit(const std::vector<ImagePatch>& patches, int h,
                                         int w) {
    require(h > 0 && w > 0, "pca_svm: model has no input dims");
    std::vector<float> flat;
    flat.reserve(patches.size() * static_cast<size_t>(h) * w);
    for (const auto& p : patches) {
      NormalizedImage img = normalize(p, NormMode::unit);
      if (img.height != h || img.width != w) img = resize(img, h, w);
      flat.insert(flat.end(), img.values.begin(), img.values.end());
    }
    return flat;
  }
};

// --- CNN -------------------------------------------------------------------

class CnnClassifier : public Classifier {
 public:
  models::Cnn model;
  uint64_t init_seed = 0;

  explicit CnnClassifier(uint64_t seed = 0) : model(seed), init_seed(seed) {}

  std::string architecture() const override { return "cnn"; }

  static std::pair<CnnClassifier, TrainHistory> train(
      const std::vector<ImagePatch>& train_patches, const std::vector<int>& train_labels,
      const std::vector<ImagePatch>& val_patches, const std::vector<int>& val_labels,
      const TrainHyperparams& hp = {}, uint64_t seed = 0) {
    CnnClassifier c(derive_seed(seed, 0));
    auto xtr = detail::patch_tensor(train_patches, models::Cnn::input_h, models::Cnn::input_w);
    auto xval = detail::patch_tensor(val_patches, models::Cnn::input_h, models::Cnn::input_w);
    auto hist = detail::train_softmax_net(c.model.net, xtr, train_labels, xval, val_labels,
                                          hp, derive_seed(seed, 1));
    return {std::move(c), std::move(hist)};
  }

  std::vector<std::array<float, 2>> predict_proba(
      const std::vector<ImagePatch>& patches) override {
    std::vector<std::array<float, 2>> out;
    const size_t chunk = 256;
    for (size_t at = 0; at < patches.size(); at += chunk) {
      std::vector<ImagePatch> part(patches.begin() + at,
                                   patches.begin() + std::min(patches.size(), at + chunk));
      auto x = detail::patch_tensor(part, models::Cnn::input_h, models::Cnn::input_w);
      auto proba = detail::proba_from_logits(c_logits(x));
      out.insert(out.end(), proba.begin(), proba.end());
    }
    return out;
  }

  void save(const fs::path& dir) const override {
    nlohmann::json meta = {{"architecture", architecture()},
                           {"input", {{"height", models::Cnn::input_h},
                                      {"width", models::Cnn::input_w},
                                      {"channels", 1},
                                      {"normalization", "unit"}}},
                           {"init_seed", init_seed},
                           {"receptive_field", model.final_conv_receptive_field()}};
    detail::write_meta(dir, meta);
    nn::save_weights(dir / "weights.npz",
                     const_cast<CnnClassifier*>(this)->model.net.params(), meta);
  }

  static CnnClassifier load(const fs::path& dir, const nlohmann::json& meta) {
    CnnClassifier c(meta.value("init_seed", 0ull));
    nn::load_weights(dir / "weights.npz", c.model.net.params());
    return c;
  }

 private:
  nn::Tensor c_logits(const nn::Tensor& x) { return model.logits(x, false); }
};

// --- transfer model (frozen ResNet-50 backbone + trainable head) -----------

class TransferClassifier : public Classifier {
 public:
  std::shared_ptr<models::ResNet50Backbone> backbone;
  nn::Sequential head;
  uint64_t backbone_seed = 0;
  std::string weights_source = "auto";

  explicit TransferClassifier(uint64_t seed = 0, const std::string& source = "auto")
      : TransferClassifier(raw_t{}, derive_seed(seed, 100), source) {}

  std::string architecture() const override { return "transfer"; }

  // Backbone features for a patch list; grayscale patches are resized to
  // 224x224 and stacked to RGB.
  nn::Tensor extract_features(const std::vector<ImagePatch>& patches) {
    nn::Tensor x({static_cast<int>(patches.size()), models::ResNet50Backbone::input_h,
                  models::ResNet50Backbone::input_w, 3});
    const size_t row = x.size() / std::max<size_t>(patches.size(), 1);
    for (size_t i = 0; i < patches.size(); ++i) {
      NormalizedImage img = normalize(patches[i], NormMode::unit);
      img = resize(img, models::ResNet50Backbone::input_h, models::ResNet50Backbone::input_w);
      NormalizedImage rgb = to_rgb_stack(img);
      std::copy(rgb.values.begin(), rgb.values.end(), x.data.begin() + i * row);
    }
    return backbone->features(x);
  }

  // Trains only the head on (optionally precomputed) backbone features.
  TrainHistory train_head(const nn::Tensor& train_features, const std::vector<int>& train_labels,
                          const nn::Tensor& val_features, const std::vector<int>& val_labels,
                          const TrainHyperparams& hp = {}, uint64_t seed = 0) {
    return detail::train_softmax_net(head, train_features, train_labels, val_features,
                                     val_labels, hp, derive_seed(seed, 104));
  }

  static std::pair<std::unique_ptr<TransferClassifier>, TrainHistory> train(
      const std::vector<ImagePatch>& train_patches, const std::vector<int>& train_labels,
      const std::vector<ImagePatch>& val_patches, const std::vector<int>& val_labels,
      const TrainHyperparams& hp = {}, uint64_t seed = 0,
      const std::string& weights = "auto") {
    auto c = std::make_unique<TransferClassifier>(seed, weights);
    auto ftr = c->extract_features(train_patches);
    auto fval = c->extract_features(val_patches);
    auto hist = c->train_head(ftr, train_labels, fval, val_labels, hp, seed);
    return {std::move(c), std::move(hist)};
  }

  std::vector<std::array<float, 2>> predict_proba(
      const std::vector<ImagePatch>& patches) override {
    auto f = extract_features(patches);
    return detail::proba_from_logits(head.forward(f, false));
  }

  void save(const fs::path& dir) const override {
    nlohmann::json meta = {{"architecture", architecture()},
                           {"input", {{"height", models::ResNet50Backbone::input_h},
                                      {"width", models::ResNet50Backbone::input_w},
                                      {"channels", 3},
                                      {"normalization", "unit_rgb_stack"}}},
                           {"backbone_seed", backbone_seed},
                           {"weights_source", weights_source}};
    detail::write_meta(dir, meta);
    nn::save_weights(dir / "weights.npz",
                     const_cast<TransferClassifier*>(this)->head.params(), meta);
  }

  static std::unique_ptr<TransferClassifier> load(const fs::path& dir,
                                                  const nlohmann::json& meta) {
    std::unique_ptr<TransferClassifier> c(
        new TransferClassifier(raw_t{}, meta.at("backbone_seed").get<uint64_t>(),
                               meta.at("weights_source").get<std::string>()));
    nn::load_weights(dir / "weights.npz", c->head.params());
    return c;
  }

 private:
  struct raw_t {};

  // Builds the frozen backbone from an explicit seed/weight source, so loads
  // can rebuild exactly what was saved. Head seeds derive from the backbone
  // seed; head weights are overwritten when loading an artifact.
  TransferClassifier(raw_t, uint64_t bseed, std::string source)
      : backbone_seed(bseed), weights_source(std::move(source)) {
    backbone = std::make_shared<models::ResNet50Backbone>(backbone_seed);
    models::load_resnet50_weights(*backbone, weights_source);
    Rng rng(derive_seed(backbone_seed, 1));
    head.add<nn::Dense>(models::ResNet50Backbone::feature_dim, 512, rng);
    head.add<nn::ReLU>();
    head.add<nn::Dropout>(0.3, derive_seed(backbone_seed, 2));
    head.add<nn::Dense>(512, 128, rng);
    head.add<nn::ReLU>();
    head.add<nn::Dropout>(0.3, derive_seed(backbone_seed, 3));
    head.add<nn::Dense>(128, 2, rng);
  }
};

// --- stub (intensity threshold; fast deterministic stand-in) ---------------

class StubClassifier : public Classifier {
 public:
  double threshold = 0.5;   // mean raw/255 intensity at the decision boundary
  double sharpness = 20.0;  // logistic slope around the threshold

  std::string architecture() const override { return "stub"; }

  std::vector<std::array<float, 2>> predict_proba(
      const std::vector<ImagePatch>& patches) override {
    std::vector<std::array<float, 2>> out(patches.size());
    for (size_t i = 0; i < patches.size(); ++i) {
      double sum = 0;
      for (uint8_t v : patches[i].pixels) sum += v / 255.0;
      double mean = patches[i].pixels.empty() ? 0 : sum / patches[i].pixels.size();
      float p = static_cast<float>(1.0 / (1.0 + std::exp(-sharpness * (mean - threshold))));
      out[i] = {1.0f - p, p};
    }
    return out;
  }

  void save(const fs::path& dir) const override {
    detail::write_meta(dir, {{"architecture", architecture()},
                             {"threshold", threshold},
                             {"sharpness", sharpness}});
  }

  static StubClassifier load(const nlohmann::json& meta) {
    StubClassifier c;
    c.threshold = meta.at("threshold").get<double>();
    c.sharpness = meta.at("sharpness").get<double>();
    return c;
  }
};

inline std::unique_ptr<Classifier> load_classifier(const fs::path& dir) {
  auto meta = detail::read_meta(dir);
  std::string arch = meta.at("architecture").get<std::string>();
  if (arch == "pca_svm")
    return std::make_unique<PcaSvmClassifier>(PcaSvmClassifier::load(dir, meta));
  if (arch == "cnn") return std::make_unique<CnnClassifier>(CnnClassifier::load(dir, meta));
  if (arch == "transfer") return TransferClassifier::load(dir, meta);
  if (arch == "stub") return std::make_unique<StubClassifier>(StubClassifier::load(meta));
  throw ConfigError("unknown model architecture '" + arch + "' in " + dir.string());
}

}  // namespace marsdust
