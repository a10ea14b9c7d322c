// Sequential layer container plus weight (de)serialization shared by all
// models. Weights persist as an NPZ of float32 arrays keyed by parameter
// name, with a `meta.json` member describing the architecture.
#pragma once

#include <json.hpp>

#include <memory>

#include "marsdust/nn/layers.hpp"
#include "marsdust/npy.hpp"

namespace marsdust::nn {

class Sequential {
 public:
  template <typename L, typename... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  Tensor forward(const Tensor& x, bool training) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, training);
    return cur;
  }

  Tensor backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (size_t i = 0; i < layers_.size(); ++i) {
      auto ps = layers_[i]->params();
      for (size_t j = 0; j < ps.size(); ++j) {
        if (ps[j]->name.empty())
          ps[j]->name = "L" + std::to_string(i) + "." + layers_[i]->kind() + "." +
                        std::to_string(j);
        out.push_back(ps[j]);
      }
    }
    return out;
  }

  ReceptiveField receptive_field() const {
    ReceptiveField rf;
    for (auto& l : layers_) l->update_rf(rf);
    return rf;
  }

  // rf size after each layer (identity layers repeat the previous value)
  std::vector<int> rf_trace() const {
    std::vector<int> trace;
    ReceptiveField rf;
    for (auto& l : layers_) {
      l->update_rf(rf);
      trace.push_back(rf.size);
    }
    return trace;
  }

  size_t layer_count() const { return layers_.size(); }
  Layer& layer(size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

inline void save_weights(const fs::path& file, std::vector<Param*> params,
                         const nlohmann::json& meta) {
  NpzWriter npz(file);
  npz.add_text("meta.json", meta.dump(2));
  for (Param* p : params) {
    require(!p->name.empty(), "save_weights: unnamed parameter");
    std::vector<size_t> shape(p->value.shape.begin(), p->value.shape.end());
    npz.add_array(p->name, NpyArray::from(p->value.data, shape));
  }
  npz.close();
}

inline nlohmann::json load_weights(const fs::path& file, std::vector<Param*> params) {
  NpzReader npz(file);
  for (Param* p : params) {
    require(!p->name.empty(), "load_weights: unnamed parameter");
    NpyArray a = npz.array(p->name);
    require(a.dtype == Dtype::f32, "load_weights: " + p->name + " is not float32");
    require(a.count() == p->value.size(),
            "load_weights: " + p->name + " element count mismatch");
    std::memcpy(p->value.data.data(), a.bytes.data(), a.bytes.size());
  }
  return nlohmann::json::parse(npz.text("meta.json"));
}

// Central-difference gradient of a scalar functional with respect to one
// tensor; used by the test suite to validate analytic backward passes.
template <typename F>
inline Tensor numeric_gradient(Tensor& x, F&& loss_fn, float h = 1e-3f) {
  Tensor g(x.shape);
  for (size_t i = 0; i < x.size(); ++i) {
    float keep = x.data[i];
    x.data[i] = keep + h;
    double up = loss_fn();
    x.data[i] = keep - h;
    double down = loss_fn();
    x.data[i] = keep;
    g.data[i] = static_cast<float>((up - down) / (2.0 * h));
  }
  return g;
}

}  // namespace marsdust::nn
