// Conversions between image stacks and NHWC tensors.
#pragma once

#include "marsdust/dataset.hpp"
#include "marsdust/nn/tensor.hpp"

namespace marsdust {

// [n, h, w, c] tensor from same-shape normalized images.
inline nn::Tensor image_tensor(const std::vector<NormalizedImage>& imgs) {
  require(!imgs.empty(), "image_tensor: empty image list");
  int h = imgs[0].height, w = imgs[0].width, c = imgs[0].channels;
  nn::Tensor t({static_cast<int>(imgs.size()), h, w, c});
  size_t row = static_cast<size_t>(h) * w * c;
  for (size_t i = 0; i < imgs.size(); ++i) {
    require(imgs[i].height == h && imgs[i].width == w && imgs[i].channels == c,
            "image_tensor: ragged image dims");
    std::copy(imgs[i].values.begin(), imgs[i].values.end(), t.data.begin() + i * row);
  }
  return t;
}

// normalize + stack raw patches in one step
inline nn::Tensor patch_unit_tensor(const std::vector<ImagePatch>& patches) {
  std::vector<NormalizedImage> imgs;
  imgs.reserve(patches.size());
  for (const auto& p : patches) imgs.push_back(normalize(p, NormMode::unit));
  return image_tensor(imgs);
}

inline std::vector<NormalizedImage> tensor_images(const nn::Tensor& t,
                                                  NormMode mode = NormMode::unit) {
  require(t.rank() == 4, "tensor_images: expected [n,h,w,c]");
  std::vector<NormalizedImage> out(t.dim(0));
  size_t row = t.size() / std::max(t.dim(0), 1);
  for (int i = 0; i < t.dim(0); ++i) {
    out[i].height = t.dim(1);
    out[i].width = t.dim(2);
    out[i].channels = t.dim(3);
    out[i].mode = mode;
    out[i].values.assign(t.data.begin() + i * row, t.data.begin() + (i + 1) * row);
  }
  return out;
}

}  // namespace marsdust
