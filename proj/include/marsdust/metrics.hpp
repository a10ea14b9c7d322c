// Image quality metrics: MAE, PSNR, SSIM, multiscale SSIM.
//
// SSIM follows the standard formulation: an 11-tap Gaussian window
// (sigma 1.5) slides over every position where it fully fits, local
// means/variances/covariance are window-weighted, and the per-window scores
// are averaged. MS-SSIM evaluates contrast-structure at five dyadic scales
// (luminance only at the coarsest) with the canonical weight vector.
#pragma once

#include <json.hpp>

#include <array>
#include <limits>

#include "marsdust/dataset.hpp"

namespace marsdust {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363,
                                                         0.1333};

namespace detail {

struct Plane {
  const float* p;
  int h, w;
  float at(int y, int x) const { return p[static_cast<size_t>(y) * w + x]; }
};

inline std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> g(size);
  double sum = 0;
  double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-mode convolution with a symmetric 1-D tap vector.
inline std::vector<double> convolve_valid(const std::vector<double>& in, int h, int w,
                                          const std::vector<double>& taps, int& oh, int& ow) {
  int t = static_cast<int>(taps.size());
  oh = h - t + 1;
  ow = w - t + 1;
  std::vector<double> rows(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < t; ++k) acc += taps[k] * in[static_cast<size_t>(y) * w + x + k];
      rows[static_cast<size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < t; ++k) acc += taps[k] * rows[static_cast<size_t>(y + k) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}

struct SsimMaps {
  std::vector<double> luminance;      // l map
  std::vector<double> contrast;       // cs map
  int h = 0, w = 0;
};

inline SsimMaps ssim_maps(Plane a, Plane b, const SsimParams& prm) {
  require(a.h == b.h && a.w == b.w, "ssim: shape mismatch");
  if (a.h < prm.window || a.w < prm.window)
    throw ShapeError("ssim: image smaller than the " + std::to_string(prm.window) +
                     "-pixel window");
  size_t n = static_cast<size_t>(a.h) * a.w;
  std::vector<double> va(n), vb(n), vaa(n), vbb(n), vab(n);
  for (size_t i = 0; i < n; ++i) {
    double x = a.p[i], y = b.p[i];
    va[i] = x;
    vb[i] = y;
    vaa[i] = x * x;
    vbb[i] = y * y;
    vab[i] = x * y;
  }
  auto taps = gaussian_taps(prm.window, prm.sigma);
  int oh, ow;
  auto mu_a = convolve_valid(va, a.h, a.w, taps, oh, ow);
  auto mu_b = convolve_valid(vb, a.h, a.w, taps, oh, ow);
  auto s_aa = convolve_valid(vaa, a.h, a.w, taps, oh, ow);
  auto s_bb = convolve_valid(vbb, a.h, a.w, taps, oh, ow);
  auto s_ab = convolve_valid(vab, a.h, a.w, taps, oh, ow);

  const double c1 = (prm.k1 * prm.data_range) * (prm.k1 * prm.data_range);
  const double c2 = (prm.k2 * prm.data_range) * (prm.k2 * prm.data_range);
  SsimMaps maps;
  maps.h = oh;
  maps.w = ow;
  maps.luminance.resize(mu_a.size());
  maps.contrast.resize(mu_a.size());
  for (size_t i = 0; i < mu_a.size(); ++i) {
    double ma = mu_a[i], mb = mu_b[i];
    double var_a = s_aa[i] - ma * ma;
    double var_b = s_bb[i] - mb * mb;
    double cov = s_ab[i] - ma * mb;
    maps.luminance[i] = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    maps.contrast[i] = (2 * cov + c2) / (var_a + var_b + c2);
  }
  return maps;
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline std::vector<float> downsample2(const std::vector<float>& in, int h, int w, int& oh,
                                      int& ow) {
  oh = h / 2;
  ow = w / 2;
  std::vector<float> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = in[static_cast<size_t>(2 * y) * w + 2 * x] +
                 in[static_cast<size_t>(2 * y) * w + 2 * x + 1] +
                 in[static_cast<size_t>(2 * y + 1) * w + 2 * x] +
                 in[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1];
      out[static_cast<size_t>(y) * ow + x] = static_cast<float>(s / 4.0);
    }
  return out;
}

inline void check_single_channel(const NormalizedImage& a, const char* op) {
  require(a.channels == 1, std::string(op) + ": expected single-channel image");
}

}  // namespace detail

inline double mae(const NormalizedImage& a, const NormalizedImage& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ShapeError("mae: shape mismatch");
  double s = 0;
  for (size_t i = 0; i < a.values.size(); ++i) s += std::abs(double(a.values[i]) - b.values[i]);
  return s / static_cast<double>(a.values.size());
}

// 10*log10(range^2 / MSE); identical inputs give +infinity, which reports
// exclude from means and count separately.
inline double psnr(const NormalizedImage& a, const NormalizedImage& b,
                   double data_range = 1.0) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ShapeError("psnr: shape mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    double d = double(a.values[i]) - b.values[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.values.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

inline double ssim(const NormalizedImage& a, const NormalizedImage& b,
                   const SsimParams& prm = {}) {
  detail::check_single_channel(a, "ssim");
  detail::check_single_channel(b, "ssim");
  auto maps = detail::ssim_maps({a.values.data(), a.height, a.width},
                                {b.values.data(), b.height, b.width}, prm);
  double s = 0;
  for (size_t i = 0; i < maps.luminance.size(); ++i)
    s += maps.luminance[i] * maps.contrast[i];
  return s / static_cast<double>(maps.luminance.size());
}

struct MsSsimResult {
  double value = 0;
  int scales_used = 5;
  bool reduced_scales = false;   // input too small for all five scales
  bool clamped_negative = false; // a negative contrast term was clamped to 0
};

inline MsSsimResult ms_ssim_full(const NormalizedImage& a, const NormalizedImage& b,
                                 const SsimParams& prm = {},
                                 std::array<double, 5> weights = kMsSsimWeights) {
  detail::check_single_channel(a, "ms_ssim");
  detail::check_single_channel(b, "ms_ssim");
  if (a.height != b.height || a.width != b.width) throw ShapeError("ms_ssim: shape mismatch");

  int min_dim = std::min(a.height, a.width);
  int max_scales = 0;
  for (int m = 1; m <= 5; ++m) {
    if ((min_dim >> (m - 1)) >= prm.window) max_scales = m;
  }
  if (max_scales == 0)
    throw ShapeError("ms_ssim: image smaller than the SSIM window");

  MsSsimResult res;
  res.scales_used = max_scales;
  res.reduced_scales = max_scales < 5;
  if (res.reduced_scales) {
    double wsum = 0;
    for (int s = 0; s < max_scales; ++s) wsum += weights[s];
    for (int s = 0; s < max_scales; ++s) weights[s] /= wsum;
  }

  std::vector<float> pa = a.values, pb = b.values;
  int h = a.height, w = a.width;
  double value = 1.0;
  for (int s = 0; s < max_scales; ++s) {
    auto maps = detail::ssim_maps({pa.data(), h, w}, {pb.data(), h, w}, prm);
    double term;
    if (s + 1 == max_scales) {
      std::vector<double> lum_cs(maps.luminance.size());
      for (size_t i = 0; i < lum_cs.size(); ++i)
        lum_cs[i] = maps.luminance[i] * maps.contrast[i];
      term = detail::mean(lum_cs);
    } else {
      term = detail::mean(maps.contrast);
    }
    if (term < 0) {
      term = 0;
      res.clamped_negative = true;
    }
    value *= std::pow(term, weights[s]);
    if (s + 1 < max_scales) {
      int oh, ow;
      pa = detail::downsample2(pa, h, w, oh, ow);
      pb = detail::downsample2(pb, h, w, oh, ow);
      h = oh;
      w = ow;
    }
  }
  res.value = value;
  return res;
}

inline double ms_ssim(const NormalizedImage& a, const NormalizedImage& b,
                      const SsimParams& prm = {},
                      const std::array<double, 5>& weights = kMsSsimWeights) {
  return ms_ssim_full(a, b, prm, weights).value;
}

// Per-pair and aggregate metrics over an aligned restored/clean set.
struct MetricReport {
  std::vector<double> per_mae, per_psnr, per_ssim, per_msssim;
  double mean_mae = 0, mean_psnr = 0, mean_ssim = 0, mean_msssim = 0;
  size_t n_pairs = 0;
  size_t n_psnr_inf = 0;  // pairs excluded from the PSNR mean
  int height = 0, width = 0;  // scoring resolution
};

inline MetricReport evaluate_denoiser(const std::vector<NormalizedImage>& restored,
                                      const std::vector<NormalizedImage>& clean,
                                      const SsimParams& prm = {}) {
  require(restored.size() == clean.size(), "evaluate_denoiser: misaligned sets");
  MetricReport r;
  r.n_pairs = restored.size();
  if (!restored.empty()) {
    r.height = restored[0].height;
    r.width = restored[0].width;
  }
  double psnr_sum = 0;
  size_t psnr_n = 0;
  for (size_t i = 0; i < restored.size(); ++i) {
    r.per_mae.push_back(mae(restored[i], clean[i]));
    double p = psnr(restored[i], clean[i], prm.data_range);
    r.per_psnr.push_back(p);
    if (std::isfinite(p)) {
      psnr_sum += p;
      ++psnr_n;
    } else {
      ++r.n_psnr_inf;
    }
    r.per_ssim.push_back(ssim(restored[i], clean[i], prm));
    r.per_msssim.push_back(ms_ssim(restored[i], clean[i], prm));
  }
  r.mean_mae = detail::mean(r.per_mae);
  r.mean_ssim = detail::mean(r.per_ssim);
  r.mean_msssim = detail::mean(r.per_msssim);
  r.mean_psnr = psnr_n ? psnr_sum / static_cast<double>(psnr_n) : 0.0;
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  return nlohmann::json{{"n_pairs", r.n_pairs},
                        {"mae_mean", r.mean_mae},
                        {"psnr_mean", r.mean_psnr},
                        {"psnr_inf_count", r.n_psnr_inf},
                        {"ssim_mean", r.mean_ssim},
                        {"msssim_mean", r.mean_msssim},
                        {"scoring_height", r.height},
                        {"scoring_width", r.width}};
}

inline void write_metric_csv(const fs::path& path, const MetricReport& r) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "pair_id,mae,psnr,ssim,msssim\n";
  for (size_t i = 0; i < r.n_pairs; ++i)
    f << i << "," << r.per_mae[i] << "," << r.per_psnr[i] << "," << r.per_ssim[i] << ","
      << r.per_msssim[i] << "\n";
}

}  // namespace marsdust
