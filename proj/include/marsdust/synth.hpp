// Procedural surrogate dataset in the standard manifest layout, for offline
// development and desk-scale end-to-end runs when the real patch archive is
// not on disk.
//
// Clear patches are multi-octave value-noise terrain. Dusty patches take
// independent terrain and replace a spatially coherent fraction of pixels
// with draws from a tri-modal gray mixture centered at 90/135/190 — the peak
// structure the histogram analysis expects of obscured patches. The classes
// differ mainly in how much of the patch the replacement covers; the coverage
// bands overlap on purpose so that low-order statistics separate the classes
// only partially.
#pragma once

#include "marsdust/dataset.hpp"
#include "marsdust/image.hpp"

namespace marsdust {

struct SynthConfig {
  int train = 2454, val = 1303, test = 1242;  // paper split ratios at quarter scale
  int patch = 100;

  // per-class bands for the dust-replacement coverage fraction
  double dusty_cov_lo = 0.30, dusty_cov_hi = 0.90;
  double clear_cov_lo = 0.10, clear_cov_hi = 0.70;

  // tri-modal replacement mixture
  std::array<double, 3> mix_means{90.0, 135.0, 190.0};
  std::array<double, 3> mix_weights{0.34, 0.36, 0.30};
  double mix_sigma = 9.0;

  // terrain brightness/contrast jitter (raw gray levels)
  double base_mean = 115.0, base_mean_sd = 14.0;
  double contrast_lo = 22.0, contrast_hi = 38.0;

  void validate() const {
    require(train >= 0 && val >= 0 && test >= 0, "synth: negative split sizes");
    require(patch >= 8, "synth: patch size too small");
    require(dusty_cov_lo < dusty_cov_hi && clear_cov_lo < clear_cov_hi,
            "synth: coverage bands must be nonempty");
  }
};

namespace detail {

// Value noise: a coarse lattice of Gaussian samples interpolated with
// smoothstep weights. Returns patch-sized field, zero mean-ish, unit-ish.
inline std::vector<float> value_noise(int n, int cell, Rng& rng) {
  int g = n / cell + 2;
  std::vector<float> lattice(static_cast<size_t>(g) * g);
  for (auto& v : lattice) v = static_cast<float>(rng.next_normal(0.0, 1.0));
  std::vector<float> out(static_cast<size_t>(n) * n);
  auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  for (int y = 0; y < n; ++y) {
    double fy = static_cast<double>(y) / cell;
    int y0 = static_cast<int>(fy);
    double wy = smooth(fy - y0);
    for (int x = 0; x < n; ++x) {
      double fx = static_cast<double>(x) / cell;
      int x0 = static_cast<int>(fx);
      double wx = smooth(fx - x0);
      const float* row0 = lattice.data() + static_cast<size_t>(y0) * g;
      const float* row1 = row0 + g;
      double top = row0[x0] + wx * (row0[x0 + 1] - row0[x0]);
      double bot = row1[x0] + wx * (row1[x0 + 1] - row1[x0]);
      out[static_cast<size_t>(y) * n + x] = static_cast<float>(top + wy * (bot - top));
    }
  }
  return out;
}

inline std::vector<float> terrain_field(int n, Rng& rng) {
  static constexpr int cells[4] = {50, 25, 12, 6};
  static constexpr double weights[4] = {1.0, 0.55, 0.30, 0.15};
  std::vector<float> acc(static_cast<size_t>(n) * n, 0.f);
  for (int o = 0; o < 4; ++o) {
    auto f = value_noise(n, cells[o], rng);
    for (size_t i = 0; i < acc.size(); ++i)
      acc[i] += static_cast<float>(weights[o] * f[i]);
  }
  // standardize so brightness/contrast are controlled downstream
  double mean = 0, var = 0;
  for (float v : acc) mean += v;
  mean /= static_cast<double>(acc.size());
  for (float v : acc) var += (v - mean) * (v - mean);
  var /= static_cast<double>(acc.size());
  double inv = 1.0 / std::sqrt(std::max(var, 1e-12));
  for (auto& v : acc) v = static_cast<float>((v - mean) * inv);
  return acc;
}

}  // namespace detail

// Deterministic per (config, label, seed).
inline ImagePatch synth_patch(Label label, uint64_t seed, const SynthConfig& cfg = {}) {
  const int n = cfg.patch;
  Rng rng(seed);

  auto field = detail::terrain_field(n, rng);
  double mean = cfg.base_mean + rng.next_normal(0.0, cfg.base_mean_sd);
  double contrast =
      cfg.contrast_lo + rng.next_double() * (cfg.contrast_hi - cfg.contrast_lo);

  double lo = label == Label::dusty ? cfg.dusty_cov_lo : cfg.clear_cov_lo;
  double hi = label == Label::dusty ? cfg.dusty_cov_hi : cfg.clear_cov_hi;
  double coverage = lo + rng.next_double() * (hi - lo);

  // coherent replacement mask: lowest-valued fraction of a coarse noise field
  auto mask_field = detail::value_noise(n, 14, rng);
  size_t n_replace = static_cast<size_t>(std::lround(coverage * n * n));
  std::vector<size_t> idx(static_cast<size_t>(n) * n);
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::nth_element(idx.begin(), idx.begin() + std::min(n_replace, idx.size() - 1), idx.end(),
                   [&](size_t a, size_t b) { return mask_field[a] < mask_field[b]; });

  ImagePatch p;
  p.height = p.width = n;
  p.label = label;
  p.pixels.resize(static_cast<size_t>(n) * n);
  for (size_t i = 0; i < p.pixels.size(); ++i) {
    double v = mean + contrast * field[i];
    p.pixels[i] = static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
  }
  std::array<double, 3> cum{};
  std::partial_sum(cfg.mix_weights.begin(), cfg.mix_weights.end(), cum.begin());
  for (size_t k = 0; k < n_replace; ++k) {
    double u = rng.next_double() * cum[2];
    int comp = u < cum[0] ? 0 : (u < cum[1] ? 1 : 2);
    double v = rng.next_normal(cfg.mix_means[comp], cfg.mix_sigma);
    p.pixels[idx[k]] = static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
  }
  return p;
}

// Writes images/<name>.pgm plus manifest.csv (path,label,split columns) and
// returns the manifest. Alternating labels inside each split keep it balanced.
inline SplitManifest write_synth_dataset(const fs::path& dir, const SynthConfig& cfg = {},
                                         uint64_t seed = 0) {
  cfg.validate();
  fs::create_directories(dir / "images");
  std::ofstream csv(dir / "manifest.csv");
  if (!csv) throw IoError("cannot write " + (dir / "manifest.csv").string());
  csv << "path,label,split\n";

  uint64_t counter = 0;
  auto emit = [&](Split split, int count) {
    for (int i = 0; i < count; ++i) {
      Label label = i % 2 == 0 ? Label::dusty : Label::not_dusty;
      ImagePatch p = synth_patch(label, derive_seed(seed, counter++), cfg);
      std::string name = std::string(to_string(split)) + "_" + to_string(label) + "_" +
                         std::to_string(i) + ".pgm";
      save_patch_pgm(dir / "images" / name, p);
      csv << "images/" << name << "," << to_string(label) << "," << to_string(split) << "\n";
    }
  };
  emit(Split::train, cfg.train);
  emit(Split::val, cfg.val);
  emit(Split::test, cfg.test);
  csv.close();
  return load_manifest(dir / "manifest.csv");
}

}  // namespace marsdust
