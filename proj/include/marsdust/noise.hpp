// Synthetic dust noise.
//
// Dust over a patch is modeled as distinct pixel positions rewritten with
// gray values drawn from two bands of the intensity range: a low band
// [70,145) and a high band [145,220]. The low band excludes its upper bound
// so the two supports never overlap. An alternate preset keeps the earlier
// mid/high experiment bands (105-205, 205-255).
#pragma once

#include "marsdust/image.hpp"
#include "marsdust/rng.hpp"

namespace marsdust {

struct NoiseBand {
  int min_raw = 0;
  int max_raw = 0;
};

struct NoiseSpec {
  NoiseBand low_band{70, 145};
  NoiseBand high_band{145, 220};
  size_t n_low = 0;
  size_t n_high = 0;
  uint64_t seed = 0;

  void validate(size_t pixel_budget) const {
    require(low_band.min_raw >= 0 && high_band.max_raw <= 255 &&
                low_band.min_raw <= low_band.max_raw &&
                high_band.min_raw <= high_band.max_raw,
            "NoiseSpec: band bounds must satisfy 0 <= min <= max <= 255");
    require(low_band.max_raw <= high_band.min_raw,
            "NoiseSpec: low band must not extend past the high band");
    if (n_low + n_high > pixel_budget)
      throw ConfigError("NoiseSpec: n_low + n_high exceeds the image's pixel count");
    if (n_low > 0)
      require(low_band.max_raw > low_band.min_raw,
              "NoiseSpec: empty low band cannot supply pixels");
  }

  static NoiseSpec mid_high_preset() {
    NoiseSpec s;
    s.low_band = {105, 205};
    s.high_band = {205, 255};
    return s;
  }
};

struct PixelHistogram {
  std::array<uint64_t, 256> counts{};
  std::vector<int> peaks;  // ascending bin indices

  uint64_t total() const {
    uint64_t t = 0;
    for (uint64_t c : counts) t += c;
    return t;
  }
};

namespace detail {

// Moving average, window 9, truncated at the edges.
inline std::array<double, 256> smooth_histogram(const std::array<uint64_t, 256>& counts) {
  std::array<double, 256> s{};
  constexpr int half = 4;
  for (int i = 0; i < 256; ++i) {
    int lo = std::max(0, i - half), hi = std::min(255, i + half);
    double acc = 0;
    for (int j = lo; j <= hi; ++j) acc += static_cast<double>(counts[j]);
    s[i] = acc / (hi - lo + 1);
  }
  return s;
}

// Strict local maxima of the smoothed curve above half its global max.
// Plateaus (exact ties) report their midpoint bin.
inline std::vector<int> find_peaks(const std::array<double, 256>& s) {
  double global = *std::max_element(s.begin(), s.end());
  double floor_level = 0.5 * global;
  std::vector<int> peaks;
  int i = 0;
  while (i < 256) {
    int j = i;
    while (j + 1 < 256 && s[j + 1] == s[i]) ++j;  // plateau [i, j]
    bool rise = (i == 0) || (s[i - 1] < s[i]);
    bool fall = (j == 255) || (s[j + 1] < s[i]);
    bool interior = (i > 0) && (j < 255);
    if (rise && fall && interior && s[i] > floor_level) peaks.push_back((i + j) / 2);
    i = j + 1;
  }
  return peaks;
}

}  // namespace detail

// Raw-intensity histogram over a patch collection, with detected peaks.
inline PixelHistogram histogram(const std::vector<ImagePatch>& patches) {
  require(!patches.empty(), "histogram: empty patch list");
  PixelHistogram h;
  for (const auto& p : patches)
    for (uint8_t v : p.pixels) h.counts[v]++;
  h.peaks = detail::find_peaks(detail::smooth_histogram(h.counts));
  return h;
}

// Classic salt-and-pepper: round(fraction*H*W) distinct positions set to 0 or
// 255 with equal probability.
inline ImagePatch add_salt_pepper(const ImagePatch& image, double fraction, uint64_t seed) {
  require(fraction >= 0.0 && fraction <= 1.0, "add_salt_pepper: fraction must be in [0,1]");
  ImagePatch out = image;
  auto n = static_cast<size_t>(std::llround(fraction * image.size()));
  Rng rng(seed);
  auto positions = rng.sample_without_replacement(static_cast<uint32_t>(image.size()),
                                                  static_cast<uint32_t>(n));
  for (uint32_t pos : positions)
    out.pixels[pos] = rng.next_bool() ? 255 : 0;
  return out;
}

// Two-band dust noise. Selects n_low+n_high distinct positions uniformly;
// the first n_low take draws from [low.min, low.max) and the remainder from
// [high.min, high.max]. Fully determined by (image, spec).
inline ImagePatch add_dust_noise(const ImagePatch& image, const NoiseSpec& spec) {
  spec.validate(image.size());
  ImagePatch out = image;
  Rng rng(spec.seed);
  size_t k = spec.n_low + spec.n_high;
  auto positions = rng.sample_without_replacement(static_cast<uint32_t>(image.size()),
                                                  static_cast<uint32_t>(k));
  for (size_t i = 0; i < k; ++i) {
    int v = (i < spec.n_low)
                ? static_cast<int>(rng.next_int(spec.low_band.min_raw, spec.low_band.max_raw - 1))
                : static_cast<int>(rng.next_int(spec.high_band.min_raw, spec.high_band.max_raw));
    out.pixels[positions[i]] = static_cast<uint8_t>(v);
  }
  return out;
}

struct NoisyPair {
  ImagePatch noisy;
  ImagePatch clean;
};

// Fills in per-image counts from a coverage level and a low/high ratio.
inline NoiseSpec make_noise_spec(size_t pixel_count, double level, double low_high_ratio,
                                 uint64_t seed) {
  require(level >= 0.0 && level <= 1.0, "noise level must be in [0,1]");
  require(low_high_ratio >= 0.0 && low_high_ratio <= 1.0, "low/high ratio must be in [0,1]");
  NoiseSpec spec;
  auto n_total = static_cast<size_t>(std::llround(level * pixel_count));
  spec.n_low = static_cast<size_t>(std::llround(n_total * low_high_ratio));
  spec.n_high = n_total - spec.n_low;
  spec.seed = seed;
  return spec;
}

// One noisy/clean pair per input patch. Each pair gets its own seed derived
// from the master seed, so any single pair is reproducible in isolation and
// generation order does not matter.
inline std::vector<NoisyPair> make_noisy_dataset(const std::vector<ImagePatch>& clean,
                                                 double level, double low_high_ratio,
                                                 uint64_t seed) {
  std::vector<NoisyPair> out;
  out.reserve(clean.size());
  for (size_t i = 0; i < clean.size(); ++i) {
    NoiseSpec spec = make_noise_spec(clean[i].size(), level, low_high_ratio,
                                     derive_seed(seed, i));
    out.push_back(NoisyPair{add_dust_noise(clean[i], spec), clean[i]});
  }
  return out;
}

}  // namespace marsdust
