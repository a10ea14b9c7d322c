// Manifest loading and preprocessing into model-ready tensors.
//
// The manifest is a UTF-8 CSV with a header row naming path, class, and split
// columns (names configurable). Pixels normalize into one of three modes:
//   unit        raw/255, values in [0,1]
//   signed_unit raw/255*2-1, values in [-1,1]
//   standardized (raw/255 - mean)/std with recorded channel statistics
#pragma once

#include <array>
#include <set>
#include <unordered_set>

#include "marsdust/image.hpp"
#include "marsdust/rng.hpp"

namespace marsdust {

enum class NormMode { unit, standardized, signed_unit };

inline const char* to_string(NormMode m) {
  switch (m) {
    case NormMode::unit: return "unit";
    case NormMode::standardized: return "standardized";
    case NormMode::signed_unit: return "signed_unit";
  }
  return "";
}

struct ManifestRow {
  std::string image_path;  // relative to the manifest's directory
  Label label = Label::not_dusty;
  Split split = Split::train;
};

struct SplitManifest {
  fs::path root;  // directory the image paths resolve against
  std::vector<ManifestRow> rows;

  size_t count(Split s) const {
    size_t n = 0;
    for (const auto& r : rows) n += (r.split == s);
    return n;
  }
  size_t count(Split s, Label l) const {
    size_t n = 0;
    for (const auto& r : rows) n += (r.split == s && r.label == l);
    return n;
  }
};

struct ManifestColumns {
  std::string path = "path";
  std::string label = "label";
  std::string split = "split";
};

// Per-channel normalization statistics (of raw/255 values).
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct NormalizedImage {
  int height = 0, width = 0, channels = 1;
  NormMode mode = NormMode::unit;
  std::vector<float> values;  // HWC row-major
  NormStats stats;            // recorded for standardized mode

  float at(int y, int x, int c = 0) const {
    return values[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float& at(int y, int x, int c = 0) {
    return values[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return values.size(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') { field += '"'; ++i; }
        else quoted = false;
      } else field += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline Label parse_label(const std::string& tok, size_t row) {
  std::string t = lower(trim(tok));
  for (char& c : t) if (c == '-' || c == ' ') c = '_';
  if (t == "dusty" || t == "1") return Label::dusty;
  if (t == "not_dusty" || t == "non_dusty" || t == "notdusty" || t == "clear" || t == "0")
    return Label::not_dusty;
  throw ParseError("manifest row " + std::to_string(row) + ": unknown label '" + tok + "'");
}

inline Split parse_split(const std::string& tok, size_t row) {
  std::string t = lower(trim(tok));
  if (t == "train" || t == "training") return Split::train;
  if (t == "val" || t == "valid" || t == "validation") return Split::val;
  if (t == "test") return Split::test;
  throw ParseError("manifest row " + std::to_string(row) + ": unknown split '" + tok + "'");
}

}  // namespace detail

// Parses the manifest CSV. Enforces that no image path appears twice, which
// also guarantees the train/val/test splits are disjoint.
inline SplitManifest load_manifest(const fs::path& csv_path,
                                   const ManifestColumns& cols = {}) {
  std::ifstream f(csv_path);
  if (!f) throw IoError("no such manifest: " + csv_path.string());

  std::string line;
  if (!std::getline(f, line)) throw ParseError("empty manifest: " + csv_path.string());
  auto headers = detail::split_csv_line(line);
  int ip = -1, il = -1, is = -1;
  for (size_t i = 0; i < headers.size(); ++i) {
    std::string h = lower(trim(headers[i]));
    if (h == lower(cols.path)) ip = static_cast<int>(i);
    else if (h == lower(cols.label)) il = static_cast<int>(i);
    else if (h == lower(cols.split)) is = static_cast<int>(i);
  }
  if (ip < 0 || il < 0 || is < 0)
    throw ParseError("manifest header must name columns '" + cols.path + "', '" +
                     cols.label + "', '" + cols.split + "': " + csv_path.string());

  SplitManifest m;
  m.root = csv_path.parent_path();
  std::unordered_set<std::string> seen;
  size_t rowno = 1;
  while (std::getline(f, line)) {
    ++rowno;
    if (trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    size_t need = static_cast<size_t>(std::max({ip, il, is})) + 1;
    if (fields.size() < need)
      throw ParseError("manifest row " + std::to_string(rowno) + ": expected at least " +
                       std::to_string(need) + " fields");
    ManifestRow r;
    r.image_path = trim(fields[ip]);
    r.label = detail::parse_label(fields[il], rowno);
    r.split = detail::parse_split(fields[is], rowno);
    if (!seen.insert(r.image_path).second)
      throw ParseError("manifest row " + std::to_string(rowno) + ": duplicate image path '" +
                       r.image_path + "'");
    m.rows.push_back(std::move(r));
  }
  return m;
}

inline NormalizedImage normalize(const ImagePatch& patch, NormMode mode,
                                 const NormStats* stats = nullptr) {
  NormalizedImage out;
  out.height = patch.height;
  out.width = patch.width;
  out.channels = 1;
  out.mode = mode;
  out.values.resize(patch.pixels.size());
  switch (mode) {
    case NormMode::unit:
      for (size_t i = 0; i < patch.pixels.size(); ++i)
        out.values[i] = patch.pixels[i] / 255.0f;
      break;
    case NormMode::signed_unit:
      for (size_t i = 0; i < patch.pixels.size(); ++i)
        out.values[i] = patch.pixels[i] / 255.0f * 2.0f - 1.0f;
      break;
    case NormMode::standardized: {
      require(stats != nullptr, "normalize: standardized mode requires channel stats");
      require(!stats->mean.empty() && stats->mean.size() == stats->stddev.size(),
              "normalize: malformed stats");
      for (double s : stats->stddev)
        if (s == 0.0) throw ConfigError("normalize: zero std in stats (degenerate channel)");
      out.stats = *stats;
      double mu = stats->mean[0], sd = stats->stddev[0];
      for (size_t i = 0; i < patch.pixels.size(); ++i)
        out.values[i] = static_cast<float>((patch.pixels[i] / 255.0 - mu) / sd);
      break;
    }
  }
  return out;
}

// Inverse of normalize; reproduces raw pixels within 0.5/255.
inline ImagePatch denormalize(const NormalizedImage& img) {
  require(img.channels == 1, "denormalize: expected single channel");
  ImagePatch out;
  out.height = img.height;
  out.width = img.width;
  out.pixels.resize(img.values.size());
  for (size_t i = 0; i < img.values.size(); ++i) {
    double v = img.values[i];
    switch (img.mode) {
      case NormMode::unit: break;
      case NormMode::signed_unit: v = (v + 1.0) / 2.0; break;
      case NormMode::standardized:
        v = v * img.stats.stddev[0] + img.stats.mean[0];
        break;
    }
    out.pixels[i] = static_cast<uint8_t>(std::clamp(std::lround(v * 255.0), 0l, 255l));
  }
  return out;
}

// Training-split statistics of raw/255 intensities, for standardized mode.
inline NormStats compute_stats(const std::vector<ImagePatch>& patches) {
  require(!patches.empty(), "compute_stats: empty patch list");
  double sum = 0, sumsq = 0;
  size_t n = 0;
  for (const auto& p : patches) {
    for (uint8_t v : p.pixels) {
      double x = v / 255.0;
      sum += x;
      sumsq += x * x;
      ++n;
    }
  }
  double mean = sum / n;
  double var = std::max(0.0, sumsq / n - mean * mean);
  return NormStats{{mean}, {std::sqrt(var)}};
}

enum class ResizeMethod { bilinear, nearest };

// Half-pixel-center sampling; a resize to identical dimensions is an exact
// copy and constant images stay constant under either method.
inline NormalizedImage resize(const NormalizedImage& img, int out_h, int out_w,
                              ResizeMethod method = ResizeMethod::bilinear) {
  require(out_h >= 1 && out_w >= 1, "resize: target dims must be >= 1");
  NormalizedImage out;
  out.height = out_h;
  out.width = out_w;
  out.channels = img.channels;
  out.mode = img.mode;
  out.stats = img.stats;
  out.values.resize(static_cast<size_t>(out_h) * out_w * img.channels);

  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      for (int c = 0; c < img.channels; ++c) {
        float v;
        if (method == ResizeMethod::nearest) {
          int iy = std::clamp(static_cast<int>(std::floor(fy + 0.5)), 0, img.height - 1);
          int ix = std::clamp(static_cast<int>(std::floor(fx + 0.5)), 0, img.width - 1);
          v = img.at(iy, ix, c);
        } else {
          int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.height - 1);
          int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.width - 1);
          int y1 = std::min(y0 + 1, img.height - 1);
          int x1 = std::min(x0 + 1, img.width - 1);
          float wy = static_cast<float>(std::clamp(fy - y0, 0.0, 1.0));
          float wx = static_cast<float>(std::clamp(fx - x0, 0.0, 1.0));
          // lerp form keeps constants bit-exact
          float top = img.at(y0, x0, c) + wx * (img.at(y0, x1, c) - img.at(y0, x0, c));
          float bot = img.at(y1, x0, c) + wx * (img.at(y1, x1, c) - img.at(y1, x0, c));
          v = top + wy * (bot - top);
        }
        out.at(y, x, c) = v;
      }
    }
  }
  return out;
}

// Grayscale to RGB by stacking the channel three times.
inline NormalizedImage to_rgb_stack(const NormalizedImage& img) {
  require(img.channels == 1, "to_rgb_stack: input must be single-channel");
  NormalizedImage out;
  out.height = img.height;
  out.width = img.width;
  out.channels = 3;
  out.mode = img.mode;
  out.stats = img.stats;
  out.values.resize(img.values.size() * 3);
  for (size_t i = 0; i < img.values.size(); ++i) {
    out.values[3 * i] = img.values[i];
    out.values[3 * i + 1] = img.values[i];
    out.values[3 * i + 2] = img.values[i];
  }
  return out;
}

// Label encoding: dusty -> 1, not_dusty -> 0.
inline int label_code(Label l) { return l == Label::dusty ? 1 : 0; }

struct SplitItem {
  ImagePatch patch;
  int label = 0;
};

// Loads a split's patches in seed-shuffled order. The shuffle permutes the
// manifest rows of that split; the same seed always yields the same order.
inline std::vector<SplitItem> prepare_split(const SplitManifest& manifest, Split split,
                                            uint64_t seed) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < manifest.rows.size(); ++i)
    if (manifest.rows[i].split == split) idx.push_back(i);
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<SplitItem> out;
  out.reserve(idx.size());
  for (size_t i : idx) {
    const auto& row = manifest.rows[i];
    SplitItem item;
    item.patch = load_patch(manifest.root / row.image_path);
    item.patch.id = row.image_path;
    item.patch.label = row.label;
    item.patch.split = row.split;
    item.label = label_code(row.label);
    out.push_back(std::move(item));
  }
  return out;
}

// --- preprocessed tensor cache -------------------------------------------

inline std::string cache_key(Split split, NormMode mode, int h, int w, uint64_t seed) {
  std::ostringstream k;
  k << to_string(split) << "_" << to_string(mode) << "_" << h << "x" << w << "_" << seed;
  return k.str();
}

// Writes <key>.npy (float32, N x H x W) and <key>_labels.npy (int32, N).
inline void write_split_cache(const fs::path& dir, const std::string& key,
                              const std::vector<NormalizedImage>& images,
                              const std::vector<int>& labels) {
  require(images.size() == labels.size(), "write_split_cache: misaligned labels");
  fs::create_directories(dir);
  size_t n = images.size();
  size_t h = n ? images[0].height : 0, w = n ? images[0].width : 0;
  std::vector<float> flat;
  flat.reserve(n * h * w);
  for (const auto& img : images) {
    require(static_cast<size_t>(img.height) == h && static_cast<size_t>(img.width) == w,
            "write_split_cache: ragged image dims");
    flat.insert(flat.end(), img.values.begin(), img.values.end());
  }
  npy_save(dir / (key + ".npy"), NpyArray::from(flat, {n, h, w}));
  std::vector<int32_t> lab(labels.begin(), labels.end());
  npy_save(dir / (key + "_labels.npy"), NpyArray::from(lab, {n}));
}

}  // namespace marsdust
