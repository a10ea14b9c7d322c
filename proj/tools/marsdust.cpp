// marsdust: the dust-patch pipeline driver.
//
//   ingest         preprocess a manifest dataset into tensor caches
//   analyze-noise  pixel histogram + peak report for a patch folder
//   noise          synthesize paired dusty/clean stacks from clean patches
//   train          fit a classifier (svm, cnn, transfer) on a split dataset
//   eval           score a saved classifier on a chosen split
//   filter         classify a folder and archive both classes as NPZ
//   train-ae       fit an autoencoder denoiser at one noise level
//   train-pix2pix  fit the conditional-GAN denoiser
//   denoise        restore a noisy stack with a saved denoiser
//   sweep          metric curves for a denoiser across noise levels
//   metrics        MAE/PSNR/SSIM/MS-SSIM report for restored-vs-clean stacks
//
// Every artifact directory receives a config_resolved.json snapshot of the
// effective configuration. Exit codes: 0 success, 1 usage error, 2 runtime
// or data error.
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <marsdust/classify.hpp>
#include <marsdust/config.hpp>
#include <marsdust/eval.hpp>
#include <marsdust/filter.hpp>
#include <marsdust/metrics.hpp>
#include <marsdust/models/autoencoder.hpp>
#include <marsdust/models/pix2pix.hpp>
#include <marsdust/noise.hpp>
#include <marsdust/plot.hpp>
#include <marsdust/synth.hpp>

namespace {

using namespace marsdust;

const char* kUsage = R"(usage: marsdust <command> [options]

commands:
  ingest         --config FILE [--mode unit|standardized|signed_unit]
                 [--size N] [--seed N] [--out DIR]
  analyze-noise  --in DIR [--out DIR]
  noise          --level L --ratio R --seed N --in DIR --out DIR
  train          --model svm|cnn|transfer [--config FILE] [--seed N]
                 [--limit N] [--out DIR]
  eval           --model-dir DIR --split train|val|test [--config FILE]
                 [--out DIR]
  filter         --in DIR --model-dir DIR --out FILE.npz [--batch N]
  train-ae       --variant base100|down64|up128_z256|up128_z1024
                 --noise-level L [--seed N] [--epochs N] [--batch N]
                 [--lr X] [--loss bce|mse] [--ratio R] [--pretrain-epochs N]
                 [--limit N] [--config FILE] [--out DIR]
  train-pix2pix  --noise-level L [--epochs N] [--seed N] [--ratio R]
                 [--limit N] [--config FILE] [--out DIR]
  denoise        --model-dir DIR --in FILE --out FILE.npz
                 [--backend auto|ae|pix2pix]
  sweep          --model-dir DIR --in DIR [--levels L1,L2,...] [--ratio R]
                 [--seed N] [--limit N] [--out DIR]
  metrics        --restored FILE --clean FILE --out report.json

Datasets are described by a TOML config ([dataset] root = "...", optional
manifest = "manifest.csv"). Any config key can be overridden through the
environment as MARSDUST_<KEY> with dots replaced by underscores, e.g.
MARSDUST_DATASET_ROOT. Train/eval artifacts carry their dataset reference
forward, so `eval` can usually run from --model-dir alone.

Input stacks for denoise/metrics may be a filter archive (.npz with a
`dusty` member), a generic .npz with an `images` member, or a bare .npy
array of shape [n, h, w].
)";

class ArgError : public std::runtime_error {
 public:
  explicit ArgError(const std::string& what) : std::runtime_error(what) {}
};

struct Args {
  std::string command;
  std::vector<std::string> raw;  // everything after the command
  std::map<std::string, std::string> flags;

  bool has(const std::string& k) const { return flags.count(k) > 0; }

  std::string get(const std::string& k) const {
    auto it = flags.find(k);
    if (it == flags.end()) throw ArgError(command + ": missing required --" + k);
    return it->second;
  }
  std::string get(const std::string& k, const std::string& def) const {
    auto it = flags.find(k);
    return it == flags.end() ? def : it->second;
  }
  long long get_int(const std::string& k, long long def) const {
    if (!has(k)) return def;
    auto v = detail::parse_toml_int(flags.at(k));
    if (!v) throw ArgError(command + ": --" + k + " expects an integer, got " + flags.at(k));
    return *v;
  }
  double get_float(const std::string& k, double def) const {
    if (!has(k)) return def;
    auto v = detail::parse_toml_float(flags.at(k));
    if (!v) throw ArgError(command + ": --" + k + " expects a number, got " + flags.at(k));
    return *v;
  }
  double get_float(const std::string& k) const {
    get(k);  // require presence
    return get_float(k, 0.0);
  }
};

Args parse_args(int argc, char** argv) {
  Args a;
  a.command = argv[1];
  for (int i = 2; i < argc; ++i) a.raw.push_back(argv[i]);
  for (size_t i = 0; i < a.raw.size(); ++i) {
    const std::string& tok = a.raw[i];
    if (tok.rfind("--", 0) != 0)
      throw ArgError(a.command + ": unexpected argument '" + tok + "'");
    std::string key = tok.substr(2), val;
    size_t eq = key.find('=');
    if (eq != std::string::npos) {
      val = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else if (key == "help") {
      val = "1";
    } else {
      if (i + 1 >= a.raw.size())
        throw ArgError(a.command + ": --" + key + " expects a value");
      val = a.raw[++i];
    }
    if (key.empty()) throw ArgError(a.command + ": empty flag name");
    a.flags[key] = val;
  }
  return a;
}

void log_line(const std::string& msg) { std::cerr << "[marsdust] " << msg << "\n"; }

// --- config & dataset plumbing ---------------------------------------------

Config load_cfg(const Args& a) {
  if (a.has("config")) return Config::load(a.get("config"));
  return Config{};
}

// Output directory: --out flag, then [output] dir from config, then a
// per-command default under ./marsdust_out.
fs::path resolve_out_dir(const Args& a, const Config& cfg) {
  if (a.has("out")) return a.get("out");
  std::string c = cfg.get_str("output.dir", "");
  if (!c.empty()) return c;
  return fs::path("marsdust_out") / a.command;
}

SplitManifest manifest_from(const Config& cfg) {
  std::string root = cfg.get_str("dataset.root", "");
  if (root.empty())
    throw ConfigError(
        "config: dataset.root is required (set [dataset] root in the config "
        "file or MARSDUST_DATASET_ROOT)");
  std::string man = cfg.get_str("dataset.manifest", "manifest.csv");
  ManifestColumns cols;
  cols.path = cfg.get_str("dataset.path_column", cols.path);
  cols.label = cfg.get_str("dataset.label_column", cols.label);
  cols.split = cfg.get_str("dataset.split_column", cols.split);
  fs::path man_path = fs::path(man).is_absolute() ? fs::path(man) : fs::path(root) / man;
  return load_manifest(man_path, cols);
}

// Reuses the dataset reference a previous train run left in its snapshot.
void adopt_model_dataset(Config& cfg, const fs::path& model_dir) {
  if (!cfg.get_str("dataset.root", "").empty()) return;
  fs::path snap = model_dir / "config_resolved.json";
  std::ifstream f(snap);
  if (!f) return;
  nlohmann::json doc = nlohmann::json::parse(f, nullptr, false);
  if (doc.is_discarded() || !doc.contains("config")) return;
  const auto& c = doc["config"];
  if (c.contains("dataset")) {
    const auto& d = c["dataset"];
    if (d.contains("root")) cfg.set("dataset.root", d["root"].get<std::string>());
    if (d.contains("manifest")) cfg.set("dataset.manifest", d["manifest"].get<std::string>());
  }
}

Split parse_split_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ArgError("unknown split '" + s + "' (expected train, val, or test)");
}

NormMode parse_norm_mode(const std::string& s) {
  if (s == "unit") return NormMode::unit;
  if (s == "standardized") return NormMode::standardized;
  if (s == "signed_unit") return NormMode::signed_unit;
  throw ArgError("unknown normalization mode '" + s + "'");
}

struct LoadedSplit {
  std::vector<ImagePatch> patches;
  std::vector<int> labels;
};

LoadedSplit take_split(const SplitManifest& man, Split split, uint64_t seed, long long limit) {
  auto items = prepare_split(man, split, seed);
  if (limit > 0 && static_cast<long long>(items.size()) > limit) items.resize(limit);
  LoadedSplit out;
  out.patches.reserve(items.size());
  for (auto& it : items) {
    out.patches.push_back(std::move(it.patch));
    out.labels.push_back(it.label);
  }
  return out;
}

// Sorted-filename image scan, mirroring the filter pipeline's folder walk.
std::vector<ImagePatch> load_folder(const fs::path& dir, std::vector<std::string>* skipped) {
  if (!fs::is_directory(dir)) throw IoError("no such image folder: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ImagePatch> out;
  for (const auto& f : files) {
    try {
      ImagePatch p = load_patch(f);
      p.id = f.filename().string();
      out.push_back(std::move(p));
    } catch (const Error& e) {
      if (skipped) skipped->push_back(f.filename().string());
      log_line("skipping " + f.filename().string() + ": " + e.what());
    }
  }
  return out;
}

// --- stack IO ---------------------------------------------------------------

struct PatchStack {
  std::vector<ImagePatch> patches;
  std::vector<std::string> names;
};

ImagePatch patch_from_plane(const float* v, int h, int w) {
  ImagePatch p;
  p.height = h;
  p.width = w;
  p.pixels.resize(static_cast<size_t>(h) * w);
  for (size_t i = 0; i < p.pixels.size(); ++i)
    p.pixels[i] = static_cast<uint8_t>(std::clamp(std::lround(v[i] * 255.0f), 0l, 255l));
  return p;
}

PatchStack stack_from_array(const NpyArray& a, std::vector<std::string> names,
                            const std::string& what) {
  require(a.shape.size() == 3, what + ": expected shape [n,h,w]");
  size_t n = a.shape[0];
  int h = static_cast<int>(a.shape[1]), w = static_cast<int>(a.shape[2]);
  if (names.empty())
    for (size_t i = 0; i < n; ++i) names.push_back("img_" + std::to_string(i));
  require(names.size() == n, what + ": name list length != array length");
  PatchStack st;
  st.names = std::move(names);
  const size_t hw = static_cast<size_t>(h) * w;
  for (size_t i = 0; i < n; ++i) {
    ImagePatch p;
    if (a.dtype == Dtype::u8) {
      p.height = h;
      p.width = w;
      p.pixels.assign(a.data<uint8_t>() + i * hw, a.data<uint8_t>() + (i + 1) * hw);
    } else if (a.dtype == Dtype::f32) {
      p = patch_from_plane(a.data<float>() + i * hw, h, w);
    } else {
      throw ParseError(what + ": expected uint8 or float32 pixels");
    }
    p.id = st.names[i];
    st.patches.push_back(std::move(p));
  }
  return st;
}

// Accepts a filter archive (dusty member), a generic npz (images member), or
// a bare .npy stack.
PatchStack load_stack(const fs::path& file) {
  if (!fs::exists(file)) throw IoError("no such input stack: " + file.string());
  if (file.extension() == ".npy")
    return stack_from_array(npy_load(file), {}, file.string());
  NpzReader npz(file);
  if (npz.has("dusty.npy")) {
    FilterArchive ar = read_archive(file);
    PatchStack st;
    for (auto& p : ar.dusty) {
      st.names.push_back(p.id);
      st.patches.push_back(std::move(p));
    }
    return st;
  }
  if (npz.has("images.npy")) {
    std::vector<std::string> names;
    if (npz.has("names.json")) {
      auto j = nlohmann::json::parse(npz.text("names.json"));
      names = j.get<std::vector<std::string>>();
    }
    return stack_from_array(npz.array("images"), std::move(names), file.string());
  }
  throw ParseError(file.string() +
                   ": expected a filter archive ('dusty' member) or an 'images' member");
}

// Same sources, loaded as unit-normalized float planes (float inputs are
// taken verbatim, so restored stacks score without quantization loss).
std::vector<NormalizedImage> load_norm_stack(const fs::path& file,
                                             std::vector<std::string>& names) {
  auto planes_from = [&](const NpyArray& a, std::vector<std::string> ns,
                         const std::string& what) {
    require(a.shape.size() == 3, what + ": expected shape [n,h,w]");
    size_t n = a.shape[0];
    int h = static_cast<int>(a.shape[1]), w = static_cast<int>(a.shape[2]);
    if (ns.empty())
      for (size_t i = 0; i < n; ++i) ns.push_back("img_" + std::to_string(i));
    require(ns.size() == n, what + ": name list length != array length");
    std::vector<NormalizedImage> out(n);
    const size_t hw = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < n; ++i) {
      out[i].height = h;
      out[i].width = w;
      out[i].channels = 1;
      out[i].mode = NormMode::unit;
      out[i].values.resize(hw);
      if (a.dtype == Dtype::u8)
        for (size_t k = 0; k < hw; ++k)
          out[i].values[k] = a.data<uint8_t>()[i * hw + k] / 255.0f;
      else if (a.dtype == Dtype::f32)
        std::copy_n(a.data<float>() + i * hw, hw, out[i].values.begin());
      else
        throw ParseError(what + ": expected uint8 or float32 pixels");
    }
    names = std::move(ns);
    return out;
  };

  if (!fs::exists(file)) throw IoError("no such input stack: " + file.string());
  if (file.extension() == ".npy")
    return planes_from(npy_load(file), {}, file.string());
  NpzReader npz(file);
  if (npz.has("dusty.npy")) {
    FilterArchive ar = read_archive(file);
    std::vector<NormalizedImage> out;
    for (auto& p : ar.dusty) {
      names.push_back(p.id);
      out.push_back(normalize(p, NormMode::unit));
    }
    return out;
  }
  if (npz.has("images.npy")) {
    std::vector<std::string> ns;
    if (npz.has("names.json"))
      ns = nlohmann::json::parse(npz.text("names.json")).get<std::vector<std::string>>();
    return planes_from(npz.array("images"), std::move(ns), file.string());
  }
  throw ParseError(file.string() +
                   ": expected a filter archive ('dusty' member) or an 'images' member");
}

void write_image_npz(const fs::path& file, const std::vector<NormalizedImage>& images,
                     const std::vector<std::string>& names, const nlohmann::json& meta) {
  require(images.size() == names.size(), "write_image_npz: name/image count mismatch");
  int h = images.empty() ? 0 : images[0].height;
  int w = images.empty() ? 0 : images[0].width;
  std::vector<float> flat;
  flat.reserve(images.size() * static_cast<size_t>(h) * w);
  for (const auto& img : images) {
    require(img.height == h && img.width == w && img.channels == 1,
            "write_image_npz: ragged image dims");
    flat.insert(flat.end(), img.values.begin(), img.values.end());
  }
  if (file.parent_path() != fs::path()) fs::create_directories(file.parent_path());
  NpzWriter npz(file);
  npz.add_array("images", NpyArray::from(flat, {images.size(), static_cast<size_t>(h),
                                                static_cast<size_t>(w)}));
  npz.add_text("names.json", nlohmann::json(names).dump(2));
  npz.add_text("meta.json", meta.dump(2));
  npz.close();
}

// --- small report writers ---------------------------------------------------

void write_json(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << doc.dump(2) << "\n";
}

void write_history_csv(const fs::path& path, const TrainHistory& h) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
  for (const auto& e : h.epochs)
    f << e.epoch << "," << e.train_loss << "," << e.train_accuracy << "," << e.val_loss
      << "," << e.val_accuracy << "\n";
}

void write_confusion(const fs::path& dir, const EvalReport& r) {
  std::ofstream f(dir / "confusion.csv");
  if (!f) throw IoError("cannot write " + (dir / "confusion.csv").string());
  f << "truth,predicted_not_dusty,predicted_dusty\n";
  f << "not_dusty," << r.confusion[0][0] << "," << r.confusion[0][1] << "\n";
  f << "dusty," << r.confusion[1][0] << "," << r.confusion[1][1] << "\n";
  plot_heatmap_png(dir / "confusion.png",
                   {{double(r.confusion[0][0]), double(r.confusion[0][1])},
                    {double(r.confusion[1][0]), double(r.confusion[1][1])}});
}

std::vector<double> epoch_losses(const TrainHistory& h, bool val) {
  std::vector<double> v;
  for (const auto& e : h.epochs) v.push_back(val ? e.val_loss : e.train_loss);
  return v;
}

// --- subcommands ------------------------------------------------------------

int cmd_ingest(const Args& a) {
  Config cfg = load_cfg(a);
  NormMode mode = parse_norm_mode(a.get("mode", "unit"));
  int size = static_cast<int>(a.get_int("size", 100));
  uint64_t seed = a.get_int("seed", cfg.get_int("seed", 0));
  if (size < 1) throw ArgError("ingest: --size must be >= 1");
  fs::path out = resolve_out_dir(a, cfg);
  fs::create_directories(out);

  SplitManifest man = manifest_from(cfg);
  log_line("manifest: " + std::to_string(man.rows.size()) + " rows");

  NormStats stats;
  nlohmann::json splits_json = nlohmann::json::object();
  std::ofstream counts(out / "counts.csv");
  if (!counts) throw IoError("cannot write " + (out / "counts.csv").string());
  counts << "split,total,dusty,not_dusty\n";
  for (Split split : {Split::train, Split::val, Split::test}) {
    auto items = prepare_split(man, split, seed);
    std::vector<ImagePatch> patches;
    std::vector<int> labels;
    for (auto& it : items) {
      patches.push_back(std::move(it.patch));
      labels.push_back(it.label);
    }
    if (split == Split::train && mode == NormMode::standardized) {
      require(!patches.empty(), "ingest: standardized mode needs a nonempty train split");
      stats = compute_stats(patches);
    }
    std::vector<NormalizedImage> images;
    images.reserve(patches.size());
    for (const auto& p : patches) {
      NormalizedImage img =
          normalize(p, mode, mode == NormMode::standardized ? &stats : nullptr);
      if (img.height != size || img.width != size) img = resize(img, size, size);
      images.push_back(std::move(img));
    }
    std::string key = cache_key(split, mode, size, size, seed);
    write_split_cache(out, key, images, labels);
    size_t dusty = 0;
    for (int l : labels) dusty += l;
    counts << to_string(split) << "," << labels.size() << "," << dusty << ","
           << labels.size() - dusty << "\n";
    splits_json[to_string(split)] = {{"count", labels.size()},
                                     {"dusty", dusty},
                                     {"not_dusty", labels.size() - dusty},
                                     {"cache_key", key}};
    log_line(std::string(to_string(split)) + ": cached " + std::to_string(labels.size()) +
             " images as " + key);
  }

  nlohmann::json report = {{"splits", splits_json},
                           {"mode", to_string(mode)},
                           {"size", size},
                           {"seed", seed}};
  if (mode == NormMode::standardized)
    report["stats"] = {{"mean", stats.mean}, {"stddev", stats.stddev}};
  write_json(out / "ingest.json", report);

  Config snap = cfg;
  snap.set("ingest.mode", std::string(to_string(mode)));
  snap.set("ingest.size", static_cast<long long>(size));
  snap.set("seed", static_cast<long long>(seed));
  write_config_resolved(out, a.command, a.raw, snap);
  std::cout << "ingest: cached 3 splits into " << out.string() << "\n";
  return 0;
}

int cmd_analyze_noise(const Args& a) {
  Config cfg = load_cfg(a);
  fs::path in = a.get("in");
  fs::path out = resolve_out_dir(a, cfg);
  fs::create_directories(out);

  auto patches = load_folder(in, nullptr);
  PixelHistogram h = histogram(patches);
  auto smoothed = detail::smooth_histogram(h.counts);

  std::ofstream csv(out / "histogram.csv");
  if (!csv) throw IoError("cannot write " + (out / "histogram.csv").string());
  csv << "bin,count,smoothed\n";
  for (int i = 0; i < 256; ++i) csv << i << "," << h.counts[i] << "," << smoothed[i] << "\n";

  std::vector<double> bars(h.counts.begin(), h.counts.end());
  plot_bars_png(out / "histogram.png", bars);

  write_json(out / "peaks.json", {{"peaks", h.peaks},
                                  {"n_images", patches.size()},
                                  {"total_pixels", h.total()}});
  Config snap = cfg;
  snap.set("analyze_noise.in", in.string());
  write_config_resolved(out, a.command, a.raw, snap);
  std::cout << "analyze-noise: " << patches.size() << " images, peaks at ";
  for (size_t i = 0; i < h.peaks.size(); ++i)
    std::cout << (i ? ", " : "") << h.peaks[i];
  std::cout << "\n";
  return 0;
}

int cmd_noise(const Args& a) {
  Config cfg = load_cfg(a);
  double level = a.get_float("level");
  double ratio = a.get_float("ratio");
  uint64_t seed = a.get_int("seed", cfg.get_int("seed", 0));
  fs::path in = a.get("in");
  fs::path out = a.get("out");
  fs::create_directories(out);

  std::vector<std::string> skipped;
  auto clean = load_folder(in, &skipped);
  require(!clean.empty(), "noise: no readable images in " + in.string());
  for (const auto& p : clean)
    require(p.height == clean[0].height && p.width == clean[0].width,
            "noise: cannot stack mixed image sizes in " + in.string());

  auto pairs = make_noisy_dataset(clean, level, ratio, seed);
  auto stack = [&](bool noisy) {
    std::vector<uint8_t> flat;
    flat.reserve(pairs.size() * clean[0].size());
    for (const auto& pr : pairs) {
      const auto& p = noisy ? pr.noisy : pr.clean;
      flat.insert(flat.end(), p.pixels.begin(), p.pixels.end());
    }
    return NpyArray::from(flat, {pairs.size(), static_cast<size_t>(clean[0].height),
                                 static_cast<size_t>(clean[0].width)});
  };
  npy_save(out / "noisy.npy", stack(true));
  npy_save(out / "clean.npy", stack(false));

  NoiseSpec spec = make_noise_spec(clean[0].size(), level, ratio, seed);
  std::vector<std::string> names;
  for (const auto& p : clean) names.push_back(p.id);
  write_json(out / "noise_spec.json",
             {{"level", level},
              {"ratio", ratio},
              {"seed", seed},
              {"low_band", {spec.low_band.min_raw, spec.low_band.max_raw}},
              {"high_band", {spec.high_band.min_raw, spec.high_band.max_raw}},
              {"n_low", spec.n_low},
              {"n_high", spec.n_high},
              {"per_image_seed", "derive_seed(seed, index)"},
              {"names", names},
              {"skipped", skipped}});

  Config snap = cfg;
  snap.set("noise.level", level);
  snap.set("noise.ratio", ratio);
  snap.set("seed", static_cast<long long>(seed));
  snap.set("noise.in", in.string());
  write_config_resolved(out, a.command, a.raw, snap);
  std::cout << "noise: wrote " << pairs.size() << " pairs at level " << level << " to "
            << out.string() << "\n";
  return 0;
}

int cmd_train(const Args& a) {
  Config cfg = load_cfg(a);
  std::string model_name = a.get("model");
  if (model_name != "svm" && model_name != "cnn" && model_name != "transfer")
    throw ArgError("train: unknown --model '" + model_name + "'");
  uint64_t seed = a.get_int("seed", cfg.get_int("seed", 0));
  long long limit = a.get_int("limit", cfg.get_int("train.limit", 0));
  fs::path out = resolve_out_dir(a, cfg);
  fs::create_directories(out);

  SplitManifest man = manifest_from(cfg);
  auto tr = take_split(man, Split::train, seed, limit);
  auto val = take_split(man, Split::val, seed, limit);
  log_line("train split: " + std::to_string(tr.patches.size()) +
           ", val split: " + std::to_string(val.patches.size()));

  Config snap = cfg;
  snap.set("train.model", model_name);
  snap.set("seed", static_cast<long long>(seed));
  snap.set("train.limit", limit);

  std::unique_ptr<Classifier> model;
  if (model_name == "svm") {
    PcaSvmTrainConfig tc;
    tc.n_components = static_cast<int>(cfg.get_int("svm.n_components", tc.n_components));
    tc.use_elbow = cfg.get_bool("svm.use_elbow", tc.use_elbow);
    tc.keep_components = static_cast<int>(cfg.get_int("svm.keep_components", tc.keep_components));
    tc.svm.C = cfg.get_float("svm.c", tc.svm.C);
    tc.svm.gamma = cfg.get_float("svm.gamma", tc.svm.gamma);
    tc.svm.tol = cfg.get_float("svm.tol", tc.svm.tol);
    auto trained = PcaSvmClassifier::train(tr.patches, tr.labels, tc, seed);
    std::vector<double> evr = trained.pca.explained_variance_ratio;
    log_line("pca kept " + std::to_string(trained.pca.n_components) + " components, " +
             std::to_string(trained.svm.dual_coef.size()) + " support vectors");
    std::ofstream scree(out / "scree.csv");
    scree << "component,explained_variance_ratio\n";
    for (size_t i = 0; i < evr.size(); ++i) scree << i + 1 << "," << evr[i] << "\n";
    plot_bars_png(out / "scree.png", evr);
    snap.set("svm.c", tc.svm.C);
    snap.set("svm.n_components", static_cast<long long>(tc.n_components));
    model = std::make_unique<PcaSvmClassifier>(std::move(trained));
  } else {
    TrainHyperparams hp;
    std::string sect = model_name;  // [cnn] / [transfer]
    hp.epochs = static_cast<int>(cfg.get_int(sect + ".epochs", hp.epochs));
    hp.batch_size = static_cast<int>(cfg.get_int(sect + ".batch_size", hp.batch_size));
    hp.learning_rate = cfg.get_float(sect + ".learning_rate", hp.learning_rate);
    snap.set(sect + ".epochs", static_cast<long long>(hp.epochs));
    snap.set(sect + ".batch_size", static_cast<long long>(hp.batch_size));
    snap.set(sect + ".learning_rate", hp.learning_rate);
    TrainHistory hist;
    if (model_name == "cnn") {
      auto [trained, h] =
          CnnClassifier::train(tr.patches, tr.labels, val.patches, val.labels, hp, seed);
      hist = std::move(h);
      model = std::make_unique<CnnClassifier>(std::move(trained));
    } else {
      std::string weights = a.get("weights", cfg.get_str("transfer.weights", "auto"));
      snap.set("transfer.weights", weights);
      auto [trained, h] = TransferClassifier::train(tr.patches, tr.labels, val.patches,
                                                    val.labels, hp, seed, weights);
      hist = std::move(h);
      model = std::move(trained);
    }
    write_json(out / "history.json", hist.to_json());
    write_history_csv(out / "history.csv", hist);
    plot_series_png(out / "loss_curve.png",
                    {epoch_losses(hist, false), epoch_losses(hist, true)});
    log_line("best epoch " + std::to_string(hist.best_epoch) + ", val accuracy " +
             std::to_string(hist.best_val_accuracy));
  }

  model->save(out);
  auto preds = model->predict(val.patches);
  EvalReport report = evaluate(preds, val.labels);
  write_json(out / "metrics.json",
             {{"split", "val"}, {"model", model_name}, {"report", to_json(report)}});
  write_confusion(out, report);
  write_config_resolved(out, a.command, a.raw, snap);
  std::cout << "train: " << model_name << " val accuracy "
            << std::fixed << std::setprecision(4) << report.accuracy << ", artifact in "
            << out.string() << "\n";
  return 0;
}

int cmd_eval(const Args& a) {
  Config cfg = load_cfg(a);
  fs::path model_dir = a.get("model-dir");
  Split split = parse_split_name(a.get("split"));
  adopt_model_dataset(cfg, model_dir);
  fs::path out = a.has("out") ? fs::path(a.get("out"))
                              : model_dir / ("eval_" + std::string(to_string(split)));
  fs::create_directories(out);

  auto model = load_classifier(model_dir);
  SplitManifest man = manifest_from(cfg);
  auto data = take_split(man, split, 0, a.get_int("limit", 0));
  require(!data.patches.empty(),
          std::string("eval: split '") + to_string(split) + "' is empty");
  log_line("evaluating " + model->architecture() + " on " +
           std::to_string(data.patches.size()) + " images");

  auto preds = model->predict(data.patches);
  EvalReport report = evaluate(preds, data.labels);
  write_json(out / ("eval_" + std::string(to_string(split)) + ".json"),
             {{"split", to_string(split)},
              {"model", model->architecture()},
              {"model_dir", model_dir.string()},
              {"report", to_json(report)}});
  write_confusion(out, report);

  Config snap = cfg;
  snap.set("eval.model_dir", model_dir.string());
  snap.set("eval.split", std::string(to_string(split)));
  write_config_resolved(out, a.command, a.raw, snap);
  std::cout << "eval: " << to_string(split) << " accuracy " << std::fixed
            << std::setprecision(4) << report.accuracy << " over " << report.total
            << " images\n";
  return 0;
}

int cmd_filter(const Args& a) {
  Config cfg = load_cfg(a);
  fs::path in = a.get("in");
  fs::path model_dir = a.get("model-dir");
  fs::path out = a.get("out");
  FilterOptions opt;
  opt.batch = static_cast<int>(a.get_int("batch", cfg.get_int("filter.batch", 64)));
  opt.log = &std::cerr;

  ArchiveManifest man = run_filter(in, model_dir, out, opt);
  size_t total = man.n_dusty + man.n_not_dusty;

  Config snap = cfg;
  snap.set("filter.in", in.string());
  snap.set("filter.model_dir", model_dir.string());
  snap.set("filter.batch", static_cast<long long>(opt.batch));
  fs::path art_dir = out.parent_path().empty() ? fs::path(".") : out.parent_path();
  write_config_resolved(art_dir, a.command, a.raw, snap);

  std::cout << "filter: " << man.n_dusty << " dusty + " << man.n_not_dusty
            << " not_dusty archived to " << out.string();
  if (!man.skipped.empty()) std::cout << " (" << man.skipped.size() << " skipped)";
  std::cout << "\n";
  return (total == 0 || !man.skipped.empty()) ? 2 : 0;
}

int cmd_train_ae(const Args& a) {
  Config cfg = load_cfg(a);
  std::string variant = a.get("variant");
  double level = a.get_float("noise-level");
  double ratio = a.get_float("ratio", cfg.get_float("ae.ratio", 0.5));
  uint64_t seed = a.get_int("seed", cfg.get_int("seed", 0));
  long long limit = a.get_int("limit", cfg.get_int("ae.limit", 0));
  models::AETrainConfig tc;
  tc.epochs = static_cast<int>(a.get_int("epochs", cfg.get_int("ae.epochs", tc.epochs)));
  tc.batch_size = static_cast<int>(a.get_int("batch", cfg.get_int("ae.batch_size", tc.batch_size)));
  tc.learning_rate = a.get_float("lr", cfg.get_float("ae.learning_rate", tc.learning_rate));
  tc.loss = models::parse_ae_loss(a.get("loss", cfg.get_str("ae.loss", "bce")));
  int pretrain = static_cast<int>(a.get_int("pretrain-epochs", cfg.get_int("ae.pretrain_epochs", 0)));
  fs::path out = resolve_out_dir(a, cfg);
  fs::create_directories(out);

  SplitManifest man = manifest_from(cfg);
  auto tr = take_split(man, Split::train, seed, limit);
  require(!tr.patches.empty(), "train-ae: empty train split");
  auto pairs = make_noisy_dataset(tr.patches, level, ratio, derive_seed(seed, 1));

  models::Autoencoder model(models::parse_ae_variant(variant), derive_seed(seed, 0));
  const int hw = model.arch.input_hw;
  auto to_tensor = [&](bool noisy) {
    std::vector<NormalizedImage> imgs;
    imgs.reserve(pairs.size());
    for (const auto& pr : pairs) {
      NormalizedImage img = normalize(noisy ? pr.noisy : pr.clean, NormMode::unit);
      if (img.height != hw || img.width != hw) img = resize(img, hw, hw);
      imgs.push_back(std::move(img));
    }
    return image_tensor(imgs);
  };
  nn::Tensor noisy_t = to_tensor(true), clean_t = to_tensor(false);
  log_line("training " + variant + " on " + std::to_string(pairs.size()) + " pairs at level " +
           std::to_string(level));

  models::AeHistory recon_hist;
  if (pretrain > 0) {
    models::AETrainConfig pc = tc;
    pc.epochs = pretrain;
    recon_hist = models::train_reconstruction(model, clean_t, pc, derive_seed(seed, 2));
    log_line("reconstruction pretrain loss " + std::to_string(recon_hist.final_loss()));
  }
  auto hist = models::train_denoiser(model, noisy_t, clean_t, tc, derive_seed(seed, 3));

  std::ofstream csv(out / "history.csv");
  csv << "phase,epoch,loss\n";
  for (size_t i = 0; i < recon_hist.epoch_loss.size(); ++i)
    csv << "reconstruction," << i + 1 << "," << recon_hist.epoch_loss[i] << "\n";
  for (size_t i = 0; i < hist.epoch_loss.size(); ++i)
    csv << "denoise," << i + 1 << "," << hist.epoch_loss[i] << "\n";
  plot_series_png(out / "loss_curve.png", {hist.epoch_loss});

  // quick restoration score on the training pairs (noisy -> restored vs clean)
  nn::Tensor restored = model.denoise(noisy_t);
  MetricReport mr = evaluate_denoiser(tensor_images(restored), tensor_images(clean_t));
  write_json(out / "metrics.json", {{"noise_level", level},
                                    {"ratio", ratio},
                                    {"n_pairs", mr.n_pairs},
                                    {"mae", mr.mean_mae},
                                    {"psnr", mr.mean_psnr},
                                    {"ssim", mr.mean_ssim},
                                    {"msssim", mr.mean_msssim},
                                    {"final_loss", hist.final_loss()}});

  models::save_autoencoder(model, out,
                           {{"noise_level", level},
                            {"ratio", ratio},
                            {"loss", to_string(tc.loss)},
                            {"epochs", tc.epochs},
                            {"pretrain_epochs", pretrain}});
  Config snap = cfg;
  snap.set("ae.variant", variant);
  snap.set("ae.noise_level", level);
  snap.set("ae.ratio", ratio);
  snap.set("ae.epochs", static_cast<long long>(tc.epochs));
  snap.set("ae.batch_size", static_cast<long long>(tc.batch_size));
  snap.set("ae.learning_rate", tc.learning_rate);
  snap.set("ae.loss", std::string(to_string(tc.loss)));
  snap.set("ae.pretrain_epochs", static_cast<long long>(pretrain));
  snap.set("ae.limit", limit);
  snap.set("seed", static_cast<long long>(seed));
  write_config_resolved(out, a.command, a.raw, snap);
  std::cout << "train-ae: " << variant << " final loss " << hist.final_loss() << ", ssim "
            << mr.mean_ssim << ", artifact in " << out.string() << "\n";
  return 0;
}

int cmd_train_pix2pix(const Args& a) {
  Config cfg = load_cfg(a);
  double level = a.get_float("noise-level");
  double ratio = a.get_float("ratio", cfg.get_float("pix2pix.ratio", 0.5));
  uint64_t seed = a.get_int("seed", cfg.get_int("seed", 0));
  long long limit = a.get_int("limit", cfg.get_int("pix2pix.limit", 0));
  models::GanConfig gc;
  gc.epochs = static_cast<int>(a.get_int("epochs", cfg.get_int("pix2pix.epochs", gc.epochs)));
  gc.lambda_l1 = cfg.get_float("pix2pix.lambda_l1", gc.lambda_l1);
  gc.generator_lr = cfg.get_float("pix2pix.generator_lr", gc.generator_lr);
  gc.discriminator_lr = cfg.get_float("pix2pix.discriminator_lr", gc.discriminator_lr);
  fs::path out = resolve_out_dir(a, cfg);
  fs::create_directories(out);

  SplitManifest man = manifest_from(cfg);
  auto tr = take_split(man, Split::train, seed, limit);
  require(!tr.patches.empty(), "train-pix2pix: empty train split");
  auto pairs = make_noisy_dataset(tr.patches, level, ratio, derive_seed(seed, 1));
  log_line("training pix2pix on " + std::to_string(pairs.size()) + " pairs for " +
           std::to_string(gc.epochs) + " epochs");

  models::Pix2Pix model(derive_seed(seed, 0));
  auto hist = models::train_pix2pix(model, pairs, gc, seed, out);
  models::save_generator(model.gen, out / "generator.npz",
                         {{"noise_level", level}, {"ratio", ratio}, {"epochs", gc.epochs}});

  std::ofstream csv(out / "history.csv");
  csv << "epoch,gen_total,gen_adversarial,gen_l1,disc_loss\n";
  for (size_t i = 0; i < hist.epoch_means.size(); ++i) {
    const auto& r = hist.epoch_means[i];
    csv << i + 1 << "," << r.gen_total << "," << r.gen_adversarial << "," << r.gen_l1 << ","
        << r.disc_loss << "\n";
  }
  std::vector<double> g, d;
  for (const auto& r : hist.epoch_means) {
    g.push_back(r.gen_total);
    d.push_back(r.disc_loss);
  }
  plot_series_png(out / "loss_curve.png", {g, d});

  Config snap = cfg;
  snap.set("pix2pix.noise_level", level);
  snap.set("pix2pix.ratio", ratio);
  snap.set("pix2pix.epochs", static_cast<long long>(gc.epochs));
  snap.set("pix2pix.lambda_l1", gc.lambda_l1);
  snap.set("pix2pix.limit", limit);
  snap.set("seed", static_cast<long long>(seed));
  write_config_resolved(out, a.command, a.raw, snap);
  std::cout << "train-pix2pix: " << gc.epochs << " epochs, final gen_l1 "
            << (hist.epoch_means.empty() ? 0.0 : hist.epoch_means.back().gen_l1)
            << ", artifact in " << out.string() << "\n";
  return 0;
}

// Denoiser backends behind one surface. `auto` inspects the artifacts.
struct Denoiser {
  std::string backend;
  std::unique_ptr<models::Autoencoder> ae;
  std::unique_ptr<models::UnetGenerator> gen;

  std::vector<NormalizedImage> restore(const std::vector<ImagePatch>& noisy) {
    return ae ? models::ae_denoise_patches(*ae, noisy)
              : models::pix2pix_denoise_patches(*gen, noisy);
  }
};

Denoiser load_denoiser(const fs::path& model_dir, const std::string& backend) {
  Denoiser d;
  bool has_ae = fs::exists(model_dir / "meta.json");
  bool has_gan = fs::exists(model_dir / "generator.npz");
  std::string pick = backend;
  if (pick == "auto") {
    if (has_ae)
      pick = "ae";
    else if (has_gan)
      pick = "pix2pix";
    else
      throw IoError("no denoiser artifact in " + model_dir.string() +
                    " (expected meta.json or generator.npz)");
  }
  if (pick == "ae") {
    d.ae = std::make_unique<models::Autoencoder>(models::load_autoencoder(model_dir));
  } else if (pick == "pix2pix") {
    fs::path f = has_gan ? model_dir / "generator.npz" : model_dir;
    d.gen = std::make_unique<models::UnetGenerator>(models::load_generator(f));
  } else {
    throw ArgError("unknown --backend '" + backend + "' (expected auto, ae, or pix2pix)");
  }
  d.backend = pick;
  return d;
}

int cmd_denoise(const Args& a) {
  Config cfg = load_cfg(a);
  fs::path model_dir = a.get("model-dir");
  fs::path in = a.get("in");
  fs::path out = a.get("out");

  Denoiser den = load_denoiser(model_dir, a.get("backend", "auto"));
  PatchStack stack = load_stack(in);
  log_line("restoring " + std::to_string(stack.patches.size()) + " images with " +
           den.backend);
  auto restored = den.restore(stack.patches);
  write_image_npz(out, restored, stack.names,
                  {{"backend", den.backend},
                   {"model_dir", model_dir.string()},
                   {"source", in.string()},
                   {"n_images", restored.size()}});

  Config snap = cfg;
  snap.set("denoise.backend", den.backend);
  snap.set("denoise.model_dir", model_dir.string());
  snap.set("denoise.in", in.string());
  fs::path art_dir = out.parent_path().empty() ? fs::path(".") : out.parent_path();
  write_config_resolved(art_dir, a.command, a.raw, snap);
  std::cout << "denoise: restored " << restored.size() << " images to " << out.string()
            << "\n";
  return 0;
}

int cmd_sweep(const Args& a) {
  Config cfg = load_cfg(a);
  fs::path model_dir = a.get("model-dir");
  fs::path in = a.get("in");
  double ratio = a.get_float("ratio", 0.5);
  uint64_t seed = a.get_int("seed", cfg.get_int("seed", 0));
  long long limit = a.get_int("limit", 0);
  fs::path out = resolve_out_dir(a, cfg);
  fs::create_directories(out);

  std::vector<double> levels;
  {
    std::istringstream ls(a.get("levels", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"));
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      auto v = detail::parse_toml_float(trim(tok));
      if (!v) throw ArgError("sweep: bad level '" + tok + "'");
      levels.push_back(*v);
    }
    for (size_t i = 1; i < levels.size(); ++i)
      if (levels[i] < levels[i - 1]) throw ArgError("sweep: levels must ascend");
  }

  Denoiser den = load_denoiser(model_dir, a.get("backend", "auto"));
  auto clean = load_folder(in, nullptr);
  require(!clean.empty(), "sweep: no readable images in " + in.string());
  if (limit > 0 && static_cast<long long>(clean.size()) > limit) clean.resize(limit);
  std::vector<NormalizedImage> clean_norm;
  for (const auto& p : clean) clean_norm.push_back(normalize(p, NormMode::unit));

  std::vector<models::SweepRow> rows;
  nlohmann::json levels_json = nlohmann::json::array();
  for (size_t li = 0; li < levels.size(); ++li) {
    auto pairs = make_noisy_dataset(clean, levels[li], ratio, derive_seed(seed, li));
    std::vector<ImagePatch> noisy;
    noisy.reserve(pairs.size());
    for (auto& pr : pairs) noisy.push_back(std::move(pr.noisy));
    auto restored = den.restore(noisy);
    models::SweepRow row;
    row.level = levels[li];
    row.report = evaluate_denoiser(restored, clean_norm);
    log_line("level " + std::to_string(levels[li]) + ": ssim " +
             std::to_string(row.report.mean_ssim));
    levels_json.push_back({{"level", row.level},
                           {"mae", row.report.mean_mae},
                           {"psnr", row.report.mean_psnr},
                           {"ssim", row.report.mean_ssim},
                           {"msssim", row.report.mean_msssim}});
    rows.push_back(std::move(row));
  }
  models::write_sweep_csv(out / "sweep.csv", rows);
  std::vector<double> ssim_series, msssim_series;
  for (const auto& r : rows) {
    ssim_series.push_back(r.report.mean_ssim);
    msssim_series.push_back(r.report.mean_msssim);
  }
  plot_series_png(out / "sweep.png", {ssim_series, msssim_series});
  write_json(out / "sweep.json",
             {{"backend", den.backend}, {"ratio", ratio}, {"levels", levels_json}});

  Config snap = cfg;
  snap.set("sweep.model_dir", model_dir.string());
  snap.set("sweep.in", in.string());
  snap.set("sweep.ratio", ratio);
  snap.set("seed", static_cast<long long>(seed));
  write_config_resolved(out, a.command, a.raw, snap);
  std::cout << "sweep: " << rows.size() << " levels over " << clean.size()
            << " images, results in " << out.string() << "\n";
  return 0;
}

int cmd_metrics(const Args& a) {
  Config cfg = load_cfg(a);
  fs::path restored_path = a.get("restored");
  fs::path clean_path = a.get("clean");
  fs::path out = a.get("out");

  std::vector<std::string> rnames, cnames;
  auto restored = load_norm_stack(restored_path, rnames);
  auto clean = load_norm_stack(clean_path, cnames);
  require(restored.size() == clean.size(),
          "metrics: restored has " + std::to_string(restored.size()) + " images, clean has " +
              std::to_string(clean.size()));
  require(!restored.empty(), "metrics: empty stacks");

  MetricReport r = evaluate_denoiser(restored, clean);
  nlohmann::json pairs = nlohmann::json::array();
  for (size_t i = 0; i < r.n_pairs; ++i)
    pairs.push_back({{"pair_id", rnames[i]},
                     {"mae", r.per_mae[i]},
                     {"psnr", r.per_psnr[i]},
                     {"ssim", r.per_ssim[i]},
                     {"msssim", r.per_msssim[i]}});
  if (out.parent_path() != fs::path()) fs::create_directories(out.parent_path());
  write_json(out, {{"n_pairs", r.n_pairs},
                   {"height", r.height},
                   {"width", r.width},
                   {"mean", {{"mae", r.mean_mae},
                             {"psnr", r.mean_psnr},
                             {"ssim", r.mean_ssim},
                             {"msssim", r.mean_msssim}}},
                   {"n_psnr_inf", r.n_psnr_inf},
                   {"pairs", pairs}});

  fs::path csv_path = out;
  csv_path.replace_extension(".csv");
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << "pair_id,mae,psnr,ssim,msssim\n";
  for (size_t i = 0; i < r.n_pairs; ++i)
    csv << rnames[i] << "," << r.per_mae[i] << "," << r.per_psnr[i] << "," << r.per_ssim[i]
        << "," << r.per_msssim[i] << "\n";

  Config snap = cfg;
  snap.set("metrics.restored", restored_path.string());
  snap.set("metrics.clean", clean_path.string());
  fs::path art_dir = out.parent_path().empty() ? fs::path(".") : out.parent_path();
  write_config_resolved(art_dir, a.command, a.raw, snap);
  std::cout << "metrics: " << r.n_pairs << " pairs, mean ssim " << std::fixed
            << std::setprecision(4) << r.mean_ssim << ", report " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kUsage;
    return 1;
  }
  std::string cmd = argv[1];
  if (cmd == "--help" || cmd == "-h" || cmd == "help") {
    std::cout << kUsage;
    return 0;
  }
  try {
    Args a = parse_args(argc, argv);
    if (a.has("help")) {
      std::cout << kUsage;
      return 0;
    }
    if (cmd == "ingest") return cmd_ingest(a);
    if (cmd == "analyze-noise") return cmd_analyze_noise(a);
    if (cmd == "noise") return cmd_noise(a);
    if (cmd == "train") return cmd_train(a);
    if (cmd == "eval") return cmd_eval(a);
    if (cmd == "filter") return cmd_filter(a);
    if (cmd == "train-ae") return cmd_train_ae(a);
    if (cmd == "train-pix2pix") return cmd_train_pix2pix(a);
    if (cmd == "denoise") return cmd_denoise(a);
    if (cmd == "sweep") return cmd_sweep(a);
    if (cmd == "metrics") return cmd_metrics(a);
    std::cerr << "marsdust: unknown command '" << cmd << "'\n\n" << kUsage;
    return 1;
  } catch (const ArgError& e) {
    std::cerr << "marsdust: " << e.what() << "\n(run 'marsdust --help' for usage)\n";
    return 1;
  } catch (const marsdust::Error& e) {
    std::cerr << "marsdust: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "marsdust: error: " << e.what() << "\n";
    return 2;
  }
}
