// Deployment path: classify every patch in a folder with a saved model and
// store the two classes into a compressed NPZ archive for downstream
// denoising.
//
// Archive layout (zip of NPY v1.0 members + JSON):
//   dusty.npy            uint8 [n_dusty, 100, 100]
//   not_dusty.npy        uint8 [n_not_dusty, 100, 100]
//   dusty_names.json     filenames parallel to dusty.npy slices
//   not_dusty_names.json filenames parallel to not_dusty.npy slices
//   manifest.json        counts, provenance, per-image predictions, skips
//
// Files process in sorted-filename order, so a given folder and model always
// produce the same archive bytes (timestamp injection pins `created_at`).
#pragma once

#include <ctime>

#include "marsdust/classify.hpp"
#include "marsdust/image.hpp"
#include "marsdust/npy.hpp"

namespace marsdust {

constexpr int kArchivePatchSize = 100;

struct FilterRecord {
  std::string filename;
  Label label = Label::not_dusty;
  double probability = 0;  // p(dusty)
};

struct SkipRecord {
  std::string filename;
  std::string reason;
};

struct ArchiveManifest {
  size_t n_dusty = 0, n_not_dusty = 0;
  std::string source_folder;
  std::string model_id;
  std::string created_at;
  std::vector<FilterRecord> images;
  std::vector<SkipRecord> skipped;

  nlohmann::json to_json() const {
    nlohmann::json imgs = nlohmann::json::array(), skips = nlohmann::json::array();
    for (const auto& r : images)
      imgs.push_back({{"filename", r.filename},
                      {"label", to_string(r.label)},
                      {"probability", r.probability}});
    for (const auto& s : skipped)
      skips.push_back({{"filename", s.filename}, {"reason", s.reason}});
    return {{"n_dusty", n_dusty},
            {"n_not_dusty", n_not_dusty},
            {"n_skipped", skipped.size()},
            {"source_folder", source_folder},
            {"model_id", model_id},
            {"created_at", created_at},
            {"images", imgs},
            {"skipped", skips}};
  }

  static ArchiveManifest from_json(const nlohmann::json& j) {
    ArchiveManifest m;
    m.n_dusty = j.at("n_dusty").get<size_t>();
    m.n_not_dusty = j.at("n_not_dusty").get<size_t>();
    m.source_folder = j.at("source_folder").get<std::string>();
    m.model_id = j.at("model_id").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
    for (const auto& r : j.at("images")) {
      FilterRecord rec;
      rec.filename = r.at("filename").get<std::string>();
      std::string lab = r.at("label").get<std::string>();
      require(lab == "dusty" || lab == "not_dusty", "manifest: unknown label '" + lab + "'");
      rec.label = lab == "dusty" ? Label::dusty : Label::not_dusty;
      rec.probability = r.at("probability").get<double>();
      require(rec.probability >= 0.0 && rec.probability <= 1.0,
              "manifest: probability out of [0,1] for " + rec.filename);
      m.images.push_back(std::move(rec));
    }
    for (const auto& s : j.at("skipped"))
      m.skipped.push_back({s.at("filename").get<std::string>(),
                           s.at("reason").get<std::string>()});
    return m;
  }
};

struct FilterArchive {
  std::vector<ImagePatch> dusty, not_dusty;  // ids carry the filename lists
  ArchiveManifest manifest;
};

struct FilterOptions {
  int batch = 64;
  std::string created_at;       // empty -> current UTC time
  std::ostream* log = nullptr;  // skip and progress messages
};

namespace detail {

inline std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline NpyArray stack_patches(const std::vector<ImagePatch>& patches) {
  const size_t hw = static_cast<size_t>(kArchivePatchSize) * kArchivePatchSize;
  std::vector<uint8_t> flat;
  flat.reserve(patches.size() * hw);
  for (const auto& p : patches) {
    require(p.height == kArchivePatchSize && p.width == kArchivePatchSize,
            "archive patches must be 100x100, got " + std::to_string(p.height) + "x" +
                std::to_string(p.width));
    flat.insert(flat.end(), p.pixels.begin(), p.pixels.end());
  }
  return NpyArray::from(flat, {patches.size(), static_cast<size_t>(kArchivePatchSize),
                               static_cast<size_t>(kArchivePatchSize)});
}

inline std::vector<ImagePatch> unstack_patches(const NpyArray& a,
                                               const std::vector<std::string>& names,
                                               const std::string& member) {
  require(a.dtype == Dtype::u8, "archive member " + member + ": expected uint8");
  require(a.shape.size() == 3 && a.shape[1] == kArchivePatchSize &&
              a.shape[2] == kArchivePatchSize,
          "archive member " + member + ": expected [n,100,100]");
  require(names.size() == a.shape[0],
          "archive member " + member + ": filename list length " +
              std::to_string(names.size()) + " != array length " +
              std::to_string(a.shape[0]));
  const size_t hw = static_cast<size_t>(kArchivePatchSize) * kArchivePatchSize;
  std::vector<ImagePatch> out(a.shape[0]);
  for (size_t i = 0; i < out.size(); ++i) {
    out[i].id = names[i];
    out[i].height = out[i].width = kArchivePatchSize;
    out[i].pixels.assign(a.bytes.begin() + i * hw, a.bytes.begin() + (i + 1) * hw);
  }
  return out;
}

}  // namespace detail

// Single-writer and atomic: the archive appears at `out_path` only complete,
// via temp-file rename.
inline void write_archive(const fs::path& out_path, const FilterArchive& ar) {
  require(ar.manifest.n_dusty == ar.dusty.size() &&
              ar.manifest.n_not_dusty == ar.not_dusty.size(),
          "write_archive: manifest counts disagree with arrays");
  auto names_of = [](const std::vector<ImagePatch>& ps) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : ps) j.push_back(p.id);
    return j.dump(2);
  };
  fs::path tmp = out_path;
  tmp += ".tmp";
  {
    NpzWriter npz(tmp);
    npz.add_array("dusty", detail::stack_patches(ar.dusty));
    npz.add_array("not_dusty", detail::stack_patches(ar.not_dusty));
    npz.add_text("dusty_names.json", names_of(ar.dusty));
    npz.add_text("not_dusty_names.json", names_of(ar.not_dusty));
    npz.add_text("manifest.json", ar.manifest.to_json().dump(2));
    npz.close();
  }
  fs::rename(tmp, out_path);
}

inline FilterArchive read_archive(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such archive: " + path.string());
  NpzReader npz(path);
  auto names = [&](const std::string& member) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(npz.text(member));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("archive member " + member + ": " + e.what());
    }
    require(j.is_array(), "archive member " + member + ": expected a JSON array");
    return j.get<std::vector<std::string>>();
  };

  FilterArchive ar;
  ar.dusty = detail::unstack_patches(npz.array("dusty"), names("dusty_names.json"), "dusty.npy");
  ar.not_dusty = detail::unstack_patches(npz.array("not_dusty"),
                                         names("not_dusty_names.json"), "not_dusty.npy");
  try {
    ar.manifest = ArchiveManifest::from_json(nlohmann::json::parse(npz.text("manifest.json")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("archive member manifest.json: " + std::string(e.what()));
  }
  require(ar.manifest.n_dusty == ar.dusty.size() &&
              ar.manifest.n_not_dusty == ar.not_dusty.size(),
          "archive member manifest.json: counts disagree with array lengths");
  return ar;
}

// Classifies every readable 100x100 patch in `folder` (sorted-filename order)
// and writes the two-class archive to `out_path`. Unreadable or wrongly sized
// files are skipped, logged, and recorded in the manifest.
inline ArchiveManifest run_filter(const fs::path& folder, const fs::path& model_dir,
                                  const fs::path& out_path, const FilterOptions& opt = {}) {
  if (!fs::is_directory(folder)) throw IoError("no such image folder: " + folder.string());
  require(opt.batch >= 1, "filter: batch must be >= 1");

  auto model = load_classifier(model_dir);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(folder))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  ArchiveManifest manifest;
  manifest.source_folder = folder.string();
  manifest.model_id = detail::read_meta(model_dir).at("architecture").get<std::string>();
  manifest.created_at = opt.created_at.empty() ? detail::utc_timestamp() : opt.created_at;

  std::vector<ImagePatch> readable;
  for (const auto& f : files) {
    ImagePatch p;
    try {
      p = load_patch(f);
    } catch (const Error& e) {
      manifest.skipped.push_back({f.filename().string(), e.what()});
      if (opt.log) *opt.log << "skip " << f.filename().string() << ": " << e.what() << "\n";
      continue;
    }
    if (p.height != kArchivePatchSize || p.width != kArchivePatchSize) {
      std::string reason = "size " + std::to_string(p.height) + "x" + std::to_string(p.width) +
                           " != 100x100";
      manifest.skipped.push_back({f.filename().string(), reason});
      if (opt.log) *opt.log << "skip " << f.filename().string() << ": " << reason << "\n";
      continue;
    }
    readable.push_back(std::move(p));
  }

  FilterArchive ar;
  for (size_t at = 0; at < readable.size(); at += static_cast<size_t>(opt.batch)) {
    size_t n = std::min(readable.size() - at, static_cast<size_t>(opt.batch));
    std::vector<ImagePatch> batch(readable.begin() + at, readable.begin() + at + n);
    auto proba = model->predict_proba(batch);
    for (size_t i = 0; i < n; ++i) {
      FilterRecord rec;
      rec.filename = batch[i].id;
      rec.probability = proba[i][1];
      rec.label = proba[i][1] >= 0.5f ? Label::dusty : Label::not_dusty;
      manifest.images.push_back(rec);
      (rec.label == Label::dusty ? ar.dusty : ar.not_dusty).push_back(std::move(batch[i]));
    }
  }
  manifest.n_dusty = ar.dusty.size();
  manifest.n_not_dusty = ar.not_dusty.size();
  ar.manifest = manifest;

  write_archive(out_path, ar);
  return manifest;
}

}  // namespace marsdust
