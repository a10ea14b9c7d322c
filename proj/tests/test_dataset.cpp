#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "marsdust/dataset.hpp"

using namespace marsdust;

namespace {

fs::path tmpdir() {
  auto d = fs::temp_directory_path() / "marsdust_dataset_test";
  fs::create_directories(d);
  return d;
}

fs::path write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
  return p;
}

// A tiny on-disk dataset: constant-valued PNG patches plus a manifest.
fs::path make_fixture_dataset() {
  auto dir = tmpdir() / "fixture";
  fs::create_directories(dir);
  struct Row { const char* name; uint8_t value; const char* label; const char* split; };
  const Row rows[] = {
      {"a.png", 10, "dusty", "train"},  {"b.png", 20, "dusty", "train"},
      {"c.png", 30, "not_dusty", "val"}, {"d.png", 40, "dusty", "test"},
  };
  std::string csv = "path,label,split\n";
  for (const auto& r : rows) {
    save_patch_png(dir / r.name, ImagePatch::constant(100, 100, r.value));
    csv += std::string(r.name) + "," + r.label + "," + r.split + "\n";
  }
  write_text(dir / "manifest.csv", csv);
  return dir / "manifest.csv";
}

}  // namespace

TEST_CASE("manifest: 4-row fixture gives counts {train:2, val:1, test:1}") {
  auto m = load_manifest(make_fixture_dataset());
  REQUIRE(m.rows.size() == 4);
  REQUIRE(m.count(Split::train) == 2);
  REQUIRE(m.count(Split::val) == 1);
  REQUIRE(m.count(Split::test) == 1);
  REQUIRE(m.count(Split::train, Label::dusty) == 2);
}

TEST_CASE("manifest: header-only CSV yields zero rows") {
  auto p = write_text(tmpdir() / "empty.csv", "path,label,split\n");
  auto m = load_manifest(p);
  REQUIRE(m.rows.empty());
}

TEST_CASE("manifest: missing file and unknown tokens error") {
  REQUIRE_THROWS_AS(load_manifest(tmpdir() / "nope.csv"), IoError);
  auto bad_label = write_text(tmpdir() / "bad1.csv", "path,label,split\nx.png,smoky,train\n");
  REQUIRE_THROWS_MATCHES(load_manifest(bad_label), ParseError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("row 2")));
  auto bad_split = write_text(tmpdir() / "bad2.csv", "path,label,split\nx.png,dusty,holdout\n");
  REQUIRE_THROWS_AS(load_manifest(bad_split), ParseError);
  auto dupe = write_text(tmpdir() / "dupe.csv",
                         "path,label,split\nx.png,dusty,train\nx.png,dusty,test\n");
  REQUIRE_THROWS_AS(load_manifest(dupe), ParseError);
}

TEST_CASE("manifest: split sets are disjoint") {
  auto m = load_manifest(make_fixture_dataset());
  std::set<std::string> train, val, test;
  for (const auto& r : m.rows) {
    if (r.split == Split::train) train.insert(r.image_path);
    if (r.split == Split::val) val.insert(r.image_path);
    if (r.split == Split::test) test.insert(r.image_path);
  }
  for (const auto& p : train) {
    REQUIRE(val.count(p) == 0);
    REQUIRE(test.count(p) == 0);
  }
  for (const auto& p : val) REQUIRE(test.count(p) == 0);
}

TEST_CASE("load_patch: PNG round-trips pixel values losslessly") {
  ImagePatch p;
  p.height = 2;
  p.width = 2;
  p.pixels = {0, 255, 128, 64};
  auto path = tmpdir() / "twobytwo.png";
  save_patch_png(path, p);
  ImagePatch back = load_patch(path);
  REQUIRE(back.height == 2);
  REQUIRE(back.width == 2);
  REQUIRE(back.pixels == p.pixels);
}

TEST_CASE("load_patch: 3-channel gray-equal PNG matches its 1-channel twin") {
  ImagePatch gray;
  gray.height = 3;
  gray.width = 3;
  gray.pixels = {5, 50, 100, 150, 200, 250, 17, 91, 203};
  auto gray_path = tmpdir() / "gray.png";
  save_patch_png(gray_path, gray);

  std::vector<uint8_t> rgb;
  for (uint8_t v : gray.pixels) { rgb.push_back(v); rgb.push_back(v); rgb.push_back(v); }
  auto rgb_path = tmpdir() / "rgb.png";
  detail::save_png_rgb(rgb_path, rgb.data(), 3, 3);

  uint64_t warnings_before = multichannel_warning_counter();
  ImagePatch a = load_patch(gray_path);
  ImagePatch b = load_patch(rgb_path);
  REQUIRE(a.pixels == b.pixels);
  REQUIRE(multichannel_warning_counter() == warnings_before + 1);
}

TEST_CASE("load_patch: unreadable file errors") {
  auto path = write_text(tmpdir() / "corrupt.png", "this is not a png");
  REQUIRE_THROWS_AS(load_patch(path), Error);
  REQUIRE_THROWS_AS(load_patch(tmpdir() / "absent.png"), IoError);
}

TEST_CASE("normalize endpoints and modes") {
  auto p255 = ImagePatch::constant(4, 4, 255);
  auto p0 = ImagePatch::constant(4, 4, 0);
  REQUIRE(normalize(p255, NormMode::unit).values[0] == 1.0f);
  REQUIRE(normalize(p0, NormMode::signed_unit).values[0] == -1.0f);

  auto p128 = ImagePatch::constant(1, 1, 128);
  NormStats stats{{0.5}, {0.25}};
  double expected = (128.0 / 255.0 - 0.5) / 0.25;
  REQUIRE_THAT(normalize(p128, NormMode::standardized, &stats).values[0],
               Catch::Matchers::WithinAbs(expected, 1e-6));

  NormStats degenerate{{0.5}, {0.0}};
  REQUIRE_THROWS_AS(normalize(p128, NormMode::standardized, &degenerate), ConfigError);
  REQUIRE_THROWS_AS(normalize(p128, NormMode::standardized, nullptr), ConfigError);
}

TEST_CASE("normalize/denormalize round-trip within 0.5/255 for every mode") {
  ImagePatch p;
  p.height = 16;
  p.width = 16;
  Rng rng(3);
  p.pixels.resize(256);
  for (auto& v : p.pixels) v = static_cast<uint8_t>(rng.next_below(256));
  NormStats stats{{0.43}, {0.21}};
  for (NormMode mode : {NormMode::unit, NormMode::signed_unit, NormMode::standardized}) {
    auto img = normalize(p, mode, &stats);
    auto back = denormalize(img);
    for (size_t i = 0; i < p.pixels.size(); ++i) {
      REQUIRE(std::abs(int(back.pixels[i]) - int(p.pixels[i])) == 0);
    }
  }
}

TEST_CASE("resize: identity dims are bit-identical, constants stay constant") {
  Rng rng(11);
  ImagePatch p;
  p.height = 10;
  p.width = 13;
  p.pixels.resize(130);
  for (auto& v : p.pixels) v = static_cast<uint8_t>(rng.next_below(256));
  auto img = normalize(p, NormMode::unit);

  auto same = resize(img, 10, 13, ResizeMethod::bilinear);
  REQUIRE(same.values == img.values);

  NormalizedImage half;
  half.height = 7;
  half.width = 9;
  half.channels = 1;
  half.values.assign(63, 0.5f);
  for (auto target : {std::pair{3, 4}, std::pair{14, 18}, std::pair{224, 224}}) {
    for (auto method : {ResizeMethod::bilinear, ResizeMethod::nearest}) {
      auto r = resize(half, target.first, target.second, method);
      for (float v : r.values) REQUIRE(v == 0.5f);
    }
  }
}

TEST_CASE("resize: 100x100 upscales to 224x224 preserving unit range") {
  Rng rng(5);
  ImagePatch p;
  p.height = 100;
  p.width = 100;
  p.pixels.resize(10000);
  for (auto& v : p.pixels) v = static_cast<uint8_t>(rng.next_below(256));
  auto up = resize(normalize(p, NormMode::unit), 224, 224);
  REQUIRE(up.height == 224);
  REQUIRE(up.width == 224);
  for (float v : up.values) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("to_rgb_stack replicates the channel and rejects multi-channel input") {
  auto img = normalize(ImagePatch::constant(1, 1, 77), NormMode::unit);
  auto rgb = to_rgb_stack(img);
  REQUIRE(rgb.channels == 3);
  REQUIRE(rgb.values[0] == rgb.values[1]);
  REQUIRE(rgb.values[1] == rgb.values[2]);
  REQUIRE(rgb.values[0] == img.values[0]);
  REQUIRE_THROWS_AS(to_rgb_stack(rgb), ConfigError);

  Rng rng(9);
  ImagePatch p;
  p.height = 8;
  p.width = 8;
  p.pixels.resize(64);
  for (auto& v : p.pixels) v = static_cast<uint8_t>(rng.next_below(256));
  auto stacked = to_rgb_stack(normalize(p, NormMode::unit));
  float max_diff = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      max_diff = std::max(max_diff, std::abs(stacked.at(y, x, 0) - stacked.at(y, x, 1)));
      max_diff = std::max(max_diff, std::abs(stacked.at(y, x, 0) - stacked.at(y, x, 2)));
    }
  REQUIRE(max_diff == 0.0f);
}

TEST_CASE("prepare_split: deterministic shuffle, permutation, binary codes") {
  auto m = load_manifest(make_fixture_dataset());
  // grow the train split so a shuffle is visible
  auto dir = m.root;
  std::string csv = "path,label,split\n";
  for (int i = 0; i < 12; ++i) {
    std::string name = "t" + std::to_string(i) + ".png";
    save_patch_png(dir / name, ImagePatch::constant(100, 100, static_cast<uint8_t>(i)));
    csv += name + "," + (i % 2 ? "dusty" : "not_dusty") + ",train\n";
  }
  std::ofstream(dir / "manifest12.csv") << csv;
  auto m12 = load_manifest(dir / "manifest12.csv");

  auto a = prepare_split(m12, Split::train, 42);
  auto b = prepare_split(m12, Split::train, 42);
  auto c = prepare_split(m12, Split::train, 43);
  REQUIRE(a.size() == 12);

  auto ids = [](const std::vector<SplitItem>& v) {
    std::vector<std::string> out;
    for (const auto& it : v) out.push_back(it.patch.id);
    return out;
  };
  REQUIRE(ids(a) == ids(b));
  REQUIRE(ids(a) != ids(c));

  auto sorted_a = ids(a);
  auto sorted_c = ids(c);
  std::sort(sorted_a.begin(), sorted_a.end());
  std::sort(sorted_c.begin(), sorted_c.end());
  REQUIRE(sorted_a == sorted_c);  // same multiset of ids

  for (const auto& item : a) {
    REQUIRE((item.label == 0 || item.label == 1));
    REQUIRE(item.label == (item.patch.label == Label::dusty ? 1 : 0));
  }
}
