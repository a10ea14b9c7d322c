#include <catch2/catch_amalgamated.hpp>

#include "marsdust/npy.hpp"
#include "marsdust/rng.hpp"

using namespace marsdust;

namespace {
fs::path tmpdir() {
  auto d = fs::temp_directory_path() / "marsdust_npy_test";
  fs::create_directories(d);
  return d;
}
}  // namespace

TEST_CASE("npy round-trips float32") {
  std::vector<float> v = {1.0f, -2.5f, 0.0f, 3.25f, 100.0f, -0.125f};
  auto path = tmpdir() / "f32.npy";
  npy_save(path, NpyArray::from(v, {2, 3}));
  NpyArray back = npy_load(path);
  REQUIRE(back.dtype == Dtype::f32);
  REQUIRE(back.shape == std::vector<size_t>{2, 3});
  for (size_t i = 0; i < v.size(); ++i) REQUIRE(back.data<float>()[i] == v[i]);
}

TEST_CASE("npy round-trips uint8 and 1-d shape") {
  std::vector<uint8_t> v = {0, 255, 128, 64};
  auto path = tmpdir() / "u8.npy";
  npy_save(path, NpyArray::from(v, {4}));
  NpyArray back = npy_load(path);
  REQUIRE(back.dtype == Dtype::u8);
  REQUIRE(back.shape == std::vector<size_t>{4});
  REQUIRE(std::equal(v.begin(), v.end(), back.data<uint8_t>()));
}

TEST_CASE("npy header is 64-byte aligned v1.0") {
  std::vector<float> v(7, 1.0f);
  auto bytes = npy_encode(NpyArray::from(v, {7}));
  REQUIRE(bytes.size() >= 10);
  REQUIRE(bytes[6] == 1);  // version 1.0
  REQUIRE(bytes[7] == 0);
  size_t hlen = bytes[8] | (bytes[9] << 8);
  REQUIRE((10 + hlen) % 64 == 0);
}

TEST_CASE("npz round-trips arrays and text bit-exactly") {
  Rng rng(7);
  std::vector<float> payload(3 * 100 * 100);
  for (auto& x : payload) x = rng.next_float();
  auto path = tmpdir() / "pack.npz";
  {
    NpzWriter w(path);
    w.add_array("dusty", NpyArray::from(payload, {3, 100, 100}));
    w.add_text("manifest.json", "{\"n\": 3}");
    w.close();
  }
  NpzReader r(path);
  REQUIRE(r.has("dusty.npy"));
  NpyArray a = r.array("dusty");
  REQUIRE(a.shape == std::vector<size_t>{3, 100, 100});
  REQUIRE(std::memcmp(a.bytes.data(), payload.data(), a.bytes.size()) == 0);
  REQUIRE(r.text("manifest.json") == "{\"n\": 3}");
}

TEST_CASE("npz writes are byte-deterministic") {
  std::vector<uint8_t> payload = {1, 2, 3, 4, 5, 6};
  auto p1 = tmpdir() / "a.npz";
  auto p2 = tmpdir() / "b.npz";
  for (const auto& p : {p1, p2}) {
    NpzWriter w(p);
    w.add_array("x", NpyArray::from(payload, {6}));
    w.close();
  }
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
  std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
  REQUIRE(b1 == b2);
}

TEST_CASE("npz missing member raises a structured error") {
  auto path = tmpdir() / "missing.npz";
  {
    NpzWriter w(path);
    w.add_array("not_dusty", NpyArray::from(std::vector<uint8_t>{1}, {1}));
    w.close();
  }
  NpzReader r(path);
  REQUIRE_THROWS_MATCHES(r.array("dusty"), ParseError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("dusty")));
}

TEST_CASE("truncated npy payload is rejected") {
  std::vector<float> v(10, 2.0f);
  auto bytes = npy_encode(NpyArray::from(v, {10}));
  bytes.resize(bytes.size() - 8);
  auto path = tmpdir() / "trunc.npy";
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  REQUIRE_THROWS_AS(npy_load(path), ParseError);
}
