// Grayscale image patches and file decoding (PNG, PGM, NPY).
#pragma once

#include <png.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "marsdust/common.hpp"
#include "marsdust/npy.hpp"

namespace marsdust {

enum class Label { not_dusty = 0, dusty = 1 };
enum class Split { train, val, test };

inline const char* to_string(Label l) { return l == Label::dusty ? "dusty" : "not_dusty"; }
inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "";
}

// One grayscale patch: raw 8-bit pixels plus identity metadata. Dataset
// patches are 100x100 but the type itself carries arbitrary dimensions.
struct ImagePatch {
  std::string id;
  int height = 0;
  int width = 0;
  std::vector<uint8_t> pixels;  // row-major, height*width
  std::optional<Label> label;
  Split split = Split::train;

  uint8_t at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
  uint8_t& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return pixels.size(); }

  static ImagePatch constant(int h, int w, uint8_t value, std::string id = "") {
    ImagePatch p;
    p.id = std::move(id);
    p.height = h;
    p.width = w;
    p.pixels.assign(static_cast<size_t>(h) * w, value);
    return p;
  }
};

// Incremented whenever a multi-channel file is collapsed to grayscale.
inline std::atomic<uint64_t>& multichannel_warning_counter() {
  static std::atomic<uint64_t> n{0};
  return n;
}

namespace detail {

struct PngCloser {
  FILE* f = nullptr;
  ~PngCloser() { if (f) std::fclose(f); }
};

inline ImagePatch load_png(const fs::path& path) {
  PngCloser fc;
  fc.f = std::fopen(path.string().c_str(), "rb");
  if (!fc.f) throw IoError("cannot open: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("corrupt PNG: " + path.string());
  }
  png_init_io(png, fc.f);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  std::vector<uint8_t> row(static_cast<size_t>(w) * channels);
  ImagePatch out;
  out.height = static_cast<int>(h);
  out.width = static_cast<int>(w);
  out.pixels.resize(static_cast<size_t>(h) * w);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    if (channels == 1) {
      std::copy(row.begin(), row.end(), out.pixels.begin() + static_cast<size_t>(y) * w);
    } else {
      // Channel average, rounded; counted so callers can surface a warning.
      for (png_uint_32 x = 0; x < w; ++x) {
        int sum = 0;
        for (int c = 0; c < channels; ++c) sum += row[x * channels + c];
        out.pixels[static_cast<size_t>(y) * w + x] =
            static_cast<uint8_t>((sum + channels / 2) / channels);
      }
    }
  }
  if (channels > 1) multichannel_warning_counter()++;
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

inline void save_png_gray(const fs::path& path, const uint8_t* pixels, int h, int w) {
  PngCloser fc;
  fc.f = std::fopen(path.string().c_str(), "wb");
  if (!fc.f) throw IoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path.string());
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels + static_cast<size_t>(y) * w));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void save_png_rgb(const fs::path& path, const uint8_t* rgb, int h, int w) {
  PngCloser fc;
  fc.f = std::fopen(path.string().c_str(), "wb");
  if (!fc.f) throw IoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path.string());
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb + static_cast<size_t>(y) * w * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline ImagePatch load_pgm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P5") throw ParseError("not a binary PGM: " + path.string());
  auto next_int = [&]() {
    int v;
    f >> std::ws;
    while (f.peek() == '#') f.ignore(1 << 20, '\n'), f >> std::ws;
    f >> v;
    return v;
  };
  int w = next_int(), h = next_int(), maxv = next_int();
  if (maxv != 255) throw ParseError("only 8-bit PGM supported: " + path.string());
  f.ignore(1);
  ImagePatch out;
  out.height = h;
  out.width = w;
  out.pixels.resize(static_cast<size_t>(h) * w);
  f.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()));
  if (!f) throw ParseError("truncated PGM: " + path.string());
  return out;
}

inline ImagePatch load_npy_image(const fs::path& path) {
  NpyArray a = npy_load(path);
  int h, w, c = 1;
  if (a.shape.size() == 2) {
    h = static_cast<int>(a.shape[0]);
    w = static_cast<int>(a.shape[1]);
  } else if (a.shape.size() == 3) {
    h = static_cast<int>(a.shape[0]);
    w = static_cast<int>(a.shape[1]);
    c = static_cast<int>(a.shape[2]);
  } else {
    throw ParseError("NPY image must be 2-D or 3-D: " + path.string());
  }
  ImagePatch out;
  out.height = h;
  out.width = w;
  out.pixels.resize(static_cast<size_t>(h) * w);
  auto fetch = [&](size_t i) -> double {
    switch (a.dtype) {
      case Dtype::u8: return a.data<uint8_t>()[i];
      case Dtype::f32: return a.data<float>()[i];
      case Dtype::f64: return a.data<double>()[i];
      case Dtype::i32: return a.data<int32_t>()[i];
      case Dtype::i64: return static_cast<double>(a.data<int64_t>()[i]);
    }
    return 0;
  };
  for (size_t p = 0; p < out.pixels.size(); ++p) {
    double v;
    if (c == 1) {
      v = fetch(p);
    } else {
      double sum = 0;
      for (int k = 0; k < c; ++k) sum += fetch(p * c + k);
      v = sum / c;
    }
    // float arrays may be unit-range; integers are taken as raw intensities
    if (a.dtype == Dtype::f32 || a.dtype == Dtype::f64) {
      if (v <= 1.0) v *= 255.0;
    }
    v = std::clamp(v, 0.0, 255.0);
    out.pixels[p] = static_cast<uint8_t>(std::lround(v));
  }
  if (c > 1) multichannel_warning_counter()++;
  return out;
}

}  // namespace detail

// Decodes a patch from PNG, PGM, or NPY, keyed by extension. Multi-channel
// inputs collapse to their channel average and bump the warning counter.
inline ImagePatch load_patch(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such image file: " + path.string());
  std::string ext = lower(path.extension().string());
  ImagePatch out;
  if (ext == ".png") out = detail::load_png(path);
  else if (ext == ".pgm") out = detail::load_pgm(path);
  else if (ext == ".npy") out = detail::load_npy_image(path);
  else throw ParseError("unsupported image format '" + ext + "': " + path.string());
  out.id = path.filename().string();
  return out;
}

inline void save_patch_png(const fs::path& path, const ImagePatch& p) {
  detail::save_png_gray(path, p.pixels.data(), p.height, p.width);
}

inline void save_patch_pgm(const fs::path& path, const ImagePatch& p) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "P5\n" << p.width << " " << p.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(p.pixels.data()),
          static_cast<std::streamsize>(p.pixels.size()));
}

}  // namespace marsdust
