// NPY v1.0 arrays and NPZ (zip-of-NPY) archives.
//
// Writers emit little-endian, C-order NPY v1.0 with the header padded to a
// 64-byte boundary. NPZ containers use stored (uncompressed) zip members with
// a fixed timestamp so that identical payloads produce identical bytes;
// readers also accept deflated members so numpy-compressed archives load.
#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "marsdust/common.hpp"

namespace marsdust {

enum class Dtype { u8, f32, f64, i32, i64 };

inline size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::u8: return 1;
    case Dtype::f32: return 4;
    case Dtype::i32: return 4;
    case Dtype::f64: return 8;
    case Dtype::i64: return 8;
  }
  return 0;
}

inline const char* dtype_descr(Dtype d) {
  switch (d) {
    case Dtype::u8: return "|u1";
    case Dtype::f32: return "<f4";
    case Dtype::f64: return "<f8";
    case Dtype::i32: return "<i4";
    case Dtype::i64: return "<i8";
  }
  return "";
}

struct NpyArray {
  Dtype dtype = Dtype::f32;
  std::vector<size_t> shape;
  std::vector<uint8_t> bytes;

  size_t count() const {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
  }
  template <typename T>
  const T* data() const { return reinterpret_cast<const T*>(bytes.data()); }
  template <typename T>
  T* data() { return reinterpret_cast<T*>(bytes.data()); }

  template <typename T>
  static NpyArray from(const std::vector<T>& v, std::vector<size_t> shape);

  // typed copy-out; throws unless the stored dtype matches T exactly
  template <typename T>
  std::vector<T> as() const;
};

namespace detail {

template <typename T> struct dtype_of;
template <> struct dtype_of<uint8_t> { static constexpr Dtype value = Dtype::u8; };
template <> struct dtype_of<float> { static constexpr Dtype value = Dtype::f32; };
template <> struct dtype_of<double> { static constexpr Dtype value = Dtype::f64; };
template <> struct dtype_of<int32_t> { static constexpr Dtype value = Dtype::i32; };
template <> struct dtype_of<int64_t> { static constexpr Dtype value = Dtype::i64; };

inline std::string npy_header(Dtype dtype, const std::vector<size_t>& shape) {
  std::ostringstream dict;
  dict << "{'descr': '" << dtype_descr(dtype) << "', 'fortran_order': False, 'shape': (";
  for (size_t i = 0; i < shape.size(); ++i) dict << shape[i] << (shape.size() == 1 ? "," : (i + 1 < shape.size() ? ", " : ""));
  dict << "), }";
  std::string d = dict.str();
  // magic(6) + version(2) + hlen(2) + dict + pad + '\n', total % 64 == 0
  size_t unpadded = 10 + d.size() + 1;
  size_t pad = (64 - unpadded % 64) % 64;
  d.append(pad, ' ');
  d.push_back('\n');

  std::string out = "\x93NUMPY";
  out.push_back(1);
  out.push_back(0);
  uint16_t hlen = static_cast<uint16_t>(d.size());
  out.push_back(static_cast<char>(hlen & 0xff));
  out.push_back(static_cast<char>(hlen >> 8));
  out += d;
  return out;
}

inline NpyArray parse_npy(const uint8_t* p, size_t n, const std::string& what) {
  if (n < 10 || std::memcmp(p, "\x93NUMPY", 6) != 0)
    throw ParseError("not an NPY file: " + what);
  uint8_t major = p[6];
  if (major != 1 && major != 2) throw ParseError("unsupported NPY version in " + what);
  size_t hlen, hoff;
  if (major == 1) {
    hlen = p[8] | (p[9] << 8);
    hoff = 10;
  } else {
    hlen = p[8] | (p[9] << 8) | (size_t(p[10]) << 16) | (size_t(p[11]) << 24);
    hoff = 12;
  }
  if (hoff + hlen > n) throw ParseError("truncated NPY header in " + what);
  std::string header(reinterpret_cast<const char*>(p + hoff), hlen);

  // Only used for scalar values ('descr', 'fortran_order'); 'shape' is
  // handled separately because it contains a parenthesized tuple.
  auto find_value = [&](const std::string& key) -> std::string {
    size_t k = header.find("'" + key + "'");
    if (k == std::string::npos) throw ParseError("NPY header missing " + key + " in " + what);
    size_t colon = header.find(':', k);
    size_t end = header.find_first_of(",}", colon + 1);
    return trim(header.substr(colon + 1, end - colon - 1));
  };

  NpyArray a;
  std::string descr = find_value("descr");
  descr.erase(std::remove(descr.begin(), descr.end(), '\''), descr.end());
  if (descr == "|u1" || descr == "<u1") a.dtype = Dtype::u8;
  else if (descr == "<f4") a.dtype = Dtype::f32;
  else if (descr == "<f8") a.dtype = Dtype::f64;
  else if (descr == "<i4") a.dtype = Dtype::i32;
  else if (descr == "<i8") a.dtype = Dtype::i64;
  else throw ParseError("unsupported NPY dtype '" + descr + "' in " + what);

  std::string order = find_value("fortran_order");
  if (order.find("True") != std::string::npos)
    throw ParseError("fortran-order NPY not supported: " + what);

  size_t sh_open = header.find('(', header.find("'shape'"));
  size_t sh_close = header.find(')', sh_open);
  std::string sh = header.substr(sh_open + 1, sh_close - sh_open - 1);
  std::istringstream ss(sh);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) a.shape.push_back(static_cast<size_t>(std::stoull(tok)));
  }

  size_t payload = a.count() * dtype_size(a.dtype);
  if (hoff + hlen + payload > n) throw ParseError("truncated NPY payload in " + what);
  a.bytes.assign(p + hoff + hlen, p + hoff + hlen + payload);
  return a;
}

}  // namespace detail

template <typename T>
NpyArray NpyArray::from(const std::vector<T>& v, std::vector<size_t> shape) {
  NpyArray a;
  a.dtype = detail::dtype_of<T>::value;
  a.shape = std::move(shape);
  require(a.count() == v.size(), "NpyArray::from: shape does not match element count");
  a.bytes.resize(v.size() * sizeof(T));
  std::memcpy(a.bytes.data(), v.data(), a.bytes.size());
  return a;
}

template <typename T>
std::vector<T> NpyArray::as() const {
  if (dtype != detail::dtype_of<T>::value)
    throw ParseError(std::string("NpyArray::as: dtype mismatch (stored ") +
                     dtype_descr(dtype) + ")");
  std::vector<T> v(count());
  std::memcpy(v.data(), bytes.data(), v.size() * sizeof(T));
  return v;
}

inline std::vector<uint8_t> npy_encode(const NpyArray& a) {
  std::string header = detail::npy_header(a.dtype, a.shape);
  std::vector<uint8_t> out(header.size() + a.bytes.size());
  std::memcpy(out.data(), header.data(), header.size());
  std::memcpy(out.data() + header.size(), a.bytes.data(), a.bytes.size());
  return out;
}

inline void npy_save(const fs::path& path, const NpyArray& a) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  auto buf = npy_encode(a);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("short write: " + path.string());
}

inline NpyArray npy_load(const fs::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open: " + path.string());
  std::vector<uint8_t> buf(static_cast<size_t>(f.tellg()));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  return detail::parse_npy(buf.data(), buf.size(), path.string());
}

// ---------------------------------------------------------------------------
// NPZ container

// Writes members in add() order; close() (or destruction) emits the central
// directory. Member payloads are stored, not deflated.
class NpzWriter {
 public:
  explicit NpzWriter(const fs::path& path) : path_(path), f_(path, std::ios::binary) {
    if (!f_) throw IoError("cannot open for writing: " + path.string());
  }
  ~NpzWriter() {
    try { close(); } catch (...) {}
  }

  void add_array(const std::string& name, const NpyArray& a) {
    add_raw(name + ".npy", npy_encode(a));
  }
  void add_text(const std::string& name, const std::string& text) {
    add_raw(name, std::vector<uint8_t>(text.begin(), text.end()));
  }

  void add_raw(const std::string& name, const std::vector<uint8_t>& data) {
    require(!closed_, "NpzWriter: archive already closed");
    Entry e;
    e.name = name;
    e.crc = static_cast<uint32_t>(::crc32(0, data.data(), static_cast<uInt>(data.size())));
    e.size = static_cast<uint32_t>(data.size());
    e.offset = static_cast<uint32_t>(f_.tellp());
    // local file header
    put32(0x04034b50);
    put16(20);      // version needed
    put16(0);       // flags
    put16(0);       // method: stored
    put16(0); put16(0x21);  // fixed DOS time/date (1980-01-01)
    put32(e.crc);
    put32(e.size);
    put32(e.size);
    put16(static_cast<uint16_t>(name.size()));
    put16(0);
    f_.write(name.data(), static_cast<std::streamsize>(name.size()));
    f_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    entries_.push_back(std::move(e));
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    uint32_t cd_start = static_cast<uint32_t>(f_.tellp());
    for (const Entry& e : entries_) {
      put32(0x02014b50);
      put16(20); put16(20);
      put16(0); put16(0);
      put16(0); put16(0x21);
      put32(e.crc);
      put32(e.size);
      put32(e.size);
      put16(static_cast<uint16_t>(e.name.size()));
      put16(0); put16(0); put16(0); put16(0);
      put32(0);
      put32(e.offset);
      f_.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    }
    uint32_t cd_size = static_cast<uint32_t>(f_.tellp()) - cd_start;
    put32(0x06054b50);
    put16(0); put16(0);
    put16(static_cast<uint16_t>(entries_.size()));
    put16(static_cast<uint16_t>(entries_.size()));
    put32(cd_size);
    put32(cd_start);
    put16(0);
    f_.flush();
    if (!f_) throw IoError("short write: " + path_.string());
  }

 private:
  struct Entry {
    std::string name;
    uint32_t crc = 0, size = 0, offset = 0;
  };
  void put16(uint16_t v) { f_.put(char(v & 0xff)); f_.put(char(v >> 8)); }
  void put32(uint32_t v) { for (int i = 0; i < 4; ++i) f_.put(char((v >> (8 * i)) & 0xff)); }

  fs::path path_;
  std::ofstream f_;
  std::vector<Entry> entries_;
  bool closed_ = false;
};

class NpzReader {
 public:
  explicit NpzReader(const fs::path& path) : path_(path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    buf_.resize(static_cast<size_t>(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    parse_directory();
  }

  bool has(const std::string& name) const { return members_.count(name) > 0; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : members_) out.push_back(k);
    return out;
  }

  // Array members are addressed without the ".npy" suffix, matching numpy.
  NpyArray array(const std::string& name) const {
    auto data = member_bytes(member(name + ".npy", name));
    return detail::parse_npy(data.data(), data.size(), path_.string() + ":" + name);
  }

  std::string text(const std::string& name) const {
    auto data = member_bytes(member(name, name));
    return std::string(data.begin(), data.end());
  }

 private:
  struct Member {
    uint32_t offset = 0, csize = 0, usize = 0;
    uint16_t method = 0;
  };

  const Member& member(const std::string& name, const std::string& shown) const {
    auto it = members_.find(name);
    if (it == members_.end())
      throw ParseError("archive " + path_.string() + " has no member '" + shown + "'");
    return it->second;
  }

  uint16_t rd16(size_t off) const { return buf_[off] | (buf_[off + 1] << 8); }
  uint32_t rd32(size_t off) const {
    return buf_[off] | (buf_[off + 1] << 8) | (uint32_t(buf_[off + 2]) << 16) | (uint32_t(buf_[off + 3]) << 24);
  }

  void parse_directory() {
    if (buf_.size() < 22) throw ParseError("not a zip archive: " + path_.string());
    size_t eocd = std::string::npos;
    for (size_t i = buf_.size() - 22; ; --i) {
      if (rd32(i) == 0x06054b50) { eocd = i; break; }
      if (i == 0 || buf_.size() - i > 22 + 65535) break;
    }
    if (eocd == std::string::npos) throw ParseError("zip central directory not found: " + path_.string());
    uint16_t count = rd16(eocd + 10);
    size_t off = rd32(eocd + 16);
    for (uint16_t k = 0; k < count; ++k) {
      if (off + 46 > buf_.size() || rd32(off) != 0x02014b50)
        throw ParseError("corrupt zip central directory: " + path_.string());
      Member m;
      m.method = rd16(off + 10);
      m.csize = rd32(off + 20);
      m.usize = rd32(off + 24);
      uint16_t nlen = rd16(off + 28), xlen = rd16(off + 30), clen = rd16(off + 32);
      m.offset = rd32(off + 42);
      std::string name(reinterpret_cast<const char*>(&buf_[off + 46]), nlen);
      members_[name] = m;
      off += 46 + nlen + xlen + clen;
    }
  }

  std::vector<uint8_t> member_bytes(const Member& m) const {
    size_t lh = m.offset;
    if (lh + 30 > buf_.size() || rd32(lh) != 0x04034b50)
      throw ParseError("corrupt zip local header: " + path_.string());
    uint16_t nlen = rd16(lh + 26), xlen = rd16(lh + 28);
    size_t data = lh + 30 + nlen + xlen;
    if (data + m.csize > buf_.size()) throw ParseError("truncated zip member: " + path_.string());
    if (m.method == 0) {
      return std::vector<uint8_t>(buf_.begin() + data, buf_.begin() + data + m.csize);
    }
    if (m.method == 8) {
      std::vector<uint8_t> out(m.usize);
      z_stream zs{};
      if (inflateInit2(&zs, -15) != Z_OK) throw ParseError("zlib init failed");
      zs.next_in = const_cast<Bytef*>(buf_.data() + data);
      zs.avail_in = m.csize;
      zs.next_out = out.data();
      zs.avail_out = m.usize;
      int rc = inflate(&zs, Z_FINISH);
      inflateEnd(&zs);
      if (rc != Z_STREAM_END) throw ParseError("zip member inflate failed: " + path_.string());
      return out;
    }
    throw ParseError("unsupported zip compression method: " + path_.string());
  }

  fs::path path_;
  std::vector<uint8_t> buf_;
  std::map<std::string, Member> members_;
};

}  // namespace marsdust
