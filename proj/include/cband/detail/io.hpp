#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cband/errors.hpp"

namespace cband::detail {

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open file: " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> data(static_cast<size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(data.data()), size);
  if (!in) throw Error(ErrorKind::IoError, "cannot read file: " + path);
  return data;
}

inline void write_file_bytes(const std::string& path, const void* data,
                             size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open file for write: " + path);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw Error(ErrorKind::IoError, "cannot write file: " + path);
}

inline void write_file_bytes(const std::string& path,
                             const std::vector<uint8_t>& data) {
  write_file_bytes(path, data.data(), data.size());
}

inline std::string read_file_text(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

// Little-endian binary writer/reader for the cache and model file formats.
// All formats in this library are explicitly little-endian on disk.
class ByteWriter {
 public:
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(uint8_t v) { raw(&v, 1); }
  void u16(uint16_t v) { le(v); }
  void u32(uint32_t v) { le(v); }
  void u64(uint64_t v) { le(v); }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    le(bits);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    le(bits);
  }
  void str16(const std::string& s) {
    u16(static_cast<uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<uint8_t>& bytes() const { return buf_; }
  void save(const std::string& path) const {
    write_file_bytes(path, buf_.data(), buf_.size());
  }

 private:
  template <typename T>
  void le(T v) {
    for (size_t i = 0; i < sizeof(T); ++i)
      buf_.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
  }
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size, ErrorKind underflow_kind)
      : p_(data), end_(data + size), kind_(underflow_kind) {}
  explicit ByteReader(const std::vector<uint8_t>& data,
                      ErrorKind underflow_kind = ErrorKind::ParseError)
      : ByteReader(data.data(), data.size(), underflow_kind) {}

  void raw(void* out, size_t n) {
    if (static_cast<size_t>(end_ - p_) < n)
      throw Error(kind_, "unexpected end of data");
    std::memcpy(out, p_, n);
    p_ += n;
  }
  uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
  uint16_t u16() { return le<uint16_t>(); }
  uint32_t u32() { return le<uint32_t>(); }
  uint64_t u64() { return le<uint64_t>(); }
  float f32() {
    uint32_t bits = le<uint32_t>();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    uint64_t bits = le<uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str16() {
    const uint16_t n = u16();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  size_t remaining() const { return static_cast<size_t>(end_ - p_); }

 private:
  template <typename T>
  T le() {
    uint8_t b[sizeof(T)];
    raw(b, sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
    return v;
  }
  const uint8_t* p_;
  const uint8_t* end_;
  ErrorKind kind_;
};

}  // namespace cband::detail
