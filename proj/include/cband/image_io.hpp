#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cband/detail/io.hpp"
#include "cband/errors.hpp"
#include "cband/frame.hpp"

namespace cband {

// ---------------------------------------------------------------------------
// PNG — minimal decoder/encoder for the subset the toolkit produces and
// consumes: 8-bit greyscale or RGB, non-interlaced. The decoder handles all
// five scanline filters; the encoder always writes filter 0.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr uint8_t kPngSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

inline uint32_t read_u32_be(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) |
         uint32_t(p[3]);
}

inline void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

inline uint8_t paeth_predictor(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return uint8_t(a);
  if (pb <= pc) return uint8_t(b);
  return uint8_t(c);
}

// Undoes one scanline's filter in place. `prev` is the reconstructed previous
// row (all zeros for the first row).
inline void png_unfilter_row(uint8_t filter, uint8_t* row, const uint8_t* prev,
                             size_t row_bytes, size_t bpp) {
  switch (filter) {
    case 0:
      break;
    case 1:  // Sub
      for (size_t i = bpp; i < row_bytes; ++i) row[i] += row[i - bpp];
      break;
    case 2:  // Up
      for (size_t i = 0; i < row_bytes; ++i) row[i] += prev[i];
      break;
    case 3:  // Average
      for (size_t i = 0; i < row_bytes; ++i) {
        const int left = i >= bpp ? row[i - bpp] : 0;
        row[i] += uint8_t((left + prev[i]) / 2);
      }
      break;
    case 4:  // Paeth
      for (size_t i = 0; i < row_bytes; ++i) {
        const int left = i >= bpp ? row[i - bpp] : 0;
        const int up_left = i >= bpp ? prev[i - bpp] : 0;
        row[i] += paeth_predictor(left, prev[i], up_left);
      }
      break;
    default:
      throw Error(ErrorKind::DecodeError,
                  "PNG scanline uses unknown filter " + std::to_string(filter));
  }
}

inline std::vector<uint8_t> zlib_inflate_exact(const std::vector<uint8_t>& in,
                                               size_t expected_size) {
  std::vector<uint8_t> out(expected_size);
  uLongf dest_len = expected_size;
  const int rc = uncompress(out.data(), &dest_len, in.data(), uLong(in.size()));
  if (rc != Z_OK || dest_len != expected_size)
    throw Error(ErrorKind::DecodeError, "PNG pixel data fails to decompress");
  return out;
}

inline std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& in) {
  uLongf bound = compressBound(uLong(in.size()));
  std::vector<uint8_t> out(bound);
  const int rc = compress2(out.data(), &bound, in.data(), uLong(in.size()),
                           Z_DEFAULT_COMPRESSION);
  if (rc != Z_OK) throw Error(ErrorKind::IoError, "zlib compression failed");
  out.resize(bound);
  return out;
}

}  // namespace detail

// Decodes a PNG byte buffer into a GRAY8 or RGB8 frame.
inline Frame decode_png(const std::vector<uint8_t>& bytes, const std::string& name) {
  using namespace detail;
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSignature, 8) != 0)
    throw Error(ErrorKind::DecodeError, name + ": not a PNG file");

  uint32_t width = 0, height = 0;
  int color_type = -1;
  std::vector<uint8_t> idat;
  bool saw_ihdr = false, saw_iend = false;

  size_t pos = 8;
  while (pos + 8 <= bytes.size() && !saw_iend) {
    const uint32_t len = read_u32_be(bytes.data() + pos);
    if (pos + 12 + size_t(len) > bytes.size())
      throw Error(ErrorKind::DecodeError, name + ": truncated PNG chunk");
    const std::string type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
    const uint8_t* data = bytes.data() + pos + 8;

    if (type == "IHDR") {
      if (len != 13) throw Error(ErrorKind::DecodeError, name + ": bad IHDR length");
      width = read_u32_be(data);
      height = read_u32_be(data + 4);
      const int bit_depth = data[8];
      color_type = data[9];
      const int interlace = data[12];
      if (bit_depth != 8)
        throw Error(ErrorKind::DecodeError, name + ": only 8-bit PNG is supported");
      if (color_type != 0 && color_type != 2)
        throw Error(ErrorKind::DecodeError,
                    name + ": only greyscale and RGB PNG are supported");
      if (interlace != 0)
        throw Error(ErrorKind::DecodeError, name + ": interlaced PNG is not supported");
      saw_ihdr = true;
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      saw_iend = true;
    }
    // Ancillary chunks and CRC values are skipped; checksum validation is not
    // a goal of this reader.
    pos += 12 + size_t(len);
  }
  if (!saw_ihdr || !saw_iend || width == 0 || height == 0)
    throw Error(ErrorKind::DecodeError, name + ": incomplete PNG structure");

  const size_t channels = color_type == 2 ? 3 : 1;
  const size_t row_bytes = size_t(width) * channels;
  const size_t raw_size = (row_bytes + 1) * height;
  std::vector<uint8_t> raw = zlib_inflate_exact(idat, raw_size);

  Frame f;
  f.format = channels == 3 ? PixelFormat::Rgb8 : PixelFormat::Gray8;
  f.width = width;
  f.height = height;
  f.allocate();

  std::vector<uint8_t> prev(row_bytes, 0);
  for (uint32_t y = 0; y < height; ++y) {
    uint8_t* row = raw.data() + size_t(y) * (row_bytes + 1);
    png_unfilter_row(row[0], row + 1, prev.data(), row_bytes, channels);
    const uint8_t* px = row + 1;
    if (channels == 1) {
      std::memcpy(f.planes[0].data() + size_t(y) * width, px, width);
    } else {
      for (uint32_t x = 0; x < width; ++x)
        for (size_t c = 0; c < 3; ++c)
          f.planes[c][size_t(y) * width + x] = px[x * 3 + c];
    }
    std::memcpy(prev.data(), px, row_bytes);
  }
  return f;
}

// Encodes a GRAY8 or RGB8 frame as a PNG byte buffer (filter 0 scanlines).
inline std::vector<uint8_t> encode_png(const Frame& frame) {
  using namespace detail;
  frame.validate();
  if (frame.format == PixelFormat::Yuv420p8)
    throw Error(ErrorKind::UnsupportedFormat, "PNG encoder takes GRAY8 or RGB8 frames");
  const size_t channels = frame.format == PixelFormat::Rgb8 ? 3 : 1;
  const size_t row_bytes = size_t(frame.width) * channels;

  std::vector<uint8_t> raw;
  raw.reserve((row_bytes + 1) * frame.height);
  for (uint32_t y = 0; y < frame.height; ++y) {
    raw.push_back(0);  // filter: None
    if (channels == 1) {
      const uint8_t* src = frame.planes[0].data() + size_t(y) * frame.width;
      raw.insert(raw.end(), src, src + frame.width);
    } else {
      for (uint32_t x = 0; x < frame.width; ++x)
        for (size_t c = 0; c < 3; ++c)
          raw.push_back(frame.planes[c][size_t(y) * frame.width + x]);
    }
  }
  const std::vector<uint8_t> compressed = zlib_deflate(raw);

  std::vector<uint8_t> out(kPngSignature, kPngSignature + 8);
  auto emit_chunk = [&out](const char* type, const std::vector<uint8_t>& data) {
    put_u32_be(out, uint32_t(data.size()));
    const size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc =
        crc32(0, out.data() + type_at, uInt(4 + data.size()));
    put_u32_be(out, uint32_t(crc));
  };

  std::vector<uint8_t> ihdr;
  put_u32_be(ihdr, frame.width);
  put_u32_be(ihdr, frame.height);
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(frame.format == PixelFormat::Rgb8 ? 2 : 0);  // color type
  ihdr.push_back(0);                                  // compression
  ihdr.push_back(0);                                  // filter method
  ihdr.push_back(0);                                  // interlace
  emit_chunk("IHDR", ihdr);
  emit_chunk("IDAT", compressed);
  emit_chunk("IEND", {});
  return out;
}

// ---------------------------------------------------------------------------
// BMP — uncompressed 24-bit BITMAPINFOHEADER files only.
// ---------------------------------------------------------------------------

inline Frame decode_bmp(const std::vector<uint8_t>& bytes, const std::string& name) {
  auto fail = [&name](const std::string& why) -> Error {
    return Error(ErrorKind::DecodeError, name + ": " + why);
  };
  if (bytes.size() < 54 || bytes[0] != 'B' || bytes[1] != 'M')
    throw fail("not a BMP file");
  auto u32 = [&bytes](size_t at) {
    return uint32_t(bytes[at]) | (uint32_t(bytes[at + 1]) << 8) |
           (uint32_t(bytes[at + 2]) << 16) | (uint32_t(bytes[at + 3]) << 24);
  };
  auto u16 = [&bytes](size_t at) {
    return uint32_t(bytes[at]) | (uint32_t(bytes[at + 1]) << 8);
  };
  const uint32_t data_offset = u32(10);
  const uint32_t dib_size = u32(14);
  if (dib_size < 40) throw fail("DIB header too small");
  const auto width = int32_t(u32(18));
  const auto height_raw = int32_t(u32(22));
  const uint32_t bpp = u16(28);
  const uint32_t compression = u32(30);
  if (width <= 0 || height_raw == 0) throw fail("bad dimensions");
  if (bpp != 24 || compression != 0) throw fail("only uncompressed 24-bit BMP is supported");

  const bool bottom_up = height_raw > 0;
  const uint32_t height = uint32_t(bottom_up ? height_raw : -height_raw);
  const size_t stride = (size_t(width) * 3 + 3) & ~size_t(3);
  if (size_t(data_offset) + stride * height > bytes.size())
    throw fail("pixel data is truncated");

  Frame f;
  f.format = PixelFormat::Rgb8;
  f.width = uint32_t(width);
  f.height = height;
  f.allocate();
  for (uint32_t y = 0; y < height; ++y) {
    const uint32_t src_y = bottom_up ? (height - 1 - y) : y;
    const uint8_t* row = bytes.data() + data_offset + size_t(src_y) * stride;
    for (uint32_t x = 0; x < uint32_t(width); ++x) {
      f.planes[2][size_t(y) * f.width + x] = row[x * 3 + 0];  // B
      f.planes[1][size_t(y) * f.width + x] = row[x * 3 + 1];  // G
      f.planes[0][size_t(y) * f.width + x] = row[x * 3 + 2];  // R
    }
  }
  return f;
}

inline std::vector<uint8_t> encode_bmp(const Frame& frame) {
  frame.validate();
  if (frame.format == PixelFormat::Yuv420p8)
    throw Error(ErrorKind::UnsupportedFormat, "BMP encoder takes GRAY8 or RGB8 frames");
  const size_t stride = (size_t(frame.width) * 3 + 3) & ~size_t(3);
  const size_t pixel_bytes = stride * frame.height;

  detail::ByteWriter w;
  w.u8('B'); w.u8('M');
  w.u32(uint32_t(54 + pixel_bytes));  // file size
  w.u32(0);                           // reserved
  w.u32(54);                          // pixel data offset
  w.u32(40);                          // BITMAPINFOHEADER
  w.u32(frame.width);
  w.u32(frame.height);                // positive: bottom-up
  w.u16(1);                           // planes
  w.u16(24);                          // bits per pixel
  w.u32(0);                           // BI_RGB
  w.u32(uint32_t(pixel_bytes));
  w.u32(2835); w.u32(2835);           // 72 dpi
  w.u32(0); w.u32(0);                 // palette fields

  const bool grey = frame.format == PixelFormat::Gray8;
  std::vector<uint8_t> row(stride, 0);
  for (uint32_t y = 0; y < frame.height; ++y) {
    const uint32_t src_y = frame.height - 1 - y;
    for (uint32_t x = 0; x < frame.width; ++x) {
      const size_t at = size_t(src_y) * frame.width + x;
      row[x * 3 + 0] = frame.planes[grey ? 0 : 2][at];  // B
      row[x * 3 + 1] = frame.planes[grey ? 0 : 1][at];  // G
      row[x * 3 + 2] = frame.planes[0][at];             // R
    }
    w.raw(row.data(), row.size());
  }
  return w.bytes();
}

// Decodes an image file by extension (.png, .bmp).
inline Frame decode_image_file(const std::string& path) {
  const std::vector<uint8_t> bytes = detail::read_file_bytes(path);
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  if (ext == ".png") return decode_png(bytes, path);
  if (ext == ".bmp") return decode_bmp(bytes, path);
  throw Error(ErrorKind::UnsupportedFormat, path + ": unsupported image extension");
}

inline void write_png(const std::string& path, const Frame& frame) {
  detail::write_file_bytes(path, encode_png(frame));
}

inline void write_bmp(const std::string& path, const Frame& frame) {
  detail::write_file_bytes(path, encode_bmp(frame));
}

// ---------------------------------------------------------------------------
// Image sequences
// ---------------------------------------------------------------------------

namespace detail {

// Shell-style glob over a filename: '*' matches any run, '?' one character.
inline bool glob_match(const std::string& pattern, const std::string& text) {
  size_t p = 0, t = 0;
  size_t star_p = std::string::npos, star_t = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star_p = p++;
      star_t = t;
    } else if (star_p != std::string::npos) {
      p = star_p + 1;
      t = ++star_t;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

}  // namespace detail

// Lazily decodes a directory of images (lexicographic filename order). All
// frames must share dimensions and pixel format.
class ImageSequenceStream final : public FrameStream {
 public:
  ImageSequenceStream(const std::string& dir, const std::string& pattern) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
      throw Error(ErrorKind::IoError, dir + " is not a directory");
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (detail::glob_match(pattern, name)) paths_.push_back(entry.path().string());
    }
    std::sort(paths_.begin(), paths_.end());
    if (paths_.empty())
      throw Error(ErrorKind::NoFrames,
                  "no files in " + dir + " match pattern \"" + pattern + "\"");
  }

  std::optional<Frame> next() override {
    if (pos_ >= paths_.size()) return std::nullopt;
    Frame f = decode_image_file(paths_[pos_]);
    f.frame_index = int64_t(pos_);
    if (pos_ == 0) {
      width_ = f.width;
      height_ = f.height;
      format_ = f.format;
    } else if (f.width != width_ || f.height != height_) {
      throw Error(ErrorKind::DimensionMismatch,
                  paths_[pos_] + ": image dimensions differ from the first frame");
    } else if (f.format != format_) {
      throw Error(ErrorKind::DimensionMismatch,
                  paths_[pos_] + ": pixel format differs from the first frame");
    }
    ++pos_;
    return f;
  }

  // Image sequences carry no timing information.
  std::optional<double> frame_rate() const override { return std::nullopt; }

  size_t file_count() const { return paths_.size(); }

 private:
  std::vector<std::string> paths_;
  size_t pos_ = 0;
  uint32_t width_ = 0, height_ = 0;
  PixelFormat format_ = PixelFormat::Gray8;
};

inline std::unique_ptr<FrameStream> open_image_sequence(const std::string& dir,
                                                        const std::string& pattern) {
  return std::make_unique<ImageSequenceStream>(dir, pattern);
}

}  // namespace cband
