#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cband/errors.hpp"
#include "cband/frame.hpp"

namespace cband {

namespace detail {

// Colorspace tags accepted as plain 8-bit 4:2:0. The jpeg/mpeg2 variants
// differ only in chroma siting, which does not affect plane layout.
inline bool y4m_colorspace_is_420p8(const std::string& tag) {
  return tag == "420" || tag == "420jpeg" || tag == "420mpeg2";
}

}  // namespace detail

// Streaming YUV4MPEG2 reader. Frames are decoded on demand; the whole file is
// never held in memory.
class Y4mStream final : public FrameStream {
 public:
  explicit Y4mStream(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorKind::IoError, "cannot open " + path);
    parse_header(path);
  }

  std::optional<Frame> next() override {
    std::string line;
    if (!std::getline(in_, line)) return std::nullopt;  // clean end of stream
    if (line.rfind("FRAME", 0) != 0)
      throw Error(ErrorKind::ParseError, "expected FRAME marker, got \"" + line + "\"");
    // Anything after "FRAME" up to the newline is per-frame parameters; none
    // of them change the plane layout for 4:2:0, so they are skipped.
    Frame f;
    f.format = PixelFormat::Yuv420p8;
    f.width = width_;
    f.height = height_;
    f.frame_index = next_index_++;
    if (fps_ > 0) f.timestamp_seconds = double(f.frame_index) / fps_;
    f.allocate();
    for (auto& plane : f.planes) {
      in_.read(reinterpret_cast<char*>(plane.data()),
               static_cast<std::streamsize>(plane.size()));
      if (static_cast<size_t>(in_.gcount()) != plane.size())
        throw Error(ErrorKind::TruncatedStream,
                    "frame " + std::to_string(f.frame_index) + " payload is truncated");
    }
    return f;
  }

  std::optional<double> frame_rate() const override {
    if (fps_ > 0) return fps_;
    return std::nullopt;
  }

  uint32_t width() const { return width_; }
  uint32_t height() const { return height_; }

 private:
  void parse_header(const std::string& path) {
    std::string line;
    if (!std::getline(in_, line))
      throw Error(ErrorKind::ParseError, path + ": empty file, no YUV4MPEG2 header");
    if (line.rfind("YUV4MPEG2", 0) != 0)
      throw Error(ErrorKind::ParseError, path + ": missing YUV4MPEG2 signature");

    std::string colorspace = "420";  // Y4M default when no C tag is present
    size_t pos = 9;                  // past the signature
    while (pos < line.size()) {
      if (line[pos] == ' ') {
        ++pos;
        continue;
      }
      const char tag = line[pos++];
      std::string value;
      while (pos < line.size() && line[pos] != ' ') value.push_back(line[pos++]);
      switch (tag) {
        case 'W': width_ = parse_u32(value, "width"); break;
        case 'H': height_ = parse_u32(value, "height"); break;
        case 'F': {
          const size_t colon = value.find(':');
          if (colon == std::string::npos)
            throw Error(ErrorKind::ParseError, "frame rate tag is not num:den");
          const uint32_t num = parse_u32(value.substr(0, colon), "frame rate numerator");
          const uint32_t den = parse_u32(value.substr(colon + 1), "frame rate denominator");
          if (den == 0) throw Error(ErrorKind::ParseError, "frame rate denominator is 0");
          fps_ = double(num) / double(den);
          break;
        }
        case 'C': colorspace = value; break;
        case 'I': case 'A': case 'X': break;  // interlacing / aspect / comment: ignored
        default:
          throw Error(ErrorKind::ParseError,
                      std::string("unknown header tag '") + tag + "'");
      }
    }
    if (width_ == 0 || height_ == 0)
      throw Error(ErrorKind::ParseError, path + ": header lacks W or H");
    if (!detail::y4m_colorspace_is_420p8(colorspace))
      throw Error(ErrorKind::UnsupportedFormat,
                  "colorspace C" + colorspace + " is not supported (8-bit 4:2:0 only)");
  }

  static uint32_t parse_u32(const std::string& s, const char* what) {
    if (s.empty()) throw Error(ErrorKind::ParseError, std::string(what) + " is empty");
    uint64_t v = 0;
    for (char c : s) {
      if (c < '0' || c > '9')
        throw Error(ErrorKind::ParseError, std::string(what) + " is not a number: " + s);
      v = v * 10 + uint64_t(c - '0');
      if (v > 0xffffffffull)
        throw Error(ErrorKind::ParseError, std::string(what) + " overflows: " + s);
    }
    return static_cast<uint32_t>(v);
  }

  std::ifstream in_;
  uint32_t width_ = 0;
  uint32_t height_ = 0;
  double fps_ = 0;  // 0 means "no rate declared"
  int64_t next_index_ = 0;
};

inline std::unique_ptr<FrameStream> open_y4m(const std::string& path) {
  return std::make_unique<Y4mStream>(path);
}

// Writes frames to a YUV4MPEG2 file. Only 8-bit 4:2:0 frames are accepted;
// used by the synthetic generator and for round-trip tests.
inline void write_y4m(const std::string& path, FrameStream& stream,
                      std::optional<double> fps_override = std::nullopt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot create " + path);

  std::optional<Frame> first = stream.next();
  if (!first) throw Error(ErrorKind::NoFrames, "stream has no frames to write");
  if (first->format != PixelFormat::Yuv420p8)
    throw Error(ErrorKind::UnsupportedFormat, "Y4M writer needs YUV420P8 frames");

  double fps = fps_override.value_or(stream.frame_rate().value_or(0.0));
  out << "YUV4MPEG2 W" << first->width << " H" << first->height;
  if (fps > 0) {
    // Serialize as a rational; common integral rates stay exact, anything
    // else is scaled by 1000 (covers NTSC-style 30000/1001 after parsing).
    const auto num = static_cast<uint64_t>(fps * 1000.0 + 0.5);
    if (num % 1000 == 0)
      out << " F" << (num / 1000) << ":1";
    else
      out << " F" << num << ":1000";
  }
  out << " C420\n";

  std::optional<Frame> frame = std::move(first);
  while (frame) {
    frame->validate();
    if (frame->format != PixelFormat::Yuv420p8)
      throw Error(ErrorKind::UnsupportedFormat, "Y4M writer needs YUV420P8 frames");
    out << "FRAME\n";
    for (const auto& plane : frame->planes)
      out.write(reinterpret_cast<const char*>(plane.data()),
                static_cast<std::streamsize>(plane.size()));
    frame = stream.next();
  }
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + path);
}

}  // namespace cband
