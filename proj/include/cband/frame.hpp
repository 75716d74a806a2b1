#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "cband/errors.hpp"

namespace cband {

// Pixel layouts the ingest layer produces. Everything downstream of ingest
// consumes planar 8-bit data; higher bit depths are out of scope.
enum class PixelFormat : uint8_t {
  Gray8 = 0,    // single plane, W*H
  Rgb8 = 1,     // three planes R, G, B, each W*H
  Yuv420p8 = 2  // Y plane W*H, then U and V each ceil(W/2)*ceil(H/2)
};

// A single decoded frame with planar storage. Plane order follows the
// PixelFormat documentation above.
struct Frame {
  PixelFormat format = PixelFormat::Gray8;
  uint32_t width = 0;
  uint32_t height = 0;
  int64_t frame_index = 0;                  // display-order ordinal, starts at 0
  std::optional<double> timestamp_seconds;  // set when the container has a rate
  std::vector<std::vector<uint8_t>> planes;

  static uint32_t chroma_dim(uint32_t d) { return (d + 1) / 2; }

  size_t plane_count() const {
    switch (format) {
      case PixelFormat::Gray8: return 1;
      case PixelFormat::Rgb8: return 3;
      case PixelFormat::Yuv420p8: return 3;
    }
    return 0;
  }

  // Expected byte size of plane `i` for the current format and size.
  size_t plane_size(size_t i) const {
    if (format == PixelFormat::Yuv420p8 && i > 0)
      return size_t(chroma_dim(width)) * chroma_dim(height);
    return size_t(width) * height;
  }

  // Allocates planes to the correct sizes, zero-filled.
  void allocate() {
    planes.assign(plane_count(), {});
    for (size_t i = 0; i < planes.size(); ++i) planes[i].assign(plane_size(i), 0);
  }

  void validate() const {
    if (width == 0 || height == 0)
      throw Error(ErrorKind::DimensionMismatch, "frame has zero width or height");
    if (planes.size() != plane_count())
      throw Error(ErrorKind::DimensionMismatch, "frame has wrong plane count");
    for (size_t i = 0; i < planes.size(); ++i)
      if (planes[i].size() != plane_size(i))
        throw Error(ErrorKind::DimensionMismatch, "frame plane " + std::to_string(i) +
                                                      " has wrong size");
  }
};

// Sequential access to a sequence of frames. Implementations decode lazily
// where possible; next() returns nullopt at end of stream.
class FrameStream {
 public:
  virtual ~FrameStream() = default;

  // Decodes and returns the next frame, or nullopt when exhausted.
  virtual std::optional<Frame> next() = 0;

  // Frames per second if the container declares one (image sequences do not).
  virtual std::optional<double> frame_rate() const = 0;
};

// In-memory stream over pre-built frames; used in tests and by the synthetic
// stimulus generator.
class MemoryFrameStream final : public FrameStream {
 public:
  explicit MemoryFrameStream(std::vector<Frame> frames,
                             std::optional<double> fps = std::nullopt)
      : frames_(std::move(frames)), fps_(fps) {}

  std::optional<Frame> next() override {
    if (pos_ >= frames_.size()) return std::nullopt;
    return frames_[pos_++];
  }

  std::optional<double> frame_rate() const override { return fps_; }

 private:
  std::vector<Frame> frames_;
  std::optional<double> fps_;
  size_t pos_ = 0;
};

}  // namespace cband
