#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "cband/errors.hpp"
#include "cband/frame.hpp"

namespace cband {

// Per-channel affine normalization applied after scaling samples to [0,1].
// Defaults are the ImageNet statistics the supported backbones were trained
// with.
struct NormalizationSpec {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
};

// A frame converted to the 3-channel float tensor a backbone consumes,
// channel-major (CHW) layout.
struct BackboneInput {
  uint32_t height = 0;
  uint32_t width = 0;
  int64_t frame_index = 0;
  NormalizationSpec normalization;
  std::vector<float> data;  // size 3*height*width, layout [c][y][x]

  float at(size_t c, size_t y, size_t x) const {
    return data[(c * height + y) * width + x];
  }
};

namespace detail {

// BT.709 full-range YUV -> RGB. Coefficients derive from Kr=0.2126,
// Kb=0.0722:
//   R = Y + 1.5748 (V-128)
//   G = Y - 0.18732 (U-128) - 0.46812 (V-128)
//   B = Y + 1.8556 (U-128)
// Results are clamped to [0,255] and kept in floating point (no requantize).
inline std::array<double, 3> bt709_to_rgb(uint8_t y8, uint8_t u8, uint8_t v8) {
  const double y = y8;
  const double u = double(u8) - 128.0;
  const double v = double(v8) - 128.0;
  auto clamp = [](double x) { return x < 0.0 ? 0.0 : (x > 255.0 ? 255.0 : x); };
  return {clamp(y + 1.5748 * v), clamp(y - 0.18732 * u - 0.46812 * v),
          clamp(y + 1.8556 * u)};
}

}  // namespace detail

// Converts a decoded frame to normalized backbone input. YUV 4:2:0 chroma is
// upsampled nearest-neighbour; GRAY8 is replicated across the 3 channels
// before per-channel standardization.
inline BackboneInput to_backbone_input(const Frame& frame,
                                       const NormalizationSpec& norm = {}) {
  frame.validate();
  BackboneInput out;
  out.height = frame.height;
  out.width = frame.width;
  out.frame_index = frame.frame_index;
  out.normalization = norm;
  const size_t hw = size_t(frame.height) * frame.width;
  out.data.resize(3 * hw);

  auto store = [&](size_t c, size_t at, double sample_0_255) {
    const double scaled = sample_0_255 / 255.0;
    out.data[c * hw + at] = float((scaled - norm.mean[c]) / norm.std[c]);
  };

  switch (frame.format) {
    case PixelFormat::Gray8:
      for (size_t i = 0; i < hw; ++i) {
        const double g = frame.planes[0][i];
        for (size_t c = 0; c < 3; ++c) store(c, i, g);
      }
      break;
    case PixelFormat::Rgb8:
      for (size_t c = 0; c < 3; ++c)
        for (size_t i = 0; i < hw; ++i) store(c, i, frame.planes[c][i]);
      break;
    case PixelFormat::Yuv420p8: {
      const uint32_t cw = Frame::chroma_dim(frame.width);
      for (uint32_t y = 0; y < frame.height; ++y) {
        for (uint32_t x = 0; x < frame.width; ++x) {
          const size_t at = size_t(y) * frame.width + x;
          const size_t cat = size_t(y / 2) * cw + x / 2;
          const auto rgb = detail::bt709_to_rgb(
              frame.planes[0][at], frame.planes[1][cat], frame.planes[2][cat]);
          for (size_t c = 0; c < 3; ++c) store(c, at, rgb[c]);
        }
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temporal sampling
// ---------------------------------------------------------------------------

struct SamplingPolicy {
  enum class Mode : uint8_t { EveryFrame, EveryNFrames, OncePerSecond };
  Mode mode = Mode::EveryFrame;
  uint32_t n = 1;  // used by EveryNFrames

  static SamplingPolicy every_frame() { return {Mode::EveryFrame, 1}; }
  static SamplingPolicy every_n(uint32_t n) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "sampling stride must be >= 1");
    return {Mode::EveryNFrames, n};
  }
  static SamplingPolicy once_per_second() { return {Mode::OncePerSecond, 1}; }
};

// Drains a stream, keeping the frames the policy selects. Frame 0 is always
// kept; selected indices are strictly increasing.
inline std::vector<Frame> sample_frames(FrameStream& stream,
                                        const SamplingPolicy& policy) {
  double fps = 0;
  if (policy.mode == SamplingPolicy::Mode::OncePerSecond) {
    const auto declared = stream.frame_rate();
    if (!declared || *declared <= 0)
      throw Error(ErrorKind::MissingFrameRate,
                  "once-per-second sampling needs a stream with a frame rate");
    fps = *declared;
  }

  std::vector<Frame> kept;
  int64_t index = 0;
  int64_t k = 0;             // ordinal of the next once-per-second target
  int64_t next_target = 0;   // round(k * fps), kept strictly increasing
  for (std::optional<Frame> f = stream.next(); f; f = stream.next(), ++index) {
    bool take = false;
    switch (policy.mode) {
      case SamplingPolicy::Mode::EveryFrame:
        take = true;
        break;
      case SamplingPolicy::Mode::EveryNFrames:
        take = index % int64_t(policy.n) == 0;
        break;
      case SamplingPolicy::Mode::OncePerSecond:
        if (index == next_target) {
          take = true;
          // Advance past any targets that would repeat this index (fps < 1).
          while (next_target <= index) next_target = int64_t(std::llround(double(++k) * fps));
        }
        break;
    }
    if (take) {
      f->frame_index = index;
      kept.push_back(std::move(*f));
    }
  }
  return kept;
}

}  // namespace cband
