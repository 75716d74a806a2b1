#pragma once

// Synthetic banding stimuli: smooth gray ramps pushed through bit-depth
// reduction and re-expansion, which turns the gradient into staircase
// contours — the classic controlled way to induce banding. A severity
// ladder re-quantizes one underlying gradient at decreasing bit depths;
// optional 4x4 ordered (Bayer) dithering provides negative-control stimuli
// in which the same quantizer no longer produces visible bands.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cband/errors.hpp"
#include "cband/frame.hpp"
#include "cband/image_io.hpp"
#include "cband/y4m.hpp"

namespace cband {

enum class GradientKind : uint8_t { Horizontal = 0, Vertical = 1, Radial = 2 };

inline const char* gradient_kind_name(GradientKind g) {
  switch (g) {
    case GradientKind::Horizontal: return "horizontal";
    case GradientKind::Vertical: return "vertical";
    case GradientKind::Radial: return "radial";
  }
  return "?";
}

inline GradientKind gradient_kind_from_name(const std::string& s) {
  if (s == "horizontal") return GradientKind::Horizontal;
  if (s == "vertical") return GradientKind::Vertical;
  if (s == "radial") return GradientKind::Radial;
  throw Error(ErrorKind::InvalidArgument, "unknown gradient kind '" + s + "'");
}

struct SynthSpec {
  uint32_t width = 0;
  uint32_t height = 0;
  GradientKind gradient = GradientKind::Horizontal;
  uint8_t low = 0;    // ramp start, 8-bit level
  uint8_t high = 255; // ramp end, 8-bit level
  int bits = 8;       // effective bit depth in [2,8]
  bool dither = false;
  uint64_t seed = 0;  // recorded in sidecars; generators are deterministic
};

inline void validate_synth_spec(const SynthSpec& spec) {
  if (spec.width == 0 || spec.height == 0)
    throw Error(ErrorKind::InvalidArgument, "synth: zero frame dimensions");
  if (spec.low >= spec.high)
    throw Error(ErrorKind::InvalidArgument,
                "synth: ramp range needs low < high, got [" +
                    std::to_string(spec.low) + "," + std::to_string(spec.high) +
                    "]");
  if (spec.bits < 2 || spec.bits > 8)
    throw Error(ErrorKind::InvalidArgument,
                "synth: bit depth must lie in [2,8], got " +
                    std::to_string(spec.bits));
}

// Smooth GRAY8 ramp from `low` to `high` along the requested axis; the
// radial variant ramps outward from the frame center to the farthest corner.
inline Frame gradient_frame(const SynthSpec& spec) {
  validate_synth_spec(spec);
  Frame frame;
  frame.format = PixelFormat::Gray8;
  frame.width = spec.width;
  frame.height = spec.height;
  frame.allocate();

  const double span = double(spec.high) - double(spec.low);
  auto level = [&](double t) {
    return uint8_t(std::llround(double(spec.low) + span * t));
  };

  uint8_t* dst = frame.planes[0].data();
  switch (spec.gradient) {
    case GradientKind::Horizontal: {
      const double denom = spec.width > 1 ? double(spec.width - 1) : 1.0;
      for (uint32_t x = 0; x < spec.width; ++x) {
        const uint8_t v = level(double(x) / denom);
        for (uint32_t y = 0; y < spec.height; ++y)
          dst[size_t(y) * spec.width + x] = v;
      }
      break;
    }
    case GradientKind::Vertical: {
      const double denom = spec.height > 1 ? double(spec.height - 1) : 1.0;
      for (uint32_t y = 0; y < spec.height; ++y) {
        const uint8_t v = level(double(y) / denom);
        std::fill_n(dst + size_t(y) * spec.width, spec.width, v);
      }
      break;
    }
    case GradientKind::Radial: {
      const double cx = double(spec.width - 1) / 2.0;
      const double cy = double(spec.height - 1) / 2.0;
      const double dmax = std::max(std::hypot(cx, cy), 1e-12);
      for (uint32_t y = 0; y < spec.height; ++y)
        for (uint32_t x = 0; x < spec.width; ++x) {
          const double d = std::hypot(double(x) - cx, double(y) - cy);
          dst[size_t(y) * spec.width + x] = level(d / dmax);
        }
      break;
    }
  }
  return frame;
}

namespace detail {

// Classic 4x4 Bayer matrix; thresholds (b + 0.5)/16 tile the unit interval.
inline constexpr int kBayer4[4][4] = {
    {0, 8, 2, 10}, {12, 4, 14, 6}, {3, 11, 1, 9}, {15, 7, 13, 5}};

inline uint8_t quantize_level(uint8_t v, int step) {
  const long long q = std::llround(double(v) / double(step)) * step;
  return uint8_t(std::clamp(q, 0ll, 255ll));
}

inline uint8_t quantize_level_dithered(uint8_t v, int step, uint32_t x,
                                       uint32_t y) {
  const double t = (kBayer4[y % 4][x % 4] + 0.5) / 16.0;
  const long long q =
      (long long)(std::floor(double(v) / double(step) + t)) * step;
  return uint8_t(std::clamp(q, 0ll, 255ll));
}

}  // namespace detail

// Bit-depth reduction followed by re-expansion to 8 bits:
// v -> round(v / 2^(8-bits)) * 2^(8-bits), clamped to [0,255]. With `dither`
// a 4x4 Bayer threshold is folded into the rounding decision, which keeps
// local averages close to the original ramp and breaks up the step contours.
inline Frame quantize_bitdepth(const Frame& frame, int bits,
                               bool dither = false) {
  if (bits < 2 || bits > 8)
    throw Error(ErrorKind::InvalidArgument,
                "quantize_bitdepth: bit depth must lie in [2,8], got " +
                    std::to_string(bits));
  if (frame.format != PixelFormat::Gray8 && frame.format != PixelFormat::Rgb8)
    throw Error(ErrorKind::UnsupportedFormat,
                "quantize_bitdepth: needs GRAY8 or RGB8 input");
  frame.validate();

  const int step = 1 << (8 - bits);
  Frame out = frame;
  for (auto& plane : out.planes) {
    for (uint32_t y = 0; y < out.height; ++y)
      for (uint32_t x = 0; x < out.width; ++x) {
        uint8_t& v = plane[size_t(y) * out.width + x];
        v = dither ? detail::quantize_level_dithered(v, step, x, y)
                   : detail::quantize_level(v, step);
      }
  }
  return out;
}

// One frame per bit depth over a shared underlying gradient, most subtle
// severity first (the list must be strictly decreasing, e.g. {8,6,5,4,3}).
inline std::vector<Frame> severity_ladder(const SynthSpec& spec,
                                          const std::vector<int>& bits_list) {
  if (bits_list.empty())
    throw Error(ErrorKind::EmptyLadder, "severity_ladder: empty bit-depth list");
  for (size_t i = 1; i < bits_list.size(); ++i)
    if (bits_list[i] >= bits_list[i - 1])
      throw Error(ErrorKind::InvalidArgument,
                  "severity_ladder: bit depths must be strictly decreasing");

  const Frame base = gradient_frame(spec);
  std::vector<Frame> ladder;
  ladder.reserve(bits_list.size());
  for (size_t i = 0; i < bits_list.size(); ++i) {
    Frame f = quantize_bitdepth(base, bits_list[i], spec.dither);
    f.frame_index = int64_t(i);
    ladder.push_back(std::move(f));
  }
  return ladder;
}

// GRAY8 -> YUV420P8 with neutral chroma, for Y4M emission.
inline Frame gray_to_yuv420(const Frame& gray) {
  if (gray.format != PixelFormat::Gray8)
    throw Error(ErrorKind::UnsupportedFormat, "gray_to_yuv420: needs GRAY8");
  gray.validate();
  Frame out;
  out.format = PixelFormat::Yuv420p8;
  out.width = gray.width;
  out.height = gray.height;
  out.frame_index = gray.frame_index;
  out.timestamp_seconds = gray.timestamp_seconds;
  out.allocate();
  out.planes[0] = gray.planes[0];
  std::fill(out.planes[1].begin(), out.planes[1].end(), uint8_t(128));
  std::fill(out.planes[2].begin(), out.planes[2].end(), uint8_t(128));
  return out;
}

// --- stimulus-set emission ---------------------------------------------------------

// A synthesis job: the gradient spec plus the severity ladder and the video
// packaging parameters used when emitting files.
struct SynthJob {
  SynthSpec spec;
  std::vector<int> bits_ladder = {8, 7, 6, 5, 4, 3};
  uint32_t frames_per_severity = 3;  // static repeats in each emitted Y4M
  double fps = 30.0;
};

inline nlohmann::json synth_job_json(const SynthJob& job) {
  return nlohmann::json{
      {"width", job.spec.width},
      {"height", job.spec.height},
      {"gradient", gradient_kind_name(job.spec.gradient)},
      {"range", {job.spec.low, job.spec.high}},
      {"dither", job.spec.dither},
      {"seed", job.spec.seed},
      {"bits_ladder", job.bits_ladder},
      {"frames_per_severity", job.frames_per_severity},
      {"fps", job.fps},
  };
}

inline SynthJob synth_job_from_json(const nlohmann::json& j) {
  SynthJob job;
  try {
    job.spec.width = j.at("width").get<uint32_t>();
    job.spec.height = j.at("height").get<uint32_t>();
    job.spec.gradient =
        gradient_kind_from_name(j.at("gradient").get<std::string>());
    const auto range = j.at("range");
    if (!range.is_array() || range.size() != 2)
      throw Error(ErrorKind::ParseError, "synth job: 'range' must be [low, high]");
    job.spec.low = range[0].get<uint8_t>();
    job.spec.high = range[1].get<uint8_t>();
    if (j.contains("dither")) job.spec.dither = j.at("dither").get<bool>();
    if (j.contains("seed")) job.spec.seed = j.at("seed").get<uint64_t>();
    if (j.contains("bits_ladder"))
      job.bits_ladder = j.at("bits_ladder").get<std::vector<int>>();
    if (j.contains("frames_per_severity"))
      job.frames_per_severity = j.at("frames_per_severity").get<uint32_t>();
    if (j.contains("fps")) job.fps = j.at("fps").get<double>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::ParseError,
                std::string("synth job: malformed JSON: ") + e.what());
  }
  if (!job.bits_ladder.empty()) job.spec.bits = job.bits_ladder.front();
  return job;
}

// Writes one PNG and one static Y4M per severity plus a JSON sidecar
// describing the set; returns the sidecar document.
inline nlohmann::json write_stimulus_set(const SynthJob& job,
                                         const std::string& out_dir) {
  if (job.frames_per_severity == 0)
    throw Error(ErrorKind::InvalidArgument,
                "write_stimulus_set: frames_per_severity must be positive");
  const std::vector<Frame> ladder = severity_ladder(job.spec, job.bits_ladder);

  std::filesystem::create_directories(out_dir);
  nlohmann::json severities = nlohmann::json::array();
  for (size_t i = 0; i < ladder.size(); ++i) {
    const int bits = job.bits_ladder[i];
    const std::string stem = "ramp_b" + std::to_string(bits);
    const std::string png_name = stem + ".png";
    const std::string y4m_name = stem + ".y4m";
    write_png((std::filesystem::path(out_dir) / png_name).string(), ladder[i]);

    std::vector<Frame> video;
    for (uint32_t f = 0; f < job.frames_per_severity; ++f) {
      Frame yuv = gray_to_yuv420(ladder[i]);
      yuv.frame_index = int64_t(f);
      video.push_back(std::move(yuv));
    }
    MemoryFrameStream stream(std::move(video), job.fps);
    write_y4m((std::filesystem::path(out_dir) / y4m_name).string(), stream,
              job.fps);
    severities.push_back({{"bits", bits},
                          {"png", png_name},
                          {"y4m", y4m_name},
                          {"frames", job.frames_per_severity}});
  }

  nlohmann::json sidecar{{"job", synth_job_json(job)},
                         {"severities", severities}};
  std::ofstream out(std::filesystem::path(out_dir) / "stimulus_set.json",
                    std::ios::trunc);
  if (!out)
    throw Error(ErrorKind::IoError,
                "write_stimulus_set: cannot write sidecar in " + out_dir);
  out << sidecar.dump(2) << "\n";
  return sidecar;
}

}  // namespace cband
