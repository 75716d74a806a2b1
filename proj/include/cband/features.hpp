#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "cband/activation.hpp"
#include "cband/detail/io.hpp"
#include "cband/errors.hpp"
#include "cband/ggd.hpp"
#include "cband/mscn.hpp"

namespace cband {

// What is measured per channel after the MSCN transform. GGD is the primary
// mode; MeanStd is the ablation reading; AlphaOnly/SigmaOnly keep a single
// GGD parameter. Values are stable: they appear in cache and model files.
enum class FeatureMode : uint8_t { GGD = 0, MeanStd = 1, AlphaOnly = 2, SigmaOnly = 3 };

inline const char* feature_mode_name(FeatureMode m) {
  switch (m) {
    case FeatureMode::GGD: return "ggd";
    case FeatureMode::MeanStd: return "mean-std";
    case FeatureMode::AlphaOnly: return "alpha-only";
    case FeatureMode::SigmaOnly: return "sigma-only";
  }
  return "?";
}

inline FeatureMode feature_mode_from_name(const std::string& s) {
  if (s == "ggd") return FeatureMode::GGD;
  if (s == "mean-std") return FeatureMode::MeanStd;
  if (s == "alpha-only") return FeatureMode::AlphaOnly;
  if (s == "sigma-only") return FeatureMode::SigmaOnly;
  throw Error(ErrorKind::InvalidArgument, "unknown feature mode: " + s);
}

// Number of features per channel for a mode.
inline size_t feature_mode_width(FeatureMode m) {
  return (m == FeatureMode::GGD || m == FeatureMode::MeanStd) ? 2 : 1;
}

// Per-frame feature vector. In two-parameter modes the layout interleaves
// per channel: (a_1, s_1, a_2, s_2, ...).
struct NSSFeatureVector {
  std::vector<double> values;
  FeatureMode mode = FeatureMode::GGD;
  int64_t frame_index = 0;
  // Channels whose MSCN coefficients were identically zero (constant input);
  // these get (alpha = grid max, clamped, sigma = 0) instead of a fit error.
  std::vector<uint32_t> degenerate_channels;
};

// Computes the feature vector for one frame's activation maps: per channel,
// MSCN then either a GGD fit or the mean/std of the coefficients.
inline NSSFeatureVector frame_features(const ActivationMaps& maps, FeatureMode mode,
                                       const GaussianWindow& window, double c1 = 1.0) {
  if (maps.channels == 0 || maps.height == 0 || maps.width == 0 ||
      maps.data.size() != size_t(maps.channels) * maps.height * maps.width)
    throw Error(ErrorKind::ShapeError, "activation maps have inconsistent dimensions");

  NSSFeatureVector out;
  out.mode = mode;
  out.frame_index = maps.frame_index;
  out.values.reserve(size_t(maps.channels) * feature_mode_width(mode));

  const size_t hw = size_t(maps.height) * maps.width;
  std::vector<double> plane(hw);
  for (uint32_t c = 0; c < maps.channels; ++c) {
    const float* src = maps.channel(c);
    for (size_t i = 0; i < hw; ++i) plane[i] = double(src[i]);
    const MSCNMap m = mscn(plane, maps.height, maps.width, window, c1);

    if (mode == FeatureMode::MeanStd) {
      double mean = 0;
      for (double v : m.coefficients) mean += v;
      mean /= double(hw);
      double var = 0;
      for (double v : m.coefficients) var += (v - mean) * (v - mean);
      var /= double(hw);  // population form, matching the MSCN sigma convention
      out.values.push_back(mean);
      out.values.push_back(std::sqrt(var));
      continue;
    }

    GGDParams g;
    bool degenerate = false;
    try {
      g = fit_ggd(m.coefficients);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateInput) throw;
      g = {ggd_alpha_max(), 0.0, true};
      degenerate = true;
    }
    if (degenerate) out.degenerate_channels.push_back(c);

    switch (mode) {
      case FeatureMode::GGD:
        out.values.push_back(g.alpha);
        out.values.push_back(g.sigma);
        break;
      case FeatureMode::AlphaOnly:
        out.values.push_back(g.alpha);
        break;
      case FeatureMode::SigmaOnly:
        out.values.push_back(g.sigma);
        break;
      case FeatureMode::MeanStd:
        break;  // handled above
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature cache file: binary, little-endian.
//   header: magic "CBND", version u16, C u32, mode u8, frame_count u32
//   records: frame_count x { frame_index u32, dim x f32 }, dim = C * mode width
// ---------------------------------------------------------------------------

inline constexpr uint16_t kFeatureCacheVersion = 1;

struct FeatureCache {
  uint32_t channels = 0;
  FeatureMode mode = FeatureMode::GGD;
  std::vector<NSSFeatureVector> frames;
};

inline void write_feature_cache(const std::string& path, const FeatureCache& cache) {
  const size_t dim = size_t(cache.channels) * feature_mode_width(cache.mode);
  detail::ByteWriter w;
  w.raw("CBND", 4);
  w.u16(kFeatureCacheVersion);
  w.u32(cache.channels);
  w.u8(uint8_t(cache.mode));
  w.u32(uint32_t(cache.frames.size()));
  for (const auto& f : cache.frames) {
    if (f.values.size() != dim)
      throw Error(ErrorKind::DimensionMismatch,
                  "feature vector length does not match the cache header");
    w.u32(uint32_t(f.frame_index));
    for (double v : f.values) w.f32(float(v));
  }
  w.save(path);
}

inline FeatureCache read_feature_cache(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, ErrorKind::ParseError);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "CBND")
    throw Error(ErrorKind::ParseError, path + ": not a feature cache file");
  const uint16_t version = r.u16();
  if (version != kFeatureCacheVersion)
    throw Error(ErrorKind::ParseError,
                path + ": unsupported cache version " + std::to_string(version));
  FeatureCache cache;
  cache.channels = r.u32();
  const uint8_t mode_raw = r.u8();
  if (mode_raw > uint8_t(FeatureMode::SigmaOnly))
    throw Error(ErrorKind::ParseError, path + ": unknown feature mode byte");
  cache.mode = FeatureMode(mode_raw);
  const uint32_t count = r.u32();
  const size_t dim = size_t(cache.channels) * feature_mode_width(cache.mode);
  cache.frames.resize(count);
  for (auto& f : cache.frames) {
    f.mode = cache.mode;
    f.frame_index = r.u32();
    f.values.resize(dim);
    for (double& v : f.values) v = double(r.f32());
  }
  return cache;
}

// Plain CSV for eyeballing: one row per frame, frame_index then features.
inline void write_feature_csv(const std::string& path, const FeatureCache& cache) {
  std::ostringstream out;
  const size_t width = feature_mode_width(cache.mode);
  out << "frame_index";
  for (uint32_t c = 0; c < cache.channels; ++c) {
    if (width == 2) {
      const char* a = cache.mode == FeatureMode::GGD ? "alpha" : "mean";
      const char* b = cache.mode == FeatureMode::GGD ? "sigma" : "std";
      out << ',' << a << c << ',' << b << c;
    } else {
      out << ','
          << (cache.mode == FeatureMode::AlphaOnly ? "alpha" : "sigma") << c;
    }
  }
  out << '\n';
  out.precision(9);
  for (const auto& f : cache.frames) {
    out << f.frame_index;
    for (double v : f.values) out << ',' << v;
    out << '\n';
  }
  const std::string s = out.str();
  detail::write_file_bytes(path, s.data(), s.size());
}

}  // namespace cband
