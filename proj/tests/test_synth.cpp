#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cband/backbone.hpp"
#include "cband/errors.hpp"
#include "cband/features.hpp"
#include "cband/frame.hpp"
#include "cband/image_io.hpp"
#include "cband/mscn.hpp"
#include "cband/preprocess.hpp"
#include "cband/rng.hpp"
#include "cband/synth.hpp"
#include "cband/y4m.hpp"

using cband::Error;
using cband::ErrorKind;
using cband::Frame;
using cband::GradientKind;
using cband::SynthJob;
using cband::SynthSpec;

namespace {

SynthSpec make_spec(uint32_t w, uint32_t h, GradientKind g, uint8_t lo,
                    uint8_t hi) {
  SynthSpec spec;
  spec.width = w;
  spec.height = h;
  spec.gradient = g;
  spec.low = lo;
  spec.high = hi;
  return spec;
}

std::set<uint8_t> unique_levels(const Frame& f) {
  std::set<uint8_t> s;
  for (const auto& plane : f.planes) s.insert(plane.begin(), plane.end());
  return s;
}

// Scalar oracle for the quantizer: apply the documented formula to every
// level the ramp contains and count distinct outputs.
std::set<int> quantized_levels_oracle(int lo, int hi, int bits) {
  const int step = 1 << (8 - bits);
  std::set<int> s;
  for (int v = lo; v <= hi; ++v) {
    const long long q = std::llround(double(v) / double(step)) * step;
    s.insert(int(std::clamp(q, 0ll, 255ll)));
  }
  return s;
}

// --- gradient_frame ---------------------------------------------------------------

TEST(GradientFrame, HorizontalFullRampIsColumnIndex) {
  const Frame f = gradient_frame(
      make_spec(256, 64, GradientKind::Horizontal, 0, 255));
  ASSERT_EQ(f.format, cband::PixelFormat::Gray8);
  for (uint32_t y = 0; y < f.height; ++y)
    for (uint32_t x = 0; x < f.width; ++x)
      ASSERT_EQ(f.planes[0][y * f.width + x], uint8_t(x))
          << "at (" << y << "," << x << ")";
}

TEST(GradientFrame, VerticalIsTransposeOfHorizontal) {
  const Frame v = gradient_frame(
      make_spec(40, 70, GradientKind::Vertical, 16, 240));
  const Frame h = gradient_frame(
      make_spec(70, 40, GradientKind::Horizontal, 16, 240));
  for (uint32_t y = 0; y < v.height; ++y)
    for (uint32_t x = 0; x < v.width; ++x)
      ASSERT_EQ(v.planes[0][y * v.width + x], h.planes[0][x * h.width + y]);
}

TEST(GradientFrame, RadialRampsFromCenterToCorners) {
  const Frame f = gradient_frame(
      make_spec(65, 65, GradientKind::Radial, 10, 250));
  const auto at = [&](uint32_t y, uint32_t x) {
    return f.planes[0][y * f.width + x];
  };
  EXPECT_EQ(at(32, 32), 10);   // exact center of odd-sized frame
  EXPECT_EQ(at(0, 0), 250);    // all four corners are at max distance
  EXPECT_EQ(at(0, 64), 250);
  EXPECT_EQ(at(64, 0), 250);
  EXPECT_EQ(at(64, 64), 250);
  for (uint32_t x = 33; x < 65; ++x)  // non-decreasing away from center
    EXPECT_GE(at(32, x), at(32, x - 1));
}

TEST(GradientFrame, InvalidSpecsAreRejected) {
  auto expect_invalid = [](SynthSpec spec) {
    try {
      gradient_frame(spec);
      FAIL() << "expected InvalidArgument";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    }
  };
  expect_invalid(make_spec(0, 10, GradientKind::Horizontal, 0, 255));
  expect_invalid(make_spec(10, 0, GradientKind::Horizontal, 0, 255));
  expect_invalid(make_spec(10, 10, GradientKind::Horizontal, 100, 100));
  expect_invalid(make_spec(10, 10, GradientKind::Horizontal, 200, 100));
  SynthSpec bad_bits = make_spec(10, 10, GradientKind::Horizontal, 0, 255);
  bad_bits.bits = 1;
  expect_invalid(bad_bits);
  bad_bits.bits = 9;
  expect_invalid(bad_bits);
}

// --- quantize_bitdepth ------------------------------------------------------------

TEST(Quantize, EightBitsIsIdentity) {
  cband::Rng rng(5);
  Frame f;
  f.format = cband::PixelFormat::Gray8;
  f.width = 31;
  f.height = 17;
  f.allocate();
  for (auto& v : f.planes[0]) v = uint8_t(rng.uniform_index(256));
  const Frame q = quantize_bitdepth(f, 8);
  EXPECT_EQ(q.planes[0], f.planes[0]);
}

TEST(Quantize, TwoBitsOnFullRampGivesFourLevelsPlusClamp) {
  const Frame ramp = gradient_frame(
      make_spec(256, 8, GradientKind::Horizontal, 0, 255));
  const Frame q = quantize_bitdepth(ramp, 2);
  const std::set<uint8_t> got = unique_levels(q);
  // Four code levels {0,64,128,192}; the top of the ramp rounds to 256 and
  // clamps, adding 255 as a fifth output value.
  EXPECT_EQ(got, (std::set<uint8_t>{0, 64, 128, 192, 255}));
}

TEST(Quantize, FourBitsHasStepWidthSixteenOnUnitRamp) {
  const Frame ramp = gradient_frame(
      make_spec(256, 4, GradientKind::Horizontal, 0, 255));
  const Frame q = quantize_bitdepth(ramp, 4);
  // Collect run lengths of constant value along one row.
  std::vector<size_t> runs;
  size_t run = 1;
  for (uint32_t x = 1; x < q.width; ++x) {
    if (q.planes[0][x] == q.planes[0][x - 1]) {
      ++run;
    } else {
      runs.push_back(run);
      run = 1;
    }
  }
  runs.push_back(run);
  ASSERT_GE(runs.size(), 3u);
  for (size_t i = 1; i + 1 < runs.size(); ++i)
    EXPECT_EQ(runs[i], 16u) << "interior step " << i;
  // Boundary runs are half-steps: values within step/2 of the ends round
  // to the terminal codes.
  EXPECT_EQ(runs.front(), 8u);
  EXPECT_EQ(runs.back(), 8u);
}

TEST(Quantize, IdempotentAtFixedBits) {
  cband::Rng rng(6);
  Frame f;
  f.format = cband::PixelFormat::Gray8;
  f.width = 64;
  f.height = 32;
  f.allocate();
  for (auto& v : f.planes[0]) v = uint8_t(rng.uniform_index(256));
  for (int bits = 2; bits <= 8; ++bits) {
    const Frame once = quantize_bitdepth(f, bits);
    const Frame twice = quantize_bitdepth(once, bits);
    EXPECT_EQ(twice.planes[0], once.planes[0]) << "bits " << bits;
  }
}

TEST(Quantize, UniqueLevelCountsMatchScalarOracle) {
  struct Case {
    uint8_t lo, hi;
    int bits;
  };
  const std::vector<Case> cases = {{0, 255, 2}, {0, 255, 3}, {0, 192, 2},
                                   {0, 224, 3}, {100, 110, 2}, {30, 200, 2},
                                   {0, 255, 5}, {40, 210, 6}};
  for (const auto& c : cases) {
    const Frame ramp = gradient_frame(
        make_spec(256, 4, GradientKind::Horizontal, c.lo, c.hi));
    const Frame q = quantize_bitdepth(ramp, c.bits);
    EXPECT_EQ(unique_levels(q).size(),
              quantized_levels_oracle(c.lo, c.hi, c.bits).size())
        << "range [" << int(c.lo) << "," << int(c.hi) << "] bits " << c.bits;
  }
  // On step-aligned, clamp-free ranges the count also equals the closed
  // form min(2^bits, span/step + 1).
  const Frame aligned = quantize_bitdepth(
      gradient_frame(make_spec(256, 4, GradientKind::Horizontal, 0, 192)), 2);
  EXPECT_EQ(unique_levels(aligned).size(), size_t(std::min(4, 192 / 64 + 1)));
  const Frame aligned3 = quantize_bitdepth(
      gradient_frame(make_spec(256, 4, GradientKind::Horizontal, 0, 224)), 3);
  EXPECT_EQ(unique_levels(aligned3).size(), size_t(std::min(8, 224 / 32 + 1)));
}

TEST(Quantize, RejectsBadInputs) {
  const Frame ramp = gradient_frame(
      make_spec(16, 16, GradientKind::Horizontal, 0, 255));
  try {
    quantize_bitdepth(ramp, 1);
    FAIL() << "expected InvalidArgument";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
  Frame yuv;
  yuv.format = cband::PixelFormat::Yuv420p8;
  yuv.width = 16;
  yuv.height = 16;
  yuv.allocate();
  try {
    quantize_bitdepth(yuv, 4);
    FAIL() << "expected UnsupportedFormat";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedFormat);
  }
}

// --- severity_ladder ----------------------------------------------------------------

TEST(SeverityLadder, UniqueLevelCountsAreNonIncreasing) {
  const SynthSpec spec = make_spec(256, 32, GradientKind::Horizontal, 0, 255);
  const auto ladder = cband::severity_ladder(spec, {8, 6, 5, 4, 3});
  ASSERT_EQ(ladder.size(), 5u);
  size_t prev = unique_levels(ladder[0]).size();
  EXPECT_EQ(prev, 256u);
  for (size_t i = 1; i < ladder.size(); ++i) {
    const size_t cur = unique_levels(ladder[i]).size();
    EXPECT_LE(cur, prev) << "severity step " << i;
    prev = cur;
  }
}

TEST(SeverityLadder, SharesTheUnderlyingGradient) {
  const SynthSpec spec = make_spec(120, 90, GradientKind::Radial, 20, 235);
  const auto ladder = cband::severity_ladder(spec, {7, 4});
  const Frame base = gradient_frame(spec);
  EXPECT_EQ(ladder[0].planes[0], quantize_bitdepth(base, 7).planes[0]);
  EXPECT_EQ(ladder[1].planes[0], quantize_bitdepth(base, 4).planes[0]);
  EXPECT_EQ(ladder[0].frame_index, 0);
  EXPECT_EQ(ladder[1].frame_index, 1);
}

TEST(SeverityLadder, ValidatesBitsList) {
  const SynthSpec spec = make_spec(32, 32, GradientKind::Horizontal, 0, 255);
  EXPECT_EQ(cband::severity_ladder(spec, {5}).size(), 1u);
  try {
    cband::severity_ladder(spec, {});
    FAIL() << "expected EmptyLadder";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyLadder);
  }
  for (const std::vector<int>& bad : {std::vector<int>{5, 5},
                                      std::vector<int>{4, 6},
                                      std::vector<int>{8, 6, 6, 3}}) {
    try {
      cband::severity_ladder(spec, bad);
      FAIL() << "expected InvalidArgument";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    }
  }
}

// --- dithering ----------------------------------------------------------------------

TEST(Dither, BreaksStepContoursAndTracksLocalMeans) {
  const Frame ramp = gradient_frame(
      make_spec(256, 64, GradientKind::Horizontal, 0, 255));
  const Frame hard = quantize_bitdepth(ramp, 3, false);
  const Frame soft = quantize_bitdepth(ramp, 3, true);

  // Dithering multiplies the number of horizontal transitions per row.
  auto transitions = [](const Frame& f, uint32_t y) {
    size_t n = 0;
    for (uint32_t x = 1; x < f.width; ++x)
      n += f.planes[0][y * f.width + x] != f.planes[0][y * f.width + x - 1];
    return n;
  };
  EXPECT_GE(transitions(soft, 1), 4 * transitions(hard, 1));

  // 4x4 block means stay close to the original ramp under dithering, while
  // hard quantization is off by up to half a step inside each band.
  auto worst_block_error = [&](const Frame& q) {
    double worst = 0.0;
    for (uint32_t by = 0; by + 4 <= q.height; by += 4)
      for (uint32_t bx = 0; bx + 4 <= q.width; bx += 4) {
        double dq = 0.0, dr = 0.0;
        for (uint32_t y = by; y < by + 4; ++y)
          for (uint32_t x = bx; x < bx + 4; ++x) {
            dq += q.planes[0][y * q.width + x];
            dr += ramp.planes[0][y * ramp.width + x];
          }
        worst = std::max(worst, std::abs(dq - dr) / 16.0);
      }
    return worst;
  };
  EXPECT_LT(worst_block_error(soft), 4.0);
  EXPECT_GT(worst_block_error(hard), 12.0);  // step 32 => band centers off ~16

  // Same quantizer grid: dithered output uses (a subset of) the same levels.
  const std::set<uint8_t> lv = unique_levels(soft);
  for (uint8_t v : lv) EXPECT_TRUE(v % 32 == 0 || v == 255) << int(v);
}

// --- emission -----------------------------------------------------------------------

TEST(StimulusSet, WritesDecodableFilesAndSidecar) {
  SynthJob job;
  job.spec = make_spec(64, 48, GradientKind::Horizontal, 0, 255);
  job.bits_ladder = {8, 5, 3};
  job.frames_per_severity = 2;
  job.fps = 25.0;

  const auto dir =
      std::filesystem::temp_directory_path() / "cband_synth_set";
  std::filesystem::remove_all(dir);
  const nlohmann::json sidecar = cband::write_stimulus_set(job, dir.string());

  ASSERT_EQ(sidecar.at("severities").size(), 3u);
  const auto ladder = cband::severity_ladder(job.spec, job.bits_ladder);
  for (size_t i = 0; i < 3; ++i) {
    const auto& entry = sidecar.at("severities")[i];
    const auto png_path = dir / entry.at("png").get<std::string>();
    const auto y4m_path = dir / entry.at("y4m").get<std::string>();
    ASSERT_TRUE(std::filesystem::exists(png_path));
    ASSERT_TRUE(std::filesystem::exists(y4m_path));

    const Frame decoded = cband::decode_image_file(png_path.string());
    EXPECT_EQ(decoded.planes[0], ladder[i].planes[0]) << "png severity " << i;

    auto stream = cband::open_y4m(y4m_path.string());
    size_t frames = 0;
    while (auto f = stream->next()) {
      EXPECT_EQ(f->format, cband::PixelFormat::Yuv420p8);
      EXPECT_EQ(f->planes[0], ladder[i].planes[0]);
      ++frames;
    }
    EXPECT_EQ(frames, 2u);
  }

  // Sidecar on disk parses back to the same document.
  std::ifstream in(dir / "stimulus_set.json");
  const nlohmann::json reread = nlohmann::json::parse(in);
  EXPECT_EQ(reread, sidecar);
  std::filesystem::remove_all(dir);
}

TEST(SynthJobJson, RoundTripsAndValidates) {
  SynthJob job;
  job.spec = make_spec(100, 80, GradientKind::Radial, 10, 240);
  job.spec.dither = true;
  job.spec.seed = 99;
  job.bits_ladder = {8, 6, 4};
  job.frames_per_severity = 5;
  job.fps = 24.0;

  const SynthJob back = cband::synth_job_from_json(synth_job_json(job));
  EXPECT_EQ(back.spec.width, job.spec.width);
  EXPECT_EQ(back.spec.height, job.spec.height);
  EXPECT_EQ(back.spec.gradient, job.spec.gradient);
  EXPECT_EQ(back.spec.low, job.spec.low);
  EXPECT_EQ(back.spec.high, job.spec.high);
  EXPECT_EQ(back.spec.dither, job.spec.dither);
  EXPECT_EQ(back.spec.seed, job.spec.seed);
  EXPECT_EQ(back.bits_ladder, job.bits_ladder);
  EXPECT_EQ(back.frames_per_severity, job.frames_per_severity);
  EXPECT_DOUBLE_EQ(back.fps, job.fps);

  try {
    cband::synth_job_from_json(nlohmann::json{{"width", 10}});
    FAIL() << "expected ParseError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  }
  nlohmann::json bad = synth_job_json(job);
  bad["gradient"] = "diagonal";
  try {
    cband::synth_job_from_json(bad);
    FAIL() << "expected InvalidArgument";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}

// --- pipeline sensitivity smoke -----------------------------------------------------

// One cell of the banding-sensitivity matrix as a smoke test: channel-mean
// GGD shape over a small backbone stage should move monotonically with
// severity for most ladder steps (the full grid lives in the acceptance
// suite).
TEST(PipelineSensitivity, ChannelMeanAlphaTracksSeverity) {
  const char* dir = std::getenv("CBAND_MODEL_DIR");
  ASSERT_NE(dir, nullptr) << "CBAND_MODEL_DIR not set";
  const std::string base = std::string(dir) + "/vgg16-stage1";
  const auto handle = cband::load_backbone(base + ".onnx", base + ".json");

  SynthSpec spec = make_spec(48, 48, GradientKind::Horizontal, 0, 255);
  const auto ladder = cband::severity_ladder(spec, {8, 6, 5, 4, 3});
  const cband::GaussianWindow window = cband::build_window();

  std::vector<double> mean_alpha;
  for (const Frame& frame : ladder) {
    const cband::BackboneInput input = cband::to_backbone_input(frame);
    const cband::ActivationMaps maps =
        cband::extract_activation_maps(handle, input);
    const cband::NSSFeatureVector fv =
        cband::frame_features(maps, cband::FeatureMode::GGD, window);
    double sum = 0.0;
    for (size_t i = 0; i < fv.values.size(); i += 2) sum += fv.values[i];
    mean_alpha.push_back(sum / double(fv.values.size() / 2));
  }

  int increasing = 0, decreasing = 0;
  for (size_t i = 1; i < mean_alpha.size(); ++i) {
    increasing += mean_alpha[i] > mean_alpha[i - 1];
    decreasing += mean_alpha[i] < mean_alpha[i - 1];
  }
  EXPECT_GE(std::max(increasing, decreasing), 3)
      << "alpha trajectory: " << ::testing::PrintToString(mean_alpha);
}

}  // namespace
