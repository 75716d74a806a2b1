#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cband/backbone.hpp"
#include "cband/detail/io.hpp"
#include "cband/detail/sha256.hpp"
#include "cband/errors.hpp"
#include "cband/onnx.hpp"
#include "cband/preprocess.hpp"
#include "cband/rng.hpp"

namespace fs = std::filesystem;
using cband::BackboneHandle;
using cband::Error;
using cband::ErrorKind;

namespace {

std::string model_dir() {
  const char* dir = std::getenv("CBAND_MODEL_DIR");
  EXPECT_NE(dir, nullptr) << "CBAND_MODEL_DIR must point at the export directory";
  return dir ? dir : ".";
}

std::string model_path(const std::string& name) {
  return model_dir() + "/" + name + ".onnx";
}

std::string manifest_path(const std::string& name) {
  return model_dir() + "/" + name + ".json";
}

// Mirrors the export tool's probe generator bit for bit: splitmix64 draws
// mapped through (z >> 11) * 2^-53 into [-1, 1).
std::vector<float> probe_values(uint64_t seed, size_t count) {
  std::vector<float> out(count);
  uint64_t state = seed;
  for (size_t i = 0; i < count; ++i) {
    const double u =
        static_cast<double>(cband::splitmix64(state) >> 11) * 0x1.0p-53;
    out[i] = static_cast<float>(2.0 * u - 1.0);
  }
  return out;
}

cband::onnx::Tensor probe_tensor(uint64_t seed, int64_t c, int64_t h, int64_t w) {
  cband::onnx::Tensor t;
  t.dims = {c, h, w};
  t.data = probe_values(seed, size_t(c * h * w));
  return t;
}

// |a - b| <= atol + rtol·|b|, elementwise.
void expect_close(double a, double b, double atol, double rtol,
                  const std::string& what) {
  EXPECT_LE(std::abs(a - b), atol + rtol * std::abs(b)) << what << ": " << a
                                                        << " vs " << b;
}

// Runs a manifest's recorded probe through the engine and checks the
// reference numerics produced by the export-side runtime.
void check_probe_against_manifest(const std::string& name, double atol,
                                  double rtol) {
  BackboneHandle handle = cband::load_backbone(model_path(name), manifest_path(name));
  nlohmann::json manifest =
      nlohmann::json::parse(cband::detail::read_file_text(manifest_path(name)));
  const auto& probe = manifest.at("probe");

  const int64_t c_in = handle.engine->input_channels() > 0
                           ? handle.engine->input_channels()
                           : 3;
  cband::onnx::Tensor in =
      probe_tensor(probe.at("seed").get<uint64_t>(), c_in,
                   probe.at("input_height").get<int64_t>(),
                   probe.at("input_width").get<int64_t>());
  cband::onnx::Tensor out = handle.engine->run(in);

  const auto shape = probe.at("output_shape").get<std::vector<int64_t>>();
  ASSERT_EQ(out.dims, shape) << name;

  double sum = 0.0, sq = 0.0;
  for (float v : out.data) {
    sum += v;
    sq += double(v) * v;
  }
  const double mean = sum / double(out.data.size());
  const double stdev = std::sqrt(std::max(0.0, sq / double(out.data.size()) - mean * mean));
  expect_close(mean, probe.at("mean").get<double>(), atol, rtol, name + " mean");
  expect_close(stdev, probe.at("std").get<double>(), atol, rtol, name + " std");

  const auto idx = probe.at("sample_indices").get<std::vector<size_t>>();
  const auto ref = probe.at("sample_values").get<std::vector<double>>();
  ASSERT_EQ(idx.size(), ref.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    ASSERT_LT(idx[i], out.data.size());
    expect_close(out.data[idx[i]], ref[i], atol, rtol,
                 name + " sample " + std::to_string(i));
  }
}

class BackboneTest : public ::testing::Test {
 protected:
  void SetUp() override {
    tmp_ = fs::temp_directory_path() /
           ("cband_backbone_" +
            std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(tmp_);
  }
  void TearDown() override { fs::remove_all(tmp_); }

  std::string tmp(const std::string& leaf) const { return (tmp_ / leaf).string(); }

  fs::path tmp_;
};

// --- executor numerics -------------------------------------------------------

TEST(OnnxEngine, TinyConvComputesHandCheckedValues) {
  // Kernel: 2·x(y,x) + x(y+1,x+1), bias 0.5, stride 1, zero padding 1.
  auto blob = cband::detail::read_file_bytes(model_path("tiny-conv"));
  cband::onnx::Engine engine(cband::onnx::parse_model(blob));

  cband::onnx::Tensor in;
  in.dims = {1, 3, 4};
  in.data = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  cband::onnx::Tensor out = engine.run(in);
  ASSERT_EQ(out.dims, (std::vector<int64_t>{1, 3, 4}));
  auto at = [&](int64_t y, int64_t x) { return in.data[size_t(y * 4 + x)]; };
  for (int64_t y = 0; y < 3; ++y) {
    for (int64_t x = 0; x < 4; ++x) {
      const float below_right = (y + 1 < 3 && x + 1 < 4) ? at(y + 1, x + 1) : 0.0f;
      const float expect = 2.0f * at(y, x) + below_right + 0.5f;
      EXPECT_FLOAT_EQ(out.data[size_t(y * 4 + x)], expect) << y << "," << x;
    }
  }
}

TEST(OnnxEngine, TinyBlockMatchesReferenceRuntime) {
  // conv(s2,p1) -> batch-norm with non-trivial statistics -> relu -> maxpool.
  check_probe_against_manifest("tiny-block", 1e-5, 1e-5);
}

TEST(OnnxEngine, ResidualGraphWithScrambledNodeOrderExecutes) {
  // The file stores nodes in reverse dependency order; scheduling must sort.
  check_probe_against_manifest("tiny-residual", 1e-5, 1e-5);
}

TEST(OnnxEngine, UnsupportedOpIsRejectedAtLoad) {
  auto blob = cband::detail::read_file_bytes(model_path("tiny-unsupported"));
  try {
    cband::onnx::Engine engine(cband::onnx::parse_model(blob));
    FAIL() << "expected ModelLoadError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ModelLoadError);
    EXPECT_NE(std::string(e.what()).find("Sigmoid"), std::string::npos);
  }
}

TEST(OnnxEngine, GarbageBytesAreRejected) {
  std::vector<uint8_t> junk(257);
  for (size_t i = 0; i < junk.size(); ++i) junk[i] = uint8_t(i * 37 + 11);
  EXPECT_THROW(
      { cband::onnx::parse_model(junk.data(), junk.size()); }, Error);
}

// --- reference numerics for every stock export -------------------------------

TEST(StockBackbones, Vgg16ProbesMatchReferenceRuntime) {
  for (int stage = 1; stage <= 5; ++stage)
    check_probe_against_manifest("vgg16-stage" + std::to_string(stage), 2e-3, 2e-3);
}

TEST(StockBackbones, Resnet50ProbesMatchReferenceRuntime) {
  for (int stage = 1; stage <= 4; ++stage)
    check_probe_against_manifest("resnet50-stage" + std::to_string(stage), 2e-3, 2e-3);
}

TEST(StockBackbones, AblationStagesLoadWithDeclaredChannels) {
  const std::vector<std::pair<std::string, int64_t>> expected = {
      {"vgg16-stage1", 64},    {"vgg16-stage2", 128},   {"vgg16-stage3", 256},
      {"vgg16-stage4", 512},   {"vgg16-stage5", 512},   {"resnet50-stage1", 256},
      {"resnet50-stage2", 512}, {"resnet50-stage3", 1024},
      {"resnet50-stage4", 2048}};
  for (const auto& [name, channels] : expected) {
    BackboneHandle handle = cband::load_backbone(model_path(name), manifest_path(name));
    EXPECT_EQ(handle.expected_channels, channels) << name;
    EXPECT_EQ(handle.name, name);
  }
}

// --- load_backbone error contracts -------------------------------------------

TEST_F(BackboneTest, MissingManifestThrowsManifestMissing) {
  try {
    cband::load_backbone(model_path("vgg16-stage2"), tmp("nope.json"));
    FAIL() << "expected ManifestMissing";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ManifestMissing);
  }
}

TEST_F(BackboneTest, MalformedManifestJsonThrowsManifestMismatch) {
  std::ofstream(tmp("bad.json")) << "{ not json";
  try {
    cband::load_backbone(model_path("vgg16-stage2"), tmp("bad.json"));
    FAIL() << "expected ManifestMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ManifestMismatch);
  }
}

TEST_F(BackboneTest, HashMismatchThrowsManifestMismatch) {
  nlohmann::json manifest = nlohmann::json::parse(
      cband::detail::read_file_text(manifest_path("tiny-block")));
  manifest["sha256"] = std::string(64, '0');
  std::ofstream(tmp("m.json")) << manifest.dump();
  try {
    cband::load_backbone(model_path("tiny-block"), tmp("m.json"));
    FAIL() << "expected ManifestMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ManifestMismatch);
    EXPECT_NE(std::string(e.what()).find("hash"), std::string::npos);
  }
}

TEST_F(BackboneTest, ChannelCountMismatchThrowsManifestMismatch) {
  // Correct hash, wrong declared channel count: the probe inference catches it.
  nlohmann::json manifest = nlohmann::json::parse(
      cband::detail::read_file_text(manifest_path("tiny-block")));
  manifest["expected_channels"] = 999;
  std::ofstream(tmp("m.json")) << manifest.dump();
  try {
    cband::load_backbone(model_path("tiny-block"), tmp("m.json"));
    FAIL() << "expected ManifestMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ManifestMismatch);
    EXPECT_NE(std::string(e.what()).find("999"), std::string::npos);
  }
}

TEST_F(BackboneTest, TruncatedModelFileThrowsModelLoadError) {
  auto blob = cband::detail::read_file_bytes(model_path("tiny-block"));
  blob.resize(blob.size() / 2);
  cband::detail::write_file_bytes(tmp("trunc.onnx"), blob);
  nlohmann::json manifest = nlohmann::json::parse(
      cband::detail::read_file_text(manifest_path("tiny-block")));
  manifest["sha256"] = cband::detail::sha256_hex(blob);  // hash passes, parse fails
  std::ofstream(tmp("m.json")) << manifest.dump();
  try {
    cband::load_backbone(tmp("trunc.onnx"), tmp("m.json"));
    FAIL() << "expected ModelLoadError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ModelLoadError);
  }
}

// --- extract_activation_maps --------------------------------------------------

cband::BackboneInput plain_input(int64_t h, int64_t w, uint64_t seed) {
  cband::BackboneInput input;
  input.height = h;
  input.width = w;
  input.frame_index = 0;
  input.data = probe_values(seed, size_t(3 * h * w));
  return input;
}

TEST(ExtractActivationMaps, RejectsInputsBelowMinimum) {
  BackboneHandle handle =
      cband::load_backbone(model_path("vgg16-stage2"), manifest_path("vgg16-stage2"));
  try {
    cband::extract_activation_maps(handle, plain_input(31, 64, 1));
    FAIL() << "expected InputTooSmall";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InputTooSmall);
  }
  try {
    cband::extract_activation_maps(handle, plain_input(64, 31, 1));
    FAIL() << "expected InputTooSmall";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InputTooSmall);
  }
  // 32×32 is the smallest accepted extent.
  cband::ActivationMaps maps = cband::extract_activation_maps(handle, plain_input(32, 32, 1));
  EXPECT_EQ(maps.channels, 128);
  EXPECT_EQ(maps.height, 8);
  EXPECT_EQ(maps.width, 8);
}

TEST(ExtractActivationMaps, ShapeLawHoldsOverRandomSizes) {
  // vgg16 pools floor; resnet50's strided convolutions round up.
  BackboneHandle vgg =
      cband::load_backbone(model_path("vgg16-stage2"), manifest_path("vgg16-stage2"));
  BackboneHandle rn =
      cband::load_backbone(model_path("resnet50-stage2"), manifest_path("resnet50-stage2"));
  cband::Rng rng(20240818);
  for (int trial = 0; trial < 6; ++trial) {
    const int64_t h = 33 + int64_t(rng.uniform_index(64));
    const int64_t w = 33 + int64_t(rng.uniform_index(64));
    cband::ActivationMaps mv = cband::extract_activation_maps(vgg, plain_input(h, w, 7));
    EXPECT_EQ(mv.height, h / 4) << h;
    EXPECT_EQ(mv.width, w / 4) << w;
    cband::ActivationMaps mr = cband::extract_activation_maps(rn, plain_input(h, w, 7));
    EXPECT_EQ(mr.height, (h + 7) / 8) << h;
    EXPECT_EQ(mr.width, (w + 7) / 8) << w;
  }
}

TEST(ExtractActivationMaps, HdFrameShapeThroughStockStage2) {
  // 1920×1080 through both stock stage-2 backbones; the graph is the
  // authority for rounding (vgg16 floors, resnet50 ceils — both exact here).
  BackboneHandle rn =
      cband::load_backbone(model_path("resnet50-stage2"), manifest_path("resnet50-stage2"));
  cband::ActivationMaps maps = cband::extract_activation_maps(rn, plain_input(1080, 1920, 3));
  EXPECT_EQ(maps.channels, 512);
  EXPECT_EQ(maps.height, 135);
  EXPECT_EQ(maps.width, 240);
}

TEST(ExtractActivationMaps, ZeroInputGivesDeterministicBiasResponse) {
  BackboneHandle handle =
      cband::load_backbone(model_path("vgg16-stage1"), manifest_path("vgg16-stage1"));
  cband::BackboneInput zeros;
  zeros.height = 40;
  zeros.width = 40;
  zeros.frame_index = 5;
  zeros.data.assign(size_t(3 * 40 * 40), 0.0f);
  cband::ActivationMaps a = cband::extract_activation_maps(handle, zeros);
  cband::ActivationMaps b = cband::extract_activation_maps(handle, zeros);
  ASSERT_EQ(a.data.size(), b.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(a.data[i], b.data[i]);
  EXPECT_EQ(a.frame_index, 5);
}

TEST(ExtractActivationMaps, RepeatedCallsAreBitwiseIdentical) {
  BackboneHandle handle =
      cband::load_backbone(model_path("vgg16-stage1"), manifest_path("vgg16-stage1"));
  cband::BackboneInput input = plain_input(48, 56, 99);
  cband::ActivationMaps a = cband::extract_activation_maps(handle, input);
  cband::ActivationMaps b = cband::extract_activation_maps(handle, input);
  ASSERT_EQ(a.data.size(), b.data.size());
  for (size_t i = 0; i < a.data.size(); ++i)
    ASSERT_EQ(a.data[i], b.data[i]) << "index " << i;
}

TEST(ExtractActivationMaps, PreprocessedFrameFlowsThrough) {
  // End-to-end: synthetic gray frame -> normalized input -> activations.
  cband::Frame frame;
  frame.format = cband::PixelFormat::Gray8;
  frame.width = 64;
  frame.height = 64;
  frame.frame_index = 0;
  frame.allocate();
  for (int64_t y = 0; y < 64; ++y)
    for (int64_t x = 0; x < 64; ++x)
      frame.planes[0][size_t(y * 64 + x)] = uint8_t((x * 255) / 63);

  cband::BackboneInput input = cband::to_backbone_input(frame);
  BackboneHandle handle =
      cband::load_backbone(model_path("vgg16-stage2"), manifest_path("vgg16-stage2"));
  cband::ActivationMaps maps = cband::extract_activation_maps(handle, input);
  EXPECT_EQ(maps.channels, 128);
  EXPECT_EQ(maps.height, 16);
  EXPECT_EQ(maps.width, 16);
  for (float v : maps.data) ASSERT_TRUE(std::isfinite(v));
}

}  // namespace
