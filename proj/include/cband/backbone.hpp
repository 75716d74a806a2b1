#pragma once

// Backbone loading and activation-map extraction. A backbone ships as a
// pre-truncated ONNX file plus a JSON manifest {name, stage_index,
// expected_channels, cumulative_stride, sha256}; load_backbone checks the
// file hash against the manifest, parses the graph, and validates the
// declared channel count with a 3×64×64 probe inference before handing out
// an immutable handle.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cband/activation.hpp"
#include "cband/detail/io.hpp"
#include "cband/detail/sha256.hpp"
#include "cband/errors.hpp"
#include "cband/onnx.hpp"
#include "cband/preprocess.hpp"

namespace cband {

inline constexpr int64_t kMinBackboneInput = 32;

struct BackboneHandle {
  std::string name;
  int stage_index = 0;
  int64_t expected_channels = 0;
  int64_t cumulative_stride = 0;
  std::string sha256;
  std::shared_ptr<const onnx::Engine> engine;  // immutable after load
};

inline BackboneHandle load_backbone(const std::string& model_path,
                                    const std::string& manifest_path) {
  if (!std::filesystem::exists(manifest_path))
    throw Error(ErrorKind::ManifestMissing,
                "backbone manifest not found: " + manifest_path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::read_file_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ManifestMismatch,
                std::string("backbone manifest is not valid JSON: ") + e.what());
  }

  BackboneHandle handle;
  try {
    handle.name = manifest.at("name").get<std::string>();
    handle.stage_index = manifest.at("stage_index").get<int>();
    handle.expected_channels = manifest.at("expected_channels").get<int64_t>();
    handle.cumulative_stride = manifest.at("cumulative_stride").get<int64_t>();
    handle.sha256 = manifest.at("sha256").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ManifestMismatch,
                std::string("backbone manifest is missing required fields: ") +
                    e.what());
  }
  if (handle.expected_channels <= 0 || handle.cumulative_stride <= 0 ||
      handle.stage_index < 1 || handle.stage_index > 6)
    throw Error(ErrorKind::ManifestMismatch,
                "backbone manifest carries out-of-range fields");

  std::vector<uint8_t> blob = detail::read_file_bytes(model_path);
  std::string actual_sha = detail::sha256_hex(blob);
  if (actual_sha != handle.sha256)
    throw Error(ErrorKind::ManifestMismatch,
                "model file hash " + actual_sha + " does not match manifest " +
                    handle.sha256);

  handle.engine = std::make_shared<onnx::Engine>(onnx::parse_model(blob));

  // Probe: a zero 3×64×64 inference must emit the declared channel count.
  onnx::Tensor probe;
  const int64_t c_in =
      handle.engine->input_channels() > 0 ? handle.engine->input_channels() : 3;
  probe.dims = {c_in, 64, 64};
  probe.data.assign(size_t(probe.numel()), 0.0f);
  onnx::Tensor out;
  try {
    out = handle.engine->run(probe);
  } catch (const Error& e) {
    throw Error(ErrorKind::ModelLoadError,
                std::string("backbone probe inference failed: ") + e.what());
  }
  if (out.dims.size() != 3 || out.dims[0] != handle.expected_channels)
    throw Error(ErrorKind::ManifestMismatch,
                "graph emits " + std::to_string(out.dims.empty() ? 0 : out.dims[0]) +
                    " channels but manifest declares " +
                    std::to_string(handle.expected_channels));
  return handle;
}

// Convenience: locate "<name>.onnx" next to "<name>.json".
inline BackboneHandle load_backbone(const std::string& manifest_path) {
  std::filesystem::path p(manifest_path);
  p.replace_extension(".onnx");
  return load_backbone(p.string(), manifest_path);
}

inline ActivationMaps extract_activation_maps(const BackboneHandle& handle,
                                              const BackboneInput& input) {
  if (!handle.engine)
    throw Error(ErrorKind::ModelLoadError, "backbone handle is empty");
  if (input.height < kMinBackboneInput || input.width < kMinBackboneInput)
    throw Error(ErrorKind::InputTooSmall,
                "backbone input " + std::to_string(input.width) + "×" +
                    std::to_string(input.height) + " is below the 32×32 minimum");

  onnx::Tensor x;
  x.dims = {3, input.height, input.width};
  x.data = input.data;
  onnx::Tensor y = handle.engine->run(x);

  // The manifest stride predicts the output size up to floor/ceil rounding;
  // the graph itself is the authority, but a disagreement beyond that means
  // the manifest does not describe this file.
  for (int axis = 0; axis < 2; ++axis) {
    const int64_t in_dim = axis == 0 ? input.height : input.width;
    const int64_t out_dim = y.dims[size_t(1 + axis)];
    const int64_t lo = in_dim / handle.cumulative_stride;
    const int64_t hi = (in_dim + handle.cumulative_stride - 1) / handle.cumulative_stride;
    if (out_dim < lo || out_dim > hi)
      throw Error(ErrorKind::ManifestMismatch,
                  "output extent " + std::to_string(out_dim) +
                      " is inconsistent with cumulative stride " +
                      std::to_string(handle.cumulative_stride));
  }
  for (float v : y.data)
    if (!std::isfinite(v))
      throw Error(ErrorKind::DivergenceError,
                  "backbone emitted a non-finite activation");

  ActivationMaps maps;
  maps.channels = y.dims[0];
  maps.height = y.dims[1];
  maps.width = y.dims[2];
  maps.frame_index = input.frame_index;
  maps.data = std::move(y.data);
  return maps;
}

}  // namespace cband
