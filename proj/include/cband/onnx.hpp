#pragma once

// Minimal ONNX reader and CPU executor covering the op set produced by the
// backbone export tool: Conv, BatchNormalization, Relu, MaxPool, Add. The
// file is parsed straight from protobuf wire format; the executor folds
// batch-norm into per-channel affines at load and runs convolutions as
// im2col + GEMM. Inference is float32, batch size 1, dynamic spatial dims.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cband/errors.hpp"

namespace cband::onnx {

struct Tensor {
  std::vector<int64_t> dims;
  std::vector<float> data;

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
};

namespace detail {

// --- protobuf wire reader -------------------------------------------------

class WireReader {
 public:
  WireReader(const uint8_t* data, size_t size) : p_(data), end_(data + size) {}

  bool done() const { return p_ == end_; }

  uint64_t read_varint() {
    uint64_t value = 0;
    int shift = 0;
    while (true) {
      if (p_ == end_) fail("truncated varint");
      uint8_t byte = *p_++;
      if (shift >= 64) fail("varint overflow");
      value |= uint64_t(byte & 0x7f) << shift;
      if (!(byte & 0x80)) return value;
      shift += 7;
    }
  }

  // Returns (field_number, wire_type).
  std::pair<uint32_t, uint32_t> read_key() {
    uint64_t key = read_varint();
    return {uint32_t(key >> 3), uint32_t(key & 7)};
  }

  WireReader read_message() {
    uint64_t len = read_varint();
    if (uint64_t(end_ - p_) < len) fail("truncated length-delimited field");
    WireReader sub(p_, size_t(len));
    p_ += len;
    return sub;
  }

  std::string read_string() {
    uint64_t len = read_varint();
    if (uint64_t(end_ - p_) < len) fail("truncated string field");
    std::string s(reinterpret_cast<const char*>(p_), size_t(len));
    p_ += len;
    return s;
  }

  float read_f32() {
    if (end_ - p_ < 4) fail("truncated fixed32 field");
    float v;
    std::memcpy(&v, p_, 4);
    p_ += 4;
    return v;
  }

  uint64_t read_fixed64() {
    if (end_ - p_ < 8) fail("truncated fixed64 field");
    uint64_t v;
    std::memcpy(&v, p_, 8);
    p_ += 8;
    return v;
  }

  void skip(uint32_t wire_type) {
    switch (wire_type) {
      case 0: read_varint(); break;
      case 1: read_fixed64(); break;
      case 2: read_message(); break;
      case 5: read_f32(); break;
      default: fail("unsupported wire type");
    }
  }

  [[noreturn]] static void fail(const std::string& what) {
    throw Error(ErrorKind::ModelLoadError, "onnx: " + what);
  }

 private:
  const uint8_t* p_;
  const uint8_t* end_;
};

}  // namespace detail

// --- parsed graph ----------------------------------------------------------

struct Attribute {
  std::string name;
  int64_t i = 0;
  float f = 0.0f;
  std::string s;
  std::vector<int64_t> ints;
  std::vector<float> floats;
};

struct NodeProto {
  std::string op_type;
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<Attribute> attributes;

  const Attribute* find(const std::string& attr) const {
    for (const auto& a : attributes)
      if (a.name == attr) return &a;
    return nullptr;
  }
  int64_t get_int(const std::string& attr, int64_t fallback) const {
    const Attribute* a = find(attr);
    return a ? a->i : fallback;
  }
  std::vector<int64_t> get_ints(const std::string& attr,
                                std::vector<int64_t> fallback) const {
    const Attribute* a = find(attr);
    return a ? a->ints : fallback;
  }
  float get_float(const std::string& attr, float fallback) const {
    const Attribute* a = find(attr);
    return a ? a->f : fallback;
  }
};

struct GraphProto {
  std::vector<NodeProto> nodes;
  std::unordered_map<std::string, Tensor> initializers;
  std::vector<std::pair<std::string, std::vector<int64_t>>> inputs;  // dim<0 = dynamic
  std::vector<std::string> outputs;
};

namespace detail {

inline Attribute parse_attribute(WireReader r) {
  Attribute a;
  while (!r.done()) {
    auto [field, wire] = r.read_key();
    switch (field) {
      case 1: a.name = r.read_string(); break;
      case 2: a.f = r.read_f32(); break;
      case 3: a.i = int64_t(r.read_varint()); break;
      case 4: a.s = r.read_string(); break;
      case 7:  // repeated float: packed or not
        if (wire == 2) {
          WireReader sub = r.read_message();
          while (!sub.done()) a.floats.push_back(sub.read_f32());
        } else {
          a.floats.push_back(r.read_f32());
        }
        break;
      case 8:  // repeated int64: packed or not
        if (wire == 2) {
          WireReader sub = r.read_message();
          while (!sub.done()) a.ints.push_back(int64_t(sub.read_varint()));
        } else {
          a.ints.push_back(int64_t(r.read_varint()));
        }
        break;
      default: r.skip(wire); break;
    }
  }
  return a;
}

inline NodeProto parse_node(WireReader r) {
  NodeProto n;
  while (!r.done()) {
    auto [field, wire] = r.read_key();
    switch (field) {
      case 1: n.inputs.push_back(r.read_string()); break;
      case 2: n.outputs.push_back(r.read_string()); break;
      case 3: n.name = r.read_string(); break;
      case 4: n.op_type = r.read_string(); break;
      case 5: n.attributes.push_back(parse_attribute(r.read_message())); break;
      default: r.skip(wire); break;
    }
  }
  return n;
}

inline std::pair<std::string, Tensor> parse_tensor(WireReader r) {
  std::string name;
  Tensor t;
  int64_t data_type = 0;
  std::string raw;
  while (!r.done()) {
    auto [field, wire] = r.read_key();
    switch (field) {
      case 1:
        if (wire == 2) {
          WireReader sub = r.read_message();
          while (!sub.done()) t.dims.push_back(int64_t(sub.read_varint()));
        } else {
          t.dims.push_back(int64_t(r.read_varint()));
        }
        break;
      case 2: data_type = int64_t(r.read_varint()); break;
      case 4:  // float_data
        if (wire == 2) {
          WireReader sub = r.read_message();
          while (!sub.done()) t.data.push_back(sub.read_f32());
        } else {
          t.data.push_back(r.read_f32());
        }
        break;
      case 8: name = r.read_string(); break;
      case 9: raw = r.read_string(); break;
      default: r.skip(wire); break;
    }
  }
  if (data_type != 1)
    WireReader::fail("initializer '" + name + "' is not float32");
  if (!raw.empty()) {
    if (raw.size() % 4 != 0) WireReader::fail("raw_data size not /4");
    t.data.resize(raw.size() / 4);
    std::memcpy(t.data.data(), raw.data(), raw.size());
  }
  if (t.numel() != int64_t(t.data.size()))
    WireReader::fail("initializer '" + name + "' dims disagree with payload");
  return {std::move(name), std::move(t)};
}

// ValueInfoProto -> (name, declared dims; -1 where symbolic/absent).
inline std::pair<std::string, std::vector<int64_t>> parse_value_info(WireReader r) {
  std::string name;
  std::vector<int64_t> dims;
  while (!r.done()) {
    auto [field, wire] = r.read_key();
    if (field == 1 && wire == 2) {
      name = r.read_string();
    } else if (field == 2 && wire == 2) {
      WireReader type = r.read_message();
      while (!type.done()) {
        auto [tf, tw] = type.read_key();
        if (tf == 1 && tw == 2) {  // tensor_type
          WireReader tt = type.read_message();
          while (!tt.done()) {
            auto [sf, sw] = tt.read_key();
            if (sf == 2 && sw == 2) {  // shape
              WireReader shape = tt.read_message();
              while (!shape.done()) {
                auto [df, dw] = shape.read_key();
                if (df == 1 && dw == 2) {
                  WireReader dim = shape.read_message();
                  int64_t value = -1;
                  while (!dim.done()) {
                    auto [vf, vw] = dim.read_key();
                    if (vf == 1 && vw == 0)
                      value = int64_t(dim.read_varint());
                    else
                      dim.skip(vw);
                  }
                  dims.push_back(value);
                } else {
                  shape.skip(dw);
                }
              }
            } else {
              tt.skip(sw);
            }
          }
        } else {
          type.skip(tw);
        }
      }
    } else {
      r.skip(wire);
    }
  }
  return {std::move(name), std::move(dims)};
}

inline GraphProto parse_graph(WireReader r) {
  GraphProto g;
  while (!r.done()) {
    auto [field, wire] = r.read_key();
    switch (field) {
      case 1: g.nodes.push_back(parse_node(r.read_message())); break;
      case 5: g.initializers.insert(parse_tensor(r.read_message())); break;
      case 11: g.inputs.push_back(parse_value_info(r.read_message())); break;
      case 12: g.outputs.push_back(parse_value_info(r.read_message()).first); break;
      default: r.skip(wire); break;
    }
  }
  return g;
}

}  // namespace detail

inline GraphProto parse_model(const uint8_t* data, size_t size) {
  detail::WireReader r(data, size);
  bool saw_graph = false;
  GraphProto g;
  while (!r.done()) {
    auto [field, wire] = r.read_key();
    if (field == 7 && wire == 2) {
      g = detail::parse_graph(r.read_message());
      saw_graph = true;
    } else {
      r.skip(wire);
    }
  }
  if (!saw_graph)
    detail::WireReader::fail("model carries no graph");
  return g;
}

inline GraphProto parse_model(const std::vector<uint8_t>& bytes) {
  return parse_model(bytes.data(), bytes.size());
}

// --- executor ---------------------------------------------------------------

class Engine {
 public:
  explicit Engine(GraphProto graph) { build(std::move(graph)); }

  // Runs the graph on a single C×H×W input and returns the C'×H'×W' output.
  Tensor run(const Tensor& input) const {
    if (input.dims.size() != 3)
      throw Error(ErrorKind::ShapeError, "onnx: engine input must be C×H×W");
    if (input_channels_ > 0 && input.dims[0] != input_channels_)
      throw Error(ErrorKind::ShapeError,
                  "onnx: engine expects " + std::to_string(input_channels_) +
                      " input channels, got " + std::to_string(input.dims[0]));
    if (input.numel() != int64_t(input.data.size()))
      throw Error(ErrorKind::ShapeError, "onnx: input dims disagree with data");

    std::vector<Tensor> slots(slot_count_);
    std::vector<int> remaining = slot_uses_;
    slots[input_slot_] = input;

    for (const Op& op : plan_) {
      Tensor out;
      switch (op.kind) {
        case OpKind::kConv: out = conv(slots[op.in0], op); break;
        case OpKind::kAffine: out = affine(take(slots, remaining, op.in0), op); break;
        case OpKind::kRelu: out = relu(take(slots, remaining, op.in0)); break;
        case OpKind::kMaxPool: out = maxpool(slots[op.in0], op); break;
        case OpKind::kAdd: out = add(slots[op.in0], slots[op.in1]); break;
      }
      release(slots, remaining, op.in0);
      if (op.kind == OpKind::kAdd) release(slots, remaining, op.in1);
      slots[op.out] = std::move(out);
    }
    return std::move(slots[output_slot_]);
  }

  int64_t input_channels() const { return input_channels_; }
  const std::string& input_name() const { return input_name_; }
  const std::string& output_name() const { return output_name_; }

 private:
  enum class OpKind { kConv, kAffine, kRelu, kMaxPool, kAdd };

  struct Op {
    OpKind kind;
    int in0 = -1;
    int in1 = -1;
    int out = -1;
    // Conv / MaxPool geometry.
    int64_t kh = 0, kw = 0, sh = 1, sw = 1, pt = 0, pl = 0, pb = 0, pr = 0;
    // Conv weights reshaped to C_out × (C_in·kh·kw); bias may be empty.
    int64_t out_channels = 0, in_channels = 0;
    std::vector<float> weight;
    std::vector<float> bias;
    // Affine (folded batch-norm): y = scale[c]·x + shift[c].
    std::vector<float> scale;
    std::vector<float> shift;
  };

  [[noreturn]] static void fail(const std::string& what) {
    throw Error(ErrorKind::ModelLoadError, "onnx: " + what);
  }

  void build(GraphProto graph) {
    // Identify the single runtime input and output.
    std::vector<std::string> runtime_inputs;
    for (const auto& [name, dims] : graph.inputs)
      if (!graph.initializers.count(name)) {
        runtime_inputs.push_back(name);
        if (dims.size() == 4) input_channels_ = dims[1];
      }
    if (runtime_inputs.size() != 1)
      fail("expected exactly one runtime input, found " +
           std::to_string(runtime_inputs.size()));
    if (graph.outputs.size() != 1)
      fail("expected exactly one graph output, found " +
           std::to_string(graph.outputs.size()));
    input_name_ = runtime_inputs[0];
    output_name_ = graph.outputs[0];

    // Topological order (Kahn) over value dependencies.
    std::unordered_map<std::string, size_t> producer;
    for (size_t i = 0; i < graph.nodes.size(); ++i) {
      for (const auto& out : graph.nodes[i].outputs) {
        if (!producer.emplace(out, i).second)
          fail("value '" + out + "' produced twice");
      }
    }
    auto is_runtime_value = [&](const std::string& name) {
      return !graph.initializers.count(name);
    };
    std::vector<int> pending(graph.nodes.size(), 0);
    std::vector<std::vector<size_t>> dependents(graph.nodes.size());
    std::vector<size_t> ready;
    for (size_t i = 0; i < graph.nodes.size(); ++i) {
      for (const auto& in : graph.nodes[i].inputs) {
        if (!is_runtime_value(in) || in == input_name_) continue;
        auto it = producer.find(in);
        if (it == producer.end())
          fail("node '" + graph.nodes[i].name + "' reads undefined value '" + in + "'");
        ++pending[i];
        dependents[it->second].push_back(i);
      }
      if (pending[i] == 0) ready.push_back(i);
    }
    std::vector<size_t> order;
    order.reserve(graph.nodes.size());
    while (!ready.empty()) {
      size_t i = ready.back();
      ready.pop_back();
      order.push_back(i);
      for (size_t dep : dependents[i])
        if (--pending[dep] == 0) ready.push_back(dep);
    }
    if (order.size() != graph.nodes.size())
      fail("graph contains a cycle");

    // Slot assignment for runtime values.
    std::unordered_map<std::string, int> slot_of;
    auto slot = [&](const std::string& name) {
      auto [it, fresh] = slot_of.emplace(name, int(slot_of.size()));
      (void)fresh;
      return it->second;
    };
    input_slot_ = slot(input_name_);

    auto initializer = [&](const NodeProto& n, size_t idx) -> const Tensor& {
      if (idx >= n.inputs.size())
        fail("node '" + n.name + "' is missing input " + std::to_string(idx));
      auto it = graph.initializers.find(n.inputs[idx]);
      if (it == graph.initializers.end())
        fail("node '" + n.name + "' input '" + n.inputs[idx] +
             "' must be an initializer");
      return it->second;
    };

    for (size_t idx : order) {
      const NodeProto& n = graph.nodes[idx];
      Op op;
      if (n.outputs.size() != 1)
        fail("node '" + n.name + "' must have exactly one output");
      if (n.op_type == "Conv") {
        op.kind = OpKind::kConv;
        const Tensor& w = initializer(n, 1);
        if (w.dims.size() != 4)
          fail("conv weight must be 4-D");
        op.out_channels = w.dims[0];
        op.in_channels = w.dims[1];
        op.kh = w.dims[2];
        op.kw = w.dims[3];
        op.weight = w.data;
        if (n.inputs.size() >= 3) op.bias = initializer(n, 2).data;
        if (!op.bias.empty() && int64_t(op.bias.size()) != op.out_channels)
          fail("conv bias size mismatch");
        if (n.get_int("group", 1) != 1) fail("grouped conv unsupported");
        for (int64_t d : n.get_ints("dilations", {1, 1}))
          if (d != 1) fail("dilated conv unsupported");
        auto strides = n.get_ints("strides", {1, 1});
        auto pads = n.get_ints("pads", {0, 0, 0, 0});
        auto kernel = n.get_ints("kernel_shape", {op.kh, op.kw});
        if (strides.size() != 2 || pads.size() != 4 || kernel.size() != 2 ||
            kernel[0] != op.kh || kernel[1] != op.kw)
          fail("conv attribute shape mismatch");
        op.sh = strides[0];
        op.sw = strides[1];
        op.pt = pads[0];
        op.pl = pads[1];
        op.pb = pads[2];
        op.pr = pads[3];
      } else if (n.op_type == "BatchNormalization") {
        op.kind = OpKind::kAffine;
        const Tensor& gamma = initializer(n, 1);
        const Tensor& beta = initializer(n, 2);
        const Tensor& mean = initializer(n, 3);
        const Tensor& var = initializer(n, 4);
        size_t c = gamma.data.size();
        if (beta.data.size() != c || mean.data.size() != c || var.data.size() != c)
          fail("batch-norm parameter sizes disagree");
        float eps = n.get_float("epsilon", 1e-5f);
        op.scale.resize(c);
        op.shift.resize(c);
        for (size_t i = 0; i < c; ++i) {
          op.scale[i] = gamma.data[i] / std::sqrt(var.data[i] + eps);
          op.shift[i] = beta.data[i] - mean.data[i] * op.scale[i];
        }
      } else if (n.op_type == "Relu") {
        op.kind = OpKind::kRelu;
      } else if (n.op_type == "MaxPool") {
        op.kind = OpKind::kMaxPool;
        auto kernel = n.get_ints("kernel_shape", {});
        auto strides = n.get_ints("strides", kernel);
        auto pads = n.get_ints("pads", {0, 0, 0, 0});
        if (kernel.size() != 2 || strides.size() != 2 || pads.size() != 4)
          fail("maxpool attribute shape mismatch");
        if (n.get_int("ceil_mode", 0) != 0) fail("maxpool ceil_mode unsupported");
        op.kh = kernel[0];
        op.kw = kernel[1];
        op.sh = strides[0];
        op.sw = strides[1];
        op.pt = pads[0];
        op.pl = pads[1];
        op.pb = pads[2];
        op.pr = pads[3];
      } else if (n.op_type == "Add") {
        op.kind = OpKind::kAdd;
      } else {
        fail("unsupported op '" + n.op_type + "'");
      }

      auto runtime_input = [&](size_t i) {
        if (i >= n.inputs.size())
          fail("node '" + n.name + "' is missing input " + std::to_string(i));
        if (!is_runtime_value(n.inputs[i]))
          fail("node '" + n.name + "' expects a runtime input, got initializer");
        return slot(n.inputs[i]);
      };
      op.in0 = runtime_input(0);
      if (op.kind == OpKind::kAdd) op.in1 = runtime_input(1);
      op.out = slot(n.outputs[0]);
      plan_.push_back(std::move(op));
    }

    auto out_it = slot_of.find(output_name_);
    if (out_it == slot_of.end())
      fail("graph output '" + output_name_ + "' is never produced");
    output_slot_ = out_it->second;
    slot_count_ = int(slot_of.size());

    // Use counts let run() free intermediates as soon as possible.
    slot_uses_.assign(slot_count_, 0);
    for (const Op& op : plan_) {
      ++slot_uses_[op.in0];
      if (op.in1 >= 0) ++slot_uses_[op.in1];
    }
    ++slot_uses_[output_slot_];
  }

  static void release(std::vector<Tensor>& slots, std::vector<int>& remaining,
                      int slot) {
    if (slot >= 0 && --remaining[slot] == 0) {
      slots[slot].data.clear();
      slots[slot].data.shrink_to_fit();
    }
  }

  // Steals the buffer when this op holds the last reference, so Relu/Affine
  // can run in place.
  static Tensor take(std::vector<Tensor>& slots, const std::vector<int>& remaining,
                     int slot) {
    if (remaining[slot] == 1) return std::move(slots[slot]);
    return slots[slot];
  }

  static std::pair<int64_t, int64_t> out_hw(const Tensor& x, const Op& op) {
    int64_t h = (x.dims[1] + op.pt + op.pb - op.kh) / op.sh + 1;
    int64_t w = (x.dims[2] + op.pl + op.pr - op.kw) / op.sw + 1;
    if (h <= 0 || w <= 0)
      throw Error(ErrorKind::ShapeError, "onnx: spatial input too small for kernel");
    return {h, w};
  }

  static Tensor conv(const Tensor& x, const Op& op) {
    if (x.dims[0] != op.in_channels)
      throw Error(ErrorKind::ShapeError, "onnx: conv channel mismatch");
    auto [oh, ow] = out_hw(x, op);
    const int64_t ih = x.dims[1], iw = x.dims[2];
    const int64_t k = op.in_channels * op.kh * op.kw;

    Tensor y;
    y.dims = {op.out_channels, oh, ow};
    y.data.resize(size_t(y.numel()));

    using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> wmat(op.weight.data(), op.out_channels, k);
    Eigen::Map<const Eigen::VectorXf> bias(
        op.bias.empty() ? nullptr : op.bias.data(), op.bias.empty() ? 0 : op.out_channels);

    // Process output rows in chunks to bound the im2col buffer (~8 MB).
    const int64_t rows_per_chunk =
        std::max<int64_t>(1, (int64_t(8) << 20) / std::max<int64_t>(1, k * ow * 4));
    Eigen::MatrixXf cols;  // column-major: one output pixel per column
    for (int64_t oy0 = 0; oy0 < oh; oy0 += rows_per_chunk) {
      const int64_t rows = std::min(rows_per_chunk, oh - oy0);
      const int64_t pixels = rows * ow;
      cols.resize(k, pixels);
      for (int64_t r = 0; r < rows; ++r) {
        const int64_t oy = oy0 + r;
        for (int64_t ox = 0; ox < ow; ++ox) {
          float* col = cols.data() + (r * ow + ox) * k;
          int64_t idx = 0;
          for (int64_t c = 0; c < op.in_channels; ++c) {
            const float* plane = x.data.data() + c * ih * iw;
            for (int64_t ky = 0; ky < op.kh; ++ky) {
              const int64_t iy = oy * op.sh - op.pt + ky;
              if (iy < 0 || iy >= ih) {
                for (int64_t kx = 0; kx < op.kw; ++kx) col[idx++] = 0.0f;
                continue;
              }
              const float* row = plane + iy * iw;
              for (int64_t kx = 0; kx < op.kw; ++kx) {
                const int64_t ix = ox * op.sw - op.pl + kx;
                col[idx++] = (ix < 0 || ix >= iw) ? 0.0f : row[ix];
              }
            }
          }
        }
      }
      Eigen::Map<RowMajor, 0, Eigen::OuterStride<>> out(
          y.data.data() + oy0 * ow, op.out_channels, pixels,
          Eigen::OuterStride<>(Eigen::Index(oh * ow)));
      out.noalias() = wmat * cols;
      if (bias.size() > 0) out.colwise() += bias;
    }
    return y;
  }

  static Tensor affine(Tensor x, const Op& op) {
    if (size_t(x.dims[0]) != op.scale.size())
      throw Error(ErrorKind::ShapeError, "onnx: affine channel mismatch");
    const int64_t plane = x.dims[1] * x.dims[2];
    for (int64_t c = 0; c < x.dims[0]; ++c) {
      float* p = x.data.data() + c * plane;
      const float a = op.scale[size_t(c)], b = op.shift[size_t(c)];
      for (int64_t i = 0; i < plane; ++i) p[i] = a * p[i] + b;
    }
    return x;
  }

  static Tensor relu(Tensor x) {
    for (float& v : x.data) v = std::max(v, 0.0f);
    return x;
  }

  static Tensor maxpool(const Tensor& x, const Op& op) {
    auto [oh, ow] = out_hw(x, op);
    const int64_t c_total = x.dims[0], ih = x.dims[1], iw = x.dims[2];
    Tensor y;
    y.dims = {c_total, oh, ow};
    y.data.resize(size_t(y.numel()));
    for (int64_t c = 0; c < c_total; ++c) {
      const float* in = x.data.data() + c * ih * iw;
      float* out = y.data.data() + c * oh * ow;
      for (int64_t oy = 0; oy < oh; ++oy) {
        for (int64_t ox = 0; ox < ow; ++ox) {
          float best = -std::numeric_limits<float>::infinity();
          for (int64_t ky = 0; ky < op.kh; ++ky) {
            const int64_t iy = oy * op.sh - op.pt + ky;
            if (iy < 0 || iy >= ih) continue;
            for (int64_t kx = 0; kx < op.kw; ++kx) {
              const int64_t ix = ox * op.sw - op.pl + kx;
              if (ix < 0 || ix >= iw) continue;
              best = std::max(best, in[iy * iw + ix]);
            }
          }
          out[oy * ow + ox] = best;
        }
      }
    }
    return y;
  }

  static Tensor add(const Tensor& a, const Tensor& b) {
    if (a.dims != b.dims)
      throw Error(ErrorKind::ShapeError, "onnx: add operand shapes differ");
    Tensor y = a;
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
    return y;
  }

  std::vector<Op> plan_;
  std::vector<int> slot_uses_;
  int slot_count_ = 0;
  int input_slot_ = -1;
  int output_slot_ = -1;
  int64_t input_channels_ = -1;
  std::string input_name_;
  std::string output_name_;
};

}  // namespace cband::onnx
