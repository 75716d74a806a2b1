#!/usr/bin/env python3
"""Export truncated torchvision backbones as ONNX graphs with JSON manifests.

This is an offline tool: the toolkit itself never imports torch. Each export
writes <name>.onnx plus <name>.json carrying {name, stage_index,
expected_channels, cumulative_stride, sha256} and a reference-probe block the
test suite uses to validate the C++ executor against torch numerics.

The ONNX files are serialized directly in protobuf wire format so the tool
has no dependency on the `onnx` package. Graphs use opset 13 and dynamic
spatial dimensions.

Weights: pretrained checkpoints are not downloadable in the build sandbox, so
exports use the library's default (seeded) random initialization. That is
sufficient for every property the test suite checks; swap in pretrained
weights by running this tool in an environment that has them cached.
"""

import argparse
import hashlib
import json
import os
import struct

import torch
import torch.nn as nn
import torchvision

SEED = 1234

# --------------------------------------------------------------------------
# Protobuf wire-format helpers (only what ONNX serialization needs).
# --------------------------------------------------------------------------


def varint(n: int) -> bytes:
    out = bytearray()
    n &= (1 << 64) - 1
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def tag(field: int, wire: int) -> bytes:
    return varint((field << 3) | wire)


def f_varint(field: int, value: int) -> bytes:
    return tag(field, 0) + varint(value)


def f_bytes(field: int, data: bytes) -> bytes:
    return tag(field, 2) + varint(len(data)) + data


def f_string(field: int, s: str) -> bytes:
    return f_bytes(field, s.encode())


def f_float(field: int, v: float) -> bytes:
    return tag(field, 5) + struct.pack("<f", v)


# AttributeProto.AttributeType values.
ATTR_FLOAT, ATTR_INT, ATTR_INTS = 1, 2, 7


def attr_float(name: str, v: float) -> bytes:
    body = f_string(1, name) + f_float(2, v) + f_varint(20, ATTR_FLOAT)
    return body


def attr_int(name: str, v: int) -> bytes:
    return f_string(1, name) + f_varint(3, v) + f_varint(20, ATTR_INT)


def attr_ints(name: str, values) -> bytes:
    body = f_string(1, name)
    for v in values:  # unpacked repeated int64
        body += f_varint(8, v)
    return body + f_varint(20, ATTR_INTS)


def node(op_type: str, inputs, outputs, name: str, attrs=()) -> bytes:
    body = b""
    for i in inputs:
        body += f_string(1, i)
    for o in outputs:
        body += f_string(2, o)
    body += f_string(3, name)
    body += f_string(4, op_type)
    for a in attrs:  # NodeProto.attribute = 5
        body += f_bytes(5, a)
    return body


def tensor_f32(name: str, array) -> bytes:
    t = array.detach().cpu().contiguous().to(torch.float32)
    body = b""
    for d in t.shape:
        body += f_varint(1, int(d))
    body += f_varint(2, 1)  # data_type FLOAT
    body += f_string(8, name)
    body += f_bytes(9, t.numpy().astype("<f4").tobytes())
    return body


def tensor_shape(dims) -> bytes:
    body = b""
    for d in dims:
        if isinstance(d, str):
            dim = f_string(2, d)  # dim_param
        else:
            dim = f_varint(1, int(d))  # dim_value
        body += f_bytes(1, dim)
    return body


def value_info(name: str, dims) -> bytes:
    tensor_type = f_varint(1, 1) + f_bytes(2, tensor_shape(dims))  # elem FLOAT
    type_proto = f_bytes(1, tensor_type)
    return f_string(1, name) + f_bytes(2, type_proto)


def graph(nodes, initializers, inputs, outputs, name: str) -> bytes:
    body = b""
    for n in nodes:
        body += f_bytes(1, n)
    body += f_string(2, name)
    for t in initializers:
        body += f_bytes(5, t)
    for vi in inputs:
        body += f_bytes(11, vi)
    for vo in outputs:
        body += f_bytes(12, vo)
    return body


def model(graph_bytes: bytes) -> bytes:
    opset = f_string(1, "") + f_varint(2, 13)
    return (
        f_varint(1, 7)  # ir_version 7 (opset 13 era)
        + f_string(2, "cband-export")
        + f_bytes(7, graph_bytes)
        + f_bytes(8, opset)
    )


# --------------------------------------------------------------------------
# Graph building from torch modules.
# --------------------------------------------------------------------------


class Builder:
    def __init__(self):
        self.nodes = []
        self.inits = []
        self.counter = 0

    def fresh(self, hint: str) -> str:
        self.counter += 1
        return f"{hint}_{self.counter}"

    def add_init(self, hint: str, tensor) -> str:
        name = self.fresh(hint)
        self.inits.append(tensor_f32(name, tensor))
        return name

    def conv(self, x: str, m: nn.Conv2d) -> str:
        assert m.dilation == (1, 1) and m.groups == 1
        w = self.add_init("w", m.weight)
        inputs = [x, w]
        if m.bias is not None:
            inputs.append(self.add_init("b", m.bias))
        out = self.fresh("conv")
        attrs = [
            attr_ints("kernel_shape", list(m.kernel_size)),
            attr_ints("strides", list(m.stride)),
            attr_ints("pads", [m.padding[0], m.padding[1], m.padding[0], m.padding[1]]),
            attr_ints("dilations", [1, 1]),
            attr_int("group", 1),
        ]
        self.nodes.append(node("Conv", inputs, [out], out, attrs))
        return out

    def bn(self, x: str, m: nn.BatchNorm2d) -> str:
        scale = self.add_init("bn_scale", m.weight)
        bias = self.add_init("bn_bias", m.bias)
        mean = self.add_init("bn_mean", m.running_mean)
        var = self.add_init("bn_var", m.running_var)
        out = self.fresh("bn")
        self.nodes.append(
            node("BatchNormalization", [x, scale, bias, mean, var], [out], out,
                 [attr_float("epsilon", m.eps)]))
        return out

    def relu(self, x: str) -> str:
        out = self.fresh("relu")
        self.nodes.append(node("Relu", [x], [out], out))
        return out

    def maxpool(self, x: str, m: nn.MaxPool2d) -> str:
        k = m.kernel_size if isinstance(m.kernel_size, tuple) else (m.kernel_size,) * 2
        s = m.stride if isinstance(m.stride, tuple) else (m.stride,) * 2
        p = m.padding if isinstance(m.padding, tuple) else (m.padding,) * 2
        assert not m.ceil_mode
        out = self.fresh("pool")
        attrs = [
            attr_ints("kernel_shape", list(k)),
            attr_ints("strides", list(s)),
            attr_ints("pads", [p[0], p[1], p[0], p[1]]),
            attr_int("ceil_mode", 0),
        ]
        self.nodes.append(node("MaxPool", [x], [out], out, attrs))
        return out

    def add(self, a: str, b: str) -> str:
        out = self.fresh("add")
        self.nodes.append(node("Add", [a, b], [out], out))
        return out

    def emit(self, module: nn.Module, x: str) -> str:
        if isinstance(module, nn.Conv2d):
            return self.conv(x, module)
        if isinstance(module, nn.BatchNorm2d):
            return self.bn(x, module)
        if isinstance(module, nn.ReLU):
            return self.relu(x)
        if isinstance(module, nn.MaxPool2d):
            return self.maxpool(x, module)
        if isinstance(module, nn.Sequential):
            for sub in module:
                x = self.emit(sub, x)
            return x
        if isinstance(module, torchvision.models.resnet.Bottleneck):
            identity = x
            y = self.relu(self.bn(self.conv(x, module.conv1), module.bn1))
            y = self.relu(self.bn(self.conv(y, module.conv2), module.bn2))
            y = self.bn(self.conv(y, module.conv3), module.bn3)
            if module.downsample is not None:
                identity = self.bn(self.conv(x, module.downsample[0]),
                                   module.downsample[1])
            return self.relu(self.add(y, identity))
        raise RuntimeError(f"unsupported module {type(module).__name__}")


def serialize(module: nn.Module, in_channels: int) -> bytes:
    b = Builder()
    out = b.emit(module, "input")
    # The executor reads I/O names from the graph; spatial dims stay dynamic.
    g = graph(
        b.nodes,
        b.inits,
        [value_info("input", [1, in_channels, "H", "W"])],
        [value_info(out, [1, "C", "Hout", "Wout"])],
        "cband",
    )
    return model(g)


# --------------------------------------------------------------------------
# Backbone definitions.
# --------------------------------------------------------------------------

# VGG16 feature indices: a stage ends after its max-pool.
VGG_STAGE_END = {1: 5, 2: 10, 3: 17, 4: 24, 5: 31}
VGG_CHANNELS = {1: 64, 2: 128, 3: 256, 4: 512, 5: 512}
VGG_STRIDE = {1: 2, 2: 4, 3: 8, 4: 16, 5: 32}

RESNET_CHANNELS = {1: 256, 2: 512, 3: 1024, 4: 2048}
RESNET_STRIDE = {1: 4, 2: 8, 3: 16, 4: 32}


def build_vgg16(stage: int) -> nn.Module:
    torch.manual_seed(SEED)
    m = torchvision.models.vgg16(weights=None)
    return m.features[: VGG_STAGE_END[stage]].eval()


def build_resnet50(stage: int) -> nn.Module:
    torch.manual_seed(SEED)
    m = torchvision.models.resnet50(weights=None)
    mods = [m.conv1, m.bn1, m.relu, m.maxpool, m.layer1]
    for layer in (m.layer2, m.layer3, m.layer4)[: stage - 1]:
        mods.append(layer)
    return nn.Sequential(*mods).eval()


# --------------------------------------------------------------------------
# Deterministic probe inputs (mirrored bit-for-bit by the C++ test suite).
# --------------------------------------------------------------------------

MASK64 = (1 << 64) - 1


def splitmix64_stream(seed: int):
    state = seed & MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        yield z ^ (z >> 31)


def probe_input(seed: int, channels: int, h: int, w: int) -> torch.Tensor:
    gen = splitmix64_stream(seed)
    vals = []
    for _ in range(channels * h * w):
        u = (next(gen) >> 11) * (2.0 ** -53)
        vals.append(2.0 * u - 1.0)
    return torch.tensor(vals, dtype=torch.float32).reshape(1, channels, h, w)


def probe_block(module: nn.Module, in_channels: int, seed: int, h: int, w: int):
    with torch.no_grad():
        y = module(probe_input(seed, in_channels, h, w))
    flat = y.flatten()
    n = flat.numel()
    idx = [round(k * (n - 1) / 15) for k in range(16)]
    return {
        "seed": seed,
        "input_height": h,
        "input_width": w,
        "output_shape": [int(d) for d in y.shape[1:]],
        "sample_indices": idx,
        "sample_values": [float(flat[i]) for i in idx],
        "mean": float(flat.mean()),
        "std": float(flat.std(unbiased=False)),
    }


def write_export(out_dir: str, name: str, module: nn.Module, stage: int,
                 channels: int, stride: int, in_channels: int = 3):
    blob = serialize(module, in_channels)
    onnx_path = os.path.join(out_dir, f"{name}.onnx")
    with open(onnx_path, "wb") as f:
        f.write(blob)
    manifest = {
        "name": name,
        "stage_index": stage,
        "expected_channels": channels,
        "cumulative_stride": stride,
        "sha256": hashlib.sha256(blob).hexdigest(),
        "export_seed": SEED,
        "weights": "random-init",
        "probe": probe_block(module, in_channels, seed=42, h=64, w=64),
    }
    with open(os.path.join(out_dir, f"{name}.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    print(f"wrote {name}: C={channels} stride={stride} ({len(blob)} bytes)")


# --------------------------------------------------------------------------
# Small fixtures for executor unit tests.
# --------------------------------------------------------------------------


def write_tiny_fixtures(out_dir: str):
    # 1) Single conv with hand-checkable weights: out = 2*x(y,x) + x(y+1,x+1) + 0.5
    conv = nn.Conv2d(1, 1, 3, stride=1, padding=1, bias=True)
    with torch.no_grad():
        conv.weight.zero_()
        conv.weight[0, 0, 1, 1] = 2.0
        conv.weight[0, 0, 2, 2] = 1.0
        conv.bias.fill_(0.5)
    write_export(out_dir, "tiny-conv", conv.eval(), 1, 1, 1, in_channels=1)

    # 2) One of everything: conv -> bn (non-trivial stats) -> relu -> maxpool.
    torch.manual_seed(777)
    block = nn.Sequential(
        nn.Conv2d(2, 3, 3, stride=2, padding=1),
        nn.BatchNorm2d(3),
        nn.ReLU(),
        nn.MaxPool2d(2, 2),
    )
    with torch.no_grad():
        bn = block[1]
        bn.running_mean.copy_(torch.tensor([0.1, -0.2, 0.3]))
        bn.running_var.copy_(torch.tensor([0.5, 2.0, 1.5]))
        bn.weight.copy_(torch.tensor([1.1, 0.9, -1.2]))
        bn.bias.copy_(torch.tensor([0.05, -0.4, 0.2]))
    write_export(out_dir, "tiny-block", block.eval(), 1, 3, 4, in_channels=2)

    # 3) Residual add with the file's node order scrambled, exercising the
    #    executor's topological scheduling.
    torch.manual_seed(778)
    conv_a = nn.Conv2d(2, 2, 1, bias=True)
    conv_b = nn.Conv2d(2, 2, 3, padding=1, bias=True)

    b = Builder()
    ya = b.conv("input", conv_a)
    yb = b.conv("input", conv_b)
    out = b.add(ya, yb)
    out = b.relu(out)
    b.nodes.reverse()  # emit in reverse dependency order on purpose
    g = graph(b.nodes, b.inits, [value_info("input", [1, 2, "H", "W"])],
              [value_info(out, [1, 2, "H", "W"])], "tiny-residual")
    blob = model(g)
    with open(os.path.join(out_dir, "tiny-residual.onnx"), "wb") as f:
        f.write(blob)

    class Residual(nn.Module):
        def forward(self, x):
            return torch.relu(conv_a(x) + conv_b(x))

    manifest = {
        "name": "tiny-residual",
        "stage_index": 1,
        "expected_channels": 2,
        "cumulative_stride": 1,
        "sha256": hashlib.sha256(blob).hexdigest(),
        "export_seed": 778,
        "weights": "random-init",
        "probe": probe_block(Residual().eval(), 2, seed=43, h=6, w=7),
    }
    with open(os.path.join(out_dir, "tiny-residual.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    print("wrote tiny-residual")

    # 4) A graph with an op the executor does not implement.
    g = graph(
        [node("Sigmoid", ["input"], ["out"], "sig")],
        [],
        [value_info("input", [1, 1, "H", "W"])],
        [value_info("out", [1, 1, "H", "W"])],
        "tiny-unsupported",
    )
    with open(os.path.join(out_dir, "tiny-unsupported.onnx"), "wb") as f:
        f.write(model(g))
    print("wrote tiny-unsupported")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--stages", default="1,2",
                    help="comma-separated stage list for the stock backbones")
    ap.add_argument("--all-stages", action="store_true",
                    help="export vgg16 stages 1-5 and resnet50 stages 1-4")
    ap.add_argument("--test-fixtures", action="store_true",
                    help="also write the tiny executor-test fixtures")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    torch.set_num_threads(1)

    vgg_stages = sorted(VGG_STAGE_END) if args.all_stages else [
        int(s) for s in args.stages.split(",")]
    resnet_stages = sorted(RESNET_CHANNELS) if args.all_stages else [
        int(s) for s in args.stages.split(",")]

    for s in vgg_stages:
        write_export(args.out, f"vgg16-stage{s}", build_vgg16(s), s,
                     VGG_CHANNELS[s], VGG_STRIDE[s])
    for s in resnet_stages:
        write_export(args.out, f"resnet50-stage{s}", build_resnet50(s), s,
                     RESNET_CHANNELS[s], RESNET_STRIDE[s])

    if args.test_fixtures:
        write_tiny_fixtures(args.out)


if __name__ == "__main__":
    main()
