"""Model descriptors and constructors for the two reference architectures.

`build_resnet` and `build_densenet` emit ModelConfig values; `build_network`
turns a config into a runnable Network with He-initialized weights. The 224
profile matches the reference layer tables; the 64 profile keeps the same
layer pattern with the first conv at stride 1 for desk-scale runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from ..rng import SplitMix64, gaussian_stream
from .layers import (
    BatchNorm2d,
    Conv2d,
    DenseLayer,
    FullyConnected,
    GlobalAvgPool,
    MaxPool2d,
    Network,
    ReLU,
    ResidualBlock,
    Transition,
    _Seq,
)

LAYER_KINDS = ("Conv", "BatchNorm", "ReLU", "MaxPool", "GlobalAvgPool",
               "FullyConnected", "ResidualBlock", "DenseBlock", "Transition")


@dataclass(frozen=True)
class LayerSpec:
    """One architecture row.

    For ResidualBlock, `stride` is the stage-entry stride (repeats after the
    first run at stride 1). For DenseBlock, `out_channels` is the bottleneck
    width and `growth_rate` the channels each repeat concatenates on.
    """

    kind: str
    kernel: int = 1
    stride: int = 1
    out_channels: int = 0
    growth_rate: int = 0
    repeat: int = 1

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kernel < 1 or self.stride < 1 or self.repeat < 1:
            raise ValueError("kernel, stride and repeat must all be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    name: str
    layers: tuple[LayerSpec, ...]
    num_classes: int
    input_size: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ModelConfig":
        d = json.loads(text)
        layers = tuple(LayerSpec(**ls) for ls in d["layers"])
        return ModelConfig(name=d["name"], layers=layers,
                           num_classes=d["num_classes"], input_size=d["input_size"])


def build_resnet(num_classes: int, input_size: int = 224) -> ModelConfig:
    """Small ResNet: two strided stem convs, four 2-block stages at 4/8/16/32
    channels, global average pool, fc softmax."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    stem_stride = 1 if input_size <= 64 else 2
    layers = [
        LayerSpec("Conv", kernel=7, stride=stem_stride, out_channels=4),
        LayerSpec("BatchNorm"),
        LayerSpec("ReLU"),
        LayerSpec("Conv", kernel=5, stride=2, out_channels=4),
        LayerSpec("BatchNorm"),
        LayerSpec("ReLU"),
        LayerSpec("ResidualBlock", kernel=3, stride=1, out_channels=4, repeat=2),
        LayerSpec("ResidualBlock", kernel=3, stride=2, out_channels=8, repeat=2),
        LayerSpec("ResidualBlock", kernel=3, stride=2, out_channels=16, repeat=2),
        LayerSpec("ResidualBlock", kernel=3, stride=2, out_channels=32, repeat=2),
        LayerSpec("GlobalAvgPool"),
        LayerSpec("FullyConnected", out_channels=num_classes),
    ]
    cfg = ModelConfig(f"resnet{input_size}", tuple(layers), num_classes, input_size)
    shape_chain(cfg)  # static consistency check
    return cfg


def build_densenet(num_classes: int, input_size: int = 224) -> ModelConfig:
    """Small DenseNet: strided stem conv + 3x3 max pool, four dense blocks of
    three bottleneck-48/growth-12 layers, 1x1-conv + 2x2-max-pool transitions
    to 24 channels, global average pool, fc softmax.

    Concatenation arithmetic gives each block 24 + 3*12 = 60 output channels.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    stem_stride = 1 if input_size <= 64 else 2
    dense = LayerSpec("DenseBlock", kernel=3, out_channels=48, growth_rate=12, repeat=3)
    layers = [
        LayerSpec("Conv", kernel=7, stride=stem_stride, out_channels=24),
        LayerSpec("BatchNorm"),
        LayerSpec("ReLU"),
        LayerSpec("MaxPool", kernel=3, stride=2),
        dense,
        LayerSpec("Transition", out_channels=24),
        dense,
        LayerSpec("Transition", out_channels=24),
        dense,
        LayerSpec("Transition", out_channels=24),
        dense,
        LayerSpec("BatchNorm"),
        LayerSpec("ReLU"),
        LayerSpec("GlobalAvgPool"),
        LayerSpec("FullyConnected", out_channels=num_classes),
    ]
    cfg = ModelConfig(f"densenet{input_size}", tuple(layers), num_classes, input_size)
    shape_chain(cfg)
    return cfg


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def shape_chain(config: ModelConfig) -> list[tuple[str, int, int]]:
    """Per-layer (name, channels, spatial size) computed analytically.

    Raises if any intermediate dimension collapses below 1 or a FullyConnected
    appears before pooling flattens the map.
    """
    c, s = 3, config.input_size
    chain: list[tuple[str, int, int]] = []
    pooled = False
    for i, spec in enumerate(config.layers):
        name = f"{i}:{spec.kind}"
        if spec.kind == "Conv":
            s = _conv_out(s, spec.kernel, spec.stride, spec.kernel // 2)
            c = spec.out_channels
        elif spec.kind == "MaxPool":
            s = _conv_out(s, spec.kernel, spec.stride, spec.kernel // 2)
        elif spec.kind == "ResidualBlock":
            s = _conv_out(s, 1, spec.stride, 0)
            c = spec.out_channels
        elif spec.kind == "DenseBlock":
            c = c + spec.growth_rate * spec.repeat
        elif spec.kind == "Transition":
            c = spec.out_channels
            s = _conv_out(s, 2, 2, 0)
        elif spec.kind == "GlobalAvgPool":
            s = 1
            pooled = True
        elif spec.kind == "FullyConnected":
            if not pooled:
                raise ValueError("FullyConnected requires a GlobalAvgPool before it")
            c = spec.out_channels
        if s < 1:
            raise ValueError(f"spatial size collapsed to {s} at layer {name}")
        chain.append((name, c, s))
    return chain


def he_init(shape: tuple[int, ...], fan_in: int, seed: int) -> np.ndarray:
    """Zero-mean Gaussian with variance 2/fan_in from splitmix64 + Box-Muller."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    n = int(np.prod(shape))
    return (gaussian_stream(seed, n) * np.sqrt(2.0 / fan_in)).reshape(shape)


class _DenseBlockModule(_Seq):
    def __init__(self, in_channels: int, bottleneck: int, growth: int, repeat: int,
                 kernel: int, dtype):
        super().__init__()
        c = in_channels
        for r in range(repeat):
            self.add(f"layer{r + 1}", DenseLayer(c, bottleneck, growth, kernel, dtype=dtype))
            c += growth
        self.out_channels = c

    def forward(self, x, train):
        for _, layer in self._children:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for _, layer in reversed(self._children):
            dout = layer.backward(dout)
        return dout


class _ResStageModule(_Seq):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int,
                 repeat: int, dtype):
        super().__init__()
        c = in_channels
        for r in range(repeat):
            self.add(f"block{r + 1}",
                     ResidualBlock(c, out_channels, kernel, stride if r == 0 else 1, dtype=dtype))
            c = out_channels

    def forward(self, x, train):
        for _, layer in self._children:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for _, layer in reversed(self._children):
            dout = layer.backward(dout)
        return dout


def build_network(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Network:
    """Instantiate a config as a runnable Network with He-initialized weights.

    Every weight tensor draws its own splitmix64 substream from `seed` in
    construction order, so builds are bit-reproducible.
    """
    shape_chain(config)
    net = Network()
    c = 3
    counts = {k: 0 for k in LAYER_KINDS}
    for spec in config.layers:
        counts[spec.kind] += 1
        tag = f"{spec.kind.lower()}{counts[spec.kind]}"
        if spec.kind == "Conv":
            net.add(tag, Conv2d(c, spec.out_channels, spec.kernel, spec.stride, dtype=dtype))
            c = spec.out_channels
        elif spec.kind == "BatchNorm":
            net.add(tag, BatchNorm2d(c, dtype=dtype))
        elif spec.kind == "ReLU":
            net.add(tag, ReLU())
        elif spec.kind == "MaxPool":
            net.add(tag, MaxPool2d(spec.kernel, spec.stride, spec.kernel // 2))
        elif spec.kind == "GlobalAvgPool":
            net.add(tag, GlobalAvgPool())
        elif spec.kind == "FullyConnected":
            net.add(tag, FullyConnected(c, spec.out_channels, dtype=dtype))
            c = spec.out_channels
        elif spec.kind == "ResidualBlock":
            stage = _ResStageModule(c, spec.out_channels, spec.kernel, spec.stride,
                                    spec.repeat, dtype)
            net.add(tag, stage)
            c = spec.out_channels
        elif spec.kind == "DenseBlock":
            block = _DenseBlockModule(c, spec.out_channels, spec.growth_rate,
                                      spec.repeat, spec.kernel, dtype)
            net.add(tag, block)
            c = block.out_channels
        elif spec.kind == "Transition":
            net.add(tag, Transition(c, spec.out_channels, dtype=dtype))
            c = spec.out_channels

    first = net._children[0][1]
    if isinstance(first, Conv2d):
        first.needs_input_grad = False  # nothing upstream consumes the image gradient

    seeds = SplitMix64(seed)
    for name in sorted(net.params()):
        arr = net.params()[name]
        sub = seeds.next_u64()
        # He init for conv kernels; the classifier head starts at zero so an
        # untrained model emits exactly symmetric logits (first-batch loss is
        # ln(num_classes)). Gammas stay 1, betas and the fc bias stay 0.
        if arr.ndim == 4:
            fan_in = arr.shape[1] * arr.shape[2] * arr.shape[3]
            arr[...] = he_init(arr.shape, fan_in, sub).astype(dtype)
    return net
