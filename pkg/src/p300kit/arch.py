"""Declarative architecture specs, their text serialization, and the twelve
built-in P300 detection architectures.

A spec is an ordered list of layers with hyperparameters. The same spec
object drives both the trainable-model builder (sepconv1d, fcnn, oclnn) and
the static shape/parameter/FLOP analyzer (all twelve).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

LAYER_KINDS = frozenset({
    "zeropad1d", "conv1d", "sepconv1d", "conv2d", "depthwiseconv2d",
    "sepconv2d", "dense", "flatten", "reshape", "activation", "dropout",
    "batchnorm", "maxpool", "avgpool",
})

ACTIVATION_KINDS = frozenset({
    "log", "square", "sigmoid", "tanh", "stanh", "softmax", "relu", "elu",
})

TRAINABLE_ARCHITECTURES = ("sepconv1d", "fcnn", "oclnn")

_TUPLE_KEYS = {"kernel", "stride", "pool"}


@dataclass
class LayerSpec:
    kind: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "activation":
            fn = self.options.get("fn")
            if fn not in ACTIVATION_KINDS:
                raise ValueError(f"unknown activation {fn!r}")

    def get(self, key, default=None):
        return self.options.get(key, default)


@dataclass
class ArchitectureSpec:
    name: str
    input_shape: tuple[int, int]  # (channels, samples)
    layers: list[LayerSpec]

    @property
    def channels(self) -> int:
        return self.input_shape[0]

    @property
    def samples(self) -> int:
        return self.input_shape[1]

    def is_trainable(self) -> bool:
        trainable_kinds = {"zeropad1d", "conv1d", "sepconv1d", "dense",
                           "flatten", "reshape", "activation", "dropout"}
        return all(layer.kind in trainable_kinds for layer in self.layers)


def _fmt_value(key: str, value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        sep = "x" if key in _TUPLE_KEYS else ","
        return sep.join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key: str, raw: str):
    if key in _TUPLE_KEYS and "x" in raw:
        return tuple(int(v) for v in raw.split("x"))
    if key == "shape":
        return tuple(int(v) for v in raw.split(","))
    if raw == "true":
        return True
    if raw == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def format_architecture(spec: ArchitectureSpec) -> str:
    """Serialize a spec to the plain-text format (one layer per line)."""
    lines = [f"name {spec.name}", f"input {spec.channels} {spec.samples}"]
    for layer in spec.layers:
        parts = [layer.kind]
        parts += [f"{k}={_fmt_value(k, v)}" for k, v in layer.options.items()]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_architecture(text: str) -> ArchitectureSpec:
    """Parse the plain-text spec format produced by format_architecture.

    Grammar: optional comment lines starting with '#', one `name <id>` line,
    one `input <channels> <samples>` line, then one layer per line as
    `kind key=value ...`.
    """
    name = None
    input_shape = None
    layers = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        head = parts[0]
        if head == "name":
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'name <identifier>'")
            name = parts[1]
        elif head == "input":
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'input <channels> <samples>'")
            input_shape = (int(parts[1]), int(parts[2]))
        else:
            options = {}
            for item in parts[1:]:
                if "=" not in item:
                    raise ValueError(f"line {lineno}: expected key=value, got {item!r}")
                key, raw_val = item.split("=", 1)
                options[key] = _parse_value(key, raw_val)
            try:
                layers.append(LayerSpec(head, options))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    if name is None or input_shape is None:
        raise ValueError("spec text must contain 'name' and 'input' lines")
    return ArchitectureSpec(name, input_shape, layers)


def _layer(kind: str, **options) -> LayerSpec:
    return LayerSpec(kind, options)


def sepconv1d_architecture(channels: int, samples: int, filters: int = 4) -> ArchitectureSpec:
    """Depthwise separable temporal convolution feeding one sigmoid neuron.

    Kernel 16 at stride 8 over the zero-padded signal; the depthwise stage
    is unbiased, the pointwise stage carries the bias.
    """
    return ArchitectureSpec(
        "sepconv1d", (channels, samples),
        [
            _layer("zeropad1d", pad=4),
            _layer("sepconv1d", filters=filters, kernel=16, stride=8),
            _layer("activation", fn="tanh"),
            _layer("flatten"),
            _layer("dense", units=1),
            _layer("activation", fn="sigmoid"),
        ])


def fcnn_architecture(channels: int, samples: int) -> ArchitectureSpec:
    """Two hidden tanh neurons over the flattened signal, sigmoid output."""
    return ArchitectureSpec(
        "fcnn", (channels, samples),
        [
            _layer("reshape", shape=(channels * samples,)),
            _layer("dense", units=2),
            _layer("activation", fn="tanh"),
            _layer("flatten"),
            _layer("dense", units=1),
            _layer("activation", fn="sigmoid"),
        ])


def oclnn_segments() -> int:
    return 15


def oclnn_architecture(channels: int, samples: int) -> ArchitectureSpec:
    """One temporal convolution splitting the signal into 15 segments.

    Kernel and stride equal ceil(samples / 15); the signal is zero padded as
    evenly as possible so 15 windows fit.
    """
    segments = oclnn_segments()
    kernel = math.ceil(samples / segments)
    pad = math.ceil((segments * kernel - samples) / 2)
    return ArchitectureSpec(
        "oclnn", (channels, samples),
        [
            _layer("zeropad1d", pad=pad),
            _layer("conv1d", filters=16, kernel=kernel, stride=kernel),
            _layer("activation", fn="relu"),
            _layer("dropout", p=0.25),
            _layer("flatten"),
            _layer("dense", units=2),
            _layer("activation", fn="softmax"),
        ])


def _cnn1_family(name: str, channels: int, samples: int, first_filters: int,
                 head: str) -> ArchitectureSpec:
    return ArchitectureSpec(
        name, (channels, samples),
        [
            _layer("conv1d", filters=first_filters, kernel=1, padding="same"),
            _layer("activation", fn="stanh"),
            _layer("conv1d", filters=50, kernel=13, padding="same"),
            _layer("activation", fn="stanh"),
            _layer("flatten"),
            _layer("dense", units=100),
            _layer("activation", fn="sigmoid"),
            _layer("dense", units=2),
            _layer("activation", fn=head),
        ])


def cnn1_architecture(channels: int, samples: int) -> ArchitectureSpec:
    return _cnn1_family("cnn1", channels, samples, 10, "sigmoid")


def ucnn1_architecture(channels: int, samples: int) -> ArchitectureSpec:
    return _cnn1_family("ucnn1", channels, samples, 10, "softmax")


def cnn3_architecture(channels: int, samples: int) -> ArchitectureSpec:
    return _cnn1_family("cnn3", channels, samples, 1, "sigmoid")


def ucnn3_architecture(channels: int, samples: int) -> ArchitectureSpec:
    return _cnn1_family("ucnn3", channels, samples, 1, "softmax")


def cnnr_architecture(channels: int, samples: int) -> ArchitectureSpec:
    return ArchitectureSpec(
        "cnnr", (channels, samples),
        [
            _layer("conv1d", filters=96, kernel=1),
            _layer("activation", fn="relu"),
            _layer("maxpool", pool=3, stride=2),
            _layer("conv1d", filters=128, kernel=6),
            _layer("activation", fn="relu"),
            _layer("maxpool", pool=3, stride=2),
            _layer("conv1d", filters=128, kernel=6),
            _layer("activation", fn="relu"),
            _layer("flatten"),
            _layer("dense", units=2048),
            _layer("activation", fn="relu"),
            _layer("dropout", p=0.8),
            _layer("dense", units=4096),
            _layer("activation", fn="relu"),
            _layer("dropout", p=0.8),
            _layer("dense", units=2),
            _layer("activation", fn="softmax"),
        ])


def deepconvnet_architecture(channels: int, samples: int) -> ArchitectureSpec:
    layers = [
        _layer("reshape", shape=(1, channels, samples)),
        _layer("conv2d", filters=25, kernel=(1, 5)),
        _layer("conv2d", filters=25, kernel=(channels, 1)),
        _layer("batchnorm"),
        _layer("activation", fn="elu"),
        _layer("maxpool", pool=(1, 2)),
        _layer("dropout", p=0.5),
    ]
    for filters in (50, 100, 200):
        layers += [
            _layer("conv2d", filters=filters, kernel=(1, 5)),
            _layer("batchnorm"),
            _layer("activation", fn="elu"),
            _layer("maxpool", pool=(1, 2)),
            _layer("dropout", p=0.5),
        ]
    layers += [
        _layer("flatten"),
        _layer("dense", units=2),
        _layer("activation", fn="softmax"),
    ]
    return ArchitectureSpec("deepconvnet", (channels, samples), layers)


def shallowconvnet_architecture(channels: int, samples: int) -> ArchitectureSpec:
    return ArchitectureSpec(
        "shallowconvnet", (channels, samples),
        [
            _layer("reshape", shape=(1, channels, samples)),
            _layer("conv2d", filters=40, kernel=(1, 13)),
            _layer("conv2d", filters=40, kernel=(channels, 1), use_bias=False),
            _layer("batchnorm"),
            _layer("activation", fn="square"),
            _layer("avgpool", pool=(1, 35), stride=(1, 7)),
            _layer("activation", fn="log"),
            _layer("dropout", p=0.5),
            _layer("flatten"),
            _layer("dense", units=2),
            _layer("activation", fn="softmax"),
        ])


def bn3_architecture(channels: int, samples: int) -> ArchitectureSpec:
    return ArchitectureSpec(
        "bn3", (channels, samples),
        [
            _layer("batchnorm"),
            _layer("conv1d", filters=16, kernel=1),
            _layer("activation", fn="relu"),
            _layer("conv1d", filters=16, kernel=20, stride=20, padding="same"),
            _layer("activation", fn="relu"),
            _layer("batchnorm"),
            _layer("activation", fn="relu"),
            _layer("flatten"),
            _layer("dense", units=128),
            _layer("activation", fn="tanh"),
            _layer("dropout", p=0.8),
            _layer("dense", units=128),
            _layer("activation", fn="tanh"),
            _layer("dropout", p=0.8),
            _layer("dense", units=1),
            _layer("activation", fn="sigmoid"),
        ])


def eegnet_architecture(channels: int, samples: int) -> ArchitectureSpec:
    """Temporal conv, depthwise spatial conv, separable conv, softmax head.

    Configured with 8 temporal filters, depth multiplier 2, and 16
    separable filters; this configuration reproduces the reference
    parameter totals on all four benchmark input shapes (see the
    discrepancy ledger for the conflicting per-layer figures).
    """
    return ArchitectureSpec(
        "eegnet", (channels, samples),
        [
            _layer("reshape", shape=(1, channels, samples)),
            _layer("conv2d", filters=8, kernel=(1, 64), padding="same", use_bias=False),
            _layer("batchnorm"),
            _layer("depthwiseconv2d", kernel=(channels, 1), depth_multiplier=2,
                   use_bias=False),
            _layer("batchnorm"),
            _layer("activation", fn="elu"),
            _layer("avgpool", pool=(1, 4)),
            _layer("dropout", p=0.5),
            _layer("sepconv2d", filters=16, kernel=(1, 16), padding="same",
                   use_bias=False),
            _layer("batchnorm"),
            _layer("activation", fn="elu"),
            _layer("avgpool", pool=(1, 8)),
            _layer("dropout", p=0.5),
            _layer("flatten"),
            _layer("dense", units=2),
            _layer("activation", fn="softmax"),
        ])


BUILTIN_FACTORIES = {
    "cnn1": cnn1_architecture,
    "ucnn1": ucnn1_architecture,
    "cnn3": cnn3_architecture,
    "ucnn3": ucnn3_architecture,
    "cnnr": cnnr_architecture,
    "deepconvnet": deepconvnet_architecture,
    "shallowconvnet": shallowconvnet_architecture,
    "bn3": bn3_architecture,
    "eegnet": eegnet_architecture,
    "oclnn": oclnn_architecture,
    "fcnn": fcnn_architecture,
    "sepconv1d": sepconv1d_architecture,
}


def builtin_names() -> list[str]:
    return list(BUILTIN_FACTORIES)


def get_architecture(name: str, channels: int, samples: int,
                     filters: int | None = None) -> ArchitectureSpec:
    """Instantiate a built-in architecture for the given input shape."""
    key = name.lower().replace("-", "").replace("_", "").replace("^", "")
    if key not in BUILTIN_FACTORIES:
        raise ValueError(
            f"unknown architecture {name!r}; available: {', '.join(builtin_names())}")
    if key == "sepconv1d":
        return sepconv1d_architecture(channels, samples,
                                      filters if filters is not None else 4)
    if filters is not None:
        raise ValueError(f"--filters only applies to sepconv1d, not {name!r}")
    return BUILTIN_FACTORIES[key](channels, samples)


def builtin_architectures(channels: int = 6, samples: int = 206) -> list[ArchitectureSpec]:
    """All twelve built-in architectures instantiated for one input shape."""
    return [get_architecture(name, channels, samples) for name in BUILTIN_FACTORIES]
