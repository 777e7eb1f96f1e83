"""Static analysis of architecture specs: shape inference, trainable
parameter counting, and FLOP estimation.

FLOP convention (stated in every report): 2 operations per multiply-
accumulate for convolutions and dense layers, 1 per element for
activations, 2 per element for normalization; padding, pooling, reshapes,
and dropout are free. Published FLOP figures follow no reconstructible
convention and are reported alongside for reference, never asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .arch import ArchitectureSpec, LayerSpec

FLOP_CONVENTION = ("2 ops per multiply-accumulate (conv/dense), "
                   "1 op per element (activation), 2 ops per element "
                   "(normalization); pooling/padding/reshape/dropout free")

# Reference totals for the original implementations of the twelve
# architectures, per benchmark input shape (channels, samples). BatchNorm
# layers contribute their 2 trainable parameters per channel here; the
# per-channel running statistics are excluded.
REFERENCE_PARAM_TOTALS = {
    "cnn1": {(6, 206): 1_036_922, (64, 156): 787_502, (64, 240): 1_207_502, (8, 206): 1_036_942},
    "ucnn1": {(6, 206): 1_036_922, (64, 156): 787_502, (64, 240): 1_207_502, (8, 206): 1_036_942},
    "cnn3": {(6, 206): 1_031_009, (64, 156): 781_067, (64, 240): 1_201_067, (8, 206): 1_031_011},
    "ucnn3": {(6, 206): 1_031_009, (64, 156): 781_067, (64, 240): 1_201_067, (8, 206): 1_031_011},
    "cnnr": {(6, 206): 19_848_098, (64, 156): 16_445_794, (64, 240): 21_950_818, (8, 206): 19_848_290},
    "deepconvnet": {(6, 206): 139_877, (64, 156): 174_927, (64, 240): 176_927, (8, 206): 141_127},
    "shallowconvnet": {(6, 206): 12_082, (64, 156): 104_322, (64, 240): 105_282, (8, 206): 15_282},
    "bn3": {(6, 206): 44_589, (64, 156): 39_489, (64, 240): 47_681, (8, 206): 44_625},
    "eegnet": {(6, 206): 1_394, (64, 156): 2_258, (64, 240): 2_354, (8, 206): 1_426},
    "oclnn": {(6, 206): 1_842, (64, 156): 11_762, (64, 240): 16_882, (8, 206): 2_290},
    "fcnn": {(6, 206): 2_477, (64, 156): 19_973, (64, 240): 30_725, (8, 206): 3_301},
    "sepconv1d": {(6, 206): 225, (64, 156): 1_361, (64, 240): 1_405, (8, 206): 265},
}

# Reference FLOP figures for the same input shapes (unknown convention).
REFERENCE_FLOP_TOTALS = {
    "sepconv1d": {(6, 206): 443, (64, 156): 2_715, (64, 240): 2_803, (8, 206): 523},
    "eegnet": {(6, 206): 2_801, (64, 156): 4_529, (64, 240): 4_721, (8, 206): 2_865},
    "fcnn": {(6, 206): 4_950, (64, 156): 39_942, (64, 240): 5_766, (8, 206): 6_598},
    "oclnn": {(6, 206): 3_653, (64, 156): 29_381, (64, 240): 353_076, (8, 206): 4_549},
}


class ShapeError(ValueError):
    """Raised when a spec cannot be shaped end to end."""


@dataclass
class LayerRow:
    name: str
    output_shape: tuple[int, ...]
    params: int
    flops: int


@dataclass
class ComplexityReport:
    architecture: str
    input_shape: tuple[int, int]
    rows: list[LayerRow]
    total_params: int
    total_flops: int
    warnings: list[str] = field(default_factory=list)
    counts_bn_running_stats: bool = False
    flop_convention: str = FLOP_CONVENTION
    reference_params: int | None = None
    reference_flops: int | None = None


def _pair(value) -> tuple[int, int]:
    if isinstance(value, tuple):
        return value
    return (value, value)


def _conv_length(length: int, kernel: int, stride: int, padding: str,
                 layer_name: str) -> int:
    if padding == "same":
        return math.ceil(length / stride)
    out = (length - kernel) // stride + 1
    if out < 1:
        raise ShapeError(
            f"layer {layer_name}: window {kernel} (stride {stride}) does not "
            f"fit in length {length}")
    return out


def _infer_layer(layer: LayerSpec, shape: tuple[int, ...], name: str) -> tuple[int, ...]:
    kind = layer.kind
    if kind == "zeropad1d":
        length, ch = shape
        return (length + 2 * layer.get("pad", 0), ch)
    if kind in ("conv1d", "sepconv1d"):
        length, _ = shape
        out = _conv_length(length, layer.get("kernel"), layer.get("stride", 1),
                           layer.get("padding", "valid"), name)
        return (out, layer.get("filters"))
    if kind in ("conv2d", "sepconv2d", "depthwiseconv2d"):
        if len(shape) != 3:
            raise ShapeError(f"layer {name}: expects (channels, h, w) input, got {shape}")
        ch, h, w = shape
        kh, kw = _pair(layer.get("kernel"))
        sh, sw = _pair(layer.get("stride", (1, 1)))
        padding = layer.get("padding", "valid")
        oh = _conv_length(h, kh, sh, padding, name)
        ow = _conv_length(w, kw, sw, padding, name)
        if kind == "depthwiseconv2d":
            return (ch * layer.get("depth_multiplier", 1), oh, ow)
        return (layer.get("filters"), oh, ow)
    if kind in ("maxpool", "avgpool"):
        if len(shape) == 2:
            length, ch = shape
            pool = layer.get("pool")
            stride = layer.get("stride", pool)
            return (_conv_length(length, pool, stride, "valid", name), ch)
        ch, h, w = shape
        ph, pw = _pair(layer.get("pool"))
        sh, sw = _pair(layer.get("stride", layer.get("pool")))
        return (ch, _conv_length(h, ph, sh, "valid", name),
                _conv_length(w, pw, sw, "valid", name))
    if kind == "dense":
        if len(shape) != 1:
            raise ShapeError(f"layer {name}: dense expects a flat input, got {shape}")
        if shape[0] < 1:
            raise ShapeError(f"layer {name}: dense input has no features")
        return (layer.get("units"),)
    if kind == "flatten":
        return (int(math.prod(shape)),)
    if kind == "reshape":
        target = layer.get("shape")
        if math.prod(target) != math.prod(shape):
            raise ShapeError(
                f"layer {name}: cannot reshape {shape} ({math.prod(shape)} "
                f"elements) to {target}")
        return tuple(target)
    if kind in ("activation", "dropout", "batchnorm"):
        return shape
    raise ShapeError(f"layer {name}: no shape rule for kind {kind!r}")


def infer_shapes(spec: ArchitectureSpec, input_shape: tuple[int, int] | None = None
                 ) -> list[tuple[int, ...]]:
    """Output shape after each layer; the flow starts as (samples, channels)."""
    channels, samples = input_shape or spec.input_shape
    shape: tuple[int, ...] = (samples, channels)
    shapes = []
    for i, layer in enumerate(spec.layers):
        shape = _infer_layer(layer, shape, f"#{i} {layer.kind}")
        shapes.append(shape)
    return shapes


def _channels_of(shape: tuple[int, ...]) -> int:
    if len(shape) == 2:  # (length, channels)
        return shape[1]
    if len(shape) == 3:  # (channels, h, w)
        return shape[0]
    return shape[0]


def _layer_params(layer: LayerSpec, in_shape, out_shape, bn_running: bool) -> int:
    kind = layer.kind
    bias = layer.get("use_bias", True)
    if kind == "conv1d":
        k = layer.get("kernel")
        c_in = in_shape[1]
        f = layer.get("filters")
        return k * c_in * f + (f if bias else 0)
    if kind == "sepconv1d":
        k = layer.get("kernel")
        c_in = in_shape[1]
        f = layer.get("filters")
        return k * c_in + c_in * f + (f if bias else 0)
    if kind == "conv2d":
        kh, kw = _pair(layer.get("kernel"))
        c_in = in_shape[0]
        f = layer.get("filters")
        return kh * kw * c_in * f + (f if bias else 0)
    if kind == "depthwiseconv2d":
        kh, kw = _pair(layer.get("kernel"))
        c_in = in_shape[0]
        m = layer.get("depth_multiplier", 1)
        return kh * kw * c_in * m + (c_in * m if bias else 0)
    if kind == "sepconv2d":
        kh, kw = _pair(layer.get("kernel"))
        c_in = in_shape[0]
        f = layer.get("filters")
        return kh * kw * c_in + c_in * f + (f if bias else 0)
    if kind == "dense":
        return in_shape[0] * layer.get("units") + (layer.get("units") if bias else 0)
    if kind == "batchnorm":
        per_channel = 4 if bn_running else 2
        return per_channel * _channels_of(in_shape)
    return 0


def _layer_flops(layer: LayerSpec, in_shape, out_shape) -> int:
    kind = layer.kind
    n_out = int(math.prod(out_shape))
    if kind == "conv1d":
        return 2 * out_shape[0] * layer.get("kernel") * in_shape[1] * layer.get("filters")
    if kind == "sepconv1d":
        p = out_shape[0]
        c_in = in_shape[1]
        return 2 * p * layer.get("kernel") * c_in + 2 * p * c_in * layer.get("filters")
    if kind == "conv2d":
        kh, kw = _pair(layer.get("kernel"))
        return 2 * out_shape[1] * out_shape[2] * kh * kw * in_shape[0] * layer.get("filters")
    if kind == "depthwiseconv2d":
        kh, kw = _pair(layer.get("kernel"))
        m = layer.get("depth_multiplier", 1)
        return 2 * out_shape[1] * out_shape[2] * kh * kw * in_shape[0] * m
    if kind == "sepconv2d":
        kh, kw = _pair(layer.get("kernel"))
        positions = out_shape[1] * out_shape[2]
        c_in = in_shape[0]
        return 2 * positions * kh * kw * c_in + 2 * positions * c_in * layer.get("filters")
    if kind == "dense":
        return 2 * in_shape[0] * layer.get("units")
    if kind == "activation":
        return n_out
    if kind == "batchnorm":
        return 2 * n_out
    return 0


def count_params(spec: ArchitectureSpec, input_shape: tuple[int, int] | None = None,
                 count_bn_running_stats: bool = False) -> ComplexityReport:
    """Per-layer and total parameter/FLOP accounting for one input shape."""
    channels, samples = input_shape or spec.input_shape
    shapes = infer_shapes(spec, (channels, samples))
    flow: tuple[int, ...] = (samples, channels)
    rows = []
    for i, layer in enumerate(spec.layers):
        out_shape = shapes[i]
        rows.append(LayerRow(
            name=f"{layer.kind}",
            output_shape=out_shape,
            params=_layer_params(layer, flow, out_shape, count_bn_running_stats),
            flops=_layer_flops(layer, flow, out_shape),
        ))
        flow = out_shape
    total_params = sum(r.params for r in rows)
    total_flops = sum(r.flops for r in rows)

    key = (channels, samples)
    reference = REFERENCE_PARAM_TOTALS.get(spec.name, {}).get(key)
    reference_flops = REFERENCE_FLOP_TOTALS.get(spec.name, {}).get(key)
    warnings = []
    if any(layer.kind == "batchnorm" for layer in spec.layers) and reference is not None:
        trainable_only = total_params if not count_bn_running_stats else (
            total_params - 2 * sum(_channels_of(shapes[i])
                                   for i, l in enumerate(spec.layers)
                                   if l.kind == "batchnorm"))
        with_stats = trainable_only + 2 * sum(
            _channels_of(shapes[i]) for i, l in enumerate(spec.layers)
            if l.kind == "batchnorm")
        warnings.append(
            f"{spec.name}: BatchNorm counting is convention-dependent; vs the "
            f"reference total {reference}: delta {trainable_only - reference} "
            f"counting trainable parameters only, {with_stats - reference} "
            f"counting running statistics too")
    return ComplexityReport(
        architecture=spec.name,
        input_shape=key,
        rows=rows,
        total_params=total_params,
        total_flops=total_flops,
        warnings=warnings,
        counts_bn_running_stats=count_bn_running_stats,
        reference_params=reference,
        reference_flops=reference_flops,
    )


def count_flops(spec: ArchitectureSpec, input_shape: tuple[int, int] | None = None) -> int:
    """Total FLOPs for one forward pass under the stated convention."""
    return count_params(spec, input_shape).total_flops


def _shape_str(shape: tuple[int, ...]) -> str:
    return "(" + ", ".join(str(v) for v in shape) + ")"


def format_report_text(report: ComplexityReport) -> str:
    lines = [
        f"architecture: {report.architecture}   input: "
        f"{report.input_shape[0]} channels x {report.input_shape[1]} samples",
        f"flop convention: {report.flop_convention}",
        f"batchnorm counting: "
        f"{'trainable + running stats' if report.counts_bn_running_stats else 'trainable only'}",
        "",
        f"{'layer':<18} {'output':<16} {'params':>12} {'flops':>12}",
    ]
    for row in report.rows:
        lines.append(f"{row.name:<18} {_shape_str(row.output_shape):<16} "
                     f"{row.params:>12,} {row.flops:>12,}")
    lines.append("")
    lines.append(f"{'TOTAL':<18} {'':<16} {report.total_params:>12,} {report.total_flops:>12,}")
    if report.reference_params is not None:
        lines.append(f"reference params: {report.reference_params:,}")
    if report.reference_flops is not None:
        lines.append(f"reference flops:  {report.reference_flops:,} (unknown convention)")
    for w in report.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def format_report_csv(report: ComplexityReport) -> str:
    lines = ["layer,output_shape,params,flops"]
    for row in report.rows:
        shape = "x".join(str(v) for v in row.output_shape)
        lines.append(f"{row.name},{shape},{row.params},{row.flops}")
    lines.append(f"TOTAL,,{report.total_params},{report.total_flops}")
    return "\n".join(lines) + "\n"


def report_as_dict(report: ComplexityReport) -> dict:
    return {
        "architecture": report.architecture,
        "input_shape": list(report.input_shape),
        "flop_convention": report.flop_convention,
        "counts_bn_running_stats": report.counts_bn_running_stats,
        "layers": [
            {"layer": r.name, "output_shape": list(r.output_shape),
             "params": r.params, "flops": r.flops}
            for r in report.rows
        ],
        "total_params": report.total_params,
        "total_flops": report.total_flops,
        "reference_params": report.reference_params,
        "reference_flops": report.reference_flops,
        "warnings": report.warnings,
    }
