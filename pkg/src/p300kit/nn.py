"""Dense numeric layer kernels with hand-derived gradients, activation
functions, initializers, and the trainable-model builder.

Everything runs in float64. Inputs flow as (batch, length, channels) for
convolutions and (batch, features) after flattening; the public kernel
functions also accept single instances without the batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arch import ArchitectureSpec
from .complexity import count_params, infer_shapes

LOG_CLAMP_LO = 1e-7
LOG_CLAMP_HI = 1e4
STANH_SCALE = 1.7159
STANH_SLOPE = 2.0 / 3.0


class AnalysisOnlyError(ValueError):
    """Raised when a spec contains layers without training support."""


# ---------------------------------------------------------------------------
# initializers

def glorot_uniform_init(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fans must be >= 1, got ({fan_in}, {fan_out})")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float64)


# ---------------------------------------------------------------------------
# activations

def activation_apply(kind: str, z: np.ndarray, phi: float = 1.0) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if kind == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "tanh":
        return np.tanh(z)
    if kind == "stanh":
        return STANH_SCALE * np.tanh(STANH_SLOPE * z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "elu":
        return np.where(z > 0, z, phi * np.expm1(np.minimum(z, 0.0)))
    if kind == "square":
        return z * z
    if kind == "log":
        return np.log(np.clip(z, LOG_CLAMP_LO, LOG_CLAMP_HI))
    if kind == "softmax":
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown activation kind {kind!r}")


def activation_grad(kind: str, z: np.ndarray, upstream: np.ndarray,
                    phi: float = 1.0) -> np.ndarray:
    """Gradient of the activation at pre-activation z, times upstream."""
    z = np.asarray(z, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if kind == "sigmoid":
        s = activation_apply("sigmoid", z)
        return upstream * s * (1.0 - s)
    if kind == "tanh":
        t = np.tanh(z)
        return upstream * (1.0 - t * t)
    if kind == "stanh":
        t = np.tanh(STANH_SLOPE * z)
        return upstream * (STANH_SCALE * STANH_SLOPE) * (1.0 - t * t)
    if kind == "relu":
        return upstream * (z > 0)
    if kind == "elu":
        return upstream * np.where(z > 0, 1.0, phi * np.exp(np.minimum(z, 0.0)))
    if kind == "square":
        return upstream * 2.0 * z
    if kind == "log":
        inside = (z > LOG_CLAMP_LO) & (z < LOG_CLAMP_HI)
        return np.where(inside, upstream / np.clip(z, LOG_CLAMP_LO, LOG_CLAMP_HI), 0.0)
    if kind == "softmax":
        p = activation_apply("softmax", z)
        dot = (upstream * p).sum(axis=-1, keepdims=True)
        return p * (upstream - dot)
    raise ValueError(f"unknown activation kind {kind!r}")


def dropout_apply(x: np.ndarray, p: float, training: bool,
                  rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: drop with probability p and scale survivors."""
    y, _ = _dropout_with_mask(x, p, training, rng)
    return y


def _dropout_with_mask(x, p, training, rng):
    x = np.asarray(x, dtype=np.float64)
    if not training or p == 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    return x * keep / (1.0 - p), keep


# ---------------------------------------------------------------------------
# convolution / dense kernels

def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    return x, False


def _strided_windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    # (B, L, C) -> read-only view (B, P, K, C)
    b, length, ch = x.shape
    p = (length - kernel) // stride + 1
    sb, sl, sc = x.strides
    return np.lib.stride_tricks.as_strided(
        x, shape=(b, p, kernel, ch), strides=(sb, sl * stride, sl, sc),
        writeable=False)


def zero_pad_1d(x: np.ndarray, pad: int) -> np.ndarray:
    """Prepend and append pad zero rows along the length axis."""
    if pad < 0:
        raise ValueError("pad must be >= 0")
    xb, squeeze = _as_batch(x)
    if pad == 0:
        out = xb.copy()
    else:
        b, length, ch = xb.shape
        out = np.zeros((b, length + 2 * pad, ch))
        out[:, pad:pad + length] = xb
    return out[0] if squeeze else out


def sepconv1d_forward(x, depth_kernels, point_weights, bias, stride: int):
    """Depthwise temporal convolution then pointwise channel mix.

    x: (L, C) or (B, L, C); depth_kernels: (K, C); point_weights: (C, F);
    bias: (F,). Valid cross-correlation at the given stride; output
    (P, F) with P = (L - K) // stride + 1.
    """
    xb, squeeze = _as_batch(x)
    y, _, _ = _sepconv1d_fwd(xb, depth_kernels, point_weights, bias, stride)
    return y[0] if squeeze else y


def _sepconv1d_fwd(xb, dk, pw, bias, stride):
    k = dk.shape[0]
    if xb.shape[1] < k:
        raise ValueError(f"input length {xb.shape[1]} shorter than kernel {k}")
    win = _strided_windows(xb, k, stride)
    depth = np.einsum("bpkc,kc->bpc", win, dk)
    return depth @ pw + bias, win, depth


def sepconv1d_backward(x, depth_kernels, point_weights, bias, stride: int, upstream):
    """Analytic gradients of sepconv1d_forward.

    Returns (input_grad, (depth_grad, point_grad, bias_grad)).
    """
    xb, squeeze = _as_batch(x)
    up = np.asarray(upstream, dtype=np.float64)
    if squeeze:
        up = up[None]
    _, win, depth = _sepconv1d_fwd(xb, depth_kernels, point_weights, bias, stride)
    dx, grads = _sepconv1d_bwd(xb, win, depth, depth_kernels, point_weights, stride, up)
    return (dx[0] if squeeze else dx), grads


def _sepconv1d_bwd(xb, win, depth, dk, pw, stride, up):
    db = up.sum(axis=(0, 1))
    dpw = np.einsum("bpc,bpf->cf", depth, up)
    ddepth = up @ pw.T
    ddk = np.einsum("bpkc,bpc->kc", win, ddepth)
    k = dk.shape[0]
    p = ddepth.shape[1]
    dx = np.zeros_like(xb)
    for kk in range(k):  # windows overlap when stride < kernel
        dx[:, kk:kk + p * stride:stride, :] += ddepth * dk[kk]
    return dx, (ddk, dpw, db)


def conv1d_forward(x, kernels, bias, stride: int):
    """Full 1-D convolution: kernels (K, C, F) over x (L, C) or (B, L, C)."""
    xb, squeeze = _as_batch(x)
    y, _ = _conv1d_fwd(xb, kernels, bias, stride)
    return y[0] if squeeze else y


def _conv1d_fwd(xb, kernels, bias, stride):
    k = kernels.shape[0]
    if xb.shape[1] < k:
        raise ValueError(f"input length {xb.shape[1]} shorter than kernel {k}")
    win = _strided_windows(xb, k, stride)
    return np.einsum("bpkc,kcf->bpf", win, kernels) + bias, win


def conv1d_backward(x, kernels, bias, stride: int, upstream):
    """Analytic gradients of conv1d_forward: (input_grad, (kernel_grad, bias_grad))."""
    xb, squeeze = _as_batch(x)
    up = np.asarray(upstream, dtype=np.float64)
    if squeeze:
        up = up[None]
    _, win = _conv1d_fwd(xb, kernels, bias, stride)
    dx, grads = _conv1d_bwd(xb, win, kernels, stride, up)
    return (dx[0] if squeeze else dx), grads


def _conv1d_bwd(xb, win, kernels, stride, up):
    db = up.sum(axis=(0, 1))
    dw = np.einsum("bpkc,bpf->kcf", win, up)
    k = kernels.shape[0]
    p = up.shape[1]
    dx = np.zeros_like(xb)
    contrib = np.einsum("bpf,kcf->bpkc", up, kernels)
    for kk in range(k):
        dx[:, kk:kk + p * stride:stride, :] += contrib[:, :, kk, :]
    return dx, (dw, db)


def dense_forward(x, weights, bias):
    """y = x @ W + b for x (D,) or (B, D), W (D, U), b (U,)."""
    x = np.asarray(x, dtype=np.float64)
    return x @ weights + bias


def dense_backward(x, weights, upstream):
    """Gradients of dense_forward: (input_grad, (weight_grad, bias_grad))."""
    x = np.asarray(x, dtype=np.float64)
    up = np.asarray(upstream, dtype=np.float64)
    if x.ndim == 1:
        return up @ weights.T, (np.outer(x, up), up.copy())
    return up @ weights.T, (x.T @ up, up.sum(axis=0))


# ---------------------------------------------------------------------------
# trainable model

@dataclass
class ParamBlock:
    name: str
    shape: tuple[int, ...]
    offset: int
    size: int = 0

    def __post_init__(self):
        self.size = int(np.prod(self.shape))


class ModelState:
    """Flat float64 parameter store with matching gradient buffer."""

    def __init__(self, blocks: list[ParamBlock], seed: int):
        total = sum(b.size for b in blocks)
        self.blocks = blocks
        self.params = np.zeros(total, dtype=np.float64)
        self.grads = np.zeros(total, dtype=np.float64)
        self.seed = seed

    @property
    def n_params(self) -> int:
        return self.params.size

    def param_view(self, block: ParamBlock) -> np.ndarray:
        return self.params[block.offset:block.offset + block.size].reshape(block.shape)

    def grad_view(self, block: ParamBlock) -> np.ndarray:
        return self.grads[block.offset:block.offset + block.size].reshape(block.shape)

    def zero_grads(self):
        self.grads[:] = 0.0


class _PadLayer:
    needs_params = False

    def __init__(self, pad):
        self.pad = pad

    def forward(self, x, training):
        return zero_pad_1d(x, self.pad)

    def backward(self, up):
        return up[:, self.pad:up.shape[1] - self.pad, :] if self.pad else up


class _SepConvLayer:
    """Depthwise + pointwise stages fused into one GEMM on materialized
    windows: y = win @ (depth_kernel outer pointwise), which is the same
    map with a different summation order."""

    needs_params = True

    def __init__(self, state, b_depth, b_point, b_bias, stride):
        self.state = state
        self.b_depth, self.b_point, self.b_bias = b_depth, b_point, b_bias
        self.stride = stride
        self._cache = None

    def forward(self, x, training):
        dk = self.state.param_view(self.b_depth)
        pw = self.state.param_view(self.b_point)
        bias = self.state.param_view(self.b_bias)
        k, c = dk.shape
        if x.shape[1] < k:
            raise ValueError(f"input length {x.shape[1]} shorter than kernel {k}")
        win = np.ascontiguousarray(_strided_windows(x, k, self.stride))
        b, p = win.shape[:2]
        flat = win.reshape(b * p, k * c)
        w_eff = (dk[:, :, None] * pw[None, :, :]).reshape(k * c, -1)
        y = (flat @ w_eff).reshape(b, p, -1) + bias
        self._cache = (flat, w_eff, (b, p, k, c), x.shape)
        return y

    def backward(self, up, need_dx=True):
        flat, w_eff, (b, p, k, c), x_shape = self._cache
        dk = self.state.param_view(self.b_depth)
        pw = self.state.param_view(self.b_point)
        f = up.shape[-1]
        up_flat = up.reshape(b * p, f)
        d_eff = (flat.T @ up_flat).reshape(k, c, f)
        self.state.grad_view(self.b_depth)[:] += (d_eff * pw[None]).sum(axis=2)
        self.state.grad_view(self.b_point)[:] += (d_eff * dk[:, :, None]).sum(axis=0)
        self.state.grad_view(self.b_bias)[:] += up_flat.sum(axis=0)
        if not need_dx:
            return None
        dwin = (up_flat @ w_eff.T).reshape(b, p, k, c)
        dx = np.zeros(x_shape)
        for kk in range(k):  # windows overlap when stride < kernel
            dx[:, kk:kk + p * self.stride:self.stride, :] += dwin[:, :, kk, :]
        return dx


class _ConvLayer:
    needs_params = True

    def __init__(self, state, b_kernel, b_bias, stride):
        self.state = state
        self.b_kernel, self.b_bias = b_kernel, b_bias
        self.stride = stride
        self._cache = None

    def forward(self, x, training):
        kernels = self.state.param_view(self.b_kernel)
        bias = self.state.param_view(self.b_bias)
        k, c, f = kernels.shape
        if x.shape[1] < k:
            raise ValueError(f"input length {x.shape[1]} shorter than kernel {k}")
        win = np.ascontiguousarray(_strided_windows(x, k, self.stride))
        b, p = win.shape[:2]
        flat = win.reshape(b * p, k * c)
        y = (flat @ kernels.reshape(k * c, f)).reshape(b, p, f) + bias
        self._cache = (flat, (b, p, k, c), x.shape)
        return y

    def backward(self, up, need_dx=True):
        flat, (b, p, k, c), x_shape = self._cache
        kernels = self.state.param_view(self.b_kernel)
        f = up.shape[-1]
        up_flat = up.reshape(b * p, f)
        self.state.grad_view(self.b_kernel)[:] += (flat.T @ up_flat).reshape(k, c, f)
        self.state.grad_view(self.b_bias)[:] += up_flat.sum(axis=0)
        if not need_dx:
            return None
        dwin = (up_flat @ kernels.reshape(k * c, f).T).reshape(b, p, k, c)
        dx = np.zeros(x_shape)
        for kk in range(k):
            dx[:, kk:kk + p * self.stride:self.stride, :] += dwin[:, :, kk, :]
        return dx


class _DenseLayer:
    needs_params = True

    def __init__(self, state, b_weight, b_bias):
        self.state = state
        self.b_weight, self.b_bias = b_weight, b_bias
        self._cache = None

    def forward(self, x, training):
        w = self.state.param_view(self.b_weight)
        b = self.state.param_view(self.b_bias)
        self._cache = x
        return x @ w + b

    def backward(self, up, need_dx=True):
        x = self._cache
        w = self.state.param_view(self.b_weight)
        self.state.grad_view(self.b_weight)[:] += x.T @ up
        self.state.grad_view(self.b_bias)[:] += up.sum(axis=0)
        if not need_dx:
            return None
        return up @ w.T


class _ActivationLayer:
    needs_params = False

    _FROM_OUTPUT = {"sigmoid", "tanh", "stanh", "softmax"}

    def __init__(self, fn, phi=1.0):
        self.fn = fn
        self.phi = phi
        self._z = None
        self._out = None

    def forward(self, x, training):
        out = activation_apply(self.fn, x, self.phi)
        if self.fn in self._FROM_OUTPUT:
            self._z, self._out = None, out
        else:
            self._z, self._out = x, None
        return out

    def backward(self, up):
        out = self._out
        if self.fn == "sigmoid":
            return up * out * (1.0 - out)
        if self.fn == "tanh":
            return up * (1.0 - out * out)
        if self.fn == "stanh":
            t = out / STANH_SCALE
            return up * (STANH_SCALE * STANH_SLOPE) * (1.0 - t * t)
        if self.fn == "softmax":
            dot = (up * out).sum(axis=-1, keepdims=True)
            return out * (up - dot)
        return activation_grad(self.fn, self._z, up, self.phi)


class _DropoutLayer:
    needs_params = False

    def __init__(self, p, rng):
        self.p = p
        self.rng = rng
        self._mask = None

    def forward(self, x, training):
        y, self._mask = _dropout_with_mask(x, self.p, training, self.rng)
        return y

    def backward(self, up):
        if self._mask is None:
            return up
        return up * self._mask / (1.0 - self.p)


class _FlattenLayer:
    needs_params = False

    def __init__(self):
        self._shape = None

    def forward(self, x, training):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, up):
        return up.reshape(self._shape)


class Model:
    """A trainable architecture instance: spec, flat state, layer chain.

    Owns its state and layer caches; one forward/backward pair at a time
    (single-threaded per model). Inputs are (trials, channels, samples)
    arrays as stored in an EpochSet.
    """

    def __init__(self, spec: ArchitectureSpec, seed: int = 0):
        if not spec.is_trainable():
            extra = sorted({l.kind for l in spec.layers}
                           - {"zeropad1d", "conv1d", "sepconv1d", "dense",
                              "flatten", "reshape", "activation", "dropout"})
            raise AnalysisOnlyError(
                f"architecture {spec.name!r} is analysis-only: layers "
                f"{extra} have no training support")
        self.spec = spec
        self.seed = seed
        self.shapes = infer_shapes(spec)
        self.output_dim = self.shapes[-1][-1]
        if len(self.shapes[-1]) != 1 or self.output_dim not in (1, 2):
            raise AnalysisOnlyError(
                f"architecture {spec.name!r} must end in a scalar or "
                f"two-class head, got output shape {self.shapes[-1]}")

        init_rng = np.random.default_rng([seed, 0])
        drop_rng = np.random.default_rng([seed, 1])
        blocks: list[ParamBlock] = []
        plan = []  # (builder args resolved after state allocation)
        offset = 0

        def add_block(name, shape):
            nonlocal offset
            block = ParamBlock(name, tuple(shape), offset)
            blocks.append(block)
            offset += block.size
            return block

        flow = (spec.samples, spec.channels)
        for i, layer in enumerate(spec.layers):
            kind = layer.kind
            out = self.shapes[i]
            if kind == "zeropad1d":
                plan.append(("pad", layer.get("pad", 0)))
            elif kind == "sepconv1d":
                k, f = layer.get("kernel"), layer.get("filters")
                c = flow[1]
                bd = add_block(f"sepconv1d#{i}.depth", (k, c))
                bp = add_block(f"sepconv1d#{i}.point", (c, f))
                bb = add_block(f"sepconv1d#{i}.bias", (f,))
                plan.append(("sepconv", bd, bp, bb, layer.get("stride", 1), k, c, f))
            elif kind == "conv1d":
                if layer.get("padding", "valid") != "valid":
                    raise AnalysisOnlyError(
                        f"architecture {spec.name!r} uses conv1d padding="
                        f"{layer.get('padding')!r}, which is analysis-only")
                k, f = layer.get("kernel"), layer.get("filters")
                c = flow[1]
                bk = add_block(f"conv1d#{i}.kernel", (k, c, f))
                bb = add_block(f"conv1d#{i}.bias", (f,))
                plan.append(("conv", bk, bb, layer.get("stride", 1), k, c, f))
            elif kind == "dense":
                d, u = flow[0], layer.get("units")
                bw = add_block(f"dense#{i}.weight", (d, u))
                bb = add_block(f"dense#{i}.bias", (u,))
                plan.append(("dense", bw, bb, d, u))
            elif kind == "activation":
                plan.append(("act", layer.get("fn"), layer.get("phi", 1.0)))
            elif kind == "dropout":
                plan.append(("dropout", layer.get("p")))
            elif kind in ("flatten", "reshape"):
                # reshape targets in trainable specs are flat vectors
                plan.append(("flatten",))
            flow = out

        self.state = ModelState(blocks, seed)
        expected = count_params(spec).total_params
        if self.state.n_params != expected:
            raise AssertionError(
                f"parameter allocation ({self.state.n_params}) disagrees with "
                f"static count ({expected}) for {spec.name!r}")

        self.layers = []
        for item in plan:
            tag = item[0]
            if tag == "pad":
                self.layers.append(_PadLayer(item[1]))
            elif tag == "sepconv":
                _, bd, bp, bb, stride, k, c, f = item
                self.state.param_view(bd)[:] = glorot_uniform_init(
                    (k, c), fan_in=k * c, fan_out=k, rng=init_rng)
                self.state.param_view(bp)[:] = glorot_uniform_init(
                    (c, f), fan_in=c, fan_out=f, rng=init_rng)
                self.layers.append(_SepConvLayer(self.state, bd, bp, bb, stride))
            elif tag == "conv":
                _, bk, bb, stride, k, c, f = item
                self.state.param_view(bk)[:] = glorot_uniform_init(
                    (k, c, f), fan_in=k * c, fan_out=k * f, rng=init_rng)
                self.layers.append(_ConvLayer(self.state, bk, bb, stride))
            elif tag == "dense":
                _, bw, bb, d, u = item
                self.state.param_view(bw)[:] = glorot_uniform_init(
                    (d, u), fan_in=d, fan_out=u, rng=init_rng)
                self.layers.append(_DenseLayer(self.state, bw, bb))
            elif tag == "act":
                self.layers.append(_ActivationLayer(item[1], item[2]))
            elif tag == "dropout":
                self.layers.append(_DropoutLayer(item[1], drop_rng))
            elif tag == "flatten":
                self.layers.append(_FlattenLayer())
        self._first_param_idx = next(
            (i for i, l in enumerate(self.layers) if l.needs_params), 0)

    @property
    def params(self) -> np.ndarray:
        return self.state.params

    @property
    def grads(self) -> np.ndarray:
        return self.state.grads

    def zero_grads(self):
        self.state.zero_grads()

    def prepare_flow(self, h: np.ndarray) -> tuple[np.ndarray, int]:
        """Pre-apply the leading parameter-free per-trial layers (padding,
        flattening) to a whole (trials, samples, channels) tensor.

        Batches gathered from the result enter forward_flow at the returned
        layer index; the skipped layers sit below the first parameterized
        layer and never participate in backward passes.
        """
        start = 0
        for layer in self.layers[:self._first_param_idx]:
            if not isinstance(layer, (_PadLayer, _FlattenLayer)):
                break
            h = layer.forward(h, False)
            start += 1
        return h, start

    def forward_flow(self, h: np.ndarray, training: bool = False,
                     start: int = 0) -> np.ndarray:
        """Forward pass on pre-transposed (trials, samples, channels) input."""
        for layer in self.layers[start:]:
            h = layer.forward(h, training)
        return h[:, 0] if self.output_dim == 1 else h

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        """Class probabilities for a (trials, channels, samples) batch.

        Returns (trials,) for a sigmoid head, (trials, 2) for softmax.
        """
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        out = self.forward_flow(np.ascontiguousarray(x.transpose(0, 2, 1)), training)
        return out[0] if squeeze else out

    def backward(self, upstream: np.ndarray, want_input_grad: bool = False):
        """Accumulate parameter gradients from dLoss/dOutput of the last forward.

        Propagation below the first parameterized layer is skipped unless
        the input gradient is requested, in which case it is returned as a
        (trials, channels, samples) array.
        """
        up = np.asarray(upstream, dtype=np.float64)
        if self.output_dim == 1 and up.ndim == 1:
            up = up[:, None]
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if layer.needs_params:
                need_dx = want_input_grad or i > self._first_param_idx
                up = layer.backward(up, need_dx)
                if up is None:
                    return None
            else:
                up = layer.backward(up)
        return up.transpose(0, 2, 1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Target-class score per trial in (0, 1), dropout off."""
        out = self.forward(x, training=False)
        if self.output_dim == 2:
            return out[..., 1]
        return out


def build_model(spec: ArchitectureSpec, seed: int = 0) -> Model:
    return Model(spec, seed)


def model_forward(spec: ArchitectureSpec, model: Model, x: np.ndarray,
                  training: bool = False) -> np.ndarray:
    """Functional wrapper over Model.forward for a prebuilt model."""
    if model.spec is not spec and model.spec != spec:
        raise ValueError("model was built from a different spec")
    return model.forward(x, training)
