"""Dense numpy kernels for the convolutional auto-encoder.

Every kernel works on plain ``numpy.ndarray`` tensors in channels-last
(batch, height, width, channel) layout and is paired with an explicit
backward function. Convolution kernels keep the (out, in, 3, 3) layout.
There is no autodiff graph: callers keep whatever the forward pass returns
as cache and hand it back to the matching backward call.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor extents do not line up."""


@dataclass
class ConvLayer:
    """3x3 same-padding convolution parameters.

    ``kernels`` has shape (out_ch, in_ch, 3, 3) and ``bias`` has shape
    (out_ch,).
    """

    kernels: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.kernels.ndim != 4 or self.kernels.shape[2:] != (3, 3):
            raise ShapeError(f"kernel spatial size must be 3x3, got shape {self.kernels.shape}")
        if self.bias.shape != (self.kernels.shape[0],):
            raise ShapeError(
                f"bias length {self.bias.shape} does not match out_ch={self.kernels.shape[0]}"
            )

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]

    @property
    def n_params(self) -> int:
        return self.kernels.size + self.bias.size

    def astype(self, dtype) -> "ConvLayer":
        return ConvLayer(self.kernels.astype(dtype), self.bias.astype(dtype))


@dataclass
class ConvCache:
    input_shape: tuple
    # per chunk: padded, row-flattened input (or its im2col rows for thin inputs)
    chunks: list


# images per matmul chunk; keeps the working set of one chunk near L2 size
CHUNK = 8
# below this many input channels a single im2col matmul beats nine tap matmuls
_THIN = 16


def _check_image_tensor(x: np.ndarray, name: str = "input"):
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-d (batch, height, width, channel), got ndim={x.ndim}")
    if x.shape[1] < 1 or x.shape[2] < 1:
        raise ShapeError(f"{name} spatial dims must be >= 1, got {x.shape[1:3]}")


def _tap_offsets(w: int):
    wp = w + 2
    return [di * wp + dj for di in range(3) for dj in range(3)]


def _pad_flat(x: np.ndarray) -> np.ndarray:
    """Zero-pad by one pixel and flatten to rows; a 3x3 tap becomes a row offset."""
    nb, h, w, c = x.shape
    rows = nb * (h + 2) * (w + 2)
    flat = np.zeros((rows + 2 * (w + 2) + 2, c), dtype=x.dtype)
    flat[:rows].reshape(nb, h + 2, w + 2, c)[:, 1:h + 1, 1:w + 1] = x
    return flat


def _taps(kernels: np.ndarray) -> np.ndarray:
    # (out, in, 3, 3) -> (9, in, out)
    o, c = kernels.shape[:2]
    return np.ascontiguousarray(kernels.transpose(2, 3, 1, 0).reshape(9, c, o))


def _correlate(x: np.ndarray, taps: np.ndarray, keep: bool):
    """Same-padding 3x3 correlation of NHWC ``x`` with (9, in, out) taps, no bias."""
    b, h, w, c = x.shape
    o = taps.shape[2]
    offs = _tap_offsets(w)
    out = np.empty((b, h, w, o), dtype=np.result_type(x, taps))
    saved = []
    for s in range(0, b, CHUNK):
        xc = x[s:s + CHUNK]
        nb = xc.shape[0]
        m = nb * (h + 2) * (w + 2)
        flat = _pad_flat(xc)
        if c < _THIN:
            cols = np.concatenate([flat[k:k + m] for k in offs], axis=1)
            y = cols @ taps.reshape(9 * c, o)
            if keep:
                saved.append(cols)
        else:
            y = flat[:m] @ taps[0]
            for t in range(1, 9):
                y += flat[offs[t]:offs[t] + m] @ taps[t]
            if keep:
                saved.append(flat)
        out[s:s + nb] = y.reshape(nb, h + 2, w + 2, o)[:, :h, :w]
    return out, saved


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> tuple[np.ndarray, ConvCache]:
    """Same-padding 3x3 cross-correlation returning (output, cache)."""
    _check_image_tensor(x)
    if x.shape[3] != layer.in_channels:
        raise ShapeError(
            f"channel dimension mismatch: input has {x.shape[3]} channels, "
            f"layer expects in_ch={layer.in_channels}"
        )
    out, saved = _correlate(x, _taps(layer.kernels), keep=True)
    out += layer.bias
    return out, ConvCache(x.shape, saved)


def conv2d_same(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Zero-padded (width 1) 3x3 cross-correlation plus per-channel bias.

    Output spatial size equals the input's.
    """
    _check_image_tensor(x)
    if x.shape[3] != layer.in_channels:
        raise ShapeError(
            f"channel dimension mismatch: input has {x.shape[3]} channels, "
            f"layer expects in_ch={layer.in_channels}"
        )
    out, _ = _correlate(x, _taps(layer.kernels), keep=False)
    out += layer.bias
    return out


def conv2d_backward(grad_out: np.ndarray, cache: ConvCache | None, layer: ConvLayer,
                    need_input_grad: bool = True):
    """Gradients of :func:`conv2d_forward`.

    Returns ``(grad_input, grad_kernels, grad_bias)``; ``grad_input`` is None
    when ``need_input_grad`` is false (first layer of a network).
    """
    if cache is None:
        raise ValueError("conv2d_backward needs the cache returned by conv2d_forward")
    b, h, w, c = cache.input_shape
    o = layer.out_channels
    expected = (b, h, w, o)
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output shape {expected}")

    offs = _tap_offsets(w)
    gtaps = np.zeros((9, c, o), dtype=np.result_type(grad_out, layer.kernels))
    for i, s in enumerate(range(0, b, CHUNK)):
        gc = grad_out[s:s + CHUNK]
        nb = gc.shape[0]
        m = nb * (h + 2) * (w + 2)
        g = np.zeros((m, o), dtype=grad_out.dtype)
        g.reshape(nb, h + 2, w + 2, o)[:, :h, :w] = gc
        saved = cache.chunks[i]
        if c < _THIN:
            gtaps += (saved.T @ g).reshape(9, c, o)
        else:
            for t in range(9):
                gtaps[t] += saved[offs[t]:offs[t] + m].T @ g
    grad_kernels = gtaps.reshape(3, 3, c, o).transpose(3, 2, 0, 1).astype(layer.kernels.dtype)
    grad_bias = grad_out.sum(axis=(0, 1, 2))

    grad_input = None
    if need_input_grad:
        # correlation with the spatially flipped kernel, in/out channels swapped
        flipped = _taps(layer.kernels[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        grad_input, _ = _correlate(grad_out, flipped, keep=False)
    return grad_input, np.ascontiguousarray(grad_kernels), grad_bias


def maxpool_2x2_ceil(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pooling in ceil mode (a 7-wide map pools to 4).

    Returns the pooled tensor and, for every output cell, the flat
    ``row * width + col`` index of the winning input pixel. Ties go to the
    lowest flat index.
    """
    _check_image_tensor(x)
    b, h, w, c = x.shape
    ho, wo = -(-h // 2), -(-w // 2)
    if (h, w) == (2 * ho, 2 * wo):
        xp = x
    else:
        xp = np.full((b, 2 * ho, 2 * wo, c), -np.inf, dtype=x.dtype)
        xp[:, :h, :w] = x
    quads = (xp[:, 0::2, 0::2], xp[:, 0::2, 1::2], xp[:, 1::2, 0::2], xp[:, 1::2, 1::2])
    out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
    # quadrant order (0,0), (0,1), (1,0), (1,1) follows input flat order, so the
    # first quadrant holding the max is the lowest flat index
    k = np.full(out.shape, 3, dtype=np.int64)
    for q in (2, 1, 0):
        k[quads[q] == out] = q
    rows = 2 * np.arange(ho)[:, None, None] + k // 2
    cols = 2 * np.arange(wo)[None, :, None] + k % 2
    return out, rows * w + cols


def maxpool_backward(grad_out: np.ndarray, indices: np.ndarray, input_shape) -> np.ndarray:
    """Route ``grad_out`` back to the argmax positions recorded by the forward pass."""
    b, h, w, c = input_shape
    expected = (b, -(-h // 2), -(-w // 2), c)
    if indices.shape != expected or grad_out.shape != expected:
        raise ShapeError(
            f"stale pooling indices: indices {indices.shape}, grad_out {grad_out.shape}, "
            f"expected {expected} for input {tuple(input_shape)}"
        )
    grad_in = np.zeros((b, h * w, c), dtype=grad_out.dtype)
    np.put_along_axis(grad_in, indices.reshape(b, -1, c), grad_out.reshape(b, -1, c), axis=1)
    return grad_in.reshape(b, h, w, c)


def upsample_nearest_to(x: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Nearest-neighbour 2x upsampling cropped at the trailing edge.

    The target must be one of {2h-1, 2h} x {2w-1, 2w}, i.e. the inverse of a
    ceil-mode halving.
    """
    _check_image_tensor(x)
    h, w = x.shape[1:3]
    if target_h not in (2 * h - 1, 2 * h) or target_w not in (2 * w - 1, 2 * w):
        raise ShapeError(
            f"upsample target {target_h}x{target_w} not reachable from {h}x{w}; "
            f"allowed heights {{{2 * h - 1}, {2 * h}}}, widths {{{2 * w - 1}, {2 * w}}}"
        )
    b, c = x.shape[0], x.shape[3]
    up = np.broadcast_to(x[:, :, None, :, None, :], (b, h, 2, w, 2, c)).reshape(b, 2 * h, 2 * w, c)
    return np.ascontiguousarray(up[:, :target_h, :target_w])


def upsample_backward(grad_out: np.ndarray, input_shape) -> np.ndarray:
    b, h, w, c = input_shape
    th, tw = grad_out.shape[1:3]
    if (grad_out.shape[0], grad_out.shape[3]) != (b, c) or th not in (2 * h - 1, 2 * h) \
            or tw not in (2 * w - 1, 2 * w):
        raise ShapeError(f"grad_out {grad_out.shape} does not match upsampled {tuple(input_shape)}")
    if (th, tw) == (2 * h, 2 * w):
        g = grad_out
    else:
        g = np.zeros((b, 2 * h, 2 * w, c), dtype=grad_out.dtype)
        g[:, :th, :tw] = grad_out
    return g.reshape(b, h, 2, w, 2, c).sum(axis=(2, 4))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, activations: np.ndarray) -> np.ndarray:
    # subgradient at 0 is 0
    return grad_out * (activations > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form: no overflow, and small outputs keep full relative
    # precision so saturated units still pass a nonzero gradient
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    # keep the result inside the open interval; the floor at machine epsilon
    # also keeps backward products clear of (very slow) subnormal floats
    one = x.dtype.type(1)
    return np.clip(out, np.finfo(x.dtype).eps, np.nextafter(one, x.dtype.type(0)), out=out)


def sigmoid_backward(grad_out: np.ndarray, activations: np.ndarray) -> np.ndarray:
    return grad_out * activations * (1 - activations)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``pred``."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff, dtype=np.float64))
    return loss, (2.0 / diff.size) * diff


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``params`` and ``grads`` map parameter names to arrays. Moment buffers
    are created (zeroed) on first sight of a name.
    """
    if params.keys() != grads.keys():
        raise KeyError(f"parameter/gradient names differ: {sorted(params.keys() ^ grads.keys())}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params
