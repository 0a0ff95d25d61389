"""Dense 4-D tensor kernels: 2-D convolution, ReLU, elementwise add.

Tensors are numpy arrays of shape (batch, channels, height, width),
row-major, in float32 (training) or float64 (gradient-check mode).
Convolution here means cross-correlation (no kernel flip) with zero
padding of (k-1)/2, so spatial shape is always preserved; kernels must
be square with odd size.

Two convolution paths exist: a naive direct loop (`conv2d_forward_reference`,
the semantic reference) and an im2col + matmul fast path (`conv2d_forward`,
the default). The fast path must agree with the reference to 1e-5
relative; tests enforce that. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SINGLE = np.float32
DOUBLE = np.float64

# Ceiling on im2col buffer elements before the fast path switches to
# row-band processing; keeps peak memory bounded on full-size images.
_COL_ELEMS_BUDGET = 48 * 1024 * 1024


class ConfigurationError(ValueError):
    """Shape or parameter mismatch between tensors and layer config."""


@dataclass
class ConvParams(object):
    """Square-kernel convolution parameters.

    weights: (out_channels, in_channels, k, k); bias: (out_channels,)
    or None for bias-free layers. k must be odd so same-padding is
    symmetric.
    """

    weights: np.ndarray
    bias: np.ndarray | None = None
    decay_exempt: bool = field(default=False, compare=False)

    def __post_init__(self):
        w = self.weights
        if w.ndim != 4:
            raise ConfigurationError("weights must be 4-D (out, in, k, k)")
        if w.shape[2] != w.shape[3]:
            raise ConfigurationError("kernel must be square")
        if w.shape[2] % 2 != 1:
            raise ConfigurationError("kernel size must be odd")
        if self.bias is not None and self.bias.shape != (w.shape[0],):
            raise ConfigurationError(
                "bias length %r does not match out_channels %d"
                % (self.bias.shape, w.shape[0])
            )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    @property
    def padding(self) -> int:
        return (self.weights.shape[2] - 1) // 2

    def astype(self, dtype) -> "ConvParams":
        return ConvParams(
            self.weights.astype(dtype),
            None if self.bias is None else self.bias.astype(dtype),
            decay_exempt=self.decay_exempt,
        )

    def copy(self) -> "ConvParams":
        return ConvParams(
            self.weights.copy(),
            None if self.bias is None else self.bias.copy(),
            decay_exempt=self.decay_exempt,
        )


def _check_input(x: np.ndarray, p: ConvParams) -> None:
    if x.ndim != 4:
        raise ConfigurationError("input must be 4-D (n, c, h, w)")
    if x.shape[1] != p.in_channels:
        raise ConfigurationError(
            "input has %d channels, layer expects %d" % (x.shape[1], p.in_channels)
        )


def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """Unroll stride-1 same-padded windows to (n*h*w, c*k*k).

    Filled directly in row-window order so the final reshape is free.
    """
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, h, w, c, k, k), dtype=x.dtype)
    for dy in range(k):
        for dx in range(k):
            cols[:, :, :, :, dy, dx] = xp[:, :, dy:dy + h, dx:dx + w].transpose(0, 2, 3, 1)
    return cols.reshape(n * h * w, c * k * k)


def _col2im(gcol: np.ndarray, n: int, c: int, h: int, w: int, k: int, pad: int) -> np.ndarray:
    """Scatter-add (n*h*w, c*k*k) window gradients back onto the input grid.

    Accumulates channels-last (contiguous slabs), transposes once at the end.
    """
    g = gcol.reshape(n, h, w, c, k, k)
    gxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=gcol.dtype)
    for dy in range(k):
        for dx in range(k):
            gxp[:, dy:dy + h, dx:dx + w, :] += g[:, :, :, :, dy, dx]
    gx = gxp[:, pad:pad + h, pad:pad + w, :]
    return np.ascontiguousarray(gx.transpose(0, 3, 1, 2))


def _row_bands(n: int, c: int, h: int, w: int, k: int):
    """Yield (row_start, row_stop) bands keeping im2col under budget."""
    per_row = c * k * k * w
    band = max(1, _COL_ELEMS_BUDGET // max(1, n * per_row))
    for start in range(0, h, band):
        yield start, min(h, start + band)


def conv2d_forward(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Same-shape cross-correlation of x with p, bias added per channel."""
    _check_input(x, p)
    n, c, h, w = x.shape
    k = p.kernel_size
    if k == 1:
        # Pointwise conv is a channel matmul; tensordot routes it to BLAS.
        w2 = p.weights.reshape(p.out_channels, c)
        out = np.tensordot(x, w2, axes=([1], [1])).transpose(0, 3, 1, 2)
    else:
        pad = p.padding
        wcol = p.weights.reshape(p.out_channels, -1)
        if n * c * k * k * h * w <= _COL_ELEMS_BUDGET:
            col = _im2col(x, k, pad)
            out = (col @ wcol.T).reshape(n, h, w, p.out_channels)
            out = out.transpose(0, 3, 1, 2)
        else:
            xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
            out = np.empty((n, p.out_channels, h, w), dtype=np.result_type(x, p.weights))
            for r0, r1 in _row_bands(n, c, h, w, k):
                xb = xp[:, :, r0:r1 + 2 * pad, :]
                hb = r1 - r0
                cols = np.empty((n, hb, w, c, k, k), dtype=x.dtype)
                for dy in range(k):
                    for dx in range(k):
                        cols[:, :, :, :, dy, dx] = xb[:, :, dy:dy + hb, dx:dx + w].transpose(0, 2, 3, 1)
                col = cols.reshape(n * hb * w, c * k * k)
                band = (col @ wcol.T).reshape(n, hb, w, p.out_channels)
                out[:, :, r0:r1, :] = band.transpose(0, 3, 1, 2)
    if p.bias is not None:
        out = out + p.bias.reshape(1, -1, 1, 1)
    return out


def conv2d_forward_reference(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Direct-loop convolution; slow, kept as the semantic reference."""
    _check_input(x, p)
    n, c, h, w = x.shape
    k = p.kernel_size
    pad = p.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, p.out_channels, h, w), dtype=np.result_type(x, p.weights))
    for bi in range(n):
        for co in range(p.out_channels):
            for i in range(h):
                for j in range(w):
                    window = xp[bi, :, i:i + k, j:j + k]
                    out[bi, co, i, j] = np.sum(window * p.weights[co])
    if p.bias is not None:
        out = out + p.bias.reshape(1, -1, 1, 1)
    return out


def conv2d_backward(
    x: np.ndarray, p: ConvParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Gradients of sum(grad_out * conv2d_forward(x, p)) w.r.t. x, weights, bias."""
    _check_input(x, p)
    n, c, h, w = x.shape
    if grad_out.shape != (n, p.out_channels, h, w):
        raise ConfigurationError(
            "grad_out shape %r does not match output shape %r"
            % (grad_out.shape, (n, p.out_channels, h, w))
        )
    k = p.kernel_size
    grad_bias = None if p.bias is None else grad_out.sum(axis=(0, 2, 3))
    if k == 1:
        w2 = p.weights.reshape(p.out_channels, c)
        grad_w = np.tensordot(grad_out, x, axes=([0, 2, 3], [0, 2, 3]))
        grad_w = grad_w.reshape(p.weights.shape)
        grad_x = np.tensordot(grad_out, w2, axes=([1], [0])).transpose(0, 3, 1, 2)
        return grad_x, grad_w, grad_bias
    pad = p.padding
    wcol = p.weights.reshape(p.out_channels, -1)
    if 2 * n * c * k * k * h * w <= _COL_ELEMS_BUDGET:
        col = _im2col(x, k, pad)
        gout2 = grad_out.transpose(0, 2, 3, 1).reshape(-1, p.out_channels)
        grad_w = (gout2.T @ col).reshape(p.weights.shape)
        grad_x = _col2im(gout2 @ wcol, n, c, h, w, k, pad)
        return grad_x, grad_w, grad_bias
    # Banded variant for large inputs; weight grads accumulate across bands
    # in fixed row order.
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    grad_w = np.zeros_like(p.weights)
    gxpt = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=grad_out.dtype)
    for r0, r1 in _row_bands(n, c, h, w, k):
        hb = r1 - r0
        xb = xp[:, :, r0:r1 + 2 * pad, :]
        cols = np.empty((n, hb, w, c, k, k), dtype=x.dtype)
        for dy in range(k):
            for dx in range(k):
                cols[:, :, :, :, dy, dx] = xb[:, :, dy:dy + hb, dx:dx + w].transpose(0, 2, 3, 1)
        col = cols.reshape(n * hb * w, c * k * k)
        gout2 = grad_out[:, :, r0:r1, :].transpose(0, 2, 3, 1).reshape(-1, p.out_channels)
        grad_w += (gout2.T @ col).reshape(p.weights.shape)
        gband = (gout2 @ wcol).reshape(n, hb, w, c, k, k)
        for dy in range(k):
            for dx in range(k):
                gxpt[:, r0 + dy:r0 + dy + hb, dx:dx + w, :] += gband[:, :, :, :, dy, dx]
    grad_x = gxpt[:, pad:pad + h, pad:pad + w, :]
    return np.ascontiguousarray(grad_x.transpose(0, 3, 1, 2)), grad_w, grad_bias


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass grad where the pre-activation was positive; subgradient 0 at 0."""
    if x.shape != grad_out.shape:
        raise ConfigurationError(
            "shapes %r and %r differ" % (x.shape, grad_out.shape)
        )
    return np.where(x > 0, grad_out, 0)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ConfigurationError("shapes %r and %r differ" % (a.shape, b.shape))
    return a + b
