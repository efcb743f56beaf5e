"""Differentiable primitives the spatio-temporal network is assembled from.

Tensors are plain ``float64`` numpy arrays. Spatial layout is
``(height, width)`` with the temporal axis last, so a video segment is an
array of shape ``(h, w, m)``. Every convolution folds the ``tanh``
activation into its forward pass; backward passes take the activation
output from the cache and apply ``1 - v**2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when operand extents do not agree."""


class MissingCacheError(RuntimeError):
    """Raised when a backward pass is called without its forward cache."""


@dataclass(frozen=True)
class ConvKernel:
    """Convolution kernel with a scalar bias.

    ``weights`` has shape ``(h', w', m')`` for 3D kernels and ``(h', w')``
    for 2D kernels.
    """

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim not in (2, 3) or min(w.shape) < 1:
            raise ShapeError(f"bad kernel shape {w.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))


class ConvCache(NamedTuple):
    x: np.ndarray
    kernel: ConvKernel
    out: np.ndarray


class PoolCache(NamedTuple):
    x: np.ndarray
    window: tuple[int, int]
    argmax: np.ndarray


class FCCache(NamedTuple):
    x: np.ndarray
    weights: np.ndarray
    out: np.ndarray


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# raw correlation kernels shared with structured_net


def correlate(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of ``x`` with ``k`` over the trailing axes of ``k``.

    Leading axes of ``x`` beyond ``k.ndim`` are treated as batch axes.
    """
    nd = k.ndim
    if x.ndim < nd:
        raise ShapeError(f"input rank {x.ndim} below kernel rank {nd}")
    if any(a < b for a, b in zip(x.shape[-nd:], k.shape)):
        raise ShapeError(f"kernel {k.shape} larger than input {x.shape[-nd:]}")
    axes = tuple(range(x.ndim - nd, x.ndim))
    win = sliding_window_view(x, k.shape, axis=axes)
    return np.tensordot(win, k, axes=nd)


def correlate_full_flipped(g: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`correlate` with respect to its input."""
    nd = k.ndim
    pad = [(0, 0)] * (g.ndim - nd) + [(s - 1, s - 1) for s in k.shape]
    gp = np.pad(g, pad)
    flipped = k[(slice(None, None, -1),) * nd]
    return correlate(gp, flipped)


# ---------------------------------------------------------------------------
# convolution


def _check_rank(x, rank, what):
    if x.ndim != rank:
        raise ShapeError(f"{what} expects a rank-{rank} input, got shape {x.shape}")


def conv3d_forward(x, kernel: ConvKernel):
    x = as_tensor(x)
    _check_rank(x, 3, "conv3d")
    if kernel.weights.ndim != 3:
        raise ShapeError("conv3d needs a 3D kernel")
    out = np.tanh(correlate(x, kernel.weights) + kernel.bias)
    return out, ConvCache(x, kernel, out)


def conv3d(x, kernel: ConvKernel) -> np.ndarray:
    """``tanh(b + sum_ijk w[i,j,k] * x[r+i, c+j, s+k])`` at every valid position."""
    return conv3d_forward(x, kernel)[0]


def conv2d_forward(x, kernel: ConvKernel):
    x = as_tensor(x)
    _check_rank(x, 2, "conv2d")
    if kernel.weights.ndim != 2:
        raise ShapeError("conv2d needs a 2D kernel")
    out = np.tanh(correlate(x, kernel.weights) + kernel.bias)
    return out, ConvCache(x, kernel, out)


def conv2d(x, kernel: ConvKernel) -> np.ndarray:
    return conv2d_forward(x, kernel)[0]


def _conv_backward(grad, cache):
    if cache is None:
        raise MissingCacheError("convolution backward called without a forward cache")
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != cache.out.shape:
        raise ShapeError(f"upstream gradient {g.shape} != output {cache.out.shape}")
    dpre = g * (1.0 - cache.out**2)
    k = cache.kernel.weights
    grad_w = correlate(cache.x, dpre)
    grad_b = float(dpre.sum())
    grad_x = correlate_full_flipped(dpre, k)
    return grad_x, grad_w, grad_b


def conv3d_backward(grad, cache: ConvCache):
    """Return ``(grad_input, grad_weights, grad_bias)``."""
    return _conv_backward(grad, cache)


def conv2d_backward(grad, cache: ConvCache):
    return _conv_backward(grad, cache)


# ---------------------------------------------------------------------------
# max pooling


def pool_blocks(x: np.ndarray, window, axes=(-2, -1)):
    """Rearrange ``x`` into non-overlapping blocks along ``axes``.

    Returns an array with the two pooled axes replaced by block indices and
    one trailing axis of length ``d1*d2`` in row-major order within a block.
    Rows and columns that do not fill a whole window are dropped.
    """
    d1, d2 = window
    a0, a1 = (ax % x.ndim for ax in axes)
    if a1 != a0 + 1:
        raise ValueError("pooled axes must be adjacent")
    h, w = x.shape[a0], x.shape[a1]
    ho, wo = h // d1, w // d2
    idx = [slice(None)] * x.ndim
    idx[a0] = slice(0, ho * d1)
    idx[a1] = slice(0, wo * d2)
    xc = x[tuple(idx)]
    shp = xc.shape[:a0] + (ho, d1, wo, d2) + xc.shape[a1 + 1:]
    xb = xc.reshape(shp)
    # (…, ho, d1, wo, d2, rest…) -> (…, ho, wo, rest…, d1, d2)
    n = xb.ndim
    order = list(range(a0)) + [a0, a0 + 2] + list(range(a0 + 4, n)) + [a0 + 1, a0 + 3]
    xb = xb.transpose(order)
    return xb.reshape(xb.shape[:-2] + (d1 * d2,))


def unpool_blocks(blocks: np.ndarray, full_shape, window, axes=(-2, -1)):
    """Inverse of :func:`pool_blocks`; dropped remainder cells are zero."""
    d1, d2 = window
    ndim = len(full_shape)
    a0, a1 = (ax % ndim for ax in axes)
    ho, wo = full_shape[a0] // d1, full_shape[a1] // d2
    b = blocks.reshape(blocks.shape[:-1] + (d1, d2))
    n = b.ndim
    # (…, ho, wo, rest…, d1, d2) -> (…, ho, d1, wo, d2, rest…)
    rest = list(range(a0 + 2, n - 2))
    order = list(range(a0)) + [a0, n - 2, a0 + 1, n - 1] + rest
    b = b.transpose(order)
    cropped = b.reshape(full_shape[:a0] + (ho * d1, wo * d2) + tuple(full_shape[a1 + 1:]))
    out = np.zeros(full_shape)
    idx = [slice(None)] * ndim
    idx[a0] = slice(0, ho * d1)
    idx[a1] = slice(0, wo * d2)
    out[tuple(idx)] = cropped
    return out


def _pool_axes(x):
    if x.ndim == 2:
        return (0, 1)
    if x.ndim == 3:
        return (0, 1)  # (h, w, t): pool each temporal slice
    raise ShapeError(f"maxpool2d expects (h, w) or (h, w, t), got {x.shape}")


def maxpool2d_forward(x, window, axes=None):
    x = as_tensor(x)
    d1, d2 = (int(v) for v in window)
    if d1 < 1 or d2 < 1:
        raise ValueError(f"pool window must be positive, got {window}")
    axes = _pool_axes(x) if axes is None else axes
    blocks = pool_blocks(x, (d1, d2), axes)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, PoolCache(x, (d1, d2), arg), axes


def maxpool2d(x, window) -> np.ndarray:
    """Max over every non-overlapping ``d1 x d2`` block, per temporal slice."""
    return maxpool2d_forward(x, window)[0]


def maxpool2d_backward(grad, cache: PoolCache, axes=None):
    """Route each upstream value to the first maximum of its block."""
    if cache is None:
        raise MissingCacheError("maxpool backward called without a forward cache")
    g = np.asarray(grad, dtype=np.float64)
    axes = _pool_axes(cache.x) if axes is None else axes
    d1, d2 = cache.window
    blocks = np.zeros(g.shape + (d1 * d2,))
    np.put_along_axis(blocks, cache.argmax[..., None], g[..., None], axis=-1)
    return unpool_blocks(blocks, cache.x.shape, cache.window, axes)


# ---------------------------------------------------------------------------
# fully connected


def fully_connected_forward(x, weights, bias):
    x = as_tensor(x)
    W = as_tensor(weights)
    b = as_tensor(bias)
    if x.ndim != 1 or W.ndim != 2 or W.shape[1] != x.shape[0] or b.shape != (W.shape[0],):
        raise ShapeError(f"fc shapes disagree: x {x.shape}, W {W.shape}, b {b.shape}")
    out = np.tanh(W @ x + b)
    return out, FCCache(x, W, out)


def fully_connected(x, weights, bias) -> np.ndarray:
    """``tanh(W x + b)``."""
    return fully_connected_forward(x, weights, bias)[0]


def fully_connected_backward(grad, cache: FCCache):
    """Return ``(grad_input, grad_weights, grad_bias)``."""
    if cache is None:
        raise MissingCacheError("fc backward called without a forward cache")
    dpre = np.asarray(grad, dtype=np.float64) * (1.0 - cache.out**2)
    return cache.weights.T @ dpre, np.outer(dpre, cache.x), dpre


# ---------------------------------------------------------------------------
# dropout


def dropout_mask(n: int, rate: float, seed) -> np.ndarray:
    """Binary keep-mask: each entry is 0 with probability ``rate``.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return (rng.random(int(n)) >= rate).astype(np.float64)
