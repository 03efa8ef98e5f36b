"""Dense NCHW float32 tensors and the elementwise/structural ops built on them.

A tensor is a plain contiguous numpy array of shape (n, c, h, w) and dtype
float32, so flat offset of element (i, j, y, x) is ((i*c + j)*h + y)*w + x.
All ops are pure: inputs are never mutated.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

Array = np.ndarray


def as_tensor(t) -> Array:
    """Validate (and if needed convert) `t` into a contiguous 4-D float32 array."""
    a = np.asarray(t, dtype=np.float32)
    if a.ndim != 4:
        raise ShapeError(f"expected 4-D (n, c, h, w) tensor, got shape {a.shape}")
    if min(a.shape) < 1:
        raise ShapeError(f"all tensor dimensions must be >= 1, got {a.shape}")
    return np.ascontiguousarray(a)


def _sigmoid(a: Array) -> Array:
    # split on sign so exp never overflows float32
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activation(t, kind: str, slopes=None) -> Array:
    """Apply relu, prelu (per-channel slopes) or sigmoid elementwise.

    prelu computes v for v >= 0 and slope_c * v otherwise, with one slope per
    channel; `slopes` must have length equal to the channel count.
    """
    a = as_tensor(t)
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "prelu":
        if slopes is None:
            raise ShapeError("prelu requires per-channel slopes")
        s = np.asarray(slopes, dtype=np.float32).reshape(-1)
        if s.shape[0] != a.shape[1]:
            raise ShapeError(
                f"prelu slope count {s.shape[0]} != channel count {a.shape[1]}"
            )
        return np.where(a >= 0, a, s.reshape(1, -1, 1, 1) * a)
    if kind == "sigmoid":
        return _sigmoid(a)
    raise ValueError(f"unknown activation kind {kind!r}")


def pixel_shuffle(t, r: int) -> Array:
    """Rearrange (n, c, h, w) into (n, c/r^2, h*r, w*r).

    out[j, y*r + p, x*r + q] = in[j*r^2 + p*r + q, y, x]
    """
    a = as_tensor(t)
    n, c, h, w = a.shape
    if r < 1:
        raise ShapeError(f"upscale factor must be >= 1, got {r}")
    if c % (r * r) != 0:
        raise ShapeError(f"channel count {c} not divisible by r^2 = {r * r}")
    if r == 1:
        return a.copy()
    co = c // (r * r)
    a = a.reshape(n, co, r, r, h, w)
    a = a.transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(a.reshape(n, co, h * r, w * r))


def global_avg_pool(t) -> Array:
    """Per-channel spatial mean, returned with shape (n, c, 1, 1)."""
    a = as_tensor(t)
    return a.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(np.float32)


def broadcast_mul(t, factor) -> Array:
    """Multiply by a per-channel vector (shape (c,)) or a spatial map (shape (h, w)).

    The per-channel form scales each channel uniformly; the spatial form
    multiplies every channel by the same h-by-w map.
    """
    a = as_tensor(t)
    f = np.asarray(factor, dtype=np.float32)
    _, c, h, w = a.shape
    if f.shape == (c,):
        return a * f.reshape(1, c, 1, 1)
    if f.shape == (h, w):
        return a * f
    raise ShapeError(
        f"factor shape {f.shape} matches neither channels ({c},) nor spatial ({h}, {w})"
    )
