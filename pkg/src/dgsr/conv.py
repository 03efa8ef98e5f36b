"""Convolution via three interchangeable paths, plus multiply-accumulate accounting.

Paths:
  * direct_conv     reference cross-correlation with explicit loops (the oracle)
  * conv_lowered    im2col lowering followed by one BLAS matrix multiply
  * conv_lowered with a mask: rows of the lowered matrix that correspond to
    masked-out output positions are never materialized, so the matrix multiply
    shrinks proportionally to the support of the mask

Convolution is cross-correlation (no kernel flip) with zero padding
materialized during lowering. All paths operate on single-image (n = 1)
float32 tensors and are deterministic for a fixed BLAS worker count.

MAC accounting counts one multiply-accumulate per kernel tap per retained
output position per output channel; bias adds are not counted. FLOPs are
reported elsewhere as 2 * MACs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Array, as_tensor


@dataclass(frozen=True)
class ConvSpec:
    """Static description of one convolution layer."""

    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: int = 1
    padding: int = 0
    has_bias: bool = True

    def __post_init__(self):
        kh, kw = self.kernel
        if kh < 1 or kw < 1 or kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"kernel dims must be odd and >= 1, got {self.kernel}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("channel counts must be >= 1")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")

    @classmethod
    def for_weight(cls, w: Array, stride: int = 1, padding: int | None = None,
                   has_bias: bool = True) -> "ConvSpec":
        """Spec inferred from a (co, ci, kh, kw) weight; default padding keeps size."""
        co, ci, kh, kw = w.shape
        if padding is None:
            padding = kh // 2
        return cls(ci, co, (kh, kw), stride, padding, has_bias)

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"kernel {self.kernel} does not fit input {h}x{w}")
        return oh, ow


@dataclass
class LayerCost:
    """Dense vs actually-performed MACs for one convolution layer."""

    name: str
    dense_macs: int
    retained_macs: int


class MacCounter:
    """Collects per-layer MAC costs as convolutions execute."""

    def __init__(self):
        self.entries: list[LayerCost] = []

    def add(self, name: str, dense_macs: int, retained_macs: int) -> None:
        self.entries.append(LayerCost(name, int(dense_macs), int(retained_macs)))

    @property
    def total_dense(self) -> int:
        return sum(e.dense_macs for e in self.entries)

    @property
    def total_retained(self) -> int:
        return sum(e.retained_macs for e in self.entries)


def count_macs(spec: ConvSpec, retained_positions: int) -> int:
    """Multiply-accumulates for a convolution evaluated at `retained_positions`."""
    if retained_positions < 0:
        raise ShapeError("retained_positions must be >= 0")
    kh, kw = spec.kernel
    return spec.out_channels * spec.in_channels * kh * kw * retained_positions


def _check_weight(w: Array, spec: ConvSpec) -> Array:
    w = np.asarray(w, dtype=np.float32)
    expected = (spec.out_channels, spec.in_channels) + spec.kernel
    if w.shape != expected:
        raise ShapeError(f"weight shape {w.shape} does not match spec {expected}")
    return np.ascontiguousarray(w)


def _check_bias(b, spec: ConvSpec):
    if b is None:
        return None
    b = np.asarray(b, dtype=np.float32).reshape(-1)
    if b.shape[0] != spec.out_channels:
        raise ShapeError(f"bias length {b.shape[0]} != out_channels {spec.out_channels}")
    return b


def direct_conv(f, w, b, spec: ConvSpec) -> Array:
    """Reference convolution: explicit loops over output positions.

    Slow by design; used as the independent oracle for the lowered paths.
    Accumulation runs over the (ci, kh, kw) patch in raster order.
    """
    a = as_tensor(f)
    n, c, h, wdt = a.shape
    if n != 1:
        raise ShapeError("convolution paths operate on single-image tensors (n = 1)")
    if c != spec.in_channels:
        raise ShapeError(f"input channels {c} != spec.in_channels {spec.in_channels}")
    wk = _check_weight(w, spec)
    bias = _check_bias(b, spec)
    kh, kw = spec.kernel
    p = spec.padding
    oh, ow = spec.out_size(h, wdt)
    padded = np.pad(a[0], ((0, 0), (p, p), (p, p)))
    out = np.empty((1, spec.out_channels, oh, ow), dtype=np.float32)
    for o in range(spec.out_channels):
        ko = wk[o]
        bo = float(bias[o]) if bias is not None else 0.0
        for y in range(oh):
            iy = y * spec.stride
            for x in range(ow):
                ix = x * spec.stride
                patch = padded[:, iy:iy + kh, ix:ix + kw]
                out[0, o, y, x] = np.sum(patch * ko, dtype=np.float64) + bo
    return out


@dataclass
class LoweredMatrix:
    """im2col result: one row per retained output position.

    Row layout is channel-major, then kernel row, then kernel column, so
    column index of tap (c, ky, kx) is (c*kh + ky)*kw + kx. `row_index`
    holds the (y, x) output position of each row, unique and in raster order.
    """

    data: Array                      # (rows, in_channels*kh*kw) float32
    row_index: Array                 # (rows, 2) int64
    out_h: int
    out_w: int

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def im2col(f, spec: ConvSpec, mask=None) -> LoweredMatrix:
    """Lower `f` for GEMM, keeping only rows whose mask entry is > 0.

    Without a mask every output position produces a row. Zero padding is
    materialized here rather than by pre-padding the input tensor.
    """
    a = as_tensor(f)
    n, c, h, w = a.shape
    if n != 1:
        raise ShapeError("lowering operates on single-image tensors (n = 1)")
    if c != spec.in_channels:
        raise ShapeError(f"input channels {c} != spec.in_channels {spec.in_channels}")
    kh, kw = spec.kernel
    p = spec.padding
    oh, ow = spec.out_size(h, w)
    padded = np.pad(a[0], ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(padded, (kh, kw), axis=(1, 2))
    win = win[:, ::spec.stride, ::spec.stride]  # (c, oh, ow, kh, kw)
    if mask is None:
        data = win.transpose(1, 2, 0, 3, 4).reshape(oh * ow, c * kh * kw)
        ys, xs = np.divmod(np.arange(oh * ow, dtype=np.int64), ow)
    else:
        m = np.asarray(mask)
        if m.shape != (oh, ow):
            raise ShapeError(f"mask shape {m.shape} != output shape ({oh}, {ow})")
        ys, xs = np.nonzero(m > 0)  # raster order
        data = win[:, ys, xs].transpose(1, 0, 2, 3).reshape(len(ys), c * kh * kw)
    data = np.ascontiguousarray(data, dtype=np.float32)
    row_index = np.stack([ys.astype(np.int64), xs.astype(np.int64)], axis=1)
    return LoweredMatrix(data, row_index, oh, ow)


def conv_lowered(f, w, b, spec: ConvSpec, mask=None, fill: float = 0.0,
                 counter: MacCounter | None = None, name: str = "conv") -> Array:
    """im2col + matrix-multiply convolution with optional row skipping.

    Skipped output positions receive `fill` (the engine always uses 0, which
    is exact because a zero gate multiplies those positions anyway). When a
    counter is given, the performed MACs are derived from the actual GEMM
    operand shapes, not from the mask.
    """
    lowered = im2col(f, spec, mask)
    wk = _check_weight(w, spec)
    bias = _check_bias(b, spec)
    co = spec.out_channels
    wmat = np.ascontiguousarray(wk.reshape(co, -1).T)
    prod = lowered.data @ wmat  # (rows, co)
    if bias is not None:
        prod = prod + bias
    out = np.full((1, co, lowered.out_h, lowered.out_w), np.float32(fill),
                  dtype=np.float32)
    ys = lowered.row_index[:, 0]
    xs = lowered.row_index[:, 1]
    out[0][:, ys, xs] = prod.T
    if counter is not None:
        performed = lowered.data.shape[0] * lowered.data.shape[1] * co
        counter.add(name, count_macs(spec, lowered.out_h * lowered.out_w), performed)
    return out
