"""Depth-map gating and the gated residual trunk.

A depth map assigns every spatial position a real depth d in [0, D]. Block l
of a D-block group receives the gate coefficient

    g_l(d) = 0           if d < l - 1
             1           if d > l
             d - (l - 1)  otherwise

so at any position the first floor(d) blocks run at full weight, one block may
run fractionally, and the rest contribute nothing. The gated block output is

    z_l = z_{l-1} + g_l(d) * F_l(z_{l-1})

with the product taken entrywise over spatial positions. Positions with a
zero coefficient keep their incoming activations through the residual add, so
feature maps stay dense between blocks and only block-internal convolutions
are skipped.

Execution modes:
  * dense         both convolutions run everywhere; reference semantics.
  * sparse-exact  conv2 runs on the support of the gate, conv1 on the support
                  dilated by the kernel radius, so conv2 reads exactly the
                  values the dense path would produce. Matches dense to float
                  roundoff.
  * sparse-fast   both convolutions run on the bare support; conv2 reads
                  zeros at neighbors that were skipped. Cheaper, approximate.

Channel attention pools over the full map (`ca_pool="full"`, which forces a
dense block body and keeps sparse-exact exact) or over the support only
(`ca_pool="support"`, which preserves sparsity but perturbs the pooled
statistic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import ConvSpec, MacCounter, conv_lowered, count_macs
from .errors import ParameterError, RangeError, ShapeError
from .tensor import Array, activation, as_tensor, broadcast_mul

MODES = ("dense", "sparse-exact", "sparse-fast")


def gate_coefficient(d: float, l: int) -> float:
    """Gate weight of block `l` (1-based) at depth `d`. Piecewise, in [0, 1]."""
    if l < 1:
        raise RangeError(f"block index must be >= 1, got {l}")
    return float(min(max(d - (l - 1), 0.0), 1.0))


@dataclass(frozen=True)
class BlockMask:
    """Gate coefficients of one block over the feature grid, plus their support."""

    coefficients: Array  # (h, w) float32 in [0, 1]
    support: Array       # (h, w) bool, True where coefficient > 0

    @property
    def retained(self) -> int:
        return int(self.support.sum())


def masks_from_depth(depth_channel, blocks: int) -> list[BlockMask]:
    """Per-block gate masks for one depth channel with entries in [0, blocks]."""
    d = np.asarray(depth_channel, dtype=np.float32)
    if d.ndim != 2:
        raise ShapeError(f"depth channel must be 2-D, got shape {d.shape}")
    if (d < 0).any() or (d > blocks).any():
        raise RangeError(
            f"depth entries must lie in [0, {blocks}], got "
            f"[{d.min():g}, {d.max():g}]"
        )
    out = []
    for l in range(1, blocks + 1):
        coeff = np.clip(d - np.float32(l - 1), 0.0, 1.0).astype(np.float32)
        out.append(BlockMask(coefficients=coeff, support=coeff > 0))
    return out


def dilate_support(support, radius: int) -> Array:
    """Expand a boolean map by a Chebyshev ball of the given radius."""
    s = np.asarray(support, dtype=bool)
    if s.ndim != 2:
        raise ShapeError(f"support must be 2-D, got shape {s.shape}")
    if radius < 0:
        raise RangeError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return s.copy()
    h, w = s.shape
    padded = np.zeros((h + 2 * radius, w + 2 * radius), dtype=bool)
    padded[radius:radius + h, radius:radius + w] = s
    out = np.zeros_like(s)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            out |= padded[dy:dy + h, dx:dx + w]
    return out


@dataclass(frozen=True)
class AttentionWeights:
    """1x1 reduce/expand parameters of a channel-attention gate."""

    reduce_w: Array
    reduce_b: Array
    expand_w: Array
    expand_b: Array


@dataclass(frozen=True)
class BlockWeights:
    """Parameters of one residual block: two convs and optional attention."""

    conv1_w: Array
    conv1_b: Array
    conv2_w: Array
    conv2_b: Array
    ca: AttentionWeights | None = None


def _sigmoid_vec(v: Array) -> Array:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def channel_attention_apply(features, ca: AttentionWeights, pool: str = "full",
                            support=None, counter: MacCounter | None = None,
                            name: str = "ca") -> Array:
    """Scale each channel by sigmoid(expand(relu(reduce(pooled means)))).

    pool="full" averages over every spatial position; pool="support" averages
    over the given support only (the empty-support pooled vector is zero).
    """
    a = as_tensor(features)
    _, c, h, w = a.shape
    cr = ca.reduce_w.shape[0]
    if ca.reduce_w.shape != (cr, c, 1, 1) or ca.expand_w.shape != (c, cr, 1, 1):
        raise ParameterError(
            f"attention weights {ca.reduce_w.shape}/{ca.expand_w.shape} do not "
            f"match {c} channels"
        )
    if pool == "full":
        pooled = a.mean(axis=(2, 3), dtype=np.float64)[0]
    elif pool == "support":
        if support is None:
            raise ShapeError("pool='support' requires a support map")
        ys, xs = np.nonzero(np.asarray(support))
        if len(ys) == 0:
            pooled = np.zeros(c, dtype=np.float64)
        else:
            pooled = a[0][:, ys, xs].mean(axis=1, dtype=np.float64)
    else:
        raise ValueError(f"unknown pool mode {pool!r}")
    v = pooled.astype(np.float32)
    r = v @ ca.reduce_w.reshape(cr, c).T + ca.reduce_b
    r = np.maximum(r, 0.0)
    g = _sigmoid_vec(r @ ca.expand_w.reshape(c, cr).T + ca.expand_b)
    if counter is not None:
        counter.add(f"{name}.reduce", cr * c, cr * c)
        counter.add(f"{name}.expand", c * cr, c * cr)
    return broadcast_mul(a, g)


def gated_residual_block(z, bw: BlockWeights, mask: BlockMask, mode: str, *,
                         res_scale: float = 1.0, ca_pool: str = "full",
                         counter: MacCounter | None = None,
                         name: str = "block") -> Array:
    """One gated residual block: z + g * res_scale * F(z).

    F is conv -> relu -> conv, optionally followed by a channel-attention
    scale. Fractional coefficients are computed at their positions and then
    scaled; zero-coefficient positions pass z through unchanged.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    a = as_tensor(z)
    _, c, h, w = a.shape
    if mask.coefficients.shape != (h, w):
        raise ShapeError(
            f"mask shape {mask.coefficients.shape} != feature shape ({h}, {w})"
        )
    spec1 = ConvSpec.for_weight(bw.conv1_w, has_bias=bw.conv1_b is not None)
    spec2 = ConvSpec.for_weight(bw.conv2_w, has_bias=bw.conv2_b is not None)
    positions = h * w
    # full-map pooling needs the whole conv2 output, hence a dense body
    dense_body = mode == "dense" or (bw.ca is not None and ca_pool == "full")
    support = mask.support

    if mode != "dense" and not support.any():
        if counter is not None:
            counter.add(f"{name}.conv1", count_macs(spec1, positions), 0)
            counter.add(f"{name}.conv2", count_macs(spec2, positions), 0)
            if bw.ca is not None:
                cr = bw.ca.reduce_w.shape[0]
                counter.add(f"{name}.ca.reduce", cr * c, 0)
                counter.add(f"{name}.ca.expand", c * cr, 0)
        return a.copy()

    if dense_body:
        m1 = m2 = None
    elif mode == "sparse-exact":
        m1 = dilate_support(support, spec2.kernel[0] // 2)
        m2 = support
    else:  # sparse-fast
        m1 = m2 = support

    h1 = conv_lowered(a, bw.conv1_w, bw.conv1_b, spec1, mask=m1,
                      counter=counter, name=f"{name}.conv1")
    h2 = conv_lowered(activation(h1, "relu"), bw.conv2_w, bw.conv2_b, spec2,
                      mask=m2, counter=counter, name=f"{name}.conv2")
    if bw.ca is not None:
        h2 = channel_attention_apply(h2, bw.ca, pool=ca_pool, support=support,
                                     counter=counter, name=f"{name}.ca")
    return a + broadcast_mul(h2 * np.float32(res_scale), mask.coefficients)


@dataclass(frozen=True)
class GroupWeights:
    """Blocks of one residual group plus its optional trailing conv."""

    blocks: tuple[BlockWeights, ...]
    tail_w: Array | None = None
    tail_b: Array | None = None


@dataclass(frozen=True)
class TrunkWeights:
    """All residual groups plus the global trailing conv."""

    groups: tuple[GroupWeights, ...]
    tail_w: Array
    tail_b: Array


def trunk_forward(z0, trunk: TrunkWeights, depth, mode: str, cfg, *,
                  ca_pool: str = "full",
                  counter: MacCounter | None = None) -> tuple[Array, list[list[int]]]:
    """Run the gated residual trunk.

    Depth channel g gates the blocks of group g. Groups chain sequentially;
    each applies its trailing conv and skip when configured, and the whole
    trunk ends with a trailing conv plus a long skip from z0. Depth entries
    are clamped to [0, blocks] before gating. Returns the trunk output and
    per-group, per-block retained position counts.
    """
    a = as_tensor(z0)
    _, c, h, w = a.shape
    d = np.asarray(depth, dtype=np.float32)
    if d.ndim != 3 or d.shape[0] != len(trunk.groups):
        raise ParameterError(
            f"depth map shape {d.shape} does not provide one channel per "
            f"group ({len(trunk.groups)})"
        )
    if d.shape[1:] != (h, w):
        raise ShapeError(f"depth spatial size {d.shape[1:]} != features ({h}, {w})")
    if len(trunk.groups) != cfg.groups:
        raise ParameterError(
            f"trunk has {len(trunk.groups)} groups, config says {cfg.groups}"
        )
    d = np.clip(d, 0.0, np.float32(cfg.blocks))
    retained: list[list[int]] = []
    z = a
    for g, gw in enumerate(trunk.groups, start=1):
        if len(gw.blocks) != cfg.blocks:
            raise ParameterError(
                f"group {g} has {len(gw.blocks)} blocks, config says {cfg.blocks}"
            )
        masks = masks_from_depth(d[g - 1], cfg.blocks)
        z_in = z
        counts = []
        for l, (bw, m) in enumerate(zip(gw.blocks, masks), start=1):
            z = gated_residual_block(
                z, bw, m, mode, res_scale=cfg.res_scale, ca_pool=ca_pool,
                counter=counter, name=f"body.g{g}.b{l}")
            counts.append(m.retained)
        retained.append(counts)
        if gw.tail_w is not None:
            spec = ConvSpec.for_weight(gw.tail_w)
            z = z_in + conv_lowered(z, gw.tail_w, gw.tail_b, spec,
                                    counter=counter, name=f"body.g{g}.tail")
    spec = ConvSpec.for_weight(trunk.tail_w)
    z = a + conv_lowered(z, trunk.tail_w, trunk.tail_b, spec,
                         counter=counter, name="body.tail")
    return z, retained
