"""Depth-prediction head: five 3x3 convolutions whose first-layer weight is
scaled by the desired depth at call time.

Layers 1-4 use PReLU, layer 5 uses ReLU, and the result is clamped above at
the block count, so every output entry lies in [0, blocks]. Scaling only the
weight (not the bias) of layer 1 makes the prediction collapse to a spatially
constant map when the desired depth is 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import ConvSpec, MacCounter, conv_lowered
from .errors import RangeError
from .tensor import Array, activation, as_tensor


@dataclass(frozen=True)
class AdapterWeights:
    """Five conv layers (weight, bias) and four per-channel PReLU slope vectors."""

    conv_w: tuple[Array, ...]
    conv_b: tuple[Array, ...]
    slopes: tuple[Array, ...]

    def __post_init__(self):
        if len(self.conv_w) != 5 or len(self.conv_b) != 5 or len(self.slopes) != 4:
            raise ValueError("adapter needs 5 conv layers and 4 slope vectors")


def adapter_forward(z0, desired_depth: float, aw: AdapterWeights, blocks: int,
                    counter: MacCounter | None = None) -> Array:
    """Predict a per-position depth map of shape (groups, h, w).

    The group count is the output channel count of layer 5.
    """
    if desired_depth < 0:
        raise RangeError(f"desired depth must be >= 0, got {desired_depth}")
    a = as_tensor(z0)
    w1 = aw.conv_w[0] * np.float32(desired_depth)
    h = conv_lowered(a, w1, aw.conv_b[0],
                     ConvSpec.for_weight(aw.conv_w[0]),
                     counter=counter, name="adapter.conv1")
    h = activation(h, "prelu", slopes=aw.slopes[0])
    for i in (1, 2, 3):
        h = conv_lowered(h, aw.conv_w[i], aw.conv_b[i],
                         ConvSpec.for_weight(aw.conv_w[i]),
                         counter=counter, name=f"adapter.conv{i + 1}")
        h = activation(h, "prelu", slopes=aw.slopes[i])
    h = conv_lowered(h, aw.conv_w[4], aw.conv_b[4],
                     ConvSpec.for_weight(aw.conv_w[4]),
                     counter=counter, name="adapter.conv5")
    h = activation(h, "relu")
    return np.minimum(h, np.float32(blocks))[0]


def average_depth(depth_map) -> float:
    """Arithmetic mean over all entries of a depth map."""
    return float(np.mean(np.asarray(depth_map), dtype=np.float64))
