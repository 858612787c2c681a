"""Midrise uniform quantizer with an additive-noise accounting model.

One quantized scalar per packet: a block of L channel uses on an edge of
capacity C bits/use carries L*C bits, i.e. 2**(L*C) levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MAX_BITS = 30


class Quantized(NamedTuple):
    value: np.ndarray | float
    error: np.ndarray | float


@dataclass(frozen=True)
class UniformQuantizer:
    """Midrise quantizer on [lo, hi] with `levels` equal cells.

    Reproduction points are cell centers; inputs outside the range saturate
    to the extreme cells. The additive-noise model assigns variance
    step**2 / 12 to the quantization error.
    """

    lo: float
    hi: float
    levels: int

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError(f"need at least 2 levels, got {self.levels}")
        if not self.hi > self.lo:
            raise ValueError(f"empty range [{self.lo}, {self.hi}]")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.levels

    @property
    def noise_var(self) -> float:
        return self.step ** 2 / 12.0

    def quantize(self, x):
        """Map x to the nearest cell center; returns (value, error = value - x)."""
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.lo) / self.step)
        idx = np.clip(idx, 0, self.levels - 1)
        value = self.lo + (idx + 0.5) * self.step
        scalar = value.ndim == 0
        if scalar:
            value = float(value)
            return Quantized(value, value - float(x))
        return Quantized(value, value - x)


def make_quantizer(range_sigma: float, sigma: float, L: int, capacity: int = 1) -> UniformQuantizer:
    """Quantizer on [-range_sigma*sigma, +range_sigma*sigma] with 2**(L*capacity) levels."""
    bits = L * capacity
    if bits < 1:
        raise ValueError(f"block length {L} x capacity {capacity} must give at least 1 bit")
    if bits > MAX_BITS:
        raise ValueError(f"{bits} bits per packet would overflow the level count (max {MAX_BITS})")
    half = range_sigma * sigma
    return UniformQuantizer(lo=-half, hi=half, levels=2 ** bits)


def near_lossless_quantizer(sigma: float, range_sigma: float = 4.0, step: float = 1e-9) -> UniformQuantizer:
    """Surrogate for an unquantized link: a huge level count so that step ~ `step`.

    Bypasses the bit-budget guard of make_quantizer on purpose; used by the
    theory audits to isolate measurement geometry from quantization noise.
    """
    half = range_sigma * sigma
    levels = int(np.ceil(2.0 * half / step))
    return UniformQuantizer(lo=-half, hi=half, levels=levels)
