"""Stochastic uniform quantizer for model-update vectors.

Magnitudes within each group are probabilistically rounded onto the
boundaries of ``2**B - 1`` uniform sub-intervals of ``[lo, hi]``, where
``lo``/``hi`` are the min/max absolute values within the group. Signs are
stored separately, one bit per element, and each group's two bounds cost
``bits_per_bound`` bits apiece in the payload accounting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuantizerConfig:
    per_layer_grouping: bool = True
    bits_per_bound: int = 32

    def __post_init__(self):
        if self.bits_per_bound <= 0:
            raise ValueError("bits_per_bound must be positive")


@dataclass
class QuantizedDelta:
    """Wire representation of a quantized vector."""

    level_indices: np.ndarray        # int64, in [0, 2**B - 1]
    sign_bits: np.ndarray            # int8, values in {-1, +1}
    lower_bounds: np.ndarray         # float64, one per group
    upper_bounds: np.ndarray         # float64, one per group
    bits_per_element: int
    group_boundaries: list[tuple[int, int]] = field(default_factory=list)
    aux_bits: int = 0

    @property
    def dim(self) -> int:
        return int(self.level_indices.size)

    @property
    def payload_bits(self) -> int:
        return payload_bits(self.dim, self.bits_per_element, self.aux_bits)

    def validate(self) -> None:
        k_max = (1 << self.bits_per_element) - 1
        if self.level_indices.min(initial=0) < 0 or self.level_indices.max(initial=0) > k_max:
            raise ValueError("level index out of range")
        if np.any(self.lower_bounds > self.upper_bounds):
            raise ValueError("lower bound exceeds upper bound")
        if not np.all(np.isin(self.sign_bits, (-1, 1))):
            raise ValueError("sign bits must be -1 or +1")

    def to_json_dict(self) -> dict:
        return {
            "level_indices": self.level_indices.tolist(),
            "sign_bits": self.sign_bits.tolist(),
            "lower_bounds": self.lower_bounds.tolist(),
            "upper_bounds": self.upper_bounds.tolist(),
            "bits_per_element": self.bits_per_element,
            "group_boundaries": [list(g) for g in self.group_boundaries],
            "aux_bits": self.aux_bits,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "QuantizedDelta":
        return cls(
            level_indices=np.asarray(d["level_indices"], dtype=np.int64),
            sign_bits=np.asarray(d["sign_bits"], dtype=np.int8),
            lower_bounds=np.asarray(d["lower_bounds"], dtype=np.float64),
            upper_bounds=np.asarray(d["upper_bounds"], dtype=np.float64),
            bits_per_element=int(d["bits_per_element"]),
            group_boundaries=[tuple(g) for g in d["group_boundaries"]],
            aux_bits=int(d["aux_bits"]),
        )


def payload_bits(d: int, B: int, mu: int) -> int:
    """Total uplink bits for a d-element payload: d*(B+1) + mu."""
    if d < 1 or B < 1 or mu < 0:
        raise ValueError(f"invalid payload parameters d={d}, B={B}, mu={mu}")
    return d * (B + 1) + mu


def _check_groups(groups: list[tuple[int, int]] | None, d: int) -> list[tuple[int, int]]:
    if groups is None:
        return [(0, d)]
    cursor = 0
    for start, stop in groups:
        if start != cursor or stop <= start:
            raise ValueError(f"group boundaries must tile [0, {d}) contiguously")
        cursor = stop
    if cursor != d:
        raise ValueError(f"group boundaries cover [0, {cursor}) but vector has length {d}")
    return list(groups)


def _group_bounds(mags: np.ndarray, groups: list[tuple[int, int]]):
    lows = np.empty(len(groups))
    highs = np.empty(len(groups))
    for g, (start, stop) in enumerate(groups):
        lows[g] = mags[start:stop].min()
        highs[g] = mags[start:stop].max()
    return lows, highs


def _fractional_levels(mags: np.ndarray, lo: float, hi: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Base level and fractional offset of each magnitude on the level grid."""
    if hi == lo:
        base = np.zeros(mags.shape, dtype=np.int64)
        frac = np.zeros(mags.shape)
        return base, frac
    pos = (mags - lo) * (k / (hi - lo))
    base = np.floor(pos).astype(np.int64)
    np.clip(base, 0, k - 1, out=base)
    frac = pos - base
    return base, frac


def quantize(
    z: np.ndarray,
    B: int,
    cfg: QuantizerConfig = QuantizerConfig(),
    rng: np.random.Generator | None = None,
    groups: list[tuple[int, int]] | None = None,
    bounds: tuple[float, float] | None = None,
) -> QuantizedDelta:
    """Quantize ``z`` to ``B`` bits per element plus one sign bit.

    ``groups`` lists contiguous ``(start, stop)`` index ranges sharing
    bounds (typically one per model layer). ``bounds`` overrides the
    computed (lo, hi) for every group; intended for tests only.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("cannot quantize an empty vector")
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    bad = np.flatnonzero(~np.isfinite(z))
    if bad.size:
        raise ValueError(f"non-finite element at index {int(bad[0])}")
    if rng is None:
        rng = np.random.default_rng()
    if not cfg.per_layer_grouping:
        groups = None
    groups = _check_groups(groups, z.size)

    signs = np.where(z < 0, -1, 1).astype(np.int8)
    mags = np.abs(z)
    if bounds is not None:
        lows = np.full(len(groups), float(bounds[0]))
        highs = np.full(len(groups), float(bounds[1]))
    else:
        lows, highs = _group_bounds(mags, groups)

    k = (1 << B) - 1
    levels = np.empty(z.size, dtype=np.int64)
    # One uniform draw per element regardless of branch, so RNG consumption
    # does not depend on the data.
    u = rng.random(z.size)
    for g, (start, stop) in enumerate(groups):
        base, frac = _fractional_levels(mags[start:stop], lows[g], highs[g], k)
        levels[start:stop] = base + (u[start:stop] < frac)

    return QuantizedDelta(
        level_indices=levels,
        sign_bits=signs,
        lower_bounds=lows,
        upper_bounds=highs,
        bits_per_element=B,
        group_boundaries=groups,
        aux_bits=2 * cfg.bits_per_bound * len(groups),
    )


def dequantize(q: QuantizedDelta) -> np.ndarray:
    """Reconstruct the real vector represented by ``q``."""
    k = (1 << q.bits_per_element) - 1
    out = np.empty(q.dim)
    for g, (start, stop) in enumerate(q.group_boundaries):
        lo, hi = q.lower_bounds[g], q.upper_bounds[g]
        step = (hi - lo) / k
        out[start:stop] = lo + q.level_indices[start:stop] * step
    return out * q.sign_bits


def _batched_dequantized(z, B, n, rng, bounds=None):
    """n independent dequantized draws of quantize(z, B), whole-vector bounds."""
    mags = np.abs(z)
    signs = np.where(z < 0, -1.0, 1.0)
    lo, hi = (mags.min(), mags.max()) if bounds is None else bounds
    k = (1 << B) - 1
    base, frac = _fractional_levels(mags, lo, hi, k)
    u = rng.random((n, z.size))
    levels = base + (u < frac)
    step = 0.0 if hi == lo else (hi - lo) / k
    return (lo + levels * step) * signs


def omega_bound(z: np.ndarray, B: int) -> float:
    """Contraction-factor upper bound on E||Q(z) - z||^2 / ||z||^2.

    Evaluates d * (hi - lo) / (4 * (2**B - 1) * ||z||^2) with whole-vector
    magnitude bounds; decreasing in B.
    """
    z = np.asarray(z, dtype=np.float64)
    norm_sq = float(z @ z)
    if norm_sq == 0.0:
        raise ValueError("omega bound undefined for the zero vector")
    mags = np.abs(z)
    spread = float(mags.max() - mags.min())
    return z.size * spread / (4.0 * ((1 << B) - 1) * norm_sq)


def empirical_omega(
    z: np.ndarray,
    B: int,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Mean relative quantization error over independent draws."""
    z = np.asarray(z, dtype=np.float64)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    norm_sq = float(z @ z)
    if norm_sq == 0.0:
        raise ValueError("relative error undefined for the zero vector")
    total = 0.0
    chunk = max(1, min(trials, 200_000 // max(1, z.size)))
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        deq = _batched_dequantized(z, B, n, rng)
        err = deq - z
        total += float(np.einsum("ij,ij->", err, err))
        done += n
    return total / (trials * norm_sq)


def empirical_mean_dequantized(
    z: np.ndarray,
    B: int,
    trials: int,
    rng: np.random.Generator,
    bounds: tuple[float, float] | None = None,
) -> np.ndarray:
    """Element-wise mean of ``trials`` dequantized draws (unbiasedness probe)."""
    z = np.asarray(z, dtype=np.float64)
    acc = np.zeros(z.size)
    chunk = max(1, min(trials, 200_000 // max(1, z.size)))
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        acc += _batched_dequantized(z, B, n, rng, bounds=bounds).sum(axis=0)
        done += n
    return acc / trials
