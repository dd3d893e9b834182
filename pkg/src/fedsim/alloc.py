"""Joint bandwidth / quantization-bit allocation under per-device delay budgets.

Maximizes the alpha-fair utility of the per-device bit counts, where the
bits each device can afford are a concave increasing function of its
bandwidth slice (delay constraint active at the optimum). Solved by dual
bisection on the bandwidth price with per-device inversion of the marginal
utility, then integer flooring and dropping of devices below the bit floor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

_INNER_ITERS = 80
_OUTER_REL_TOL = 1e-10


@dataclass(frozen=True)
class AllocProblem:
    gains: np.ndarray       # received power P_i * |h_i|^2 per device, watts
    taus: np.ndarray        # delay budgets, seconds
    w_total: float          # shared bandwidth, Hz
    alpha: float            # fairness coefficient, >= 0
    d: int                  # model dimension
    mu: int                 # bound-overhead bits per payload
    noise_psd: float        # W/Hz
    b_lower: int = 1

    def __post_init__(self):
        object.__setattr__(self, "gains", np.asarray(self.gains, dtype=np.float64))
        object.__setattr__(self, "taus", np.asarray(self.taus, dtype=np.float64))
        if self.gains.size == 0:
            raise ValueError("need at least one device")
        if np.any(self.gains <= 0) or np.any(self.taus <= 0):
            raise ValueError("gains and delay budgets must be positive")
        if self.w_total <= 0 or self.noise_psd <= 0:
            raise ValueError("w_total and noise_psd must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.b_lower < 1:
            raise ValueError("b_lower must be >= 1")

    @property
    def num_devices(self) -> int:
        return int(self.gains.size)

    def to_json(self) -> str:
        return json.dumps({
            "gains": self.gains.tolist(), "taus": self.taus.tolist(),
            "w_total": self.w_total, "alpha": self.alpha, "d": self.d,
            "mu": self.mu, "noise_psd": self.noise_psd, "b_lower": self.b_lower,
        })

    @classmethod
    def from_json(cls, text: str) -> "AllocProblem":
        d = json.loads(text)
        return cls(gains=np.asarray(d["gains"]), taus=np.asarray(d["taus"]),
                   w_total=d["w_total"], alpha=d["alpha"], d=d["d"],
                   mu=d["mu"], noise_psd=d["noise_psd"], b_lower=d["b_lower"])


@dataclass
class AllocSolution:
    bandwidths: np.ndarray
    bits_continuous: np.ndarray
    bits_floored: np.ndarray
    dropped: set[int] = field(default_factory=set)
    dual_lambda: float = 0.0
    kkt_residual: float = 0.0
    feasible: bool = True
    objective: float = -math.inf

    def to_json(self) -> str:
        return json.dumps({
            "bandwidths": self.bandwidths.tolist(),
            "bits_continuous": self.bits_continuous.tolist(),
            "bits_floored": self.bits_floored.tolist(),
            "dropped": sorted(self.dropped),
            "dual_lambda": self.dual_lambda,
            "kkt_residual": self.kkt_residual,
            "feasible": self.feasible,
            "objective": self.objective,
        })

    @classmethod
    def from_json(cls, text: str) -> "AllocSolution":
        d = json.loads(text)
        return cls(bandwidths=np.asarray(d["bandwidths"]),
                   bits_continuous=np.asarray(d["bits_continuous"]),
                   bits_floored=np.asarray(d["bits_floored"], dtype=np.int64),
                   dropped=set(d["dropped"]), dual_lambda=d["dual_lambda"],
                   kkt_residual=d["kkt_residual"], feasible=d["feasible"],
                   objective=d["objective"])


def _rate(w: float, gain: float, noise_psd: float) -> float:
    return w * math.log1p(gain / (w * noise_psd)) / math.log(2.0)


def _rate_deriv(w: float, gain: float, noise_psd: float) -> float:
    c = gain / noise_psd
    return (math.log1p(c / w) - (c / w) / (1.0 + c / w)) / math.log(2.0)


def b_of_w(w: float, gain: float, tau: float, d: int, mu: int, noise_psd: float) -> float:
    """Continuous bit count affordable at bandwidth w with the delay binding."""
    if w <= 0:
        raise ValueError("bandwidth must be positive")
    return (tau * _rate(w, gain, noise_psd) - mu) / d - 1.0


def _b_deriv(w: float, gain: float, tau: float, d: int, noise_psd: float) -> float:
    return tau * _rate_deriv(w, gain, noise_psd) / d


def utility(x: float, alpha: float) -> float:
    """alpha-fair utility x^(1-alpha)/(1-alpha); log(x) at alpha = 1."""
    if alpha == 1.0:
        return math.log(x) if x > 0 else -math.inf
    if x < 0:
        return -math.inf
    if x == 0.0:
        return -math.inf if alpha > 1.0 else 0.0
    return x ** (1.0 - alpha) / (1.0 - alpha)


def _utility_deriv(x: float, alpha: float) -> float:
    if alpha == 0.0:
        return 1.0
    if x <= 0:
        return math.inf
    return x ** (-alpha)


def _marginal(p: AllocProblem, i: int, w: float) -> float:
    b = b_of_w(w, p.gains[i], p.taus[i], p.d, p.mu, p.noise_psd)
    return _utility_deriv(b, p.alpha) * _b_deriv(w, p.gains[i], p.taus[i], p.d, p.noise_psd)


def _w_zero(p: AllocProblem, i: int) -> float:
    """Minimum bandwidth at which the device can afford zero-bit payloads."""
    lo, hi = 1e-12 * p.w_total, p.w_total
    for _ in range(_INNER_ITERS):
        mid = 0.5 * (lo + hi)
        if b_of_w(mid, p.gains[i], p.taus[i], p.d, p.mu, p.noise_psd) < 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def _w_of_lambda(p: AllocProblem, i: int, lam: float, w_floor: float) -> float:
    """Invert the decreasing marginal-utility map, clamped to [w_floor, w_total]."""
    if _marginal(p, i, p.w_total) >= lam:
        return p.w_total
    if _marginal(p, i, w_floor * (1 + 1e-12) + 1e-12) <= lam and p.alpha == 0.0:
        return w_floor
    lo, hi = w_floor, p.w_total
    for _ in range(_INNER_ITERS):
        mid = 0.5 * (lo + hi)
        if _marginal(p, i, mid) > lam:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def objective_value(p: AllocProblem, bands: np.ndarray, kept: list[int]) -> float:
    total = 0.0
    for i in kept:
        b = b_of_w(bands[i], p.gains[i], p.taus[i], p.d, p.mu, p.noise_psd)
        total += utility(max(b, 0.0), p.alpha)
    return total


def solve_alloc(p: AllocProblem) -> AllocSolution:
    """Continuous alpha-fair solve, then flooring and dropping.

    Devices that cannot reach a positive bit count even with the whole
    budget are pre-dropped. If the survivors' minimum bandwidths exceed the
    budget jointly, the neediest are pre-dropped until the rest fit.
    """
    n = p.num_devices
    bands = np.zeros(n)
    bits = np.zeros(n)
    dropped: set[int] = set()
    kept = []
    for i in range(n):
        if b_of_w(p.w_total, p.gains[i], p.taus[i], p.d, p.mu, p.noise_psd) <= 0.0:
            dropped.add(i)
        else:
            kept.append(i)
    if not kept:
        return AllocSolution(bandwidths=bands, bits_continuous=bits,
                             bits_floored=np.zeros(n, dtype=np.int64),
                             dropped=set(range(n)), feasible=False)

    w_floor = {i: _w_zero(p, i) for i in kept}
    while kept and sum(w_floor[i] for i in kept) > p.w_total:
        worst = max(kept, key=lambda i: w_floor[i])
        kept.remove(worst)
        dropped.add(worst)
    if not kept:
        return AllocSolution(bandwidths=bands, bits_continuous=bits,
                             bits_floored=np.zeros(n, dtype=np.int64),
                             dropped=set(range(n)), feasible=False)

    if len(kept) == 1:
        i = kept[0]
        bands[i] = p.w_total
        lam = _marginal(p, i, p.w_total)
    else:
        lam_lo = min(_marginal(p, i, p.w_total) for i in kept)
        lam_hi = max(lam_lo, 1e-300)
        for _ in range(400):
            total = sum(_w_of_lambda(p, i, lam_hi, w_floor[i]) for i in kept)
            if total <= p.w_total:
                break
            lam_hi *= 2.0
        for _ in range(_INNER_ITERS):
            lam = math.sqrt(lam_lo * lam_hi) if lam_lo > 0 else 0.5 * (lam_lo + lam_hi)
            total = sum(_w_of_lambda(p, i, lam, w_floor[i]) for i in kept)
            if total > p.w_total:
                lam_lo = lam
            else:
                lam_hi = lam
            if abs(total - p.w_total) <= _OUTER_REL_TOL * p.w_total:
                break
            if lam_hi - lam_lo <= 1e-14 * lam_hi:
                break
        lam = lam_hi
        for i in kept:
            bands[i] = _w_of_lambda(p, i, lam, w_floor[i])
        # Absorb the residual bisection slack into the least price-sensitive
        # device; keeps the budget exactly spent.
        slack = p.w_total - bands[[*kept]].sum()
        bands[max(kept, key=lambda i: bands[i])] += slack

    for i in kept:
        bits[i] = b_of_w(bands[i], p.gains[i], p.taus[i], p.d, p.mu, p.noise_psd)

    residual = kkt_residual(p, bands, lam, kept=kept,
                            w_floor=[w_floor[i] for i in kept])
    sol = AllocSolution(
        bandwidths=bands,
        bits_continuous=bits,
        bits_floored=np.zeros(n, dtype=np.int64),
        dropped=dropped,
        dual_lambda=lam,
        kkt_residual=residual,
        feasible=True,
        objective=objective_value(p, bands, kept),
    )
    return floor_and_drop(p, sol)


def floor_and_drop(p: AllocProblem, sol: AllocSolution) -> AllocSolution:
    """Floor continuous bits, drop devices below the bit floor, re-verify delay."""
    floored = np.floor(sol.bits_continuous).astype(np.int64)
    floored[floored < 0] = 0
    dropped = set(sol.dropped)
    for i in range(p.num_devices):
        if i in dropped:
            floored[i] = 0
            continue
        if floored[i] < p.b_lower:
            floored[i] = 0
            dropped.add(i)
            continue
        payload = p.d * (int(floored[i]) + 1) + p.mu
        rate = _rate(sol.bandwidths[i], p.gains[i], p.noise_psd)
        if payload > p.taus[i] * rate * (1 + 1e-12):
            raise AssertionError(
                f"device {i}: floored payload violates its delay budget")
    sol.bits_floored = floored
    sol.dropped = dropped
    return sol


def kkt_residual(
    p: AllocProblem,
    bands: np.ndarray,
    lam: float,
    kept: list[int] | None = None,
    w_floor: list[float] | None = None,
) -> float:
    """Relative stationarity residual plus budget violation.

    Devices pinned at their zero-bit bandwidth floor only contribute when
    their marginal exceeds the price (their lower bound is active).
    """
    if kept is None:
        kept = list(range(p.num_devices))
    if lam <= 0:
        return math.inf
    res = 0.0
    for idx, i in enumerate(kept):
        if bands[i] <= 0:
            continue
        floor_i = w_floor[idx] if w_floor is not None else 0.0
        marg = _marginal(p, i, bands[i])
        if bands[i] <= floor_i * (1 + 1e-9):
            res = max(res, max(0.0, marg - lam) / lam)
        else:
            res = max(res, abs(marg - lam) / lam)
    used = sum(bands[i] for i in kept)
    res += abs(used - p.w_total) / p.w_total
    return res


def brute_force_alloc(
    p: AllocProblem,
    grid_points: int,
    stages: int = 3,
) -> tuple[float, np.ndarray]:
    """Grid-search oracle over bandwidth splits of the simplex.

    Enumerates splits of the full budget, skipping splits where any device
    cannot reach a non-negative bit count. Each stage zooms the grid around
    the best point of the previous one.
    """
    m = p.num_devices
    if m > 4:
        raise ValueError("grid oracle supports at most 4 devices")
    if m == 1:
        w = np.array([p.w_total])
        return objective_value(p, w, [0]), w

    def evaluate(w: np.ndarray) -> float:
        total = 0.0
        for i in range(m):
            if w[i] <= 0:
                return -math.inf
            b = b_of_w(w[i], p.gains[i], p.taus[i], p.d, p.mu, p.noise_psd)
            if b < 0:
                return -math.inf
            total += utility(b, p.alpha)
        return total

    per_dim = max(2, int(round(grid_points ** (1.0 / (m - 1)))))
    lo = np.zeros(m - 1)
    hi = np.full(m - 1, p.w_total)
    best_obj, best_w = -math.inf, np.full(m, p.w_total / m)
    for _ in range(stages):
        axes = [np.linspace(lo[k], hi[k], per_dim) for k in range(m - 1)]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([g.ravel() for g in mesh], axis=1)
        for row in coords:
            w_last = p.w_total - row.sum()
            if w_last <= 0:
                continue
            w = np.append(row, w_last)
            obj = evaluate(w)
            if obj > best_obj:
                best_obj, best_w = obj, w
        span = (hi - lo) / (per_dim - 1)
        centre = best_w[:-1]
        lo = np.maximum(centre - span, 0.0)
        hi = np.minimum(centre + span, p.w_total)
    return best_obj, best_w
