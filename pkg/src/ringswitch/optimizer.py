"""
GMI-driven tuning of constellation free parameters (ring ratio, rotation).

All objective evaluations at one SNR share a noise seed (common random
numbers), so the Monte Carlo objective is a deterministic function of the
parameters and ordinary bracketing methods apply.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .constellation import Constellation4D
from .infometrics import gmi_estimate

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OptResult:
    """
    best_params : tuple of float
    best_gmi : float
    trace : list of (params, gmi, std_err) in evaluation order
    method : 'golden', 'grid' (dense-grid fallback) or 'grid+nelder-mead'
    """

    best_params: tuple
    best_gmi: float
    trace: list = field(default_factory=list)
    method: str = "golden"


class _Objective:
    """Memoized CRN GMI objective of a parameter tuple."""

    def __init__(self, builder, snr_db, n_samples, seed):
        self.builder = builder
        self.snr_db = snr_db
        self.n_samples = n_samples
        self.seed = seed
        self.cache: dict = {}
        self.trace: list = []

    def __call__(self, *params) -> float:
        key = tuple(float(np.round(p, 12)) for p in params)
        if key not in self.cache:
            c: Constellation4D = self.builder(*key)
            est = gmi_estimate(c, self.snr_db, self.n_samples, self.seed)
            self.cache[key] = est.gmi
            self.trace.append((key, est.gmi, est.std_err))
        return self.cache[key]

    def best(self):
        return max(self.trace, key=lambda t: (t[1], [-p for p in t[0]]))


def _unimodal(trace) -> bool:
    """Values sorted by parameter rise to the maximum and then fall."""
    pts = sorted((t[0][0], t[1]) for t in trace)
    v = [p[1] for p in pts]
    k = int(np.argmax(v))
    return all(a <= b for a, b in zip(v[:k], v[1:k + 1])) and \
        all(a >= b for a, b in zip(v[k:], v[k + 1:]))


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float) -> None:
    """Maximize ``f`` on [lo, hi] until the bracket is narrower than ``tol``."""
    if hi - lo <= tol:
        f(0.5 * (lo + hi)) if hi > lo else f(lo)
        return
    f(lo), f(hi)
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)


def optimize_ring_ratio(builder: Callable[[float], Constellation4D], snr_db: float,
                        ratio_bounds: tuple = (0.3, 0.8), tol: float = 1e-3,
                        n_samples: int = 200_000, seed: int = 0,
                        fallback_points: int = 41) -> OptResult:
    """
    Golden-section search for the GMI-maximizing ring ratio.

    If the evaluated points are not unimodal the search falls back to a
    dense grid of ``fallback_points`` ratios and returns the best point seen.
    """
    lo, hi = map(float, ratio_bounds)
    if not 0.0 < lo <= hi <= 1.0:
        raise ValueError(f"ratio bounds must lie in (0, 1], got {ratio_bounds}")
    obj = _Objective(builder, snr_db, n_samples, seed)
    if lo == hi:
        obj(lo)
        p, g, _ = obj.best()
        return OptResult(p, g, obj.trace, "golden")
    golden_section(obj, lo, hi, tol)
    method = "golden"
    if not _unimodal(obj.trace):
        for r in np.linspace(lo, hi, fallback_points):
            obj(r)
        method = "grid"
    p, g, _ = obj.best()
    return OptResult(p, g, obj.trace, method)


def optimize_params_2d(builder: Callable[[float, float], Constellation4D], snr_db: float,
                       ratio_bounds: tuple, angle_bounds: tuple, grid: tuple = (9, 9),
                       refine: bool = True, tol: float = 1e-3, n_samples: int = 200_000,
                       seed: int = 0) -> OptResult:
    """
    Coarse grid over (ring ratio, angle) then bounded Nelder-Mead refinement
    from the best grid cell. Angles are in radians.
    """
    (r0, r1), (a0, a1) = ratio_bounds, angle_bounds
    if not (0.0 < r0 <= r1 <= 1.0 and a0 <= a1):
        raise ValueError("invalid bounds")
    obj = _Objective(builder, snr_db, n_samples, seed)
    for r, a in itertools.product(np.linspace(r0, r1, grid[0]), np.linspace(a0, a1, grid[1])):
        obj(r, a)
    method = "grid"
    if refine and (r1 > r0 or a1 > a0):
        start, _, _ = obj.best()
        scale = np.array([max(r1 - r0, 1e-12), max(a1 - a0, 1e-12)])
        lo = np.array([r0, a0])

        def neg(u):
            return -obj(*(lo + np.clip(u, 0.0, 1.0) * scale))

        minimize(neg, (np.array(start) - lo) / scale, method="Nelder-Mead",
                 bounds=[(0.0, 1.0), (0.0, 1.0)],
                 options={"xatol": tol, "fatol": 1e-7, "maxiter": 200,
                          "initial_simplex": _simplex((np.array(start) - lo) / scale,
                                                      1.0 / max(grid))})
        method = "grid+nelder-mead"
    p, g, _ = obj.best()
    return OptResult(p, g, obj.trace, method)


def _simplex(u, h):
    u = np.clip(u, 0.0, 1.0)
    pts = [u]
    for i in range(len(u)):
        v = u.copy()
        v[i] = v[i] + h if v[i] + h <= 1.0 else v[i] - h
        pts.append(v)
    return np.array(pts)


def write_trace_csv(path, result: OptResult, param_names: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*param_names, "gmi", "std_err"])
        for params, gmi, se in result.trace:
            w.writerow([*(f"{p:.9f}" for p in params), f"{gmi:.9f}", f"{se:.9f}"])
