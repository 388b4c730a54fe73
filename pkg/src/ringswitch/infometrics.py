"""
Monte Carlo estimates of symbol-wise MI and bit-wise GMI over a memoryless
circular Gaussian channel.

SNR convention: ``snr_db`` is the 4D symbol energy over the total noise
energy per 4D symbol, i.e. the noise variance per real dimension is
``es / (4 * 10**(snr_db / 10))`` with ``es`` the nominal mean 4D energy
(2 for constellations normalized per polarization). Equivalently, it is the
per-polarization Es/N0.

Likelihood sums run exactly over all constellation points in the log
domain; no max-log shortcut is taken.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .constellation import Constellation4D

MIN_SAMPLES = 10_000
BATCH = 1 << 15
ES_NOMINAL = 2.0
_LN2 = np.log(2.0)
_TINY = 1e-280


@dataclass(frozen=True)
class SnrPoint:
    snr_db: float
    gmi: float
    mi: float
    n_samples: int
    std_err: float
    mi_std_err: float = float("nan")


class BracketError(RuntimeError):
    """Raised when a required-SNR search cannot bracket its target."""


def noise_variance(snr_db, es: float = ES_NOMINAL):
    """Noise variance per real dimension for a given 4D SNR."""
    return es / (4.0 * 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("RINGSWITCH_THREADS", "1")))
    except ValueError:
        return 1


def batch_rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(batch)]))


def rate_terms(received, tx_idx, points, bits, sigma2):
    """
    Per-sample information deficits.

    Parameters
    ----------
    received : ndarray, shape (n, D)
        Channel outputs.
    tx_idx : ndarray of int, shape (n,)
        Index (into ``points``) of each transmitted symbol.
    points : ndarray, shape (M, D)
        Demapper reference constellation.
    bits : ndarray of {0, 1}, shape (M, m)
        Label bits of each reference point.
    sigma2 : float
        Noise variance per real dimension assumed by the demapper.

    Returns
    -------
    gmi_terms : ndarray, shape (n,)
        sum over bits of log2(sum_all p(y|x) / sum_{x: b_i = b_i(tx)} p(y|x)).
    mi_terms : ndarray, shape (n,)
        log2(sum_all p(y|x) / p(y|x_tx)).
    """
    y = np.asarray(received, dtype=float)
    d2 = (y ** 2).sum(1)[:, None] - 2.0 * y @ points.T + (points ** 2).sum(1)[None, :]
    ll = -d2 / (2.0 * sigma2)
    m = ll.max(axis=1, keepdims=True)
    e = np.exp(ll - m)
    s_all = e.sum(1)
    ones = e @ bits.astype(float)
    zeros = e @ (1.0 - bits)
    tx_bits = bits[tx_idx].astype(bool)
    s_true = np.where(tx_bits, ones, zeros)
    gmi_terms = (np.log(s_all)[:, None] - np.log(np.maximum(s_true, _TINY))).sum(1)

    bad = np.flatnonzero((s_true < _TINY).any(axis=1))
    if bad.size:
        # subset sums underflowed against the global max: redo those rows exactly
        lse_all = logsumexp(ll[bad], axis=1)
        acc = np.zeros(bad.size)
        for i in range(bits.shape[1]):
            for k, row in enumerate(bad):
                mask = bits[:, i] == bits[tx_idx[row], i]
                acc[k] += lse_all[k] - logsumexp(ll[row, mask])
        gmi_terms[bad] = acc

    mi_terms = np.log(s_all) + m[:, 0] - ll[np.arange(len(y)), tx_idx]
    gmi_terms = gmi_terms / _LN2
    mi_terms = mi_terms / _LN2
    if not (np.all(np.isfinite(gmi_terms)) and np.all(np.isfinite(mi_terms))):
        raise FloatingPointError("non-finite log-likelihood ratio")
    return gmi_terms, mi_terms


def llrs(received, c: Constellation4D, sigma2) -> np.ndarray:
    """Exact bit LLRs log(P(b=0 | y) / P(b=1 | y)), shape (n, 6)."""
    y = np.asarray(received, dtype=float)
    if np.iscomplexobj(received):
        y = np.stack([received[:, 0].real, received[:, 0].imag,
                      received[:, 1].real, received[:, 1].imag], axis=1)
    p = c.points
    ll = -((y[:, None, :] - p[None]) ** 2).sum(2) / (2.0 * sigma2)
    bits = c.bits
    out = np.empty((len(y), bits.shape[1]))
    for i in range(bits.shape[1]):
        out[:, i] = logsumexp(ll[:, bits[:, i] == 0], axis=1) - logsumexp(ll[:, bits[:, i] == 1], axis=1)
    return out


def _summarize(snr_db, g_terms, m_terms, n_bits, n):
    g_terms = np.concatenate(g_terms)
    m_terms = np.concatenate(m_terms)
    gmi = n_bits - g_terms.mean()
    mi = n_bits - m_terms.mean()
    return SnrPoint(float(snr_db), float(gmi), float(mi), int(n),
                    float(g_terms.std(ddof=1) / np.sqrt(n)),
                    float(m_terms.std(ddof=1) / np.sqrt(n)))


def monte_carlo_rates(points, bits, sigma2, n_samples, seed=0, tx_points=None,
                      snr_db=float("nan"), workers=None) -> SnrPoint:
    """
    GMI and MI of an arbitrary labeled constellation by Monte Carlo.

    Symbols are drawn uniformly; transmission uses ``tx_points`` (default:
    the reference ``points``) while the demapper uses ``points``. Each batch
    draws its symbols and unit-variance noise from an RNG keyed on
    (seed, batch), so the same seed gives common random numbers across SNR
    values and across transmitter distortions.
    """
    points = np.asarray(points, dtype=float)
    bits = np.asarray(bits)
    tx_points = points if tx_points is None else np.asarray(tx_points, dtype=float)
    n_samples = int(n_samples)
    M, D = points.shape
    sigma = float(np.sqrt(sigma2))
    starts = list(range(0, n_samples, BATCH))

    def run(b):
        rng = batch_rng(seed, b)
        size = min(BATCH, n_samples - starts[b])
        idx = rng.integers(0, M, size)
        noise = rng.standard_normal((size, D))
        return rate_terms(tx_points[idx] + sigma * noise, idx, points, bits, sigma2)

    results = _map_batches(run, len(starts), workers)
    return _summarize(snr_db, [r[0] for r in results], [r[1] for r in results],
                      bits.shape[1], n_samples)


def _map_batches(fn: Callable[[int], tuple], n_batches: int, workers=None):
    workers = worker_count() if workers is None else workers
    if workers <= 1 or n_batches == 1:
        return [fn(b) for b in range(n_batches)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, range(n_batches)))  # ordered reduction


def _check_samples(n_samples):
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_SAMPLES}, got {n_samples}")


def gmi_estimate(c: Constellation4D, snr_db: float, n_samples: int = 100_000,
                 seed: int = 0, tx: Constellation4D | None = None,
                 es: float = ES_NOMINAL) -> SnrPoint:
    """
    Bit-wise GMI (and symbol-wise MI) of ``c`` at ``snr_db``.

    ``tx`` optionally gives a distorted copy of ``c`` (same point order) used
    on the transmit side, e.g. after MZM imbalance; the noise level stays
    referenced to the nominal energy ``es``.
    """
    _check_samples(n_samples)
    tx_pts = None if tx is None else tx.points
    return monte_carlo_rates(c.points, c.bits, noise_variance(snr_db, es), n_samples,
                             seed, tx_points=tx_pts, snr_db=snr_db)


def mi_estimate(c: Constellation4D, snr_db: float, n_samples: int = 100_000,
                seed: int = 0, tx: Constellation4D | None = None,
                es: float = ES_NOMINAL) -> SnrPoint:
    """Symbol-wise MI; same estimator as :func:`gmi_estimate`."""
    return gmi_estimate(c, snr_db, n_samples, seed, tx, es)


def sequence_rates(c: Constellation4D, tx_idx, tx_symbols, snr_db: float, seed: int = 0,
                   es: float = ES_NOMINAL) -> SnrPoint:
    """
    GMI/MI for a fixed transmitted sequence plus fresh AWGN.

    ``tx_symbols`` has shape (n, 4) (real) or (n, 2) (complex) and may carry
    deterministic distortion (quantization, ISI); ``tx_idx`` indexes the
    intended points of ``c``.
    """
    tx = _as_real(tx_symbols)
    tx_idx = np.asarray(tx_idx)
    n = len(tx_idx)
    _check_samples(n)
    sigma2 = float(noise_variance(snr_db, es))
    sigma = np.sqrt(sigma2)
    points, bits = c.points, c.bits
    starts = list(range(0, n, BATCH))

    def run(b):
        sl = slice(starts[b], min(starts[b] + BATCH, n))
        noise = batch_rng(seed, b).standard_normal((sl.stop - sl.start, 4))
        return rate_terms(tx[sl] + sigma * noise, tx_idx[sl], points, bits, sigma2)

    results = _map_batches(run, len(starts))
    return _summarize(snr_db, [r[0] for r in results], [r[1] for r in results], 6, n)


def received_rates(c: Constellation4D, received, tx_idx, sigma2: float) -> SnrPoint:
    """GMI/MI of already-noisy received samples with a Gaussian demapper."""
    y = _as_real(received)
    tx_idx = np.asarray(tx_idx)
    g, m = [], []
    for s in range(0, len(y), BATCH):
        a, b = rate_terms(y[s:s + BATCH], tx_idx[s:s + BATCH], c.points, c.bits, sigma2)
        g.append(a)
        m.append(b)
    return _summarize(float("nan"), g, m, 6, len(y))


def _as_real(z):
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return np.stack([z[:, 0].real, z[:, 0].imag, z[:, 1].real, z[:, 1].imag], axis=1)
    return z.astype(float)


def gmi_sweep(c: Constellation4D, snr_grid: Sequence[float], n_samples: int = 100_000,
              seed: int = 0, tx: Constellation4D | None = None) -> list[SnrPoint]:
    """GMI over an SNR grid with common random numbers across grid points."""
    return [gmi_estimate(c, s, n_samples, seed, tx) for s in snr_grid]


@dataclass(frozen=True)
class RequiredSnr:
    snr_db: float
    at_lower_bound: bool
    evaluations: int


def required_snr(c: Constellation4D | Callable[[float], float], target_gmi: float,
                 tol_db: float = 0.01, lo_db: float = -10.0, hi_db: float = 30.0,
                 n_samples: int = 100_000, seed: int = 0,
                 tx: Constellation4D | None = None) -> RequiredSnr:
    """
    SNR at which the GMI reaches ``target_gmi``, by bisection.

    ``c`` may also be a callable ``snr_db -> gmi`` for custom transmit chains.
    Common random numbers keep the objective monotone in SNR; a violation of
    monotonicity inside the bracket raises :class:`BracketError`.
    """
    if not 0.0 < target_gmi < 6.0:
        raise ValueError("target_gmi must lie in (0, 6)")
    if callable(c) and not isinstance(c, Constellation4D):
        f = c
    else:
        def f(s):
            return gmi_estimate(c, s, n_samples, seed, tx).gmi

    evals = 2
    g_lo, g_hi = f(lo_db), f(hi_db)
    if g_hi < target_gmi:
        raise BracketError(f"GMI at {hi_db} dB is {g_hi:.4f} < target {target_gmi}")
    if g_lo >= target_gmi:
        return RequiredSnr(lo_db, True, evals)
    lo, hi = lo_db, hi_db
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        g = f(mid)
        evals += 1
        if not (g_lo - 1e-9 <= g <= g_hi + 1e-9):
            raise BracketError(f"GMI not monotone in SNR near {mid:.3f} dB")
        if g >= target_gmi:
            hi, g_hi = mid, g
        else:
            lo, g_lo = mid, g
    # linear interpolation inside the final bracket
    snr = lo if g_hi == g_lo else lo + (target_gmi - g_lo) * (hi - lo) / (g_hi - g_lo)
    return RequiredSnr(float(snr), False, evals)


SWEEP_COLUMNS = ("snr_db", "gmi", "mi", "std_err", "n_samples", "format", "seed")


def sweep_rows(points: Sequence[SnrPoint], fmt: str, seed: int) -> list[dict]:
    return [{"snr_db": f"{p.snr_db:.4f}", "gmi": f"{p.gmi:.6f}", "mi": f"{p.mi:.6f}",
             "std_err": f"{p.std_err:.6f}", "n_samples": p.n_samples, "format": fmt,
             "seed": seed} for p in points]


def write_sweep_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
