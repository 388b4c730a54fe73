"""
Transmitter impairments: MZM I-Q gain/quadrature imbalance and finite DAC
resolution on RRC-shaped waveforms.
"""
from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import oaconvolve

from .constellation import Constellation4D, N_BITS, symbols_from_labels
from .infometrics import (gmi_estimate, required_snr, sequence_rates, worker_count,
                          MIN_SAMPLES)
from .waveform import SampledWaveform


@dataclass(frozen=True)
class MzmImbalance:
    """
    I-Q imbalance of the two IQ modulators.

    ``theta_*`` are the I-Q phase angles in degrees (90 is ideal);
    ``alpha_*_db`` is the I-over-Q gain disparity in dB, the Q rail being
    scaled by ``10**(-alpha_db/20)``.
    """

    theta_x: float = 90.0
    theta_y: float = 90.0
    alpha_x_db: float = 0.0
    alpha_y_db: float = 0.0

    @property
    def alpha_x(self) -> float:
        return 10.0 ** (-self.alpha_x_db / 20.0)

    @property
    def alpha_y(self) -> float:
        return 10.0 ** (-self.alpha_y_db / 20.0)

    def key(self):
        """Ordering used to break ties between equal-GMI grid cells."""
        return (abs(self.theta_x - 90.0), abs(self.theta_y - 90.0),
                self.alpha_x_db, self.alpha_y_db, self.theta_x, self.theta_y)


NOMINAL = MzmImbalance()


def iq_modulate(z, theta_deg: float, alpha: float):
    """E = I + alpha * exp(j theta) * Q for ideal drive components I, Q."""
    z = np.asarray(z)
    return z.real + alpha * np.exp(1j * np.deg2rad(theta_deg)) * z.imag


def apply_mzm(c: Constellation4D, imb: MzmImbalance) -> Constellation4D:
    """Distort every point through imbalanced IQ modulators; no re-normalization."""
    if imb == NOMINAL:
        return c
    x = iq_modulate(c.x, imb.theta_x, imb.alpha_x)
    y = iq_modulate(c.y, imb.theta_y, imb.alpha_y)
    return c.with_points(x, y, f"{c.name}+mzm")


def impaired_gmi(c: Constellation4D, imb: MzmImbalance, snr_db: float,
                 n_samples: int = 100_000, seed: int = 0,
                 demapper: str = "matched") -> float:
    """
    GMI of ``c`` transmitted through imbalanced modulators.

    ``demapper='matched'`` demaps against the distorted constellation (the
    receiver knows the static transmitter response); ``'nominal'`` demaps
    against the ideal points. Noise is referenced to the nominal energy.
    """
    d = apply_mzm(c, imb)
    if demapper == "matched":
        return gmi_estimate(d, snr_db, n_samples, seed).gmi
    if demapper == "nominal":
        return gmi_estimate(c, snr_db, n_samples, seed, tx=d).gmi
    raise ValueError(f"unknown demapper {demapper!r}")


def conjugation_symmetric(c: Constellation4D) -> bool:
    """
    Whether conjugating both polarizations maps ``c`` onto itself with a
    label permutation made of bit reorderings and bit flips.

    Such a permutation leaves GMI unchanged, so GMI(theta offsets d) equals
    GMI(offsets -d) and a grid over offset signs can be halved.
    """
    p = c.points
    q = p * np.array([1, -1, 1, -1])
    d = ((q[:, None, :] - p[None]) ** 2).sum(2)
    match = d.argmin(1)
    if not np.allclose(d[np.arange(64), match], 0.0, atol=1e-12):
        return False
    src, dst = c.labels, c.labels[match]
    for perm in itertools.permutations(range(N_BITS)):
        mapped = np.zeros_like(src)
        for new_pos, old_pos in enumerate(perm):
            mapped |= ((src >> (N_BITS - 1 - old_pos)) & 1) << (N_BITS - 1 - new_pos)
        mask = mapped ^ dst
        if np.all(mask == mask[0]):
            return True
    return False


@dataclass(frozen=True)
class WorstCase:
    min_gmi: float
    argmin: MzmImbalance
    nominal_gmi: float
    n_cells: int

    @property
    def fluctuation(self) -> float:
        return self.nominal_gmi - self.min_gmi


def _axis(max_value, step):
    if max_value <= 0:
        return np.array([0.0])
    n = int(round(max_value / step))
    vals = np.linspace(0.0, max_value, n + 1) if n > 0 else np.array([0.0, max_value])
    return np.unique(np.append(vals, max_value))


def imbalance_cells(theta_dev_max: float, gain_db_max: float, theta_step: float = 1.0,
                    gain_step: float = 0.1, halve: bool = False):
    """All grid cells; with ``halve`` the X quadrature offset keeps one sign."""
    dev = _axis(theta_dev_max, theta_step)
    signed = np.unique(np.concatenate([-dev, dev]))
    gains = _axis(gain_db_max, gain_step)
    tx_axis = dev if halve else signed
    for dx, dy, gx, gy in itertools.product(tx_axis, signed, gains, gains):
        yield MzmImbalance(float(90.0 + dx), float(90.0 + dy), float(gx), float(gy))


def worst_case_gmi(c: Constellation4D, snr_db: float, theta_dev_max: float = 15.0,
                   gain_db_max: float = 1.7, theta_step: float = 1.0, gain_step: float = 0.1,
                   n_samples: int = 10_000, seed: int = 0, final_samples: int = 200_000,
                   demapper: str = "matched", strategy: str = "exhaustive",
                   coarse_factor: int = 5, workers: int | None = None) -> WorstCase:
    """
    Grid search for the minimum GMI under MZM imbalance.

    Every cell is scored with the same noise realization (common random
    numbers), so the grid minimum is monotone in the grid extent. The
    minimizing cell and the nominal point are then re-evaluated with
    ``final_samples``. Ties go to the smallest imbalance.

    ``strategy='exhaustive'`` scores every cell of the fine grid.
    ``'refine'`` scores a grid ``coarse_factor`` times coarser (end points
    included) and then walks to the best of the 80 fine-grid neighbours until
    no neighbour is lower.
    """
    halve = conjugation_symmetric(c)
    workers = worker_count() if workers is None else workers
    cache: dict = {}

    def score_all(cells):
        todo = [imb for imb in cells if imb not in cache]
        if workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(workers) as pool:
                vals = list(pool.map(lambda i: impaired_gmi(c, i, snr_db, n_samples, seed,
                                                            demapper), todo))
        else:
            vals = [impaired_gmi(c, i, snr_db, n_samples, seed, demapper) for i in todo]
        cache.update(zip(todo, vals))
        return min(cells, key=lambda i: (cache[i], i.key()))

    if strategy == "exhaustive":
        argmin = score_all(list(imbalance_cells(theta_dev_max, gain_db_max, theta_step,
                                                gain_step, halve)))
    elif strategy == "refine":
        argmin = score_all(list(imbalance_cells(theta_dev_max, gain_db_max,
                                                theta_step * coarse_factor,
                                                gain_step * coarse_factor, halve)))
        lo = (-theta_dev_max, -theta_dev_max, 0.0, 0.0)
        hi = (theta_dev_max, theta_dev_max, gain_db_max, gain_db_max)
        if halve:
            lo = (0.0,) + lo[1:]
        steps = (theta_step, theta_step, gain_step, gain_step)
        while True:
            base = (argmin.theta_x - 90.0, argmin.theta_y - 90.0, argmin.alpha_x_db,
                    argmin.alpha_y_db)
            nbrs = []
            for move in itertools.product((-1, 0, 1), repeat=4):
                v = [min(max(b + m * s, l), h) for b, m, s, l, h in zip(base, move, steps, lo, hi)]
                v = [float(np.round(t, 9)) for t in v]
                nbrs.append(MzmImbalance(90.0 + v[0], 90.0 + v[1], v[2], v[3]))
            nxt = score_all(nbrs + [argmin])
            if nxt == argmin:
                break
            argmin = nxt
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    final = max(final_samples, n_samples)
    return WorstCase(
        min_gmi=impaired_gmi(c, argmin, snr_db, final, seed, demapper),
        argmin=argmin,
        nominal_gmi=gmi_estimate(c, snr_db, final, seed).gmi,
        n_cells=len(cache),
    )


def imbalance_heatmap(formats: Sequence[Constellation4D], snr_db: float,
                      theta_devs: Sequence[float], gains_db: Sequence[float],
                      n_samples: int = 100_000, seed: int = 0,
                      demapper: str = "matched") -> list[dict]:
    """GMI with the same imbalance on both polarizations (rows of theta_dev, gain_db, gmi per format)."""
    rows = []
    for dev in theta_devs:
        for g in gains_db:
            imb = MzmImbalance(90.0 + dev, 90.0 + dev, g, g)
            row = {"theta_dev": f"{dev:.3f}", "gain_db": f"{g:.3f}"}
            for c in formats:
                row[c.name] = f"{impaired_gmi(c, imb, snr_db, n_samples, seed, demapper):.6f}"
            rows.append(row)
    return rows


def write_heatmap_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# --------------------------------------------------------------------------
# pulse shaping and DAC


@dataclass(frozen=True)
class DacConfig:
    bits: int | None = 8
    samples_per_symbol: int = 2
    rolloff: float = 0.1
    span_symbols: int = 64

    def __post_init__(self):
        if self.bits is not None and self.bits < 1:
            raise ValueError("DAC resolution must be at least 1 bit")
        if not 0.0 < self.rolloff < 1.0:
            raise ValueError("rolloff must lie in (0, 1)")


def rrc_taps(sps: int, rolloff: float, span: int) -> np.ndarray:
    """
    Root-raised-cosine impulse response, ``span * sps + 1`` taps, unit energy.
    """
    if span % 2 or sps < 1:
        raise ValueError("span must be even and sps positive")
    t = np.arange(-span * sps // 2, span * sps // 2 + 1) / sps
    b = rolloff
    h = np.empty_like(t)
    zero = np.isclose(t, 0.0)
    sing = np.isclose(np.abs(t), 1.0 / (4.0 * b)) if b > 0 else np.zeros_like(zero)
    reg = ~(zero | sing)
    tr = t[reg]
    h[reg] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2))
    h[zero] = 1.0 - b + 4.0 * b / np.pi
    h[sing] = (b / np.sqrt(2)) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                 + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
    return h / np.sqrt(np.sum(h ** 2))


def rrc_shape(symbols, sps: int = 2, rolloff: float = 0.1, span: int = 64,
              symbol_rate: float = 1.0) -> SampledWaveform:
    """
    Upsample a (n, 2) complex symbol stream by ``sps`` and filter with RRC taps.

    The output is the full linear convolution; symbol k peaks at sample
    ``k * sps + span * sps // 2`` (the filter group delay).
    """
    if sps < 2:
        raise ValueError("need at least 2 samples per symbol")
    s = np.asarray(symbols)
    h = rrc_taps(sps, rolloff, span)
    up = np.zeros((len(s) * sps, 2), dtype=complex)
    up[::sps] = s
    out = oaconvolve(up, h[:, None], axes=0)
    return SampledWaveform(out[:, 0], out[:, 1], symbol_rate * sps)


def matched_filter(w: SampledWaveform, n_symbols: int, sps: int = 2, rolloff: float = 0.1,
                   span: int = 64) -> np.ndarray:
    """Matched-filter a waveform from :func:`rrc_shape` and sample at symbol instants."""
    h = rrc_taps(sps, rolloff, span)
    out = oaconvolve(w.rails.T, h[::-1, None].conj(), axes=0)
    delay = span * sps  # transmit + receive group delays
    return out[delay: delay + n_symbols * sps: sps]


def dac_quantize(w: SampledWaveform, cfg: DacConfig) -> SampledWaveform:
    """
    Uniform mid-rise quantization of each real rail (Ix, Qx, Iy, Qy) to
    ``2**bits`` levels spanning [-max|rail|, +max|rail|] of that rail.
    """
    if cfg.bits is None:
        return w
    rails = [w.x.real, w.x.imag, w.y.real, w.y.imag]
    levels = 2 ** cfg.bits
    out = []
    for r in rails:
        full = np.max(np.abs(r))
        if full == 0.0:
            raise ValueError("cannot quantize an all-zero rail")
        step = 2.0 * full / (levels - 1)
        k = np.clip(np.round((r + full) / step), 0, levels - 1)
        out.append(k * step - full)
    return w.with_rails(out[0] + 1j * out[1], out[2] + 1j * out[3])


def dac_symbols(c: Constellation4D, cfg: DacConfig, n_symbols: int, seed: int = 0):
    """
    Random labels, their shaped-quantized-matched-filtered symbols.

    Returns (point indices into ``c``, received noiseless symbols (n, 2)).
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xDAC]))
    labels = rng.integers(0, 64, n_symbols)
    tx = symbols_from_labels(c, labels)
    w = rrc_shape(tx, cfg.samples_per_symbol, cfg.rolloff, cfg.span_symbols)
    w = dac_quantize(w, cfg)
    rx = matched_filter(w, n_symbols, cfg.samples_per_symbol, cfg.rolloff, cfg.span_symbols)
    idx = np.array([c.index_of(int(l)) for l in range(64)])[labels]
    return idx, rx


def dac_required_snr(c: Constellation4D, cfg: DacConfig, target_gmi: float = 5.0,
                     n_symbols: int = 1 << 17, seed: int = 0, tol_db: float = 0.005) -> float:
    """Required SNR for ``target_gmi`` after shaping, quantization and matched filtering."""
    if n_symbols < MIN_SAMPLES:
        raise ValueError("too few symbols")
    idx, rx = dac_symbols(c, cfg, n_symbols, seed)

    def f(snr):
        return sequence_rates(c, idx, rx, snr, seed).gmi

    return required_snr(f, target_gmi, tol_db=tol_db, lo_db=0.0, hi_db=20.0).snr_db


def dac_penalty(c: Constellation4D, bits: int, target_gmi: float = 5.0,
                n_symbols: int = 1 << 17, seed: int = 0, **cfg) -> float:
    """Required-SNR penalty of a ``bits``-resolution DAC over an ideal one."""
    ref = dac_required_snr(c, DacConfig(bits=None, **cfg), target_gmi, n_symbols, seed)
    return dac_required_snr(c, DacConfig(bits=bits, **cfg), target_gmi, n_symbols, seed) - ref
