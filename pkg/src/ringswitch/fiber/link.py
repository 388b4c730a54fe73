"""
WDM transmitter and Manakov split-step propagation with PMD waveplates and
lumped EDFAs.

Field convention: A(t) = sum_f A(f) exp(+j 2 pi f t) (numpy FFT), so the
linear step multiplies each bin by exp((j beta2 w^2 / 2 - alpha / 2) h).
All blocks are periodic; shaping and filtering are done in the frequency
domain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy.stats import unitary_group

from ..constellation import Constellation4D, symbols_from_labels
from ..infometrics import worker_count
from ..waveform import SampledWaveform
from .config import LinkConfig, WdmConfig


def raised_cosine(f, baud: float, rolloff: float) -> np.ndarray:
    """Raised-cosine spectrum with unit passband gain; ``f`` and ``baud`` in the same units."""
    a = np.abs(np.asarray(f, dtype=float)) / baud
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    out = np.where(a <= lo, 1.0, 0.0)
    mid = (a > lo) & (a < hi)
    out[mid] = 0.5 * (1 + np.cos(np.pi / rolloff * (a[mid] - lo)))
    return out


def seed_rng(*keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


# named stream ids
_DATA, _WAVEPLATE, _ASE = 1, 2, 3


@dataclass
class TxRecord:
    """Transmitted labels and symbols per channel (unit-energy-per-pol constellations)."""

    formats: list
    labels: np.ndarray
    symbols: np.ndarray  # (n_channels, n_symbols, 2) complex

    def center(self, wdm: WdmConfig):
        k = wdm.center_index
        return self.formats[k], self.labels[k], self.symbols[k]


def shape_channel(symbols: np.ndarray, sps: int, baud: float, rolloff: float) -> np.ndarray:
    """
    Periodic RRC shaping of (n, 2) symbols to (2, n*sps) samples whose mean
    power equals the mean symbol energy.
    """
    n = len(symbols)
    up = np.zeros((2, n * sps), dtype=complex)
    up[:, ::sps] = symbols.T
    f = sfft.fftfreq(n * sps, 1.0 / (sps * baud))
    g = sps * np.sqrt(raised_cosine(f, baud, rolloff))
    return sfft.ifft(sfft.fft(up, axis=1) * g, axis=1)


def wdm_transmit(formats: Constellation4D | Sequence[Constellation4D],
                 wdm: WdmConfig) -> tuple[SampledWaveform, TxRecord]:
    """
    Shape each channel, shift it to its grid slot, scale it to the launch
    power and sum. Every channel draws its labels from its own seed stream.
    """
    if isinstance(formats, Constellation4D):
        formats = [formats] * wdm.n_channels
    formats = list(formats)
    if len(formats) != wdm.n_channels:
        raise ValueError("need one format per channel")
    sps, n = wdm.sps, wdm.n_symbols
    n_samp = n * sps
    scale = np.sqrt(wdm.launch_power_w / 2.0)
    total = np.zeros((2, n_samp), dtype=complex)
    labels = np.empty((wdm.n_channels, n), dtype=np.int64)
    symbols = np.empty((wdm.n_channels, n, 2), dtype=complex)
    for k, (c, off) in enumerate(zip(formats, wdm.offsets)):
        labels[k] = seed_rng(wdm.seed, _DATA, k).integers(0, 64, n)
        symbols[k] = symbols_from_labels(c, labels[k])
        spec = sfft.fft(shape_channel(symbols[k], sps, wdm.baud, wdm.rolloff), axis=1)
        shift = int(round(off * n / wdm.baud))
        total += scale * sfft.ifft(np.roll(spec, shift, axis=1), axis=1)
    w = SampledWaveform(total[0], total[1], wdm.sample_rate)
    return w, TxRecord(formats, labels, symbols)


# --------------------------------------------------------------------------
# PMD


@dataclass
class Waveplates:
    """Per-segment random unitaries (K, 2, 2) and DGDs (K,) in seconds."""

    unitaries: np.ndarray
    dgd: np.ndarray


def draw_waveplates(link: LinkConfig, n_spans: int, seed: int) -> Waveplates:
    k = n_spans * link.n_waveplates_per_span
    if link.pmd_coeff == 0.0:
        return Waveplates(np.tile(np.eye(2, dtype=complex), (k, 1, 1)), np.zeros(k))
    rng = seed_rng(seed, _WAVEPLATE)
    u = unitary_group.rvs(2, size=k, random_state=rng).reshape(k, 2, 2) if k else \
        np.zeros((0, 2, 2), dtype=complex)
    tau = np.full(k, link.segment_dgd)
    if link.dgd_model == "gaussian":
        # 20 % spread, mean-square DGD preserved
        tau = tau / np.sqrt(1.04) * (1 + 0.2 * rng.standard_normal(k))
    return Waveplates(u, tau)


def dgd_phasors(omega, tau):
    """Diagonal DGD element exp(-/+ j w tau / 2) as two arrays."""
    ph = np.exp(-0.5j * omega * tau)
    return ph, ph.conj()


def jones_response(wp: Waveplates, omega) -> np.ndarray:
    """Cascade Jones matrix J(w), shape (2, 2, len(omega)); identity if no segments."""
    omega = np.atleast_1d(omega)
    j = np.zeros((2, 2, len(omega)), dtype=complex)
    j[0, 0] = j[1, 1] = 1.0
    for u, tau in zip(wp.unitaries, wp.dgd):
        j = _apply_segment(j, u, omega, tau)
    return j


def _apply_segment(j, u, omega, tau):
    j = np.einsum("ab,bcw->acw", u, j)
    a, b = dgd_phasors(omega, tau)
    j[0] *= a
    j[1] *= b
    return j


def dgd_from_jones(wp: Waveplates, omega0: float = 0.0, d_omega: float = 2 * np.pi * 1e6) -> float:
    """Differential group delay (s) of the cascade at ``omega0``."""
    om = np.array([omega0 - d_omega, omega0 + d_omega])
    j = jones_response(wp, om)
    jd = (j[..., 1] - j[..., 0]) / (2 * d_omega)
    jm = 0.5 * (j[..., 0] + j[..., 1])
    ev = np.linalg.eigvals(1j * jd @ jm.conj().T)
    return float(abs(ev[0].real - ev[1].real))


# --------------------------------------------------------------------------
# split-step propagation


@dataclass
class ChannelRecord:
    """Realized linear channel: accumulated CD length (m) and PMD Jones response on the FFT grid."""

    length: float
    beta2: float
    jones: np.ndarray  # (2, 2, n_samples)
    n_spans: int
    ase_variance: float = 0.0  # accumulated per-sample ASE power per polarization

    def cd_response(self, omega) -> np.ndarray:
        return np.exp(0.5j * self.beta2 * omega ** 2 * self.length)


@dataclass
class Propagated:
    waveform: SampledWaveform
    record: ChannelRecord
    span_powers: list = field(default_factory=list)


class StepCountError(RuntimeError):
    """Nonlinear phase per step exceeds the configured accuracy bound."""


def ssfm_propagate(w: SampledWaveform, link: LinkConfig, seed: int = 0,
                   taps: Sequence[int] | None = None) -> Propagated | dict:
    """
    Symmetric split-step Manakov propagation over ``link.n_spans`` spans.

    Each span has ``n_waveplates_per_span`` segments; a segment applies a
    random unitary and a DGD element, then ``steps_per_waveplate`` split
    steps (half linear, nonlinear at the midpoint power, half linear). After
    each span the EDFA restores the span loss exactly and, if enabled, adds
    white Gaussian ASE per polarization.

    With ``taps`` (span counts), returns a dict {count: Propagated} holding
    copies taken after those spans; otherwise one Propagated.
    """
    n = len(w)
    fs = w.sample_rate * 1e9
    omega = 2 * np.pi * sfft.fftfreq(n, 1.0 / fs)
    seg = link.segment_length
    h = seg / link.steps_per_waveplate
    gnl = link.manakov_factor * link.gamma_si
    peak = float(np.max(np.abs(w.x) ** 2 + np.abs(w.y) ** 2))
    if gnl * peak * h > link.max_nl_phase_per_step:
        raise StepCountError(f"nonlinear phase per step {gnl * peak * h:.3g} rad exceeds "
                             f"{link.max_nl_phase_per_step} rad; raise steps_per_waveplate")
    half = np.exp((0.5j * link.beta2 * omega ** 2 - 0.5 * link.alpha) * h / 2)
    wp = draw_waveplates(link, link.n_spans, seed)
    ase_rng = seed_rng(seed, _ASE)
    ase_var = link.ase_psd * fs if link.ase else 0.0
    workers = worker_count()
    taps = sorted(set(taps)) if taps is not None else None
    if taps is not None and (not taps or taps[0] < 0 or taps[-1] > link.n_spans):
        raise ValueError("taps must lie within [0, n_spans]")

    spec = sfft.fft(w.rails, axis=1, workers=workers)
    jones = np.zeros((2, 2, n), dtype=complex)
    jones[0, 0] = jones[1, 1] = 1.0
    powers = [w.power()]
    out = {}

    def snapshot(spans):
        field_t = sfft.ifft(spec, axis=1, workers=workers)
        rec = ChannelRecord(spans * link.span_length * 1e3, link.beta2, jones.copy(), spans,
                            spans * ase_var)
        return Propagated(w.with_rails(field_t[0], field_t[1]), rec, list(powers))

    if taps is not None and 0 in taps:
        out[0] = snapshot(0)
    for span in range(link.n_spans):
        for s in range(link.n_waveplates_per_span):
            i = span * link.n_waveplates_per_span + s
            u, tau = wp.unitaries[i], wp.dgd[i]
            spec = u @ spec
            a, b = dgd_phasors(omega, tau)
            spec[0] *= a
            spec[1] *= b
            if link.pmd_coeff > 0:
                jones = _apply_segment(jones, u, omega, tau)
            for _ in range(link.steps_per_waveplate):
                spec *= half
                if gnl > 0:
                    f = sfft.ifft(spec, axis=1, workers=workers)
                    p = (f.real ** 2 + f.imag ** 2).sum(0)
                    f *= np.exp(1j * gnl * h * p)
                    spec = sfft.fft(f, axis=1, workers=workers)
                spec *= half
        spec *= np.sqrt(link.span_gain)
        if ase_var > 0:
            noise = ase_rng.standard_normal((2, 2, n))
            noise_t = np.sqrt(ase_var / 2) * (noise[0] + 1j * noise[1])
            spec += sfft.fft(noise_t, axis=1, workers=workers)
        powers.append(float(np.mean(np.abs(spec) ** 2) / n * 2))
        if taps is not None and span + 1 in taps:
            out[span + 1] = snapshot(span + 1)
    if taps is not None:
        return out
    return snapshot(link.n_spans)
