"""
Genie-aided coherent receiver for the center WDM channel.

The DSP chain uses the recorded linear channel (CD length and PMD Jones
response) and the known transmitted symbols; it models an ideal receiver
whose only residual impairments are noise and nonlinear interference.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy.optimize import brentq

from ..constellation import Constellation4D, demap_hard, label_bits
from ..infometrics import batch_rng, noise_variance, received_rates, worker_count
from .config import BER_THRESHOLD, WdmConfig
from .link import ChannelRecord, TxRecord, raised_cosine

MMSE_FLOOR = 1e-6
PHASE_WINDOW = 64


@dataclass(frozen=True)
class RxResult:
    """
    snr_elec_db : decision-point SNR (signal over error energy), dB
    gmi : bit/4D, clipped to [0, 6]
    pre_fec_ber : hard-decision BER with minimum-4D-distance decisions
    system_margin_db : snr_elec_db minus the AWGN SNR needed for ``BER_THRESHOLD``
    evm : rms error over rms signal
    """

    snr_elec_db: float
    gmi: float
    pre_fec_ber: float
    system_margin_db: float
    evm: float


def mmse_equalizer(jones: np.ndarray, floor: float = MMSE_FLOOR) -> np.ndarray:
    """(J^H J + floor I)^-1 J^H per frequency bin; ``jones`` has shape (2, 2, n)."""
    j = np.moveaxis(jones, -1, 0)
    jh = np.conj(np.swapaxes(j, 1, 2))
    g = jh @ j + floor * np.eye(2)
    return np.moveaxis(np.linalg.solve(g, jh), 0, -1)


def genie_phase(rx: np.ndarray, tx: np.ndarray, window: int = PHASE_WINDOW) -> np.ndarray:
    """
    Per-polarization phase estimate from the known symbols: the phasor
    rx * conj(tx) averaged over a centered window of ``window`` symbols
    (cyclic, the block is periodic).
    """
    z = rx * np.conj(tx)
    kernel = np.ones(window)
    n = len(z)
    out = np.empty_like(z)
    for p in range(z.shape[1]):
        ext = np.concatenate([z[-window:, p], z[:, p], z[:window, p]])
        s = np.convolve(ext, kernel, mode="same")[window: window + n]
        out[:, p] = s
    return np.angle(out)


def detect(w, record: ChannelRecord | None, wdm: WdmConfig, floor: float = MMSE_FLOOR):
    """
    Undo CD and PMD with the genie record, select the center channel with
    the matched RRC filter and sample at symbol instants; returns (n, 2)
    complex symbols scaled back to the constellation.
    """
    n = len(w)
    fs = w.sample_rate * 1e9
    omega = 2 * np.pi * sfft.fftfreq(n, 1.0 / fs)
    workers = worker_count()
    spec = sfft.fft(w.rails, axis=1, workers=workers)
    if record is not None:
        spec = spec * np.conj(record.cd_response(omega))
        eq = mmse_equalizer(record.jones, floor)
        spec = np.einsum("abw,bw->aw", eq, spec)
    f = sfft.fftfreq(n, 1.0 / (wdm.sample_rate))
    spec = spec * np.sqrt(raised_cosine(f, wdm.baud, wdm.rolloff))
    y = sfft.ifft(spec, axis=1, workers=workers)[:, ::wdm.sps]
    return y.T / np.sqrt(wdm.launch_power_w / 2.0)


def symbol_metrics(c: Constellation4D, rx: np.ndarray, tx: np.ndarray, labels: np.ndarray,
                   ber_threshold: float = BER_THRESHOLD) -> RxResult:
    """Decision-point metrics of phase-corrected symbols against the known transmission."""
    gain = np.vdot(tx.ravel(), rx.ravel()) / np.vdot(tx.ravel(), tx.ravel())
    y = rx / gain
    err = y - tx
    es = float(np.mean(np.sum(np.abs(tx) ** 2, axis=1)))
    en = float(np.mean(np.sum(np.abs(err) ** 2, axis=1)))
    snr_db = 10 * np.log10(es / en)
    sigma2 = en / 4.0
    idx = c._order[labels]
    gmi = float(np.clip(received_rates(c, y, idx, sigma2).gmi, 0.0, 6.0))
    dec = demap_hard(c, y)
    ber = float(np.mean(label_bits(dec) != label_bits(labels)))
    margin = snr_db - required_snr_for_ber(c, ber_threshold)
    return RxResult(float(snr_db), gmi, ber, float(margin), float(np.sqrt(en / es)))


def receive_center_channel(w, record: ChannelRecord | None, wdm: WdmConfig, tx: TxRecord,
                           phase_window: int | None = PHASE_WINDOW,
                           floor: float = MMSE_FLOOR) -> RxResult:
    """
    Full genie receiver for the center channel. ``record=None`` (back to
    back) skips the channel inversion; ``phase_window=None`` disables the
    phase estimator.
    """
    if record is None and not np.isclose(len(w), wdm.n_symbols * wdm.sps):
        raise ValueError("waveform does not match the WDM configuration")
    c, labels, sym = tx.center(wdm)
    rx = detect(w, record, wdm, floor)
    if phase_window:
        rx = rx * np.exp(-1j * genie_phase(rx, sym, phase_window))
    return symbol_metrics(c, rx, sym, labels)


def ber_awgn(c: Constellation4D, snr_db: float, n_samples: int = 200_000, seed: int = 0) -> float:
    """Hard-decision BER of ``c`` on the AWGN channel (fixed noise realization per seed)."""
    rng = batch_rng(seed, 0)
    idx = rng.integers(0, 64, n_samples)
    sigma = np.sqrt(noise_variance(snr_db))
    y = c.points[idx] + sigma * rng.standard_normal((n_samples, 4))
    dec = demap_hard(c, y)
    return float(np.mean(label_bits(dec) != c.bits[idx]))


@lru_cache(maxsize=64)
def _required_snr_for_ber(points_key: bytes, labels_key: bytes, threshold: float) -> float:
    c = _UNPACK[points_key, labels_key]
    return brentq(lambda s: ber_awgn(c, s) - threshold, -5.0, 25.0, xtol=1e-3)


_UNPACK: dict = {}


def required_snr_for_ber(c: Constellation4D, threshold: float = BER_THRESHOLD) -> float:
    """AWGN SNR (dB) at which the hard-decision BER equals ``threshold``."""
    key = (np.round(c.points, 12).tobytes(), c.labels.tobytes())
    _UNPACK.setdefault(key, c)
    return _required_snr_for_ber(key[0], key[1], float(threshold))
