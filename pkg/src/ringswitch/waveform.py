"""Dual-polarization sampled waveform container and its binary snapshot format."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """
    Complex baseband field on two polarization rails.

    Parameters
    ----------
    x, y : ndarray of complex
        Samples of the X and Y rails (sqrt(W) for optical fields).
    sample_rate : float
        Samples per second, in GHz.
    center_freq_offset : float
        Offset of the baseband origin from the reference carrier, in GHz.
    """

    x: np.ndarray
    y: np.ndarray
    sample_rate: float
    center_freq_offset: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=complex)
        y = np.asarray(self.y, dtype=complex)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("rails must be 1-D and of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("waveform samples must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.x)

    @property
    def rails(self) -> np.ndarray:
        return np.stack([self.x, self.y])

    def power(self) -> float:
        """Mean total power over both polarizations."""
        return float(np.mean(np.abs(self.x) ** 2 + np.abs(self.y) ** 2))

    def energy(self) -> float:
        return float(np.sum(np.abs(self.x) ** 2 + np.abs(self.y) ** 2))

    def papr(self) -> float:
        p = np.abs(self.x) ** 2 + np.abs(self.y) ** 2
        return float(p.max() / p.mean())

    def with_rails(self, x, y) -> "SampledWaveform":
        return replace(self, x=x, y=y)


def save_snapshot(w: SampledWaveform, path) -> None:
    """
    Write a waveform as a text header followed by little-endian float64
    samples interleaved as (Re x, Im x, Re y, Im y).
    """
    header = (f"ringswitch-waveform v1\nsample_rate_ghz={w.sample_rate!r}\n"
              f"center_freq_offset_ghz={w.center_freq_offset!r}\nlength={len(w)}\nend\n")
    data = np.empty((len(w), 4), dtype="<f8")
    data[:, 0], data[:, 1] = w.x.real, w.x.imag
    data[:, 2], data[:, 3] = w.y.real, w.y.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())


def load_snapshot(path) -> SampledWaveform:
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.index(marker) + len(marker)
    meta = {}
    for line in raw[:cut].decode("ascii").splitlines()[1:]:
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k] = v
    n = int(meta["length"])
    data = np.frombuffer(raw[cut:], dtype="<f8")
    if data.size != 4 * n:
        raise ValueError(f"snapshot holds {data.size // 4} samples, header says {n}")
    data = data.reshape(n, 4)
    return SampledWaveform(data[:, 0] + 1j * data[:, 1], data[:, 2] + 1j * data[:, 3],
                           float(meta["sample_rate_ghz"]), float(meta["center_freq_offset_ghz"]))
