"""Link and WDM configuration plus the named scale profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

C_LIGHT = 299_792_458.0  # m/s
H_PLANCK = 6.62607015e-34  # J s
MANAKOV_FACTOR = 8.0 / 9.0
BER_THRESHOLD = 4e-2
BAND_GUARD = 1.2


@dataclass(frozen=True)
class LinkConfig:
    """
    Multi-span SSMF link with lumped EDFAs.

    Units: span_length km, dispersion_D ps/(nm km), gamma 1/(W km),
    alpha_db dB/km, pmd_coeff ps/sqrt(km), edfa_nf_db dB, center_wavelength nm.
    """

    span_length: float = 80.0
    n_spans: int = 10
    dispersion_D: float = 17.0
    gamma: float = 1.32
    alpha_db: float = 0.2
    pmd_coeff: float = 0.04
    n_waveplates_per_span: int = 50
    edfa_nf_db: float = 5.0
    center_wavelength: float = 1550.0
    steps_per_waveplate: int = 4
    dgd_model: str = "fixed"
    ase: bool = True
    manakov_factor: float = MANAKOV_FACTOR
    max_nl_phase_per_step: float = 0.2

    def __post_init__(self):
        if self.span_length <= 0 or self.n_spans < 0:
            raise ValueError("span length must be positive and span count non-negative")
        if self.n_waveplates_per_span < 1 or self.steps_per_waveplate < 1:
            raise ValueError("need at least one waveplate and one step per waveplate")
        for name in ("dispersion_D", "gamma", "alpha_db", "pmd_coeff", "center_wavelength"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.dgd_model not in ("fixed", "gaussian"):
            raise ValueError("dgd_model must be 'fixed' or 'gaussian'")

    @property
    def beta2(self) -> float:
        """Group-velocity dispersion in s^2/m, from D and the carrier wavelength."""
        lam = self.center_wavelength * 1e-9
        return -self.dispersion_D * 1e-6 * lam ** 2 / (2 * math.pi * C_LIGHT)

    @property
    def alpha(self) -> float:
        """Field-power attenuation in 1/m."""
        return self.alpha_db / (10 * math.log10(math.e)) * 1e-3

    @property
    def gamma_si(self) -> float:
        return self.gamma * 1e-3

    @property
    def span_gain(self) -> float:
        """Linear EDFA power gain that cancels one span's loss."""
        return math.exp(self.alpha * self.span_length * 1e3)

    @property
    def carrier_hz(self) -> float:
        return C_LIGHT / (self.center_wavelength * 1e-9)

    @property
    def ase_psd(self) -> float:
        """ASE power spectral density per polarization per amplifier, W/Hz."""
        nf = 10 ** (self.edfa_nf_db / 10)
        return nf / 2 * H_PLANCK * self.carrier_hz * (self.span_gain - 1)

    @property
    def segment_length(self) -> float:
        """Waveplate segment length in m."""
        return self.span_length * 1e3 / self.n_waveplates_per_span

    @property
    def segment_dgd(self) -> float:
        """
        Per-segment DGD in s. With Haar-random coupling the mean-square DGD
        adds over segments; a Maxwellian mean equals sqrt(8/(3 pi)) times the
        rms, hence the sqrt(3 pi / 8) factor.
        """
        return self.pmd_coeff * 1e-12 * math.sqrt(self.segment_length * 1e-3) * \
            math.sqrt(3 * math.pi / 8)


@dataclass(frozen=True)
class WdmConfig:
    """
    WDM comb. Units: baud Gbaud, spacing GHz, launch power dBm per channel.
    ``samples_per_symbol=None`` picks the smallest integer covering the comb
    with the guard factor.
    """

    n_channels: int = 3
    baud: float = 32.0
    spacing: float = 50.0
    rolloff: float = 0.1
    launch_power_dbm_per_channel: float = 0.0
    samples_per_symbol: int | None = None
    n_symbols: int = 1 << 14
    seed: int = 0

    def __post_init__(self):
        if self.n_channels < 1 or self.n_channels % 2 == 0:
            raise ValueError("n_channels must be odd so one channel sits at the carrier")
        if not 0.0 < self.rolloff < 1.0:
            raise ValueError("rolloff must lie in (0, 1)")
        if self.n_channels > 1 and self.spacing < self.baud * (1 + self.rolloff):
            raise ValueError("channel spacing below the signal bandwidth")
        sps = self.sps
        if sps * self.baud < BAND_GUARD * self.occupied_band:
            raise ValueError(f"{sps} samples per symbol alias the WDM band "
                             f"({self.occupied_band:.1f} GHz x {BAND_GUARD} guard)")
        for k in self.offsets:
            bins = k * self.n_symbols / self.baud
            if abs(bins - round(bins)) > 1e-9:
                raise ValueError("channel offsets must fall on the FFT grid "
                                 "(spacing * n_symbols / baud integer)")

    @property
    def occupied_band(self) -> float:
        """Two-sided occupied bandwidth in GHz."""
        return (self.n_channels - 1) * self.spacing + self.baud * (1 + self.rolloff)

    @property
    def sps(self) -> int:
        if self.samples_per_symbol is not None:
            return int(self.samples_per_symbol)
        return max(2, math.ceil(BAND_GUARD * self.occupied_band / self.baud))

    @property
    def sample_rate(self) -> float:
        return self.sps * self.baud

    @property
    def offsets(self) -> list[float]:
        half = self.n_channels // 2
        return [k * self.spacing for k in range(-half, half + 1)]

    @property
    def center_index(self) -> int:
        return self.n_channels // 2

    @property
    def launch_power_w(self) -> float:
        return 1e-3 * 10 ** (self.launch_power_dbm_per_channel / 10)


PROFILES = {
    # seconds-scale smoke profile
    "ci": dict(wdm=dict(n_channels=1, baud=32.0, spacing=50.0, n_symbols=1 << 12),
               link=dict(n_spans=2, n_waveplates_per_span=10, steps_per_waveplate=2)),
    "desk": dict(wdm=dict(n_channels=3, baud=32.0, spacing=50.0, n_symbols=1 << 14),
                 link=dict(n_spans=10)),
    "full": dict(wdm=dict(n_channels=11, baud=90.0, spacing=100.0, n_symbols=9 << 13),
                 link=dict(n_spans=20)),
}


def profile(scale: str, **overrides) -> tuple[LinkConfig, WdmConfig]:
    """Resolve a scale profile; ``overrides`` holds 'link' and 'wdm' dicts."""
    if scale not in PROFILES:
        raise ValueError(f"unknown scale {scale!r}; expected one of {sorted(PROFILES)}")
    p = PROFILES[scale]
    link = dict(p["link"], **overrides.get("link", {}))
    wdm = dict(p["wdm"], **overrides.get("wdm", {}))
    return LinkConfig(**link), WdmConfig(**wdm)


def as_dict(cfg) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def with_power(wdm: WdmConfig, dbm: float) -> WdmConfig:
    return replace(wdm, launch_power_dbm_per_channel=float(dbm))
