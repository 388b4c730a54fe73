"""Launch-power and distance sweeps with CSV rows."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, replace
from typing import Sequence

from ..constellation import Constellation4D
from .config import LinkConfig, WdmConfig, with_power
from .link import ssfm_propagate, wdm_transmit
from .receiver import RxResult, receive_center_channel

COLUMNS = ("format", "baud", "n_channels", "n_spans", "power_dbm", "snr_elec_db", "gmi",
           "ber", "margin_db", "seed")


@dataclass(frozen=True)
class SweepPoint:
    format: str
    baud: float
    n_channels: int
    n_spans: int
    power_dbm: float
    seed: int
    rx: RxResult

    def row(self) -> dict:
        return {
            "format": self.format, "baud": f"{self.baud:g}", "n_channels": self.n_channels,
            "n_spans": self.n_spans, "power_dbm": f"{self.power_dbm:.3f}",
            "snr_elec_db": f"{self.rx.snr_elec_db:.6f}", "gmi": f"{self.rx.gmi:.6f}",
            "ber": f"{self.rx.pre_fec_ber:.8f}", "margin_db": f"{self.rx.system_margin_db:.6f}",
            "seed": self.seed,
        }


def run_point(c: Constellation4D, wdm: WdmConfig, link: LinkConfig, power_dbm: float,
              seed: int, taps: Sequence[int] | None = None) -> list[SweepPoint]:
    """
    Transmit, propagate and receive at one launch power. Data and link
    randomness both derive from ``seed``. With ``taps`` one point per span
    count is returned from a single propagation.
    """
    wdm = replace(with_power(wdm, power_dbm), seed=seed)
    w, tx = wdm_transmit(c, wdm)
    counts = [link.n_spans] if taps is None else sorted(set(taps))
    link = replace(link, n_spans=max(counts))
    out = ssfm_propagate(w, link, seed, taps=counts)
    return [SweepPoint(c.name, wdm.baud, wdm.n_channels, k, float(power_dbm), seed,
                       receive_center_channel(out[k].waveform, out[k].record, wdm, tx))
            for k in counts]


def power_sweep(formats: Sequence[Constellation4D], wdm: WdmConfig, link: LinkConfig,
                powers_dbm: Sequence[float], seeds: Sequence[int] = (0,)) -> list[SweepPoint]:
    pts = []
    for c in formats:
        for seed in seeds:
            for p in powers_dbm:
                pts.extend(run_point(c, wdm, link, p, seed))
    return sort_points(pts)


def optimum(points: Sequence[SweepPoint]) -> SweepPoint:
    """
    Optimal launch power of one (format, seed, span count) curve: highest
    SNR_elec, ties to the higher GMI then the lower power. SNR_elec is used
    because GMI saturates near 6 bit/4D at high SNR.
    """
    return max(points, key=lambda p: (p.rx.snr_elec_db, p.rx.gmi, -p.power_dbm))


def optima(points: Sequence[SweepPoint]) -> dict:
    """{(format, seed, n_spans): optimal SweepPoint}."""
    groups: dict = {}
    for p in points:
        groups.setdefault((p.format, p.seed, p.n_spans), []).append(p)
    return {k: optimum(v) for k, v in sorted(groups.items())}


def distance_sweep(formats: Sequence[Constellation4D], wdm: WdmConfig, link: LinkConfig,
                   span_counts: Sequence[int], powers_dbm: Sequence[float], seed: int = 0,
                   target_gmi: float = 4.8) -> tuple[list[SweepPoint], dict]:
    """
    For every format and launch power, one propagation to the longest
    distance tapped at each span count. Returns all points and, per format,
    the best GMI per span count plus the largest span count with best GMI
    at or above ``target_gmi`` (None if never reached).
    """
    pts = []
    for c in formats:
        for p in powers_dbm:
            pts.extend(run_point(c, wdm, link, p, seed, taps=span_counts))
    pts = sort_points(pts)
    summary = {}
    for c in formats:
        best = {}
        for k in sorted(set(span_counts)):
            best[k] = max(q.rx.gmi for q in pts if q.format == c.name and q.n_spans == k)
        ok = [k for k, g in best.items() if g >= target_gmi]
        summary[c.name] = {"best_gmi": best, "reach_spans": max(ok) if ok else None}
    return pts, summary


def sort_points(points):
    return sorted(points, key=lambda p: (p.format, p.seed, p.n_spans, p.power_dbm))


def write_csv(path, points: Sequence[SweepPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for p in points:
            w.writerow(p.row())
