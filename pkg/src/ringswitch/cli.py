"""
Batch experiments.

    ringswitch run <experiment> --config cfg.yaml --seed 0 --scale desk --out results/

Every experiment writes ``<experiment>.csv`` (byte-identical for identical
config and seed) and a provenance sidecar ``<experiment>.json`` holding the
resolved config, seed, code version and wall time.

Experiments and what they reproduce:

    table2                geometry table (MSED, n_d, PAPR, Gray, D_H = 1 distance list)
    gmi-vs-snr            AWGN GMI curves and required SNR at the target GMI
    ring-opt              RS64 optimal ring ratio versus SNR
    imbalance-grid        GMI versus I-Q gain and quadrature imbalance, worst-case floors
    dac-sweep             required SNR versus DAC resolution
    fiber-power-sweep     GMI/SNR_elec/BER versus launch power on the WDM link
    fiber-distance-sweep  best GMI versus span count and reach at the target GMI
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .constellation import (BUILDERS, FORMAT_NAMES, build, build_rs64, geometry_metrics,
                            sed_histogram, table2_row, TABLE_MERGE_TOL)
from .infometrics import gmi_estimate, required_snr
from .impairments import (DacConfig, dac_required_snr, imbalance_heatmap, worst_case_gmi)
from .optimizer import optimize_ring_ratio
from .fiber import config as fcfg
from .fiber.sweep import COLUMNS as FIBER_COLUMNS, distance_sweep, optima, power_sweep

EXPERIMENTS = ("table2", "gmi-vs-snr", "ring-opt", "imbalance-grid", "dac-sweep",
               "fiber-power-sweep", "fiber-distance-sweep")
FOUR_D = ("rs64", "64prs", "2a8psk")


class ConfigError(ValueError):
    pass


class BudgetError(RuntimeError):
    """Raised when a ci-scale run would exceed its compute budget."""


def _grid(lo, hi, step):
    return [float(v) for v in np.round(np.arange(lo, hi + step / 2, step), 6)]


_COMMON = {
    "constellation": {"formats": list(FORMAT_NAMES), "params": {}},
    "infometrics": {"snr_db": _grid(4, 12, 0.5), "n_samples": 1_000_000, "target_gmi": 4.8,
                    "tol_db": 0.005},
    "optimizer": {"snr_db": _grid(4, 12, 1), "ratio_bounds": [0.3, 0.8], "tol": 1e-3,
                  "n_samples": 200_000},
    "impairments": {"snr_db": 8.0, "theta_devs": _grid(0, 15, 1), "gains_db": _grid(0, 1.8, 0.3),
                    "n_samples": 100_000, "worst_case": True, "theta_dev_max": 15.0,
                    "gain_db_max": 1.7, "theta_step": 1.0, "gain_step": 0.1,
                    "screen_samples": 10_000, "final_samples": 200_000,
                    "strategy": "refine", "demapper": "matched",
                    "dac_bits": [3, 4, 5, 6, 7, 8], "dac_target_gmi": 5.0,
                    "dac_symbols": 1 << 17, "rolloff": 0.1, "span_symbols": 64},
    "fiber": {"link": {}, "wdm": {}, "powers_dbm": _grid(-3, 2, 1), "seeds": [0, 1, 2],
              "span_counts": [2, 4, 6, 8, 10], "target_gmi": 4.8},
}

SCALES = {
    "ci": {
        "infometrics": {"snr_db": [6.0, 8.0], "n_samples": 20_000, "tol_db": 0.05},
        "optimizer": {"snr_db": [8.0], "n_samples": 20_000, "tol": 0.02},
        "impairments": {"theta_devs": [0.0, 15.0], "gains_db": [0.0, 1.7], "n_samples": 20_000,
                        "worst_case": False, "dac_bits": [3, 8], "dac_symbols": 1 << 14},
        "fiber": {"powers_dbm": [0.0, 3.0], "seeds": [0], "span_counts": [1, 2]},
    },
    "desk": {},
    "full": {
        "impairments": {"strategy": "exhaustive", "final_samples": 1_000_000},
        "fiber": {"powers_dbm": _grid(-2, 4, 1), "seeds": [0],
                  "span_counts": list(range(10, 55, 5))},
    },
}

# ci guard rails: Monte Carlo samples and SSFM sample-steps per experiment
CI_MAX_SAMPLES = 5e7
CI_MAX_SSFM_WORK = 5e9


def resolve_config(scale: str, user: dict | None = None) -> dict:
    """Scale defaults overlaid by the user's config, validating every key."""
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}; expected one of {sorted(SCALES)}")
    cfg = copy.deepcopy(_COMMON)
    _merge(cfg, SCALES[scale], "", strict=True)
    _merge(cfg, user or {}, "", strict=True)
    fiber = cfg["fiber"]
    fiber["link"] = {**fcfg.PROFILES[scale]["link"], **fiber["link"]}
    fiber["wdm"] = {**fcfg.PROFILES[scale]["wdm"], **fiber["wdm"]}
    for name in cfg["constellation"]["formats"]:
        if name not in BUILDERS:
            raise ConfigError(f"constellation.formats: unknown format {name!r}")
    try:
        fcfg.LinkConfig(**fiber["link"])
        fcfg.WdmConfig(**fiber["wdm"])
    except TypeError as e:
        raise ConfigError(f"fiber: {e}") from None
    except ValueError as e:
        raise ConfigError(f"fiber: {e}") from None
    return cfg


def _merge(base: dict, over: dict, path: str, strict: bool):
    if not isinstance(over, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    for k, v in over.items():
        p = f"{path}.{k}" if path else str(k)
        if k not in base:
            if path.endswith(("link", "wdm", "params")):
                base[k] = v
                continue
            raise ConfigError(f"{p}: unknown field")
        if isinstance(base[k], dict):
            _merge(base[k], v, p, strict)
        else:
            base[k] = v


def _formats(cfg, names=None):
    params = cfg["constellation"]["params"]
    names = names or cfg["constellation"]["formats"]
    return [build(n, **params.get(n, {})) for n in names]


def _table(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _ci_guard(scale, samples=0.0, ssfm=0.0):
    if scale != "ci":
        return
    if samples > CI_MAX_SAMPLES:
        raise BudgetError(f"ci budget: {samples:.3g} Monte Carlo samples > {CI_MAX_SAMPLES:.3g}")
    if ssfm > CI_MAX_SSFM_WORK:
        raise BudgetError(f"ci budget: {ssfm:.3g} SSFM sample-steps > {CI_MAX_SSFM_WORK:.3g}")


# --------------------------------------------------------------------------
# experiments; each returns the CSV text


def exp_table2(cfg, seed, scale):
    rows = []
    for c in _formats(cfg):
        r = table2_row(c)
        g = geometry_metrics(c)
        hist = sed_histogram(c, TABLE_MERGE_TOL)
        rows.append({
            "format": r["format"], "msed": f"{g.msed:.6f}", "msed_2dp": f"{r['msed']:.2f}",
            "n_d": r["n_d"], "papr": f"{r['papr']:.2f}", "gray_at_msed": int(r["gray"]),
            "constant_modulus": int(r["constant_modulus"]),
            "dh1": " ".join(f"{d:.2f}:{n}" for d, n in r["dh1"]),
            "dh_gt1": " ".join(f"{d:.2f}:{n2}" for d, _, n2 in hist.entries if n2),
        })
    return _table(rows, rows[0])


def exp_gmi_vs_snr(cfg, seed, scale):
    ic = cfg["infometrics"]
    fmts = _formats(cfg)
    _ci_guard(scale, samples=ic["n_samples"] * len(fmts) * (len(ic["snr_db"]) + 15))
    rows = []
    for c in fmts:
        for s in ic["snr_db"]:
            e = gmi_estimate(c, s, ic["n_samples"], seed)
            rows.append({"format": c.name, "snr_db": f"{s:.4f}", "gmi": f"{e.gmi:.6f}",
                         "mi": f"{e.mi:.6f}", "std_err": f"{e.std_err:.6f}",
                         "required_snr_db": ""})
        req = required_snr(c, ic["target_gmi"], ic["tol_db"], 0.0, 20.0, ic["n_samples"], seed)
        rows.append({"format": c.name, "snr_db": "", "gmi": f"{ic['target_gmi']:.6f}",
                     "mi": "", "std_err": "", "required_snr_db": f"{req.snr_db:.4f}"})
    return _table(rows, rows[0])


def exp_ring_opt(cfg, seed, scale):
    oc = cfg["optimizer"]
    _ci_guard(scale, samples=oc["n_samples"] * len(oc["snr_db"]) * 40)
    rows = []
    for s in oc["snr_db"]:
        res = optimize_ring_ratio(lambda r: build_rs64(r), s, tuple(oc["ratio_bounds"]),
                                  oc["tol"], oc["n_samples"], seed)
        fixed = gmi_estimate(build_rs64(), s, oc["n_samples"], seed).gmi
        rows.append({"snr_db": f"{s:.4f}", "r_opt": f"{res.best_params[0]:.6f}",
                     "gmi_opt": f"{res.best_gmi:.6f}", "gmi_r050": f"{fixed:.6f}",
                     "method": res.method, "evaluations": len(res.trace)})
    return _table(rows, rows[0])


def exp_imbalance_grid(cfg, seed, scale):
    ic = cfg["impairments"]
    fmts = _formats(cfg, [n for n in cfg["constellation"]["formats"] if n in FOUR_D])
    n_cells = len(ic["theta_devs"]) * len(ic["gains_db"])
    _ci_guard(scale, samples=ic["n_samples"] * n_cells * len(fmts))
    rows = imbalance_heatmap(fmts, ic["snr_db"], ic["theta_devs"], ic["gains_db"],
                             ic["n_samples"], seed, ic["demapper"])
    for r in rows:
        r["kind"] = "grid"
    if ic["worst_case"]:
        for c in fmts:
            wc = worst_case_gmi(c, ic["snr_db"], ic["theta_dev_max"], ic["gain_db_max"],
                                ic["theta_step"], ic["gain_step"], ic["screen_samples"], seed,
                                ic["final_samples"], ic["demapper"], ic["strategy"])
            a = wc.argmin
            row = {k: "" for k in rows[0]}
            row.update({"kind": f"worst:{c.name}",
                        "theta_dev": f"{a.theta_x - 90:.3f}/{a.theta_y - 90:.3f}",
                        "gain_db": f"{a.alpha_x_db:.3f}/{a.alpha_y_db:.3f}",
                        c.name: f"{wc.min_gmi:.6f}"})
            row["nominal"] = f"{wc.nominal_gmi:.6f}"
            rows.append(row)
    cols = ["kind", "theta_dev", "gain_db"] + [c.name for c in fmts] + \
        (["nominal"] if ic["worst_case"] else [])
    return _table([{k: r.get(k, "") for k in cols} for r in rows], cols)


def exp_dac_sweep(cfg, seed, scale):
    ic = cfg["impairments"]
    fmts = _formats(cfg)
    _ci_guard(scale, samples=ic["dac_symbols"] * len(fmts) * (len(ic["dac_bits"]) + 1) * 15)
    rows = []
    for c in fmts:
        common = dict(rolloff=ic["rolloff"], span_symbols=ic["span_symbols"])
        ref = dac_required_snr(c, DacConfig(bits=None, **common), ic["dac_target_gmi"],
                               ic["dac_symbols"], seed)
        rows.append({"format": c.name, "bits": "ideal", "required_snr_db": f"{ref:.4f}",
                     "penalty_db": f"{0.0:.4f}"})
        for b in ic["dac_bits"]:
            s = dac_required_snr(c, DacConfig(bits=int(b), **common), ic["dac_target_gmi"],
                                 ic["dac_symbols"], seed)
            rows.append({"format": c.name, "bits": str(b), "required_snr_db": f"{s:.4f}",
                         "penalty_db": f"{s - ref:.4f}"})
    return _table(rows, rows[0])


def _fiber_setup(cfg, scale):
    fc = cfg["fiber"]
    link = fcfg.LinkConfig(**fc["link"])
    wdm = fcfg.WdmConfig(**fc["wdm"])
    return fc, link, wdm


def _ssfm_work(link, wdm, spans, runs):
    steps = spans * link.n_waveplates_per_span * link.steps_per_waveplate
    return runs * steps * wdm.n_symbols * wdm.sps


def exp_fiber_power_sweep(cfg, seed, scale):
    fc, link, wdm = _fiber_setup(cfg, scale)
    fmts = _formats(cfg)
    seeds = [seed + s for s in fc["seeds"]]
    _ci_guard(scale, ssfm=_ssfm_work(link, wdm, link.n_spans,
                                     len(fmts) * len(seeds) * len(fc["powers_dbm"])))
    pts = power_sweep(fmts, wdm, link, fc["powers_dbm"], seeds)
    best = optima(pts)
    rows = []
    for p in pts:
        r = p.row()
        r["optimal"] = int(best[p.format, p.seed, p.n_spans] is p)
        rows.append(r)
    return _table(rows, list(FIBER_COLUMNS) + ["optimal"])


def exp_fiber_distance_sweep(cfg, seed, scale):
    fc, link, wdm = _fiber_setup(cfg, scale)
    fmts = _formats(cfg)
    _ci_guard(scale, ssfm=_ssfm_work(link, wdm, max(fc["span_counts"]),
                                     len(fmts) * len(fc["powers_dbm"])))
    pts, summary = distance_sweep(fmts, wdm, link, fc["span_counts"], fc["powers_dbm"], seed,
                                  fc["target_gmi"])
    rows = []
    for c in fmts:
        s = summary[c.name]
        for k, g in s["best_gmi"].items():
            rows.append({"format": c.name, "n_spans": k,
                         "distance_km": f"{k * link.span_length:.1f}",
                         "best_gmi": f"{g:.6f}",
                         "reach_spans": "" if s["reach_spans"] is None else s["reach_spans"]})
    return _table(rows, rows[0])


RUNNERS = {
    "table2": exp_table2,
    "gmi-vs-snr": exp_gmi_vs_snr,
    "ring-opt": exp_ring_opt,
    "imbalance-grid": exp_imbalance_grid,
    "dac-sweep": exp_dac_sweep,
    "fiber-power-sweep": exp_fiber_power_sweep,
    "fiber-distance-sweep": exp_fiber_distance_sweep,
}


def code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run(experiment: str, config: dict | None = None, seed: int = 0, scale: str = "desk",
        out: str | Path = ".") -> Path:
    """Run one experiment and write its table and provenance sidecar; returns the table path."""
    if experiment not in RUNNERS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    cfg = resolve_config(scale, config)
    t0 = time.perf_counter()
    text = RUNNERS[experiment](cfg, int(seed), scale)
    wall = time.perf_counter() - t0
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table = out / f"{experiment}.csv"
    table.write_text(text)
    meta = {"experiment": experiment, "scale": scale, "seed": int(seed),
            "version": code_version(), "wall_time_s": round(wall, 3), "config": cfg,
            "table": table.name}
    (out / f"{experiment}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return table


def load_config(path) -> dict:
    if path is None:
        return {}
    data = yaml.safe_load(Path(path).read_text())
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ringswitch", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a named experiment")
    r.add_argument("experiment", choices=EXPERIMENTS)
    r.add_argument("--config", default=None, help="YAML file with per-module sections")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--scale", choices=sorted(SCALES), default="desk")
    r.add_argument("--out", default="results")
    args = ap.parse_args(argv)
    try:
        path = run(args.experiment, load_config(args.config), args.seed, args.scale, args.out)
    except (ConfigError, BudgetError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
