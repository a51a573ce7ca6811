"""Execute validated scenarios and write their CSV tables and the run manifest.

Every CSV is written with ``repr`` floats in a fixed row order, so a rerun
with the same config and seed reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, ScenarioConfig, scenario_scenes
from .crlb_integral import CrlbResult, FisherError, crlb, fisher_blocks, lag_integrals
from .crlb_series import approx_crlb
from .estimators import monte_carlo
from .scene import n0_for_snr
from .waveform import effective_params, moments

log = logging.getLogger(__name__)

CRLB_COLUMNS = ("scenario", "P", "SNR_dB", "crlb_tau", "crlb_gamma", "a11", "a12", "a22", "provenance")
SERIES_COLUMNS = ("scenario", "P", "SNR_dB", "K", "crlb_tau_K", "crlb_gamma_K", "gap_tau", "gap_gamma")
SWEEP_COLUMNS = (
    "scenario", "parameter", "value", "P", "SNR_dB", "energy", "bandwidth", "eff_duration", "tbp",
    "crlb_tau", "crlb_gamma", "a11", "a12", "a22", "provenance",
)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _crlb_row(name, P, snr, r: CrlbResult):
    return (name, P, float(snr), r.crlb_tau, r.crlb_gamma, r.a11, r.a12, r.a22, r.provenance)


def _nan_result(provenance):
    nan = math.nan
    return CrlbResult(nan, nan, nan, nan, nan, nan, provenance)


@dataclass
class ScenarioOutcome:
    name: str
    files: list = field(default_factory=list)
    error: str | None = None


def run_scenario(
    sc: ScenarioConfig, out_dir: Path, seed: int, threads: int = 1, trials: int | None = None, base_dir=None
) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    if sc.kind == "sweep":
        return [_run_sweep(sc, out_dir, base_dir)]
    (_, spec, scene), = scenario_scenes(sc, base_dir)
    lags = lag_integrals(scene, spec)
    crlb_rows, series_rows = [], []
    for snr in sc.snr_values:
        n0 = n0_for_snr(scene, spec, snr)
        ref = crlb(fisher_blocks(scene, spec, n0, lags=lags))
        crlb_rows.append(_crlb_row(sc.name, scene.P, snr, ref))
        if sc.kind != "series":
            continue
        for K in sc.K:
            try:
                r = approx_crlb(scene, spec, n0, K, lags=lags, exact_f33=sc.exact_f33)
                gt = abs(r.crlb_tau - ref.crlb_tau) / ref.crlb_tau
                gg = abs(r.crlb_gamma - ref.crlb_gamma) / ref.crlb_gamma
            except FisherError as exc:
                log.warning("%s: series K=%d at %g dB gives no bound (%s)", sc.name, K, snr, exc)
                r, gt, gg = _nan_result(f"series({K})"), math.inf, math.inf
            crlb_rows.append(_crlb_row(sc.name, scene.P, snr, r))
            series_rows.append((sc.name, scene.P, float(snr), K, r.crlb_tau, r.crlb_gamma, gt, gg))
    files = [out_dir / "crlb.csv"]
    write_rows(files[0], CRLB_COLUMNS, crlb_rows)
    if sc.kind == "series":
        files.append(out_dir / "series.csv")
        write_rows(files[-1], SERIES_COLUMNS, series_rows)
    if sc.kind == "mse":
        rep = monte_carlo(
            scene, spec, sc.snr_values, trials or sc.trials, seed=seed, scenario=sc.name, threads=threads
        )
        files.append(out_dir / "mc.csv")
        rep.write_csv(files[-1])
    return files


def _run_sweep(sc: ScenarioConfig, out_dir: Path, base_dir) -> Path:
    points = scenario_scenes(sc, base_dir)
    base_spec = sc.waveform.build(base_dir)
    base_scene = sc.scene.build(base_spec)
    rows = []
    for value, spec, scene in points:
        mom = moments(spec, 1)
        ep = effective_params(spec, mom)
        lags = lag_integrals(scene, spec)
        for snr in sc.snr_values:
            if sc.sweep.hold == "n0":
                n0 = n0_for_snr(base_scene, base_spec, snr)
                snr_here = 10 * math.log10(10 ** (snr / 10) * n0_for_snr(scene, spec, snr) / n0)
            else:
                n0 = n0_for_snr(scene, spec, snr)
                snr_here = snr
            r = crlb(fisher_blocks(scene, spec, n0, lags=lags))
            rows.append(
                (sc.name, sc.sweep.parameter, float(value), scene.P, float(snr_here), ep.energy, ep.bandwidth,
                 ep.duration, ep.product, r.crlb_tau, r.crlb_gamma, r.a11, r.a12, r.a22, r.provenance)
            )
    path = out_dir / "sweep.csv"
    write_rows(path, SWEEP_COLUMNS, rows)
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    return {
        "extcrlb": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def run(
    cfg: RunConfig,
    out: Path,
    config_hash: str,
    seed: int | None = None,
    threads: int = 1,
    trials: int | None = None,
    only=None,
    base_dir=None,
) -> list[ScenarioOutcome]:
    """Run the selected scenarios in order; failures are recorded, not raised."""
    chosen = [s for s in cfg.scenario if not only or s.name in only]
    outcomes = []
    for sc in chosen:
        sc_seed = seed if seed is not None else (sc.seed if sc.seed is not None else cfg.seed)
        oc = ScenarioOutcome(sc.name)
        try:
            oc.files = run_scenario(sc, out / sc.name, sc_seed, threads, trials, base_dir)
        except Exception as exc:  # recorded in the manifest and the exit summary
            log.exception("scenario %s failed", sc.name)
            oc.error = f"{type(exc).__name__}: {exc}"
        outcomes.append(oc)
    manifest = {
        "config_sha256": config_hash,
        "seed": seed if seed is not None else cfg.seed,
        "overrides": {"seed": seed, "trials": trials},
        "versions": versions(),
        "scenarios": [
            {
                "name": oc.name,
                "status": "ok" if oc.error is None else "failed",
                "error": oc.error,
                "files": {str(p.relative_to(out)): _sha256(p) for p in oc.files},
            }
            for oc in outcomes
        ],
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return outcomes
