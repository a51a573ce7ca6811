"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a PASS/FAIL line that the terminal summary prints in order.
"""

import csv
import math

import numpy as np
import pytest

from extcrlb.cli import main
from extcrlb.config import catalog
from extcrlb.crlb_integral import crlb, crlb_single, fim_oracle_fd, fisher_blocks, oracle_crlb
from extcrlb.crlb_series import truncation_decay
from extcrlb.estimators import monte_carlo
from extcrlb.runner import run
from extcrlb.scene import make_scene, n0_for_snr
from extcrlb.waveform import IDENTITIES, WaveformSpec, check_identity, effective_params, moments

from conftest import CHIRP_RATE, DELTA, DURATION, GAMMA, TAU, record_acceptance


def _report(n: int, ok: bool, detail: str) -> None:
    record_acceptance(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def _rel(a, b):
    return abs(a - b) / abs(b)


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweeps")
    names = ["fig-energy-sweep", "fig-bandwidth-sweep", "fig-tbp-fixed", "fig-p-sweep"]
    outcomes = run(catalog(), out, "acceptance", only=names)
    assert all(o.error is None for o in outcomes)
    return {n: _read_csv(out / n / "sweep.csv") for n in names}


def test_criterion_1_effective_parameters():
    fast = effective_params(WaveformSpec.chirp(CHIRP_RATE, DURATION))
    slow = effective_params(WaveformSpec.chirp(0.256e9, DURATION))
    checks = [
        _rel(fast.bandwidth, 9.0884e5) <= 1e-3,
        _rel(fast.duration, 3.893e-5) <= 5e-3,
        _rel(fast.product, 35.3786) <= 5e-3,
        _rel(slow.bandwidth, 0.7604e5) <= 1e-3,
        _rel(slow.product, 2.6988) <= 5e-3,
    ]
    _report(
        1,
        all(checks),
        f"B={fast.bandwidth:.6g} T={fast.duration:.6g} BT={fast.product:.6g}; "
        f"slow B={slow.bandwidth:.6g} BT={slow.product:.6g}",
    )


def test_criterion_2_tone():
    fc = 1e5
    ep = effective_params(WaveformSpec.tone(fc, DURATION))
    b_err = _rel(ep.bandwidth, fc)
    t_err = _rel(ep.duration, DURATION / math.sqrt(3))
    _report(
        2,
        b_err <= 1e-6 and t_err <= 1e-6,
        f"B/f_c = {ep.bandwidth / fc:.9g} (rel err {b_err:.3g}), T rel err {t_err:.3g}",
    )


def test_criterion_3_identities(gaussian):
    mom = moments(gaussian, 4)
    worst = max(
        check_identity(gaussian, name, p, q, mom=mom).rel_error
        for name in IDENTITIES
        for p in range(7)
        for q in range(7 - p)
    )
    _report(3, worst <= 1e-6, f"worst relative error {worst:.3g} over {len(IDENTITIES)} identities, p+q<=6")


def test_criterion_4_oracle_equivalence(chirp):
    worst, parts = 0.0, []
    for P in (1, 4, 16):
        sc = make_scene(chirp, TAU, GAMMA, DELTA, np.ones(P))
        n0 = n0_for_snr(sc, chirp, 20.0)
        ref = crlb(fisher_blocks(sc, chirp, n0))
        fd = oracle_crlb(fim_oracle_fd(sc, chirp, n0))
        et, eg = _rel(fd.crlb_tau, ref.crlb_tau), _rel(fd.crlb_gamma, ref.crlb_gamma)
        worst = max(worst, et, eg)
        parts.append(f"P={P} tau {et:.2%} gamma {eg:.2%}")
    _report(4, worst <= 1e-2, "; ".join(parts))


def test_criterion_5_closed_form(gaussian):
    sc = make_scene(gaussian, TAU, GAMMA, DELTA, [1.0])
    n0 = n0_for_snr(sc, gaussian, 20.0)
    full = crlb(fisher_blocks(sc, gaussian, n0))
    closed = crlb_single(gaussian, 1.0, GAMMA, n0)
    et, eg = _rel(closed.crlb_tau, full.crlb_tau), _rel(closed.crlb_gamma, full.crlb_gamma)
    _report(5, max(et, eg) <= 1e-10, f"tau {et:.3g}, gamma {eg:.3g}")


def test_criterion_6_series_convergence(chirp):
    out = []
    ok = True
    for P, K_list in ((4, (4,)), (16, (1, 4))):
        sc = make_scene(chirp, TAU, GAMMA, DELTA, np.ones(P))
        n0 = n0_for_snr(sc, chirp, 20.0)
        rows = {r.K: r for r in truncation_decay(sc, chirp, n0, K_list=K_list).rows}
        if P == 4:
            ok &= rows[4].gap_tau <= 1e-3 and rows[4].gap_gamma <= 1e-3
            out.append(f"P=4 K=4 gaps {rows[4].gap_tau:.3g}/{rows[4].gap_gamma:.3g}")
        else:
            ok &= rows[4].gap_tau < rows[1].gap_tau and rows[4].gap_gamma < rows[1].gap_gamma
            out.append(
                f"P=16 K=1 gaps {rows[1].gap_tau:.3g}/{rows[1].gap_gamma:.3g}, "
                f"K=4 gaps {rows[4].gap_tau:.3g}/{rows[4].gap_gamma:.3g}"
            )
    _report(6, ok, "; ".join(out))


def _slope(rows, xcol, ycol, xpow=1.0):
    x = np.array([float(r[xcol]) for r in rows]) ** xpow
    y = np.array([float(r[ycol]) for r in rows])
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def test_criterion_7_scaling_laws(sweeps):
    energy = _slope(sweeps["fig-energy-sweep"], "energy", "crlb_tau")
    bandwidth = _slope(sweeps["fig-bandwidth-sweep"], "bandwidth", "crlb_tau", 2.0)
    duration = _slope(sweeps["fig-tbp-fixed"], "eff_duration", "crlb_gamma")
    ok = abs(energy + 1) <= 0.05 and abs(bandwidth + 1) <= 0.05 and abs(duration) <= 0.1
    _report(
        7,
        ok,
        f"slope vs energy {energy:.4f}, vs B^2 {bandwidth:.4f}, crlb_gamma vs T at fixed BT {duration:.4f}",
    )


def test_criterion_8_size_monotonicity(sweeps):
    rows = [r for r in sweeps["fig-p-sweep"] if float(r["SNR_dB"]) == 20.0]
    rows.sort(key=lambda r: float(r["value"]))
    tau = [float(r["crlb_tau"]) for r in rows]
    gam = [float(r["crlb_gamma"]) for r in rows]
    ok = [float(r["value"]) for r in rows] == [1, 4, 16, 100] and all(
        b >= a for seq in (tau, gam) for a, b in zip(seq, seq[1:])
    )
    _report(8, ok, "tau " + ", ".join(f"{v:.3g}" for v in tau) + "; gamma " + ", ".join(f"{v:.3g}" for v in gam))


def test_criterion_9_monte_carlo_ordering(chirp):
    sc = make_scene(chirp, TAU, GAMMA, DELTA, np.ones(4))
    rep = monte_carlo(sc, chirp, [36.0], trials=100, seed=0, threads=4)
    o, w = rep.row("oracle-mf", 36.0), rep.row("wbaf", 36.0)
    ratios = {
        "oracle tau": o.mse_tau / o.crlb_tau,
        "oracle gamma": o.mse_gamma / o.crlb_gamma,
        "wbaf tau": w.mse_tau / w.crlb_tau,
        "wbaf gamma": w.mse_gamma / w.crlb_gamma,
    }
    ok = ratios["oracle tau"] < 1 and ratios["oracle gamma"] < 1 and ratios["wbaf tau"] > 2 and ratios["wbaf gamma"] > 2
    _report(9, ok, "MSE/CRLB " + ", ".join(f"{k} {v:.3g}" for k, v in ratios.items()))


def test_criterion_10_determinism(tmp_path, capsys):
    names = ["fig-mse-p4", "fig-series-p4", "fig-p-sweep", "fig-tbp-sweep"]
    args = [a for n in names for a in ("--only", n)] + ["--trials", "3"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "catalog", "--out", str(a)] + args) == 0
    assert main(["run", "catalog", "--out", str(b), "--threads", "3"] + args) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    same = [(a / f).read_bytes() == (b / f).read_bytes() for f in files]
    _report(10, len(files) >= 5 and all(same), f"{sum(same)}/{len(files)} CSVs byte-identical across reruns")
