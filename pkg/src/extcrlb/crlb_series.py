"""Truncated Taylor-series Fisher blocks and the approximate CRLBs they give.

Each block is a finite sum over powers of the lag matrices
``Gamma^(k)_ij = (tau_i - tau_j)^k`` weighted by waveform moments. Sums are
evaluated with time in units of the pulse duration and converted back to SI at
the end; the raw SI magnitudes of ``gamma^(2k-3) Delta^k M^(k)`` span far more
decades than is comfortable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crlb_integral import CrlbResult, FisherBlocks, FisherError, LagIntegrals, crlb, lag_integrals
from .scene import TargetScene
from .waveform import K_MAX, OrderOverflowError, WaveformMoments, WaveformSpec, moments

DEFAULT_K = 4


def gamma_matrix(scene: TargetScene, k: int, unit: float = 1.0) -> np.ndarray:
    """``((tau_i - tau_j) / unit)^k``; ``k = 0`` gives the all-ones matrix."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    idx = np.arange(scene.P)
    diff = (idx[:, None] - idx[None, :]) * (scene.delta / unit)
    return diff**k


@dataclass(frozen=True, eq=False)
class SeriesBlocks:
    """Truncated blocks in SI units.

    ``f11``..``f22`` are the real parts of ``F_1ij + j F_2ij``; the imaginary
    pieces ``f2`` are kept for inspection (``j F_2ij`` is real because
    ``x^H Gamma^(odd) x`` is imaginary). ``exact_f33`` records whether F33 was
    taken from the integral representation.
    """

    K: int
    blocks: FisherBlocks
    f2: dict
    exact_f33: bool


def _quad(x, G):
    return np.vdot(x, G @ x)


def series_terms(
    scene: TargetScene, mom: WaveformMoments, n0: float, K: int, duration: float
) -> dict:
    """Every truncated sum, nondimensional (time unit ``duration``).

    Keys follow the block names: ``F111, F211, F112, F212, F122, F222`` are
    scalars, ``F131, F231, F132, F232`` P-vectors, ``F133, F233`` P x P.
    """
    m = mom.nondimensional()
    M, Mt = m.M, m.Mt
    g = scene.gamma
    N = n0 / duration
    x = scene.x
    P = scene.P
    G = [gamma_matrix(scene, k, duration) for k in range(K + 1)]
    f = math.factorial
    zero_v = np.zeros(P, dtype=complex)
    out = {
        "F111": 0j, "F211": 0j, "F112": 0j, "F212": 0j, "F122": 0j, "F222": 0j,
        "F131": zero_v.copy(), "F231": zero_v.copy(), "F132": zero_v.copy(), "F232": zero_v.copy(),
        "F133": np.zeros((P, P), dtype=complex), "F233": np.zeros((P, P), dtype=complex),
    }
    for k in range(K + 1):
        s = (-1) ** k
        e, o = 2 * k, 2 * k + 1
        if e <= K:
            q = _quad(x, G[e])
            v = G[e] @ x
            out["F111"] += s * 2 * g ** (2 * k + 1) / (f(e) * N) * M(0, k + 1) * q
            out["F112"] += -s * 2 * g ** (2 * k - 1) / (f(e) * N) * M(1, k + 1) * q
            out["F122"] += s * 2 * g ** (2 * k - 3) / (f(e) * N) * M(2, k + 1) * q
            if k >= 1:
                out["F122"] += s * (k - 1) * g ** (2 * k - 3) / (f(2 * k - 1) * N) * M(0, k) * q
            out["F231"] += -s * 2 * g ** (2 * k) / (f(e) * N) * Mt(0, k) * v
            out["F132"] += s * (2 * k - 1) * g ** (2 * k - 2) / (f(e) * N) * M(0, k) * v
            out["F232"] += s * 2 * g ** (2 * k - 2) / (f(e) * N) * Mt(1, k) * v
            out["F133"] += s * 2 * g ** (2 * k - 1) / (f(e) * N) * M(0, k) * G[e]
        if o <= K:
            q = _quad(x, G[o])
            v = G[o] @ x
            out["F211"] += s * 2 * g ** (2 * k + 2) / (f(o) * N) * Mt(0, k + 1) * q
            out["F212"] += -s * 2 * g ** (2 * k) / (f(o) * N) * Mt(1, k + 1) * q
            out["F222"] += s * 2 * k * k * g ** (2 * k - 2) / (f(o) * N) * Mt(0, k) * q
            out["F222"] += s * 2 * g ** (2 * k - 2) / (f(o) * N) * Mt(2, k + 1) * q
            out["F132"] += -s * 2 * g ** (2 * k - 1) / (f(o) * N) * M(1, k + 1) * v
            out["F232"] += s * 2 * k * g ** (2 * k - 1) / (f(o) * N) * Mt(0, k) * v
            out["F233"] += s * 2 * g ** (2 * k) / (f(o) * N) * Mt(0, k) * G[o]
        if k >= 1 and 2 * k - 1 <= K:
            v = G[2 * k - 1] @ x
            out["F131"] += s * -2 * g ** (2 * k - 1) / (f(2 * k - 1) * N) * M(0, k) * v
    return out


def moments_for(K: int) -> int:
    return K // 2 + 1


def series_blocks(
    scene: TargetScene,
    spec: WaveformSpec,
    n0: float,
    K: int = DEFAULT_K,
    mom: WaveformMoments | None = None,
    exact_f33: bool = True,
    lags: LagIntegrals | None = None,
) -> SeriesBlocks:
    if K < 0:
        raise ValueError("K must be nonnegative")
    if K > K_MAX:
        raise OrderOverflowError(f"truncation order {K} exceeds K_MAX={K_MAX}")
    need = moments_for(K)
    if mom is None or mom.k_max < need:
        mom = moments(spec, need)
    T = spec.duration
    t = series_terms(scene, mom, n0, K, T)
    if exact_f33:
        lags = lag_integrals(scene, spec) if lags is None else lags
        f33 = 2 / (scene.gamma * n0) * lags.matrix("I33")
    else:
        f33 = t["F133"] + 1j * t["F233"]
    # Nondimensional -> SI: each tau-derivative contributes 1/T.
    blocks = FisherBlocks(
        f11=float((t["F111"] + 1j * t["F211"]).real) / T**2,
        f12=float((t["F112"] + 1j * t["F212"]).real) / T,
        f22=float((t["F122"] + 1j * t["F222"]).real),
        f31=(t["F131"] + 1j * t["F231"]) / T,
        f32=t["F132"] + 1j * t["F232"],
        f33=f33,
        provenance=f"series({K})",
    )
    f2 = {"F211": t["F211"] / T**2, "F212": t["F212"] / T, "F222": t["F222"]}
    return SeriesBlocks(K, blocks, f2, exact_f33)


def approx_crlb(
    scene: TargetScene,
    spec: WaveformSpec,
    n0: float,
    K: int = DEFAULT_K,
    mom: WaveformMoments | None = None,
    exact_f33: bool = True,
    lags: LagIntegrals | None = None,
) -> CrlbResult:
    sb = series_blocks(scene, spec, n0, K, mom, exact_f33, lags)
    return crlb(sb.blocks)


@dataclass(frozen=True)
class DecayRow:
    K: int
    crlb_tau: float
    crlb_gamma: float
    gap_tau: float
    gap_gamma: float


@dataclass(frozen=True)
class DecayTable:
    rows: list
    reference: CrlbResult
    rho_tau: float
    rho_gamma: float


def _fit_rho(Ks, gaps) -> float:
    # log gap = c + (K+1) log rho - log (K+1)!
    Ks = np.asarray(Ks, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    ok = (gaps > 0) & np.isfinite(gaps)
    if ok.sum() < 2:
        return float("nan")
    y = np.log(gaps[ok]) + np.array([math.lgamma(k + 2) for k in Ks[ok]])
    slope = np.polyfit(Ks[ok] + 1, y, 1)[0]
    return float(np.exp(slope))


def truncation_decay(
    scene: TargetScene,
    spec: WaveformSpec,
    n0: float,
    K_list=(0, 1, 2, 3, 4),
    reference: CrlbResult | None = None,
    lags: LagIntegrals | None = None,
) -> DecayTable:
    """Relative gap between ``CRLB^(K)`` and the integral CRLB for each K.

    ``rho_*`` is the base of the best-fit ``rho^(K+1) / (K+1)!`` envelope.
    Orders whose reduced information is not positive definite get NaN bounds
    and infinite gaps.
    """
    from .crlb_integral import fisher_blocks

    lags = lag_integrals(scene, spec) if lags is None else lags
    if reference is None:
        reference = crlb(fisher_blocks(scene, spec, n0, lags=lags))
    mom = moments(spec, moments_for(max(K_list)))
    rows = []
    for K in K_list:
        try:
            r = approx_crlb(scene, spec, n0, K, mom=mom, lags=lags)
        except FisherError:
            # A truncation that is not positive definite gives no bound at all.
            rows.append(DecayRow(K, math.nan, math.nan, math.inf, math.inf))
            continue
        rows.append(
            DecayRow(
                K,
                r.crlb_tau,
                r.crlb_gamma,
                abs(r.crlb_tau - reference.crlb_tau) / reference.crlb_tau,
                abs(r.crlb_gamma - reference.crlb_gamma) / reference.crlb_gamma,
            )
        )
    return DecayTable(
        rows,
        reference,
        _fit_rho([r.K for r in rows], [r.gap_tau for r in rows]),
        _fit_rho([r.K for r in rows], [r.gap_gamma for r in rows]),
    )
