"""Wideband ambiguity function, grid-search estimators and the Monte Carlo harness.

Both estimators maximize ``|W(tau, gamma)|`` with

    W(tau, gamma) = sqrt(gamma) * int s_r(t) s_d*(t) dt,

where ``s_d`` is a delayed and stretched reference. The WBAF estimator uses
the transmitted pulse alone (a point-target reference); the oracle matched
filter uses the true scatterer layout ``sum_p x_p s(gamma (t - tau_p))``.
The search is a coarse grid followed by coordinate descent with a shrinking
bracket on the continuous objective.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.optimize import minimize_scalar

from .crlb_integral import crlb, fisher_blocks
from .scene import NoiseModel, TargetScene, measurement_matrix, n0_for_snr, synthesize_echo
from .waveform import WaveformSpec

log = logging.getLogger(__name__)

METHODS = ("oracle-mf", "wbaf")
SINC_TAPS = 16
UPSAMPLE = 4
TAU_HALF_WIDTH = 20  # in units of delta
GAMMA_HALF_WIDTH = 0.03  # relative
GAMMA_POINTS = 201
_KAISER_BETA = 6.0
GL_ORDER = 4


class BoundaryHitWarning(UserWarning):
    """The refined estimate sits on the edge of the search box."""


def _sinc_weights(t: np.ndarray, delta: float):
    half = SINC_TAPS // 2
    pos = t / delta
    base = np.floor(pos).astype(np.int64)
    idx = base[..., None] + np.arange(-half + 1, half + 1)
    d = pos[..., None] - idx
    w = special.i0(_KAISER_BETA * np.sqrt(np.clip(1 - (d / half) ** 2, 0, None))) / special.i0(_KAISER_BETA)
    h = np.sinc(d) * w
    # Unit DC gain; removes the window's passband droop for oversampled echoes.
    h /= h.sum(axis=-1, keepdims=True)
    return idx, h


def _gather(y: np.ndarray, idx: np.ndarray) -> np.ndarray:
    valid = (idx >= 0) & (idx < len(y))
    return np.where(valid, y[np.clip(idx, 0, len(y) - 1)], 0)


def sinc_interpolate(y: np.ndarray, delta: float, t) -> np.ndarray:
    """Band-limited reconstruction of samples ``y[n] = s_r(n delta)`` at times ``t``.

    Kaiser-windowed sinc over ``SINC_TAPS`` neighbours, normalized to unit DC
    gain; samples outside the record count as zero.
    """
    idx, h = _sinc_weights(np.asarray(t, dtype=float), delta)
    return (h * _gather(y, idx)).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class Reference:
    """Reference layout: ``s_d(t) = sum_p weights_p s(gamma (t - tau - offsets_p))``."""

    spec: WaveformSpec
    offsets: np.ndarray
    weights: np.ndarray

    @classmethod
    def point(cls, spec: WaveformSpec) -> "Reference":
        return cls(spec, np.zeros(1), np.ones(1, dtype=complex))

    @classmethod
    def oracle(cls, spec: WaveformSpec, scene: TargetScene) -> "Reference":
        return cls(spec, scene.delta * np.arange(scene.P), scene.x.copy())


class AmbiguityFunction:
    """``W(tau, gamma) = sqrt(gamma) int s_r(t) s_d*(t) dt`` for one received record.

    ``s_r`` is the windowed-sinc reconstruction of the samples. Each reference
    term is integrated over its exact support ``[tau_p, tau_p + T/gamma]``,
    split at the sample times (where the reconstruction has kinks) with
    ``order``-point Gauss-Legendre per piece, so ``W`` is smooth in
    ``(tau, gamma)``. Full sample intervals always carry the same nodes, so
    the reconstruction there is tabulated once per record.
    """

    def __init__(self, received: np.ndarray, delta: float, reference, order: int = GL_ORDER):
        self.received = np.asarray(received, dtype=complex)
        self.delta = float(delta)
        self.reference = reference if isinstance(reference, Reference) else Reference.point(reference)
        x, w = np.polynomial.legendre.leggauss(order)
        self._x = 0.5 * (x + 1)  # nodes on [0, 1]
        self._w = 0.5 * w
        half = SINC_TAPS // 2
        self._first = -half
        n = np.arange(self._first, len(self.received) + half)
        self._table = sinc_interpolate(self.received, self.delta, (n[:, None] + self._x) * self.delta)
        shifts = self.reference.offsets / self.delta
        self._shifts = np.round(shifts).astype(int)
        self._integer = bool(np.allclose(shifts, self._shifts, rtol=0, atol=1e-9))

    def _partial(self, a: float, c: float, start: float, gamma: float) -> complex:
        if c <= a:
            return 0j
        t = a + (c - a) * self._x
        r = sinc_interpolate(self.received, self.delta, t)
        s = self.reference.spec.derivative(gamma * (t - start), 0, masked=False)
        return complex((c - a) * np.sum(self._w * r * np.conj(s)))

    def _full(self, n0: int, n1: int, start: float, gamma: float, s=None):
        """Full intervals ``n0 <= n < n1``; returns (value, reference samples)."""
        if s is None:
            t = (np.arange(n0, n1)[:, None] + self._x) * self.delta
            s = np.conj(self.reference.spec.derivative(gamma * (t - start), 0, masked=False)) * self._w
        lo, hi = n0 - self._first, n1 - self._first
        rows = self._table[max(lo, 0) : max(min(hi, len(self._table)), 0)]
        pad_lo = max(0, -lo)
        seg = s[pad_lo : pad_lo + len(rows)]
        return complex(self.delta * np.sum(rows * seg)), s

    def _term(self, start: float, gamma: float, s=None):
        T = self.reference.spec.duration
        end = start + T / gamma
        d = self.delta
        n0, n1 = math.ceil(start / d), math.floor(end / d)
        if n1 < n0:  # support inside a single sample interval
            return self._partial(start, end, start, gamma), None
        val, s = self._full(n0, n1, start, gamma, s)
        val += self._partial(start, n0 * d, start, gamma) + self._partial(n1 * d, end, start, gamma)
        return val, s

    def __call__(self, tau: float, gamma: float) -> complex:
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        ref = self.reference
        total = 0j
        if self._integer:
            # Terms differ by whole samples, so their full-interval reference
            # samples coincide; only the table rows shift.
            s = None
            for k, wt in zip(self._shifts, ref.weights):
                val, s0 = self._term_shifted(tau, gamma, k, s)
                s = s0 if s is None else s
                total += np.conj(wt) * val
        else:
            for off, wt in zip(ref.offsets, ref.weights):
                val, _ = self._term(tau + off, gamma)
                total += np.conj(wt) * val
        return complex(math.sqrt(gamma) * total)

    def _term_shifted(self, tau, gamma, k, s):
        start = tau + k * self.delta
        if s is None:
            return self._term(start, gamma)
        T = self.reference.spec.duration
        end = start + T / gamma
        d = self.delta
        n0, n1 = math.ceil(start / d), math.floor(end / d)
        if n1 - n0 != len(s):
            return self._term(start, gamma)
        val, _ = self._full(n0, n1, start, gamma, s)
        val += self._partial(start, n0 * d, start, gamma) + self._partial(n1 * d, end, start, gamma)
        return val, s


def wbaf(
    received: np.ndarray,
    delta: float,
    reference: WaveformSpec | Reference,
    tau: float,
    gamma: float,
    order: int = GL_ORDER,
) -> complex:
    """``sqrt(gamma) int s_r(t) s_d*(t) dt`` with ``s_r`` reconstructed from samples.

    One-off evaluation; see :class:`AmbiguityFunction` for repeated use on the
    same record.
    """
    return AmbiguityFunction(received, delta, reference, order)(tau, gamma)


@dataclass(frozen=True)
class SearchBox:
    """Delay/stretch search region; the coarse grid is laid over it."""

    tau_center: float
    gamma_center: float
    tau_half_width: float
    gamma_half_width: float  # relative
    gamma_points: int = GAMMA_POINTS

    @classmethod
    def around(cls, scene: TargetScene, tau_center=None, gamma_center=None) -> "SearchBox":
        return cls(
            scene.tau if tau_center is None else tau_center,
            scene.gamma if gamma_center is None else gamma_center,
            TAU_HALF_WIDTH * scene.delta,
            GAMMA_HALF_WIDTH,
        )

    @property
    def tau_bounds(self):
        return self.tau_center - self.tau_half_width, self.tau_center + self.tau_half_width

    @property
    def gamma_bounds(self):
        return self.gamma_center * (1 - self.gamma_half_width), self.gamma_center * (1 + self.gamma_half_width)


@dataclass(frozen=True, eq=False)
class WbafSurface:
    tau: np.ndarray
    gamma: np.ndarray
    magnitude: np.ndarray  # shape (len(tau), len(gamma))

    @property
    def argmax(self) -> tuple[int, int]:
        i, j = np.unravel_index(int(np.argmax(self.magnitude)), self.magnitude.shape)
        return int(i), int(j)

    @property
    def peak(self) -> tuple[float, float]:
        i, j = self.argmax
        return float(self.tau[i]), float(self.gamma[j])


class CoarseSearch:
    """Precomputed coarse-grid correlator for one reference and search box.

    The echo is upsampled by ``UPSAMPLE`` so the delay grid (step
    ``delta / UPSAMPLE``) falls on samples; every stretch then becomes one
    template and the whole surface is a single matrix product.
    """

    def __init__(self, reference: Reference, delta: float, box: SearchBox):
        self.reference = reference
        self.delta = delta
        self.box = box
        dt = delta / UPSAMPLE
        self.dt = dt
        k0 = int(round(box.tau_center / dt))
        half = int(round(box.tau_half_width / dt))
        self.tau_idx = np.arange(k0 - half, k0 + half + 1)
        if self.tau_idx[0] < 0:
            self.tau_idx = self.tau_idx[self.tau_idx >= 0]
        self.tau = self.tau_idx * dt
        lo, hi = box.gamma_bounds
        self.gamma = np.linspace(lo, hi, box.gamma_points)
        T = reference.spec.duration
        span = reference.offsets.max() + T / lo
        self.length = int(math.ceil(span / dt)) + 1
        m = np.arange(self.length) * dt
        args = self.gamma[:, None, None] * (m[None, None, :] - reference.offsets[None, :, None])
        s = reference.spec.derivative(args, 0)
        tmpl = np.einsum("p,gpm->gm", np.conj(reference.weights), np.conj(s))
        self.templates = (np.sqrt(self.gamma)[:, None] * dt) * tmpl

    def surface(self, received: np.ndarray) -> WbafSurface:
        n_fine = self.tau_idx[-1] + self.length
        y_up = sinc_interpolate(received, self.delta, np.arange(n_fine) * self.dt)
        windows = np.lib.stride_tricks.sliding_window_view(y_up, self.length)[self.tau_idx]
        W = windows @ self.templates.T
        return WbafSurface(self.tau, self.gamma, np.abs(W))


@dataclass(frozen=True)
class EstimateResult:
    tau: float
    gamma: float
    method: str
    peak: float
    coarse_peak: float
    iterations: int
    boundary_hit: bool = False


def _principal_axes(objective, x0, scales):
    """Eigenvectors of the objective's Hessian at ``x0`` in scaled coordinates.

    Falls back to the coordinate axes when the stencil is not concave.
    """
    f = lambda z: objective(*(x0 + scales * np.asarray(z)))  # noqa: E731
    h = 0.5
    f0 = f((0, 0))
    H = np.empty((2, 2))
    H[0, 0] = (f((h, 0)) - 2 * f0 + f((-h, 0))) / h**2
    H[1, 1] = (f((0, h)) - 2 * f0 + f((0, -h))) / h**2
    H[0, 1] = H[1, 0] = (f((h, h)) - f((h, -h)) - f((-h, h)) + f((-h, -h))) / (4 * h * h)
    w, V = np.linalg.eigh(H)
    if not np.all(w < 0):
        return np.eye(2)
    return V


def refine(
    objective,
    tau0: float,
    gamma0: float,
    steps: tuple[float, float],
    tol: tuple[float, float],
    bounds: tuple[tuple[float, float], tuple[float, float]],
    max_sweeps: int = 200,
):
    """Coordinate ascent with a shrinking bracket.

    Coordinates are the principal axes of the local Hessian (in units of
    ``steps``); on the strongly coupled delay/stretch ridge of a chirp the raw
    axes make plain coordinate ascent crawl and stop early. Each sweep
    line-searches every axis inside ``+- b``, clipped to ``bounds``; a bracket
    grows when the optimum lands on its edge and otherwise shrinks to twice
    the move. Stops once every bracket spans less than ``tol`` in both
    parameters. Moves are only accepted when they improve the objective.
    """
    x = np.array([tau0, gamma0], dtype=float)
    scales = np.asarray(steps, dtype=float)
    tol = np.asarray(tol, dtype=float)
    lo_b = np.array([bounds[0][0], bounds[1][0]])
    hi_b = np.array([bounds[0][1], bounds[1][1]])
    V = _principal_axes(objective, x, scales)
    D = V * scales[:, None]  # physical displacement per unit step along each axis
    b = np.ones(2)
    best = objective(*x)
    sweeps = 0

    def extent(k):
        return b[k] * np.abs(D[:, k])

    while sweeps < max_sweeps and any(np.any(extent(k) >= tol) for k in range(2)):
        sweeps += 1
        for k in range(2):
            d = D[:, k]
            # Largest |s| <= b keeping x + s d inside the box.
            with np.errstate(divide="ignore", invalid="ignore"):
                up = np.where(d > 0, (hi_b - x) / d, np.where(d < 0, (lo_b - x) / d, np.inf))
                dn = np.where(d > 0, (x - lo_b) / d, np.where(d < 0, (x - hi_b) / d, np.inf))
            s_hi = min(b[k], float(up.min()))
            s_lo = -min(b[k], float(dn.min()))
            base = x.copy()

            def neg(s, base=base, d=d):
                return -objective(*(base + s * d))

            step_tol = float(np.min(tol / np.maximum(np.abs(d), np.finfo(float).tiny))) / 4
            res = minimize_scalar(neg, bounds=(s_lo, s_hi), method="bounded", options={"xatol": step_tol})
            move = 0.0
            if -res.fun > best:
                move = abs(res.x)
                x = base + res.x * d
                best = -res.fun
            if move > 0.9 * b[k]:
                b[k] *= 2
            else:
                b[k] = max(2 * move, b[k] / 4)
    return x[0], x[1], best, sweeps


def estimate(
    method: str,
    echo: np.ndarray,
    scene: TargetScene,
    spec: WaveformSpec,
    box: SearchBox | None = None,
    coarse: CoarseSearch | None = None,
    warn: bool = True,
) -> EstimateResult:
    """Delay/stretch estimate by coarse grid search plus local refinement.

    ``scene`` supplies the sampling interval and, for ``oracle-mf``, the true
    scatterer layout; its ``tau``/``gamma`` are only used to centre the
    default search box. ``warn=False`` leaves boundary hits to the caller
    (``EstimateResult.boundary_hit``) instead of raising a warning.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    ref = Reference.oracle(spec, scene) if method == "oracle-mf" else Reference.point(spec)
    box = box or SearchBox.around(scene)
    coarse = coarse or CoarseSearch(ref, scene.delta, box)
    surf = coarse.surface(echo)
    tau0, gamma0 = surf.peak

    amb = AmbiguityFunction(echo, scene.delta, ref)

    def objective(tau, gamma):
        return abs(amb(tau, gamma))

    coarse_peak = objective(tau0, gamma0)
    dg = coarse.gamma[1] - coarse.gamma[0]
    tol = (scene.delta / 100, 1e-6)
    tau_b, gamma_b = box.tau_bounds, box.gamma_bounds
    tau, gamma, peak, sweeps = refine(
        objective, tau0, gamma0, (coarse.dt, dg), tol, (tau_b, gamma_b)
    )
    hit = (
        min(tau - tau_b[0], tau_b[1] - tau) < tol[0]
        or min(gamma - gamma_b[0], gamma_b[1] - gamma) < tol[1]
    )
    if hit and warn:
        warnings.warn(
            f"{method} estimate ({tau:.9g}, {gamma:.9g}) is on the search-box edge", BoundaryHitWarning
        )
    return EstimateResult(float(tau), float(gamma), method, float(peak), float(coarse_peak), sweeps, hit)


@dataclass(frozen=True)
class MonteCarloRow:
    scenario: str
    method: str
    snr_db: float
    trials: int
    mse_tau: float
    mse_gamma: float
    crlb_tau: float
    crlb_gamma: float
    boundary_hits: int = 0


@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    rows: list
    seed: int
    streams: list = field(default_factory=list)

    def row(self, method: str, snr_db: float) -> MonteCarloRow:
        for r in self.rows:
            if r.method == method and r.snr_db == snr_db:
                return r
        raise KeyError((method, snr_db))

    def write_csv(self, path) -> None:
        cols = ("scenario", "method", "snr_db", "trials", "mse_tau", "mse_gamma", "crlb_tau", "crlb_gamma")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r.scenario, r.method, repr(float(r.snr_db)), r.trials] + [repr(float(getattr(r, c))) for c in cols[4:]])


def _run_trial(trial, scene, spec, noise, phi, coarse, methods):
    y = synthesize_echo(scene, spec, noise, stream=trial, phi=phi)
    # Hits are counted and logged per SNR; warnings filters are not thread-safe.
    return [estimate(m, y, scene, spec, coarse=coarse[m], warn=False) for m in methods]


def monte_carlo(
    scene: TargetScene,
    spec: WaveformSpec,
    snr_list,
    trials: int,
    seed: int = 0,
    methods=METHODS,
    scenario: str = "",
    threads: int = 1,
) -> MonteCarloReport:
    """MSE of each estimator against the true ``(tau, gamma)`` next to the CRLBs.

    Trial ``i`` draws its noise from stream ``i`` of ``seed`` at every SNR, so
    results do not depend on thread count or scheduling.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    phi = measurement_matrix(scene, spec)
    box = SearchBox.around(scene)
    refs = {"oracle-mf": Reference.oracle(spec, scene), "wbaf": Reference.point(spec)}
    coarse = {m: CoarseSearch(refs[m], scene.delta, box) for m in methods}
    rows = []
    for snr in snr_list:
        n0 = n0_for_snr(scene, spec, snr)
        bound = crlb(fisher_blocks(scene, spec, n0))
        noise = NoiseModel(n0, seed)
        args = (scene, spec, noise, phi, coarse, methods)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                results = list(pool.map(lambda i: _run_trial(i, *args), range(trials)))
        else:
            results = [_run_trial(i, *args) for i in range(trials)]
        for k, m in enumerate(methods):
            est = [r[k] for r in results]
            et = np.array([e.tau for e in est]) - scene.tau
            eg = np.array([e.gamma for e in est]) - scene.gamma
            hits = sum(e.boundary_hit for e in est)
            if hits:
                log.warning("%s at %g dB: %d of %d estimates hit the search-box edge", m, snr, hits, trials)
            rows.append(
                MonteCarloRow(
                    scenario, m, float(snr), trials, float(np.mean(et**2)), float(np.mean(eg**2)),
                    bound.crlb_tau, bound.crlb_gamma, hits,
                )
            )
    return MonteCarloReport(rows, seed, list(range(trials)))
