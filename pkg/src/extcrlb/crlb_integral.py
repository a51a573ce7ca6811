"""Fisher information for (tau, gamma) with the scattering profile as nuisance.

Blocks are computed from lag integrals of the envelope and its first
derivative; the nuisance parameters are removed by a Hermitian Schur
complement. ``fim_oracle_fd`` rebuilds the full real FIM from central
differences of the sampled mean and serves as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .quadrature import DEFAULT_LEVEL, integrate
from .scene import TargetScene, overlap
from .waveform import DegenerateWaveformError, WaveformMoments, WaveformSpec, moments

MAX_CONDITION = 1e12


class FisherError(ArithmeticError):
    pass


class SingularBlockError(FisherError):
    pass


class StepInstabilityError(FisherError):
    pass


@dataclass(frozen=True, eq=False)
class FisherBlocks:
    """Reduced Fisher information pieces.

    ``f31``, ``f32`` are the complex P-vectors ``(2/sigma^2) Phi^H dPhi/dtheta x``
    and ``f33`` is ``(2/sigma^2) Phi^H Phi``.
    """

    f11: float
    f12: float
    f22: float
    f31: np.ndarray
    f32: np.ndarray
    f33: np.ndarray
    provenance: str = "integral"

    def __post_init__(self):
        object.__setattr__(self, "f33", 0.5 * (self.f33 + self.f33.conj().T))

    def scaled(self, factor: float) -> "FisherBlocks":
        return FisherBlocks(
            self.f11 * factor,
            self.f12 * factor,
            self.f22 * factor,
            self.f31 * factor,
            self.f32 * factor,
            self.f33 * factor,
            self.provenance,
        )


@dataclass(frozen=True)
class CrlbResult:
    crlb_tau: float
    crlb_gamma: float
    a11: float
    a12: float
    a22: float
    condition: float = float("nan")
    provenance: str = "integral"

    @property
    def determinant(self) -> float:
        return self.a11 * self.a22 - self.a12**2


@dataclass(frozen=True)
class LagIntegrals:
    """Per-lag integrals ``I[name][m + P - 1]`` for lags ``m = i - j``."""

    P: int
    values: dict = field(default_factory=dict)

    def matrix(self, name: str) -> np.ndarray:
        v = self.values[name]
        idx = np.arange(self.P)
        return v[idx[:, None] - idx[None, :] + self.P - 1]


def lag_integrals(scene: TargetScene, spec: WaveformSpec, level: int = DEFAULT_LEVEL) -> LagIntegrals:
    """All six lag integrals on the overlap of the shifted supports.

    With ``h = gamma (tau_i - tau_j)``::

        I11 = int s'*(u) s'(u+h)         I22 = int u (u+h) s'*(u) s'(u+h)
        I31 = int s*(u)  s'(u+h)         I33 = int s*(u) s(u+h)
        I12 = int v s'*(v-h) s'(v)       I32 = int v s*(v-h) s'(v)
    """
    T = spec.duration
    P = scene.P
    names = ("I11", "I22", "I31", "I33", "I12", "I32")
    out = {n: np.zeros(2 * P - 1, dtype=complex) for n in names}

    def d(u, m):
        return spec.derivative(u, m, masked=False)

    for m in range(-(P - 1), P):
        h = scene.gamma * m * scene.delta
        lo, hi = overlap(h, T)
        if hi > lo:
            def fwd(u):
                s0, s1 = np.conj(d(u, 0)), np.conj(d(u, 1))
                g0, g1 = d(u + h, 0), d(u + h, 1)
                return np.array([s1 * g1, u * (u + h) * s1 * g1, s0 * g1, s0 * g0])

            r = integrate(fwd, lo, hi, level=level)
            for name, val in zip(names[:4], r):
                out[name][m + P - 1] = val
        lo, hi = overlap(-h, T)
        if hi > lo:
            def back(v):
                g1 = d(v, 1)
                return np.array([v * np.conj(d(v - h, 1)) * g1, v * np.conj(d(v - h, 0)) * g1])

            r = integrate(back, lo, hi, level=level)
            out["I12"][m + P - 1], out["I32"][m + P - 1] = r
    return LagIntegrals(P, out)


def fisher_blocks(
    scene: TargetScene,
    spec: WaveformSpec,
    n0: float,
    level: int = DEFAULT_LEVEL,
    lags: LagIntegrals | None = None,
) -> FisherBlocks:
    lags = lag_integrals(scene, spec, level) if lags is None else lags
    g, x = scene.gamma, scene.x

    def quad(name):
        return float(np.vdot(x, lags.matrix(name) @ x).real)

    blocks = FisherBlocks(
        f11=2 * g / n0 * quad("I11"),
        f12=-2 / (g * n0) * quad("I12"),
        f22=2 / (g**3 * n0) * quad("I22"),
        f31=-2 / n0 * (lags.matrix("I31") @ x),
        f32=2 / (g**2 * n0) * (lags.matrix("I32") @ x),
        f33=2 / (g * n0) * lags.matrix("I33"),
        provenance="integral",
    )
    if not (blocks.f11 > 0 and blocks.f22 > 0):
        raise FisherError("F11 and F22 must be positive; check the scene and waveform")
    return blocks


def schur_reduce(blocks: FisherBlocks, real_path: bool = False) -> tuple[float, float, float, float]:
    """Effective (tau, gamma) information ``a_ij`` and the condition number of F33.

    ``real_path`` drops the imaginary parts of F31, F32, F33; that is only the
    right reduction when those parts vanish (real waveform and real x), which
    is checked.
    """
    f33 = blocks.f33
    rhs = np.column_stack([blocks.f31, blocks.f32])
    if real_path:
        scale = np.abs(f33).max()
        if np.abs(f33.imag).max() > 1e-9 * scale or np.abs(rhs.imag).max() > 1e-9 * max(
            np.abs(rhs).max(), np.finfo(float).tiny
        ):
            raise FisherError("real-path reduction requested but imaginary blocks are not negligible")
        f33, rhs = f33.real, rhs.real
    eig = np.linalg.eigvalsh(f33)
    if eig[0] <= 0:
        raise SingularBlockError("F33 is not positive definite")
    cond = float(eig[-1] / eig[0])
    if cond > MAX_CONDITION:
        raise SingularBlockError(f"F33 condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}")
    z = scipy.linalg.cho_solve(scipy.linalg.cho_factor(f33), rhs)
    corr = (rhs.conj().T @ z).real
    a11 = blocks.f11 - corr[0, 0]
    a22 = blocks.f22 - corr[1, 1]
    a12 = blocks.f12 - 0.5 * (corr[0, 1] + corr[1, 0])
    return float(a11), float(a12), float(a22), cond


def crlb_from_a(a11: float, a12: float, a22: float, condition=float("nan"), provenance="integral"):
    det = a11 * a22 - a12**2
    if not det > 0 or not a11 > 0 or not a22 > 0:
        raise FisherError(f"reduced information is not positive definite (det={det:.3g})")
    return CrlbResult(a22 / det, a11 / det, a11, a12, a22, condition, provenance)


def crlb(blocks: FisherBlocks, real_path: bool = False) -> CrlbResult:
    a11, a12, a22, cond = schur_reduce(blocks, real_path)
    return crlb_from_a(a11, a12, a22, cond, blocks.provenance)


def crlb_single(
    spec: WaveformSpec, x: float, gamma: float, n0: float, mom: WaveformMoments | None = None
) -> CrlbResult:
    """Closed-form single-scatterer bound from ``M_0^(0)``, ``M_0^(1)``, ``M_1^(1)``, ``M_2^(1)``.

    Exact when the boundary terms of the envelope vanish (smooth, effectively
    time-limited pulses) and the envelope is real.
    """
    mom = mom or moments(spec, 1)
    m00, m01, m11, m21 = mom.M(0, 0), mom.M(0, 1), mom.M(1, 1), mom.M(2, 1)
    if m00 <= 0 or m01 <= 0:
        raise DegenerateWaveformError("waveform energy or derivative energy is zero")
    x2 = float(x) ** 2
    a11 = 2 * gamma * x2 * m01 / n0
    a12 = -2 * x2 * m11 / (gamma * n0)
    a22 = 2 * x2 / (gamma**3 * n0) * (m21 - m00 / 4)
    return crlb_from_a(a11, a12, a22, provenance="closed-form")


# -- finite-difference oracle --------------------------------------------------------------


def _mean(spec: WaveformSpec, tau, gamma, x, t, delays, mask):
    args = gamma * (t[:, None] - tau - delays[None, :])
    vals = spec.derivative(args, 0, masked=False) * mask
    return vals @ x


def _fd_fim(scene, spec, n0, step, oversample=1):
    P = scene.P
    dt = scene.delta / oversample
    rows = np.arange(scene.n_samples * oversample)
    # Nominal arguments from integer offsets so the frozen mask is exact at the edges.
    offsets = rows[:, None] - oversample * (scene.tau_index + np.arange(P))[None, :]
    mask = spec.in_support(scene.gamma * dt * offsets)
    keep = mask.any(axis=1)
    rows, mask = rows[keep], mask[keep]
    t = rows * dt
    delays = np.arange(P) * scene.delta
    theta0 = np.concatenate([[scene.tau, scene.gamma], scene.x.real, scene.x.imag])
    xscale = max(np.abs(scene.x).max(), np.finfo(float).tiny)
    scales = np.concatenate([[spec.duration, scene.gamma], np.full(2 * P, xscale)])

    def mu(theta):
        x = theta[2 : 2 + P] + 1j * theta[2 + P :]
        return _mean(spec, theta[0], theta[1], x, t, delays, mask)

    D = np.empty((len(rows), 2 * P + 2), dtype=complex)
    for k in range(2 * P + 2):
        h = step * scales[k]
        tp, tm = theta0.copy(), theta0.copy()
        tp[k] += h
        tm[k] -= h
        D[:, k] = (mu(tp) - mu(tm)) / (2 * h)
    sigma2 = n0 / dt
    return 2 / sigma2 * (D.conj().T @ D).real


def fim_oracle_fd(
    scene: TargetScene, spec: WaveformSpec, n0: float, step: float = 1e-5, oversample: int = 1
) -> np.ndarray:
    """Full (2P+2)x(2P+2) FIM over ``[tau, gamma, Re x, Im x]`` from central differences.

    Perturbations are ``step`` times a natural scale per coordinate (T for tau,
    gamma for gamma, max|x| for the coefficients). The support mask is frozen
    at the nominal parameters, matching the interior-derivative convention.
    The result is cross-checked against a doubled step.

    ``oversample > 1`` samples the echo ``oversample`` times faster than the
    scatterer spacing (noise density fixed), so the discrete FIM approaches
    the integral representation as ``oversample`` grows.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-7, 1e-3]")
    if int(oversample) != oversample or oversample < 1:
        raise ValueError("oversample must be a positive integer")
    oversample = int(oversample)
    F1 = _fd_fim(scene, spec, n0, step, oversample)
    F2 = _fd_fim(scene, spec, n0, 2 * step, oversample)
    d = np.sqrt(np.abs(np.diag(F1)))
    rel = np.abs(F1 - F2) / np.maximum(np.outer(d, d), np.finfo(float).tiny)
    if rel.max() > 5e-3:
        raise StepInstabilityError(f"FD FIM changes by {rel.max():.3g} between step sizes")
    return 0.5 * (F1 + F1.T)


def oracle_crlb(fim: np.ndarray) -> CrlbResult:
    """CRLBs for tau and gamma read off the inverted full FIM."""
    inv = scipy.linalg.inv(fim)
    # Equivalent reduced information from the leading 2x2 block of the inverse.
    a = np.linalg.inv(inv[:2, :2])
    return CrlbResult(float(inv[0, 0]), float(inv[1, 1]), a[0, 0], a[0, 1], a[1, 1], np.linalg.cond(fim), "finite-difference")
