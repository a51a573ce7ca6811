"""Extended-target geometry, the measurement matrix, echo synthesis and SNR."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .quadrature import DEFAULT_LEVEL, integrate
from .waveform import WaveformSpec

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 3e8
GUARD_BAND = 0.05
_INTEGER_TOL = 1e-9


class SceneError(ValueError):
    pass


class SupportViolationError(SceneError):
    pass


@dataclass(frozen=True, eq=False)
class TargetScene:
    """P equally spaced scatterers starting at delay ``tau``.

    ``delta`` is both the sampling interval and the scatterer spacing; ``x``
    holds the complex scattering coefficients. Build scenes with
    :func:`make_scene`, which enforces the integer-delay and complete-sampling
    conditions against a waveform.
    """

    tau: float
    gamma: float
    delta: float
    x: np.ndarray
    n_samples: int
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=complex))
        object.__setattr__(self, "x", x)
        if x.ndim != 1 or len(x) < 1:
            raise SceneError("x must be a nonempty vector")
        if not self.gamma > 0:
            raise SceneError("gamma must be positive")
        if not self.delta > 0:
            raise SceneError("delta must be positive")
        if self.tau < 0:
            raise SceneError("tau must be nonnegative")
        if self.n_samples < 1:
            raise SceneError("n_samples must be positive")

    @property
    def P(self) -> int:
        return len(self.x)

    @property
    def size(self) -> float:
        """Target extent ``c (tau_P - tau_1) / 2`` in metres."""
        return 0.5 * self.c * (self.P - 1) * self.delta

    @property
    def tau_index(self) -> int:
        return int(round(self.tau / self.delta))

    def with_x(self, x) -> "TargetScene":
        return TargetScene(self.tau, self.gamma, self.delta, x, self.n_samples, self.c)


def min_samples(tau: float, gamma: float, delta: float, P: int, duration: float) -> int:
    """Smallest N with ``gamma((N-1) delta - tau_P) >= T``."""
    tau_last = tau + (P - 1) * delta
    return int(math.ceil((tau_last + duration / gamma) / delta * (1 - 1e-12))) + 1


def make_scene(
    spec: WaveformSpec,
    tau: float,
    gamma: float,
    delta: float,
    x,
    n_samples: int | None = None,
    c: float = SPEED_OF_LIGHT,
) -> TargetScene:
    """Validated scene: ``tau`` snapped to the sample grid, N chosen if absent."""
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    if not delta > 0:
        raise SceneError("delta must be positive")
    ratio = tau / delta
    snapped = round(ratio) * delta
    if abs(ratio - round(ratio)) > _INTEGER_TOL:
        log.warning("tau=%.12g s is not a multiple of delta; rounded to %.12g s", tau, snapped)
    n_min = min_samples(snapped, gamma, delta, len(x), spec.duration)
    if n_samples is None:
        n_samples = int(math.ceil(n_min * (1 + GUARD_BAND)))
    scene = TargetScene(snapped, gamma, delta, x, int(n_samples), c)
    check_support(scene, spec)
    return scene


def check_support(scene: TargetScene, spec: WaveformSpec) -> None:
    n_min = min_samples(scene.tau, scene.gamma, scene.delta, scene.P, spec.duration)
    if scene.n_samples < n_min:
        raise SupportViolationError(
            f"echo not completely sampled: N={scene.n_samples} < {n_min} required for "
            f"T={spec.duration:g} s, gamma={scene.gamma:g}, P={scene.P}"
        )


def scatterer_delays(scene: TargetScene) -> np.ndarray:
    return scene.tau + scene.delta * np.arange(scene.P)


def lag_arguments(scene: TargetScene, n: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``gamma (n delta - tau_p)`` computed from integer offsets to keep edge samples exact."""
    offset = np.asarray(n)[:, None] - (scene.tau_index + np.asarray(p))[None, :]
    return scene.gamma * scene.delta * offset


def measurement_matrix(scene: TargetScene, spec: WaveformSpec) -> np.ndarray:
    check_support(scene, spec)
    args = lag_arguments(scene, np.arange(scene.n_samples), np.arange(scene.P))
    return spec.evaluate(args)


def overlap(h: float, duration: float) -> tuple[float, float]:
    """Interval where both ``u`` and ``u + h`` lie in ``[0, T]``."""
    return max(0.0, -h), min(duration, duration - h)


def lag_integral(spec: WaveformSpec, h: float, level: int = DEFAULT_LEVEL) -> complex:
    """``int s*(u) s(u + h) du`` over the overlapping supports."""
    lo, hi = overlap(h, spec.duration)
    if hi <= lo:
        return 0j

    def f(u):
        return np.conj(spec.derivative(u, 0, masked=False)) * spec.derivative(u + h, 0, masked=False)

    return complex(integrate(f, lo, hi, level=level))


def gram_matrix(scene: TargetScene, spec: WaveformSpec, level: int = DEFAULT_LEVEL) -> np.ndarray:
    """Hermitian ``Lambda_ij = int s*(t) s(t + gamma (tau_i - tau_j)) dt``."""
    P = scene.P
    lags = {m: lag_integral(spec, scene.gamma * m * scene.delta, level) for m in range(P)}
    G = np.empty((P, P), dtype=complex)
    for i in range(P):
        for j in range(P):
            m = i - j
            G[i, j] = lags[m] if m >= 0 else np.conj(lags[-m])
    return G


@dataclass(frozen=True)
class NoiseModel:
    n0: float
    seed: int = 0

    def __post_init__(self):
        if not self.n0 > 0:
            raise SceneError("N0 must be positive")

    def variance(self, delta: float) -> float:
        return self.n0 / delta


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; one independent stream per trial index."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def complex_noise(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    scale = math.sqrt(variance / 2)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def synthesize_echo(
    scene: TargetScene,
    spec: WaveformSpec,
    noise: NoiseModel | None,
    stream: int = 0,
    phi: np.ndarray | None = None,
) -> np.ndarray:
    """``y = Phi x + w``; ``noise=None`` gives the noiseless echo."""
    phi = measurement_matrix(scene, spec) if phi is None else phi
    y = phi @ scene.x
    if noise is None:
        return y
    rng = stream_rng(noise.seed, stream)
    return y + complex_noise(rng, scene.n_samples, noise.variance(scene.delta))


def signal_energy(scene: TargetScene, spec: WaveformSpec, gram: np.ndarray | None = None) -> float:
    """``x^H Lambda x``."""
    gram = gram_matrix(scene, spec) if gram is None else gram
    e = np.vdot(scene.x, gram @ scene.x)
    scale = float(np.abs(scene.x) @ np.abs(gram) @ np.abs(scene.x))
    if e.real <= 1e-12 * max(scale, np.finfo(float).tiny):
        raise SceneError("x^H Lambda x is not positive; SNR undefined")
    return float(e.real)


def snr_db(scene: TargetScene, spec: WaveformSpec, n0: float, gram: np.ndarray | None = None) -> float:
    return 10 * math.log10(signal_energy(scene, spec, gram) / (scene.gamma * n0))


def n0_for_snr(
    scene: TargetScene, spec: WaveformSpec, snr: float, gram: np.ndarray | None = None
) -> float:
    return signal_energy(scene, spec, gram) / (scene.gamma * 10 ** (snr / 10))


def write_echo_csv(path, y: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("n,re,im\n")
        for n, v in enumerate(y):
            fh.write(f"{n},{float(v.real)!r},{float(v.imag)!r}\n")
