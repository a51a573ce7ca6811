"""Transmit envelopes, their derivatives, and the moment integrals built on them.

Every analytic family is written as ``A * exp(q(v))`` (real part for the chirp),
with ``q`` a quadratic in the nondimensional time ``v = (t - origin) / T``. The
m-th derivative is then ``A * T**-m * P_m(v) * exp(q(v))`` with the polynomial
recurrence ``P_{m+1} = P_m' + q' P_m``, so derivatives of any order are exact.

Derivatives describe the interior of the support only: the rectangular window
makes ``s`` discontinuous at ``0`` and ``T``, and the impulses this would put in
``s'`` are not represented.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.interpolate import CubicSpline

from .quadrature import DEFAULT_LEVEL, DEFAULT_RTOL, integrate

K_MAX = 8
DEFAULT_MAX_ORDER = 2 * K_MAX + 2
FAMILIES = ("chirp", "tone", "gaussian", "sampled")
IDENTITIES = ("re-plain", "re-t", "re-t2", "im-plain", "im-t", "im-t2")

# Support membership tolerance, relative to T, for sample instants that land on an edge.
_EDGE_RTOL = 1e-12
_TAPER_FRACTION = 0.02


class WaveformError(ValueError):
    pass


class OrderOverflowError(WaveformError):
    pass


class DegenerateWaveformError(WaveformError):
    pass


@dataclass(frozen=True, eq=False)
class WaveformSpec:
    """A time-limited complex envelope ``s(t)`` supported on ``[0, duration]``.

    Use the family constructors (:meth:`chirp`, :meth:`tone`, :meth:`gaussian`,
    :meth:`sampled`, :meth:`from_csv`) rather than the raw fields.

    ``chirp_rate`` is ``a`` in ``cos(2 pi a t^2)``; ``carrier`` is the tone
    frequency (or an optional carrier on the gaussian pulse); ``width`` is the
    gaussian standard deviation in seconds.
    """

    family: str
    duration: float
    amplitude: float = 1.0
    chirp_rate: float = 0.0
    carrier: float = 0.0
    width: float = 0.0
    samples: np.ndarray | None = field(default=None, repr=False)
    max_order: int = DEFAULT_MAX_ORDER

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise WaveformError(f"unknown waveform family {self.family!r}")
        if self.amplitude <= 0:
            raise WaveformError("amplitude must be positive")
        if self.max_order < 1:
            raise WaveformError("max_order must be at least 1")
        if self.family == "sampled":
            if self.samples is None or len(self.samples) < 8:
                raise WaveformError("sampled waveform needs at least 8 samples")
            values = np.asarray(self.samples, dtype=complex)
            step = self.duration / (len(values) - 1)
            if not step > 0:
                raise WaveformError("sampled waveform needs a positive grid step")
            object.__setattr__(self, "samples", values)
            object.__setattr__(self, "_splines", _spectral_splines(values, step, self.max_order))
            return
        if not self.duration > 0:
            raise WaveformError("duration must be positive")
        if self.family == "gaussian" and not self.width > 0:
            raise WaveformError("gaussian width must be positive")
        object.__setattr__(self, "_polys", _derivative_polys(self._exponent(), self.max_order))

    # -- constructors -----------------------------------------------------------------

    @classmethod
    def chirp(cls, chirp_rate: float, duration: float, amplitude: float = 1.0, **kw):
        return cls("chirp", duration, amplitude, chirp_rate=chirp_rate, **kw)

    @classmethod
    def tone(cls, carrier: float, duration: float, amplitude: float = 1.0, **kw):
        return cls("tone", duration, amplitude, carrier=carrier, **kw)

    @classmethod
    def gaussian(
        cls, width: float, duration: float, amplitude: float = 1.0, carrier: float = 0.0, **kw
    ):
        return cls("gaussian", duration, amplitude, width=width, carrier=carrier, **kw)

    @classmethod
    def sampled(cls, values, step: float, amplitude: float = 1.0, **kw):
        values = np.asarray(values, dtype=complex)
        if len(values) < 8:
            raise WaveformError("sampled waveform needs at least 8 samples")
        if not step > 0:
            raise WaveformError("sampled waveform needs a positive grid step")
        return cls("sampled", step * (len(values) - 1), amplitude, samples=values, **kw)

    @classmethod
    def from_csv(cls, path: str | Path, amplitude: float = 1.0, **kw):
        """Load a sampled waveform from ``t,re,im`` rows (uniform ``t`` grid)."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in row[:3]])
                except ValueError:
                    continue  # header
        data = np.asarray(rows)
        if data.ndim != 2 or data.shape[1] != 3:
            raise WaveformError(f"{path}: expected three columns t,re,im")
        t = data[:, 0]
        steps = np.diff(t)
        if len(t) < 8 or np.any(steps <= 0) or np.ptp(steps) > 1e-6 * steps.mean():
            raise WaveformError(f"{path}: need >= 8 samples on a uniform increasing grid")
        return cls.sampled(data[:, 1] + 1j * data[:, 2], float(steps.mean()), amplitude, **kw)

    # -- evaluation ---------------------------------------------------------------------

    @property
    def is_real(self) -> bool:
        if self.family == "chirp":
            return True
        if self.family == "gaussian":
            return self.carrier == 0.0
        if self.family == "sampled":
            return not np.any(self.samples.imag)
        return False

    @property
    def origin(self) -> float:
        return 0.5 * self.duration if self.family == "gaussian" else 0.0

    def _exponent(self) -> np.ndarray:
        T = self.duration
        if self.family == "chirp":
            return np.array([0, 0, 2j * np.pi * self.chirp_rate * T**2])
        if self.family == "tone":
            return np.array([0, 2j * np.pi * self.carrier * T, 0])
        return np.array([0, 2j * np.pi * self.carrier * T, -(T**2) / (2 * self.width**2)])

    def in_support(self, t) -> np.ndarray:
        tol = _EDGE_RTOL * self.duration
        t = np.asarray(t, dtype=float)
        return (t >= -tol) & (t <= self.duration + tol)

    def derivative(self, t, order: int = 0, masked: bool = True):
        """m-th derivative of the interior expression at ``t`` (seconds).

        With ``masked=False`` the analytic continuation is returned everywhere;
        this is what finite-difference and Taylor-type checks need.
        """
        if order < 0:
            raise WaveformError("derivative order must be nonnegative")
        if order > self.max_order:
            raise OrderOverflowError(
                f"derivative order {order} exceeds configured maximum {self.max_order}"
            )
        t = np.asarray(t, dtype=float)
        if self.family == "sampled":
            out = self.amplitude * self._splines[order](np.clip(t, 0.0, self.duration))
        else:
            v = (t - self.origin) / self.duration
            q = npoly.polyval(v, self._exponent())
            out = npoly.polyval(v, self._polys[order]) * np.exp(q)
            out = self.amplitude * self.duration ** (-order) * out
            if self.family == "chirp":
                out = out.real.astype(complex)
        if masked:
            out = np.where(self.in_support(t), out, 0.0)
        return out

    def evaluate(self, t):
        """``s(t)``; exactly zero outside ``[0, T]``."""
        return self.derivative(t, 0)


def _derivative_polys(q: np.ndarray, max_order: int) -> list[np.ndarray]:
    dq = npoly.polyder(q)
    polys = [np.array([1.0 + 0j])]
    for _ in range(max_order + 1):
        p = polys[-1]
        nxt = npoly.polyadd(npoly.polyder(p) if len(p) > 1 else [0j], npoly.polymul(dq, p))
        polys.append(np.trim_zeros(np.asarray(nxt, dtype=complex), "b") if np.any(nxt) else np.array([0j]))
    return polys


def _spectral_splines(values: np.ndarray, step: float, max_order: int):
    n = len(values)
    ramp = max(1, int(round(_TAPER_FRACTION * n)))
    taper = np.ones(n)
    edge = 0.5 * (1 - np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp))
    taper[:ramp] = edge
    taper[n - ramp :] = edge[::-1]
    tapered = values * taper
    # Zero padding keeps the periodic extension from wrapping one edge onto the other.
    nfft = 4 * n
    spectrum = np.fft.fft(tapered, nfft)
    omega = 2j * np.pi * np.fft.fftfreq(nfft, d=step)
    t = step * np.arange(n)
    splines = [CubicSpline(t, values)]
    for m in range(1, max_order + 1):
        d = np.fft.ifft(spectrum * omega**m)[:n]
        splines.append(CubicSpline(t, d))
    return splines


# -- moments ----------------------------------------------------------------------------


@dataclass(frozen=True)
class WaveformMoments:
    """``plain[i, k] = int t^i |s^(k)|^2``; ``cross[i, k] = Im int t^i s^(k)* s^(k+1)``.

    Values are SI (seconds). ``nondimensional()`` rescales time by ``duration``.
    """

    plain: np.ndarray
    cross: np.ndarray
    k_max: int
    duration: float

    def M(self, i: int, k: int) -> float:
        if k > self.k_max:
            raise OrderOverflowError(f"moment order {k} beyond computed k_max={self.k_max}")
        return float(self.plain[i, k])

    def Mt(self, i: int, k: int) -> float:
        if k > self.k_max:
            raise OrderOverflowError(f"moment order {k} beyond computed k_max={self.k_max}")
        return float(self.cross[i, k])

    def nondimensional(self) -> "WaveformMoments":
        T = self.duration
        i = np.arange(3)[:, None]
        k = np.arange(self.k_max + 1)[None, :]
        return WaveformMoments(
            self.plain * T ** (2.0 * k - i - 1),
            self.cross * T ** (2.0 * k - i),
            self.k_max,
            1.0,
        )


def moments(
    spec: WaveformSpec, k_max: int, level: int = DEFAULT_LEVEL, rtol: float = DEFAULT_RTOL
) -> WaveformMoments:
    if k_max < 1:
        raise WaveformError("k_max must be at least 1")
    if k_max + 1 > spec.max_order:
        raise OrderOverflowError(
            f"moments up to k={k_max} need derivative order {k_max + 1} > {spec.max_order}"
        )

    def integrand(t):
        d = [spec.derivative(t, m, masked=False) for m in range(k_max + 2)]
        rows = []
        for i in range(3):
            w = t**i
            rows.extend(w * np.abs(d[k]) ** 2 for k in range(k_max + 1))
            rows.extend(w * (np.conj(d[k]) * d[k + 1]).imag for k in range(k_max + 1))
        return np.array(rows)

    vals = integrate(integrand, 0.0, spec.duration, level=level, rtol=rtol)
    vals = np.asarray(vals).reshape(3, 2, k_max + 1)
    return WaveformMoments(vals[:, 0, :].copy(), vals[:, 1, :].copy(), k_max, spec.duration)


@dataclass(frozen=True)
class EffectiveParams:
    energy: float
    bandwidth: float
    duration: float
    rms_duration: float

    @property
    def product(self) -> float:
        return self.bandwidth * self.duration


def effective_params(spec: WaveformSpec, mom: WaveformMoments | None = None) -> EffectiveParams:
    """Energy, RMS bandwidth, effective duration, and the energy-RMS duration.

    Bandwidth is ``sqrt(M_0^(1)/M_0^(0))`` and therefore carries the ``2 pi`` of
    the derivative (rad/s).
    """
    mom = mom or moments(spec, 1)
    m00, m01, m21, m20 = mom.M(0, 0), mom.M(0, 1), mom.M(2, 1), mom.M(2, 0)
    floor = 1e-12 * spec.amplitude**2 * spec.duration
    if m00 <= floor:
        raise DegenerateWaveformError("waveform energy is zero")
    if m01 <= 1e-24 * m00 / spec.duration**2:
        raise DegenerateWaveformError("waveform has no derivative energy")
    return EffectiveParams(
        energy=m00,
        bandwidth=math.sqrt(m01 / m00),
        duration=math.sqrt(m21 / m01),
        rms_duration=math.sqrt(m20 / m00),
    )


# -- integration-by-parts identities ------------------------------------------------------


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    rhs: float
    rel_error: float


def _sign(n: int) -> int:
    return -1 if n % 2 else 1


def _re_plain(mom, p, q):
    n = p + q
    return _sign(p + n // 2) * mom.M(0, n // 2) if n % 2 == 0 else 0.0


def _re_t(mom, p, q):
    n = p + q
    k = n // 2
    if n % 2 == 0:
        return _sign(p + k) * mom.M(1, k)
    return _sign(p + k) * (p - k - 0.5) * mom.M(0, k)


def _re_t2_base(mom, q):
    k = q // 2
    if q % 2 == 0:
        extra = k * k * mom.M(0, k - 1) if k >= 1 else 0.0
        return _sign(k) * mom.M(2, k) - _sign(k) * extra
    return _sign(k + 1) * (2 * k + 1) * mom.M(1, k)


def _im_plain(mom, p, q):
    n = p + q
    return 0.0 if n % 2 == 0 else _sign(p + n // 2) * mom.Mt(0, n // 2)


def _im_t(mom, p, q):
    n = p + q
    k = n // 2
    if n % 2 == 0:
        return _sign(p + k) * (k - p) * mom.Mt(0, k - 1) if k != p else 0.0
    return _sign(p + k) * mom.Mt(1, k)


def _im_t2_base(mom, q):
    k = q // 2
    if q % 2 == 0:
        return _sign(k) * 2 * k * mom.Mt(1, k - 1) if k >= 1 else 0.0
    extra = (k * k + k) * mom.Mt(0, k - 1) if k >= 1 else 0.0
    return _sign(k) * mom.Mt(2, k) - _sign(k) * extra


def _t2(base, plain, tpart, mom, p, q):
    # Move all p derivatives onto t^2 s^(q): (t^2 g)^(p) = t^2 g^(p) + 2p t g^(p-1) + p(p-1) g^(p-2).
    n = p + q
    total = base(mom, n)
    if p >= 1:
        total += 2 * p * tpart(mom, 0, n - 1)
    if p >= 2:
        total += p * (p - 1) * plain(mom, 0, n - 2)
    return _sign(p) * total


def identity_rhs(mom: WaveformMoments, identity: str, p: int, q: int) -> float:
    """Closed form of ``Re/Im int t^i s^(p)* s^(q) dt`` in terms of the moments."""
    if identity == "re-plain":
        return _re_plain(mom, p, q)
    if identity == "re-t":
        return _re_t(mom, p, q)
    if identity == "re-t2":
        return _t2(_re_t2_base, _re_plain, _re_t, mom, p, q)
    if identity == "im-plain":
        return _im_plain(mom, p, q)
    if identity == "im-t":
        return _im_t(mom, p, q)
    if identity == "im-t2":
        return _t2(_im_t2_base, _im_plain, _im_t, mom, p, q)
    raise WaveformError(f"unknown identity {identity!r}; expected one of {IDENTITIES}")


def check_identity(
    spec: WaveformSpec,
    identity: str,
    p: int,
    q: int,
    mom: WaveformMoments | None = None,
    level: int = DEFAULT_LEVEL,
) -> IdentityCheck:
    """Compare direct quadrature of the left side with the moment closed form.

    The relative error is taken against ``max(|rhs|, int |t^i s^(p) s^(q)|)`` so
    that identities whose right side vanishes are still measured on a sensible
    scale.
    """
    if identity not in IDENTITIES:
        raise WaveformError(f"unknown identity {identity!r}; expected one of {IDENTITIES}")
    if p < 0 or q < 0:
        raise WaveformError("p and q must be nonnegative")
    for m in (p, q):
        if m > spec.max_order:
            raise OrderOverflowError(f"derivative order {m} exceeds {spec.max_order}")
    power = {"plain": 0, "t": 1, "t2": 2}[identity.split("-", 1)[1]]
    take = np.real if identity.startswith("re") else np.imag
    kneed = max(1, (p + q) // 2 + 1)
    if mom is None or mom.k_max < kneed:
        mom = moments(spec, kneed, level=level)

    def integrand(t):
        v = t**power * np.conj(spec.derivative(t, p, masked=False)) * spec.derivative(t, q, masked=False)
        return np.array([take(v), np.abs(v)])

    lhs, scale = integrate(integrand, 0.0, spec.duration, level=level, rtol=np.inf)
    rhs = identity_rhs(mom, identity, p, q)
    denom = max(abs(rhs), float(scale), np.finfo(float).tiny)
    return IdentityCheck(float(lhs), float(rhs), abs(float(lhs) - rhs) / denom)
