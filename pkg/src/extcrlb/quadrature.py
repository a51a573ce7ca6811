"""Composite trapezoid quadrature with one Richardson refinement."""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_LEVEL = 14
DEFAULT_RTOL = 1e-8


class QuadratureError(RuntimeError):
    """Successive refinements disagree beyond the requested tolerance."""


def _trapezoid(values: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    values = np.moveaxis(values, axis, -1)
    return h * (values[..., 1:-1].sum(axis=-1) + 0.5 * (values[..., 0] + values[..., -1]))


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    level: int = DEFAULT_LEVEL,
    rtol: float = DEFAULT_RTOL,
) -> complex | float | np.ndarray:
    """Integrate ``f`` over ``[a, b]``.

    ``f`` is evaluated once on a grid of ``2**(level+1)`` intervals. Trapezoid
    sums at steps ``h``, ``h/2`` and ``h/4`` (``h = (b-a)/2**(level-1)``) give two
    Richardson estimates; their disagreement, measured against the integral of
    ``|f|``, must stay below ``rtol``. ``f`` may return a trailing batch axis
    (shape ``(n,)`` or ``(m, n)`` for ``n`` nodes), in which case every row is
    checked.
    """
    if b <= a:
        return 0.0
    n = 2 ** (level + 1)
    t = np.linspace(a, b, n + 1)
    v = np.asarray(f(t))
    h = (b - a) / n
    fine = _trapezoid(v, h)
    mid = _trapezoid(v[..., ::2], 2 * h)
    coarse = _trapezoid(v[..., ::4], 4 * h)
    r_fine = (4.0 * fine - mid) / 3.0
    r_coarse = (4.0 * mid - coarse) / 3.0
    scale = _trapezoid(np.abs(v), h)
    err = np.abs(r_fine - r_coarse)
    bad = err > rtol * np.maximum(scale, np.finfo(float).tiny)
    if np.any(bad):
        worst = float(np.max(err / np.maximum(scale, np.finfo(float).tiny)))
        raise QuadratureError(
            f"quadrature on [{a:.6g}, {b:.6g}] did not converge: "
            f"relative disagreement {worst:.3g} > {rtol:.3g}"
        )
    return r_fine
