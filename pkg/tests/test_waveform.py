import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as spi

from extcrlb.waveform import (
    IDENTITIES,
    DegenerateWaveformError,
    OrderOverflowError,
    WaveformError,
    WaveformSpec,
    check_identity,
    effective_params,
    identity_rhs,
    moments,
)

T = 5e-5


# -- evaluate / derivative ---------------------------------------------------------------


def test_chirp_outside_support_is_zero(chirp):
    assert chirp.evaluate(-1e-6) == 0
    assert chirp.evaluate(T + 1e-9) == 0


def test_chirp_at_origin_is_one(chirp):
    assert chirp.evaluate(0.0) == pytest.approx(1.0)


def test_tone_unit_modulus():
    tone = WaveformSpec.tone(1e5, T)
    t = np.linspace(1e-7, T - 1e-7, 101)
    np.testing.assert_allclose(np.abs(tone.evaluate(t)), 1.0, rtol=1e-13)


def test_chirp_first_derivative_chain_rule(chirp):
    a = chirp.chirp_rate
    t = np.linspace(1e-6, T - 1e-6, 57)
    expect = -4 * np.pi * a * t * np.sin(2 * np.pi * a * t**2)
    np.testing.assert_allclose(chirp.derivative(t, 1).real, expect, rtol=1e-9, atol=1e-9 * np.abs(expect).max())


def test_tone_derivative():
    tone = WaveformSpec.tone(1e5, T)
    t = np.linspace(1e-6, T - 1e-6, 13)
    np.testing.assert_allclose(tone.derivative(t, 1), 2j * np.pi * 1e5 * tone.evaluate(t), rtol=1e-12)


def test_order_zero_is_evaluate(chirp):
    t = np.linspace(-1e-6, T + 1e-6, 31)
    np.testing.assert_array_equal(chirp.derivative(t, 0), chirp.evaluate(t))


@pytest.mark.parametrize("order", [1, 2, 3, 5])
def test_higher_derivatives_match_central_differences(order):
    g = WaveformSpec.gaussian(T / 12, T, carrier=1e5)
    t = np.linspace(0.3 * T, 0.7 * T, 9)
    h = 2e-6 * T
    fd = (g.derivative(t + h, order - 1, masked=False) - g.derivative(t - h, order - 1, masked=False)) / (2 * h)
    exact = g.derivative(t, order)
    np.testing.assert_allclose(fd, exact, rtol=1e-6, atol=1e-6 * np.abs(exact).max())


def test_order_overflow():
    spec = WaveformSpec.chirp(2.56e9, T, max_order=4)
    with pytest.raises(OrderOverflowError):
        spec.derivative(0.5 * T, 5)


@pytest.mark.parametrize(
    "kwargs",
    [dict(family="chirp", duration=-1.0), dict(family="chirp", duration=T, amplitude=0.0), dict(family="bogus", duration=T)],
)
def test_invalid_specs(kwargs):
    with pytest.raises(WaveformError):
        WaveformSpec(**kwargs)


def test_sampled_needs_eight_points():
    with pytest.raises(WaveformError):
        WaveformSpec.sampled(np.ones(7), 1e-6)


def test_sampled_gaussian_tracks_analytic_interior():
    g = WaveformSpec.gaussian(T / 12, T)
    grid = np.linspace(0, T, 2001)
    s = WaveformSpec.sampled(g.evaluate(grid), grid[1])
    t = np.linspace(0.2 * T, 0.8 * T, 25)
    for m in (0, 1, 2):
        exact = g.derivative(t, m)
        np.testing.assert_allclose(s.derivative(t, m), exact, atol=1e-6 * np.abs(exact).max())


def test_csv_roundtrip(tmp_path):
    grid = np.linspace(0, T, 64)
    vals = np.exp(1j * grid / T)
    path = tmp_path / "w.csv"
    path.write_text("t,re,im\n" + "".join(f"{float(t)!r},{float(v.real)!r},{float(v.imag)!r}\n" for t, v in zip(grid, vals)))
    s = WaveformSpec.from_csv(path)
    assert s.duration == pytest.approx(T)
    np.testing.assert_allclose(s.evaluate(grid[5:-5]), vals[5:-5], atol=1e-9)


# -- moments -----------------------------------------------------------------------------


def _gaussian_derivs(t, c, w):
    """s, s', s'', s''' of exp(-(t-c)^2/(2w^2)), derived by hand."""
    u = (t - c) / w
    s = np.exp(-0.5 * u**2)
    return [s, -u / w * s, (u**2 - 1) / w**2 * s, (3 * u - u**3) / w**3 * s]


def test_gaussian_moments_against_independent_quadrature(gaussian):
    c, w = T / 2, gaussian.width
    mom = moments(gaussian, 3)
    for k in range(4):
        for i in range(3):
            exact, _ = spi.quad(lambda t: t**i * _gaussian_derivs(t, c, w)[k] ** 2, 0, T, epsabs=0, epsrel=1e-13, limit=200)
            assert mom.M(i, k) == pytest.approx(exact, rel=1e-9)


def test_tone_energy_equals_duration():
    assert moments(WaveformSpec.tone(1e5, T), 1).M(0, 0) == pytest.approx(T, rel=1e-12)


def test_real_chirp_cross_moments_vanish(chirp):
    mom = moments(chirp, 3)
    assert np.all(mom.cross == 0)


def test_moment_order_overflow(chirp):
    mom = moments(chirp, 1)
    with pytest.raises(OrderOverflowError):
        mom.M(0, 2)


def test_gaussian_quadrature_convergence(gaussian):
    fine = moments(gaussian, 3, level=14)
    coarse = moments(gaussian, 3, level=13)
    np.testing.assert_allclose(coarse.plain, fine.plain, rtol=1e-8)


@settings(max_examples=15, deadline=None)
@given(
    st.sampled_from(["chirp", "tone", "gaussian"]),
    st.floats(0.1, 1.0),
)
def test_cauchy_schwarz_and_signs(family, frac):
    spec = {
        "chirp": WaveformSpec.chirp(2.56e9 * frac, T),
        "tone": WaveformSpec.tone(2e5 * frac, T),
        "gaussian": WaveformSpec.gaussian(T / 12, T, carrier=2e5 * frac),
    }[family]
    mom = moments(spec, 3)
    for k in range(4):
        assert mom.M(0, k) >= 0 and mom.M(2, k) >= 0
        assert mom.M(1, k) ** 2 <= mom.M(0, k) * mom.M(2, k) * (1 + 1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.25, 16.0), st.floats(0.1, 1.0))
def test_amplitude_scaling(alpha, frac):
    base = WaveformSpec.chirp(2.56e9 * frac, T)
    scaled = WaveformSpec.chirp(2.56e9 * frac, T, amplitude=alpha)
    m0, m1 = moments(base, 2), moments(scaled, 2)
    np.testing.assert_allclose(m1.plain, alpha**2 * m0.plain, rtol=1e-12)
    e0, e1 = effective_params(base, m0), effective_params(scaled, m1)
    assert e1.bandwidth == pytest.approx(e0.bandwidth, rel=1e-12)
    assert e1.duration == pytest.approx(e0.duration, rel=1e-12)
    assert e1.rms_duration == pytest.approx(e0.rms_duration, rel=1e-12)


# -- effective parameters ----------------------------------------------------------------


def test_chirp_effective_params(chirp):
    ep = effective_params(chirp)
    assert ep.bandwidth == pytest.approx(9.0884e5, rel=1e-3)
    assert ep.duration == pytest.approx(3.893e-5, rel=5e-3)
    assert ep.product == pytest.approx(35.3786, rel=5e-3)
    assert ep.duration < chirp.duration


def test_slow_chirp_effective_params():
    ep = effective_params(WaveformSpec.chirp(0.256e9, T))
    assert ep.bandwidth == pytest.approx(0.7604e5, rel=1e-3)
    assert ep.product == pytest.approx(2.6988, rel=5e-3)


def test_tone_effective_params_angular_convention():
    fc = 1e5
    ep = effective_params(WaveformSpec.tone(fc, T))
    # sqrt(M_0^(1)/M_0^(0)) of exp(j 2 pi fc t) is the angular frequency.
    assert ep.bandwidth == pytest.approx(2 * np.pi * fc, rel=1e-9)
    assert ep.duration == pytest.approx(T / math.sqrt(3), rel=1e-9)
    assert ep.rms_duration == pytest.approx(T / math.sqrt(3), rel=1e-9)


def test_degenerate_waveform():
    zero = WaveformSpec.sampled(np.zeros(16), 1e-6)
    with pytest.raises(DegenerateWaveformError):
        effective_params(zero)


def test_constant_has_no_bandwidth():
    flat = WaveformSpec.tone(0.0, T)
    with pytest.raises(DegenerateWaveformError):
        effective_params(flat)


# -- identities --------------------------------------------------------------------------


def test_identity_re_plain_p1_q1(chirp):
    mom = moments(chirp, 2)
    assert identity_rhs(mom, "re-plain", 1, 1) == pytest.approx(mom.M(0, 1))


def test_identity_odd_order_rhs_zero(chirp):
    assert identity_rhs(moments(chirp, 2), "re-plain", 0, 1) == 0


def test_identity_gaussian_re_t_p1_q2(gaussian):
    r = check_identity(gaussian, "re-t", 1, 2)
    assert r.rel_error <= 1e-6


def test_identity_unknown_name(gaussian):
    with pytest.raises(WaveformError):
        check_identity(gaussian, "re-t3", 1, 1)


@pytest.mark.parametrize("identity", IDENTITIES)
def test_identity_suite_complex_gaussian(identity):
    g = WaveformSpec.gaussian(T / 12, T, carrier=2e5)
    mom = moments(g, 4)
    worst = max(
        check_identity(g, identity, p, q, mom=mom).rel_error for p in range(7) for q in range(7 - p)
    )
    assert worst <= 1e-6


def test_identities_fail_for_windowed_chirp(chirp):
    # Boundary terms do not vanish for a rectangular window: s(0)^2 / 2 survives.
    r = check_identity(chirp, "re-plain", 0, 1)
    assert r.rel_error > 1e-3
