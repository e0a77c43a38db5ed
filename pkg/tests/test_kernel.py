import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma as Gamma

from fracdamp.errors import ConfigurationError, DomainError, HypothesisError, SingularCaseError, StructuralError
from fracdamp.kernel import (
    DiffusiveChannels,
    FracParams,
    appendix2_constants,
    build_diffusive_grid,
    caputo_direct,
    closed_form_appendix2,
    closed_form_lambda_integrals,
    closed_form_M2,
    diffusive_response,
    diffusive_vs_direct,
    evolve_channels,
    fractional_integral_direct,
    grid_appendix2,
    grid_lambda_integrals,
    grid_M2,
    kappa,
    mu,
    printed_c2,
    surface_factor,
    tail_bracket,
)


# -- oracles ---------------------------------------------------------------


def mp_M2(alpha, eta, gamma, d):
    """gamma kappa S_d int_0^inf rho^{2 alpha - 1}/(1 + eta + rho^2) d rho in high precision."""
    mp.mp.dps = 30
    f = lambda r: r ** (2 * alpha - 1) / (1 + eta + r**2)
    val = mp.quad(f, [0, 1, mp.inf])
    p = FracParams(alpha=alpha, eta=eta, gamma=gamma, d=d)
    return float(gamma * kappa(p) * surface_factor(d) * val)


def mp_appendix2(lam, alpha, eta, d):
    mp.mp.dps = 30
    L = lam + eta
    S = surface_factor(d)
    # radial forms of the integrals over R^d (surface measure S_d r^{d-1} dr)
    b1 = S * mp.quad(lambda r: r ** (alpha + d / 2) * r ** (d - 1) / (L + r**2) ** (d + 1), [0, 1, mp.inf])
    a2 = S * mp.quad(lambda r: r ** (2 * d - 2) * r ** (d - 1) / (L + r**2) ** (2 * d), [0, 1, mp.inf])
    a3 = S * mp.quad(lambda r: r ** (2 * d) * r ** (d - 1) / (L + r**2) ** (2 * d + 2), [0, 1, mp.inf])
    return float(b1), float(a2), float(a3)


# -- parameters and kernel pieces -----------------------------------------


@pytest.mark.parametrize(
    "kw", [dict(alpha=0.0), dict(alpha=1.0), dict(eta=-1e-3), dict(gamma=-1.0), dict(a=0.0), dict(d=0), dict(b=math.inf)]
)
def test_params_reject(kw):
    with pytest.raises(ConfigurationError):
        FracParams(**kw)


def test_surface_factor_values():
    assert surface_factor(1) == pytest.approx(2.0)
    assert surface_factor(2) == pytest.approx(2 * math.pi)
    assert surface_factor(3) == pytest.approx(4 * math.pi)


def test_kappa_alpha_half_d1():
    p = FracParams(alpha=0.5, d=1)
    # 2 sin(pi/2) Gamma(3/2) / (pi^{3/2})
    assert kappa(p) == pytest.approx(2 * Gamma(1.5) / math.pi**1.5, rel=1e-15)


def test_mu_values_and_domain():
    p = FracParams(alpha=0.75, d=1)  # exponent (2 alpha - d)/2 = 1/4
    assert mu(16.0, p) == pytest.approx(2.0)
    np.testing.assert_allclose(mu(np.array([1.0, 81.0]), p), [1.0, 3.0])
    assert mu(5.0, FracParams(alpha=0.5, d=1)) == 1.0
    with pytest.raises(DomainError):
        mu(0.0, p)


def test_grid_errors():
    p = FracParams()
    with pytest.raises(ConfigurationError):
        build_diffusive_grid(p, n_nodes=1)
    with pytest.raises(ConfigurationError):
        build_diffusive_grid(p, xi_max=-1.0)
    with pytest.raises(ConfigurationError):
        build_diffusive_grid(p, xi_min=10.0, xi_max=1.0)


def test_grid_is_geometric_and_records_metadata(default_grid):
    r = default_grid.nodes[1:] / default_grid.nodes[:-1]
    np.testing.assert_allclose(r, r[0], rtol=1e-12)
    meta = default_grid.metadata()
    assert meta["n_nodes"] == 400
    lo, hi = tail_bracket(FracParams())
    assert default_grid.xi_min == pytest.approx(lo)
    assert default_grid.xi_max == pytest.approx(hi)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("eta", [0.0, 1.0])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_closed_form_M2_matches_mpmath(alpha, eta, d):
    p = FracParams(alpha=alpha, eta=eta, gamma=1.3, d=d)
    assert closed_form_M2(p) == pytest.approx(mp_M2(alpha, eta, 1.3, d), rel=1e-12)


def test_M2_eta0_alpha_half_is_gamma():
    p = FracParams(alpha=0.5, eta=0.0, gamma=1.0)
    assert closed_form_M2(p) == pytest.approx(1.0, rel=1e-14)
    assert grid_M2(p, build_diffusive_grid(p)) == pytest.approx(1.0, rel=1e-6)


def test_M2_linear_in_gamma(default_grid):
    p1 = FracParams(gamma=1.0)
    p2 = FracParams(gamma=2.0)
    assert grid_M2(p2, default_grid) == pytest.approx(2 * grid_M2(p1, default_grid), rel=1e-14)


def test_M2_coarse_grid_fails():
    p = FracParams()
    g = build_diffusive_grid(p, n_nodes=8)
    assert abs(grid_M2(p, g) / closed_form_M2(p) - 1) > 1e-6


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.2, 0.8), eta=st.floats(0.0, 3.0), d=st.integers(1, 3))
def test_M2_quadrature_property(alpha, eta, d):
    p = FracParams(alpha=alpha, eta=eta, d=d)
    g = build_diffusive_grid(p)
    assert grid_M2(p, g) == pytest.approx(closed_form_M2(p), rel=1e-6)


def test_lambda_integrals_example():
    p = FracParams(alpha=0.5, eta=1.0, gamma=1.0)
    i1, i2 = closed_form_lambda_integrals(1.0, p)
    assert i2 == pytest.approx((1j + 1) ** -0.5, rel=1e-14)
    assert i1 == pytest.approx(1j * i2, rel=1e-14)


@pytest.mark.parametrize("lam", [0.5, 5.0, 50.0, -7.0])
@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_lambda_integrals_grid(lam, alpha):
    p = FracParams(alpha=alpha, eta=1.0)
    g = build_diffusive_grid(p)
    gi1, gi2 = grid_lambda_integrals(lam, p, g)
    ci1, ci2 = closed_form_lambda_integrals(lam, p)
    assert abs(gi2 - ci2) <= 1e-5 * abs(ci2)
    assert abs(gi1 - ci1) <= 1e-5 * abs(ci1)


def test_lambda_integrals_singular_case():
    p = FracParams(eta=0.0)
    with pytest.raises(SingularCaseError):
        closed_form_lambda_integrals(0.0, p)
    with pytest.raises(SingularCaseError):
        grid_lambda_integrals(0.0, p, build_diffusive_grid(p))


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("alpha", [0.25, 0.75])
@pytest.mark.parametrize("lam", [0.0, 3.0])
def test_appendix2_closed_forms_match_mpmath(d, alpha, lam):
    p = FracParams(alpha=alpha, eta=1.0, d=d)
    ref = mp_appendix2(lam, alpha, 1.0, d)
    np.testing.assert_allclose(closed_form_appendix2(lam, p), ref, rtol=1e-10)


def test_appendix2_c2_printed_vs_derived():
    # the printed constant reproduces pi/3 at d = 2 but overstates the integral by (3d-2)/d
    assert printed_c2(2) == pytest.approx(math.pi / 3)
    for d in (2, 3, 4):
        _, c2, _ = appendix2_constants(0.5, d)
        assert printed_c2(d) / c2 == pytest.approx((3 * d - 2) / d, rel=1e-12)


def test_appendix2_hypotheses():
    with pytest.raises(HypothesisError):
        closed_form_appendix2(1.0, FracParams(d=1))
    with pytest.raises(HypothesisError):
        closed_form_appendix2(1.0, FracParams(d=2, eta=0.0))
    with pytest.raises(DomainError):
        closed_form_appendix2(-1.0, FracParams(d=2))


@pytest.mark.parametrize("d", [2, 3])
def test_appendix2_grid(d):
    p = FracParams(alpha=0.5, eta=1.0, d=d)
    g = build_diffusive_grid(p)
    for lam in (0.0, 10.0, 100.0):
        np.testing.assert_allclose(grid_appendix2(lam, p, g), closed_form_appendix2(lam, p), rtol=1e-5)


def test_A1_is_B1_squared():
    # A1 exponent alpha - d/2 - 2 equals twice the B1 exponent
    alpha, d = 0.4, 3
    assert 2 * (alpha / 2 - d / 4 - 1) == pytest.approx(alpha - d / 2 - 2)


# -- channels and convolution routes ---------------------------------------


def test_channels_shape_checks(default_params, default_grid):
    ch = DiffusiveChannels.zeros(default_grid, n_points=2)
    with pytest.raises(StructuralError):
        evolve_channels(ch, np.zeros(3), 1e-3, default_params, default_grid)
    with pytest.raises(ConfigurationError):
        evolve_channels(ch, 0.0, 0.0, default_params, default_grid)


def test_grid_shape_mismatch(default_params, default_grid):
    ch = DiffusiveChannels.zeros(build_diffusive_grid(default_params, n_nodes=10))
    with pytest.raises(StructuralError):
        evolve_channels(ch, 1.0, 1e-3, default_params, default_grid)


def test_zero_drive_gives_zero_output(default_params, default_grid):
    out = diffusive_response(np.zeros(50), 1e-2, default_params, default_grid)
    assert np.all(out == 0.0)


@settings(max_examples=15, deadline=None)
@given(c1=st.floats(-3, 3), c2=st.floats(-3, 3))
def test_diffusive_response_linear(c1, c2):
    p = FracParams(alpha=0.4, eta=0.5)
    g = build_diffusive_grid(p, n_nodes=60)
    t = 0.01 * np.arange(200)
    f, h = np.sin(t), t**2
    lhs = diffusive_response(c1 * f + c2 * h, 0.01, p, g)
    rhs = c1 * diffusive_response(f, 0.01, p, g) + c2 * diffusive_response(h, 0.01, p, g)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.max(np.abs(rhs))))


def test_caputo_direct_linear_is_exact():
    # D^{alpha,0} t = t^{1-alpha}/Gamma(2-alpha) and L1 is exact for linear f
    p = FracParams(alpha=0.3, eta=0.0)
    t = 0.01 * np.arange(101)
    np.testing.assert_allclose(caputo_direct(t, 0.01, p), t**0.7 / Gamma(1.7), rtol=1e-12, atol=1e-15)


def test_caputo_direct_constant_is_zero():
    p = FracParams(alpha=0.6, eta=1.0)
    assert np.all(caputo_direct(np.full(20, 3.0), 0.1, p) == 0.0)


def test_caputo_direct_tempered_quadratic():
    p = FracParams(alpha=0.5, eta=1.0)
    dt = 1e-3
    t = dt * np.arange(1001)
    mp.mp.dps = 20
    T = 1.0
    ref = float(2 * mp.quad(lambda s: s * (T - s) ** -0.5 * mp.e ** (-(T - s)), [0, T]) / mp.gamma(0.5))
    assert caputo_direct(t**2, dt, p)[-1] == pytest.approx(ref, rel=1e-4)


def test_fractional_integral_direct_linear_exact():
    # I^{p,0} t = t^{p+1}/Gamma(p+2), exact for the piecewise-linear rule
    t = 0.05 * np.arange(41)
    out = fractional_integral_direct(t, 0.05, 0.5, 0.0)
    np.testing.assert_allclose(out, t**1.5 / Gamma(2.5), rtol=1e-12, atol=1e-15)


def test_fractional_integral_order_one_is_integral():
    t = 0.01 * np.arange(301)
    out = fractional_integral_direct(np.cos(t), 0.01, 1.0, 0.0)
    np.testing.assert_allclose(out, np.sin(t), atol=1e-5)


def test_diffusive_vs_direct_converges_in_nodes():
    p = FracParams(alpha=0.5, eta=0.5)
    errs = [diffusive_vs_direct(lambda t: np.sin(2 * t), 1e-2, p, build_diffusive_grid(p, n_nodes=n), 10.0) for n in (25, 50, 100)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3
