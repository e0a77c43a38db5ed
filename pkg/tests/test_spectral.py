import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fracdamp.errors import ConfigurationError, NearSpectrumError, NumericalError, SingularCaseError
from fracdamp.kernel import FracParams, build_diffusive_grid
from fracdamp.spectral import (
    GeneratorMatrix,
    asymptotic_eigenvalue,
    branch1_peaks,
    build_generator,
    characteristic_function,
    continuum_eigenvalue,
    detect_case,
    discrete_seed,
    eigen_near,
    growth_slope,
    resolvent_norm,
    resolvent_solve,
    resolvent_sweep,
    spectrum_scan,
)
from fracdamp.wave import Domain1D, Simulator

CASE1 = FracParams(alpha=0.5, eta=1.0, gamma=1.0, a=1.0, b=1.0)


def gen_for(params, n_cells=200, n_xi=400):
    return build_generator(Domain1D(1.0, n_cells), params, build_diffusive_grid(params, n_nodes=n_xi))


@pytest.fixture(scope="module")
def case1_gen():
    return gen_for(CASE1)


def case1_re(n, p=CASE1):
    return -p.gamma * (1 - math.cos(p.b)) * math.sin(math.pi * p.alpha / 2) / (2 * (n * math.pi) ** (1 - p.alpha))


# -- generator -----------------------------------------------------------


def test_generator_matches_simulator():
    p = FracParams(b=0.3)
    g = build_diffusive_grid(p, n_nodes=50)
    d = Domain1D(1.0, 30)
    gen = build_generator(d, p, g)
    sim = Simulator(d, p, g)
    rng = np.random.default_rng(0)
    X = rng.standard_normal(gen.size)
    # matrix action equals the explicit-Euler residual (X_{n+1} - X_n)/dt of the stencil rhs
    np.testing.assert_allclose(gen.A @ X, sim.pack(sim.rhs(sim.unpack(X))), rtol=1e-12, atol=1e-12)
    assert gen.metadata()["grid"]["n_nodes"] == 50


def test_generator_dissipative_random_vectors():
    gen = gen_for(FracParams(b=0.5), n_cells=50, n_xi=80)
    rng = np.random.default_rng(1)
    for _ in range(100):
        X = rng.standard_normal(gen.size) + 1j * rng.standard_normal(gen.size)
        assert np.real(gen.inner(gen.A @ X, X)) <= 1e-10 * gen.norm(X) ** 2


def test_conservative_ritz_values_on_imaginary_axis():
    p = FracParams(gamma=0.0, b=0.0)
    gen = gen_for(p, n_cells=8, n_xi=10)
    w = gen.layout.wave
    ev = np.linalg.eigvals(gen.A.toarray()[w, w])
    assert np.max(np.abs(ev.real)) < 1e-8


def test_stable_spectrum_dense_small():
    # bounded xi bracket: dense LAPACK roundoff scales with the largest entry
    p = FracParams(b=0.5)
    g = build_diffusive_grid(p, n_nodes=20, xi_min=1e-2, xi_max=1e2)
    gen = build_generator(Domain1D(1.0, 10), p, g)
    ev = np.linalg.eigvals(gen.A.toarray())
    assert np.max(ev.real) < 0


# -- eigen_near ----------------------------------------------------------


def test_eigen_near_undamped():
    p = FracParams(gamma=0.0, b=0.0)
    gen = gen_for(p)
    h = gen.domain.h
    for n in (3, 10):
        lam = eigen_near(gen, 1j * n * math.pi)
        assert abs(lam.real) < 1e-9
        # three-point stencil frequency of sin(n pi x)
        assert lam.imag == pytest.approx((2 / h) * math.sin(n * math.pi * h / 2), rel=1e-10)
        assert lam.imag == pytest.approx(n * math.pi, rel=2e-3)


def test_eigen_near_case1_n20(case1_gen):
    lam = eigen_near(case1_gen, 1j * 20 * math.pi)
    assert lam.real == pytest.approx(-0.0205, rel=0.2)
    assert lam.real == pytest.approx(case1_re(20), rel=0.2)


def test_eigen_near_is_an_eigenvalue(case1_gen):
    lam = eigen_near(case1_gen, discrete_seed(15, 1, 1, CASE1, case1_gen.domain.h))
    # A - lam I is numerically singular
    M = (case1_gen.A - lam * sp.identity(case1_gen.size)).toarray()
    s = np.linalg.svd(M, compute_uv=False)
    assert s[-1] / s[0] < 1e-10


def test_eigen_near_nonconvergence(case1_gen):
    # a shift equidistant from two eigenvalues with a one-iteration cap cannot converge
    with pytest.raises(NumericalError):
        eigen_near(case1_gen, 1j * 20 * math.pi + 0.7j, max_iter=1)


def test_eigen_near_unequal_speeds_approaches_branch():
    p = FracParams(alpha=0.5, eta=1.0, gamma=1.0, a=4.0, b=0.5)
    gen = gen_for(p, n_cells=1600)
    h = gen.domain.h
    rel = []
    for n in (10, 20, 40):
        lam = eigen_near(gen, discrete_seed(n, 1, "a!=1", p, h))
        rel.append(abs(lam - discrete_seed(n, 1, "a!=1", p, h)))
    assert rel[0] > rel[1] > rel[2]


# -- asymptotic expansions -------------------------------------------------


def test_asymptotic_case1_n20_value():
    lam = asymptotic_eigenvalue(20, 1, "b!=kpi", CASE1)
    corr = (1 - math.cos(1)) * math.sin(math.pi / 4) / (2 * math.sqrt(20 * math.pi))
    assert corr == pytest.approx(0.020504, abs=5e-7)
    assert lam.real == pytest.approx(-corr, rel=1e-14)
    assert lam.imag == pytest.approx(20 * math.pi + corr, rel=1e-14)


def test_asymptotic_negative_n_conjugate():
    for br in (1, 2):
        assert asymptotic_eigenvalue(-17, br, 1, CASE1) == asymptotic_eigenvalue(17, br, 1, CASE1).conjugate()


def test_asymptotic_errors():
    with pytest.raises(ConfigurationError):
        asymptotic_eigenvalue(5, 1, 1, CASE1)
    with pytest.raises(ConfigurationError):
        asymptotic_eigenvalue(20, 1, "b=2kpi", CASE1)
    with pytest.raises(ConfigurationError):
        asymptotic_eigenvalue(20, 3, 1, CASE1)
    with pytest.raises(ConfigurationError):
        asymptotic_eigenvalue(20, 1, "banana", CASE1)
    # n0 is configurable
    asymptotic_eigenvalue(5, 1, 1, CASE1, n0=5)


def test_detect_case():
    assert detect_case(CASE1) == "b!=kpi"
    assert detect_case(FracParams(b=2 * math.pi)) == "b=2kpi"
    assert detect_case(FracParams(b=-4 * math.pi)) == "b=2kpi"
    assert detect_case(FracParams(b=3 * math.pi)) == "b=(2k+1)pi"
    assert detect_case(FracParams(b=2 * math.pi + 1e-9)) == "b!=kpi"
    assert detect_case(FracParams(a=4.0)) == "a!=1"


def test_case2_real_part_only_at_high_order():
    p = FracParams(alpha=0.5, b=2 * math.pi)
    for n in (10, 20, 40):
        re = asymptotic_eigenvalue(n, 1, "b=2kpi", p).real
        gb6 = p.gamma * p.b**6 * math.sin(math.pi * p.alpha / 2)
        assert re == pytest.approx(-gb6 / (128 * math.pi ** (5 - p.alpha) * n ** (5 - p.alpha)), rel=1e-12)
    # no O(n^{alpha-1}) part: ratio of successive real parts scales like 2^{alpha-5}
    r = asymptotic_eigenvalue(20, 1, 2, p).real / asymptotic_eigenvalue(10, 1, 2, p).real
    assert r == pytest.approx(2 ** (p.alpha - 5), rel=1e-12)


def test_case4_branch2_leading_order():
    p = FracParams(a=4.0)
    assert asymptotic_eigenvalue(12, 2, "a!=1", p) == 1j * 12.5 * math.pi
    assert asymptotic_eigenvalue(12, 1, "a!=1", p) == pytest.approx(1j * 12 * math.pi * 2)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(10, 500), br=st.sampled_from([1, 2]), alpha=st.floats(0.1, 0.9), b=st.floats(0.05, 3.0))
def test_asymptotic_case1_properties(n, br, alpha, b):
    p = FracParams(alpha=alpha, b=b)
    lam = asymptotic_eigenvalue(n, br, 1, p)
    assert lam.real < 0
    assert asymptotic_eigenvalue(-n, br, 1, p) == lam.conjugate()
    # both branches sum their damping to gamma times the uncoupled value
    other = asymptotic_eigenvalue(n, 3 - br, 1, p)
    tot = lam.real + other.real
    assert tot == pytest.approx(-p.gamma * math.sin(math.pi * alpha / 2) / (n * math.pi) ** (1 - alpha), rel=1e-10)


# -- characteristic-function oracle ----------------------------------------


def test_characteristic_function_vanishes_at_roots():
    lam = continuum_eigenvalue(asymptotic_eigenvalue(20, 1, 1, CASE1), CASE1)
    scale = abs(lam) * math.cosh(2 * abs(lam.real))
    assert abs(characteristic_function(lam, CASE1)) < 1e-10 * scale


def test_characteristic_function_requires_equal_speeds():
    with pytest.raises(ConfigurationError):
        characteristic_function(1j, FracParams(a=2.0))


@pytest.mark.parametrize("br", [1, 2])
def test_discrete_eigenvalues_converge_to_continuum(br):
    g = build_diffusive_grid(CASE1)
    target = continuum_eigenvalue(asymptotic_eigenvalue(10, br, 1, CASE1), CASE1, grid=g)
    errs = []
    for N in (200, 400, 800):
        gen = build_generator(Domain1D(1.0, N), CASE1, g)
        errs.append(abs(eigen_near(gen, discrete_seed(10, br, 1, CASE1, gen.domain.h)) - target))
    # second order in h
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.1)


@pytest.mark.parametrize(
    "b,case,br",
    [(1.0, 1, 1), (1.0, 1, 2), (2 * math.pi, 2, 1), (2 * math.pi, 2, 2), (math.pi, 3, 1), (math.pi, 3, 2)],
)
def test_expansions_approach_continuum_roots(b, case, br):
    p = FracParams(alpha=0.5, b=b)
    gaps = []
    for n in (10, 20, 40):
        a = asymptotic_eigenvalue(n, br, case, p)
        gaps.append(abs(continuum_eigenvalue(a, p) - a))
    assert gaps[0] > gaps[1] > gaps[2]


def test_case2_branch1_real_part_ratio():
    # the u-damped system carries half of the printed n^{alpha-5} real coefficient
    p = FracParams(alpha=0.5, b=2 * math.pi)
    a = asymptotic_eigenvalue(40, 1, 2, p)
    c = continuum_eigenvalue(a, p)
    assert c.real / a.real == pytest.approx(0.5, abs=0.02)


def test_case3_branch2_real_part_ratio_tends_to_one():
    p = FracParams(alpha=0.5, b=math.pi)
    r = []
    for n in (10, 20, 40, 80):
        a = asymptotic_eigenvalue(n, 2, 3, p)
        r.append(continuum_eigenvalue(a, p).real / a.real)
    assert all(abs(1 - r[k + 1]) < abs(1 - r[k]) for k in range(3))
    assert r[-1] == pytest.approx(1, abs=0.05)


# -- resolvent -----------------------------------------------------------


def test_resolvent_lower_bound(case1_gen):
    lam = eigen_near(case1_gen, 1j * 12 * math.pi)
    for x in (lam.imag, lam.imag + 0.3, 5.0):
        r = resolvent_norm(case1_gen, x)
        assert r >= (1 - 1e-3) / abs(1j * x - lam)


def test_resolvent_identity(case1_gen):
    rng = np.random.default_rng(4)
    f = rng.standard_normal(case1_gen.size) + 1j * rng.standard_normal(case1_gen.size)
    for lam in (0.0, 3.0, 40.0):
        x = resolvent_solve(case1_gen, lam, f)
        res = 1j * lam * x - case1_gen.A @ x - f
        assert np.linalg.norm(res) / np.linalg.norm(f) < 1e-10


def test_resolvent_deterministic(case1_gen):
    a = resolvent_norm(case1_gen, 31.0, seed=7)
    b = resolvent_norm(case1_gen, 31.0, seed=7)
    assert a == b


def test_resolvent_converges(case1_gen):
    r, info = resolvent_norm(case1_gen, 31.0, return_info=True)
    assert info["iterations"] < 200
    assert info["rel_change"] < 1e-3


def test_resolvent_errors():
    with pytest.raises(ConfigurationError):
        resolvent_norm(gen_for(FracParams(gamma=0.0), n_cells=20, n_xi=20), 1.0)
    with pytest.raises(SingularCaseError):
        resolvent_norm(gen_for(FracParams(eta=0.0), n_cells=20, n_xi=20), 0.0)


def test_near_spectrum_error():
    # rotation generator with eigenvalues +-i: i*1 - A is exactly singular
    A = sp.csr_matrix(np.array([[0.0, -1.0], [1.0, 0.0]]))
    gen = GeneratorMatrix(A, sp.identity(2, format="csr"), None, Domain1D(), CASE1, {})
    with pytest.raises(NearSpectrumError) as exc:
        resolvent_norm(gen, 1.0)
    assert exc.value.diagnostics["lam"] == 1.0


def test_growth_slope():
    lam = np.linspace(30, 200, 10)
    assert growth_slope(list(zip(lam, 3 * lam**0.5))) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ConfigurationError):
        growth_slope([(1.0, 1.0)])


def test_resolvent_slope_robust_to_refinement():
    p = FracParams(alpha=0.5, b=0.1)
    g = build_diffusive_grid(p)
    s = []
    for N in (400, 800):
        gen = build_generator(Domain1D(1.0, N), p, g)
        s.append(growth_slope(resolvent_sweep(gen, branch1_peaks(gen, p, range(10, 41, 10)))))
    assert abs(s[0] - s[1]) < 0.05


# -- scans and reports -----------------------------------------------------


def test_spectrum_scan_stable_and_csv(case1_gen, tmp_path):
    rep = spectrum_scan(case1_gen, CASE1, range(10, 21, 5))
    assert len(rep.entries) == 6
    assert rep.stable and rep.min_abs_real > 0
    rep.resolvent = [(30.0, 1.0)]
    rep.to_csv(tmp_path / "s.csv", tmp_path / "r.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "n,branch,re_num,im_num,re_asym,im_asym,gap"
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "lambda,resolvent_norm"


def test_spectrum_scan_conservative_mesh_gaps():
    p = FracParams(gamma=0.0, b=0.0)
    rep = spectrum_scan(gen_for(p), p, range(10, 41, 10))
    assert max(e.mesh_gap for e in rep.entries) < 1e-9
    assert not rep.stable


def test_spectrum_scan_empty():
    with pytest.raises(ConfigurationError):
        spectrum_scan(gen_for(CASE1, n_cells=20, n_xi=20), CASE1, [])
