"""Frequency-domain probes of the discretized generator.

* resolvent norms ||(i lam - A_h)^{-1}|| in the discrete energy norm,
* eigenvalues near a shift by shift-invert power iteration,
* the large-n expansions of the two eigenvalue branches, used as seeds and
  as reference values,
* for a = 1, the 1D characteristic function, whose roots are the exact
  eigenvalues of the undiscretized problem (independent oracle).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import newton

from .errors import ConfigurationError, NearSpectrumError, NumericalError, SingularCaseError
from .kernel import DiffusiveGrid, FracParams, kappa
from .wave import Domain1D, Layout, assemble_operator

__all__ = [
    "GeneratorMatrix",
    "SpectrumEntry",
    "SpectrumReport",
    "build_generator",
    "resolvent_norm",
    "resolvent_solve",
    "eigen_near",
    "detect_case",
    "asymptotic_eigenvalue",
    "discrete_seed",
    "spectrum_scan",
    "branch1_peaks",
    "resolvent_sweep",
    "growth_slope",
    "characteristic_function",
    "continuum_eigenvalue",
]

CASES = ("b!=kpi", "b=2kpi", "b=(2k+1)pi", "a!=1")
_CASE_ALIASES = {
    1: "b!=kpi", "1": "b!=kpi", "case1": "b!=kpi",
    2: "b=2kpi", "2": "b=2kpi", "case2": "b=2kpi",
    3: "b=(2k+1)pi", "3": "b=(2k+1)pi", "case3": "b=(2k+1)pi",
    4: "a!=1", "4": "a!=1", "case4": "a!=1",
}
_CASE_TOL = 1e-12


@dataclass(frozen=True)
class GeneratorMatrix:
    """A_h with its energy Gram matrix; ``layout`` says which rows are u/v/y/z/omega."""

    A: sp.csr_matrix
    G: sp.csr_matrix
    layout: Layout
    domain: Domain1D
    params: FracParams
    grid_meta: dict
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def gram_solve(self, r: np.ndarray) -> np.ndarray:
        lu = self._cache.get("G")
        if lu is None:
            lu = self._cache["G"] = spla.splu(self.G.tocsc())
        if np.iscomplexobj(r):
            return lu.solve(np.ascontiguousarray(r.real)) + 1j * lu.solve(np.ascontiguousarray(r.imag))
        return lu.solve(r)

    def inner(self, x, y) -> complex:
        return np.vdot(y, self.G @ x)

    def norm(self, x) -> float:
        return math.sqrt(max(float(np.real(self.inner(x, x))), 0.0))

    def metadata(self) -> dict:
        return {
            "n_cells": self.domain.n_cells,
            "length": self.domain.length,
            "state_size": self.size,
            "layout": self.layout.as_dict(),
            "grid": dict(self.grid_meta),
        }


def build_generator(domain: Domain1D, params: FracParams, grid: DiffusiveGrid) -> GeneratorMatrix:
    A, G, lay = assemble_operator(domain, params, grid)
    return GeneratorMatrix(A, G, lay, domain, params, grid.metadata())


# --------------------------------------------------------------------------
# resolvent
# --------------------------------------------------------------------------


class _ScaledLU:
    """LU of D M D with D = 1/sqrt(1 + |diag A|) on the channel block.

    The channel rates span ~20 decades; symmetric scaling keeps the solves
    accurate to roundoff.  ``solve`` acts as the inverse of M (or M^H).
    """

    def __init__(self, gen: GeneratorMatrix, M):
        d = np.ones(gen.size)
        om = gen.layout.omega if gen.layout is not None else slice(0, 0)
        d[om] = 1.0 / np.sqrt(1.0 + np.abs(gen.A.diagonal()[om]))
        D = sp.diags(d)
        self.d = d
        self.lu = spla.splu((D @ M @ D).tocsc())

    def solve(self, r, trans="N"):
        return self.d * self.lu.solve(self.d * r, trans=trans)


def _resolvent_lu(gen: GeneratorMatrix, lam: float):
    if gen.params.eta == 0.0 and lam == 0.0:
        raise SingularCaseError("eta = 0 and lambda = 0: 0 belongs to the spectrum")
    M = (1j * lam * sp.identity(gen.size, format="csc") - gen.A).tocsc()
    try:
        return _ScaledLU(gen, M)
    except RuntimeError as exc:
        raise NearSpectrumError(f"i*{lam} is numerically an eigenvalue of A_h", lam=lam) from exc


def resolvent_solve(gen: GeneratorMatrix, lam: float, f: np.ndarray) -> np.ndarray:
    """x with (i lam - A_h) x = f."""
    return _resolvent_lu(gen, lam).solve(np.asarray(f, dtype=complex))


def resolvent_norm(
    gen: GeneratorMatrix,
    lam: float,
    *,
    seed: int = 0,
    max_iter: int = 200,
    rtol: float = 1e-6,
    return_info: bool = False,
):
    """Energy-norm ||(i lam - A_h)^{-1}|| by power iteration on R* R.

    R* is the adjoint for the energy inner product, G^{-1} R^H G, so one
    iteration costs a forward and a conjugate-transposed solve with the same
    sparse LU plus one Gram solve.  The start vector is seeded, making the
    estimate reproducible.
    """
    if gen.params.gamma == 0.0:
        raise ConfigurationError("the energy norm degenerates for gamma = 0 (channel block vanishes)")
    lu = _resolvent_lu(gen, lam)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(gen.size) + 1j * rng.standard_normal(gen.size)
    x /= gen.norm(x)
    s_old = 0.0
    s = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        Gy = gen.G @ y
        s = math.sqrt(max(float(np.real(np.vdot(y, Gy))), 0.0))
        if not np.isfinite(s):
            raise NearSpectrumError("resolvent blew up", lam=lam, iteration=it)
        x = gen.gram_solve(lu.solve(Gy, trans="H"))
        nx = gen.norm(x)
        if nx == 0.0:
            break
        x /= nx
        if it > 1 and abs(s - s_old) <= rtol * s:
            break
        s_old = s
    if return_info:
        return s, {"iterations": it, "rel_change": abs(s - s_old) / s if s else 0.0}
    return s


# --------------------------------------------------------------------------
# eigenvalues
# --------------------------------------------------------------------------


def eigen_near(
    gen: GeneratorMatrix,
    shift: complex,
    *,
    tol: float = 1e-10,
    max_iter: int = 500,
    seed: int = 0,
    refresh_every: int = 40,
) -> complex:
    """Eigenvalue of A_h nearest ``shift`` by shift-invert power iteration.

    If the iteration stalls the shift is moved to the current estimate and
    the matrix refactored (at most every ``refresh_every`` iterations).
    """
    n = gen.size
    I = sp.identity(n, format="csc")

    def factor(s):
        try:
            return _ScaledLU(gen, (gen.A - s * I).tocsc())
        except RuntimeError:
            return None

    sigma = complex(shift)
    lu = factor(sigma)
    if lu is None:
        return sigma
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam_old = None
    hits = 0
    lam = sigma
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        nu = np.vdot(x, y)
        if nu == 0 or not np.isfinite(nu):
            raise NumericalError("shift-invert iteration broke down", shift=shift, iteration=it)
        lam = sigma + 1.0 / nu
        x = y / np.linalg.norm(y)
        if lam_old is not None and abs(lam - lam_old) <= tol * abs(lam):
            hits += 1
            if hits >= 2:
                return complex(lam)
        else:
            hits = 0
        lam_old = lam
        if it % refresh_every == 0:
            new = factor(lam)
            if new is None:
                return complex(lam)
            sigma, lu = lam, new
    raise NumericalError(
        "shift-invert iteration did not converge",
        shift=shift,
        estimate=complex(lam),
        iterations=max_iter,
    )


def detect_case(params: FracParams, tol: float = _CASE_TOL) -> str:
    if abs(params.a - 1.0) > tol:
        return "a!=1"
    k = params.b / math.pi
    kr = round(k)
    if kr != 0 and abs(params.b - kr * math.pi) <= tol:
        return "b=2kpi" if kr % 2 == 0 else "b=(2k+1)pi"
    return "b!=kpi"


def _normalize_case(caseid) -> str:
    if caseid in CASES:
        return caseid
    try:
        return _CASE_ALIASES[caseid]
    except (KeyError, TypeError):
        raise ConfigurationError(f"unknown case id {caseid!r}; expected one of {CASES}") from None


def asymptotic_eigenvalue(n: int, branch: int, caseid, params: FracParams, n0: int = 10) -> complex:
    """Large-|n| expansion of the eigenvalue of branch 1 (near i n pi) or 2.

    Truncated at the printed orders.  Negative n returns the complex
    conjugate of the value at |n|.
    """
    case = _normalize_case(caseid)
    if branch not in (1, 2):
        raise ConfigurationError("branch must be 1 or 2")
    if abs(n) < n0:
        raise ConfigurationError(f"|n| = {abs(n)} below n0 = {n0}")
    if detect_case(params) != case:
        raise ConfigurationError(
            f"case {case!r} inconsistent with a={params.a}, b={params.b} (detected {detect_case(params)!r})"
        )
    if n < 0:
        return asymptotic_eigenvalue(-n, branch, case, params, n0).conjugate()

    pi = math.pi
    al, g, b = params.alpha, params.gamma, params.b
    rot = complex(-math.sin(pi * al / 2), math.cos(pi * al / 2))  # i cos - sin
    base1 = 1j * n * pi
    base2 = 1j * n * pi + 1j * pi / 2
    lead = g * rot / (n * pi) ** (1 - al)

    if case == "b!=kpi":
        if branch == 1:
            return base1 + (1 - math.cos(b)) * lead / 2
        return base2 + (1 + math.cos(b)) * lead / 2
    if case == "b=2kpi":
        if branch == 1:
            return (
                base1
                + 1j * b**2 / (8 * n * pi)
                + 7j * b**4 / (128 * pi**3 * n**3)
                + g * b**6 * rot / (128 * pi ** (5 - al) * n ** (5 - al))
            )
        return base2 + lead
    if case == "b=(2k+1)pi":
        if branch == 1:
            return base1 + lead
        return (
            base2
            + 1j * b**2 / (8 * n * pi)
            - 1j * b**2 / (16 * pi * n**2)
            + 1j * b**2 * (4 * pi**2 + 7 * b**2) / (128 * pi**3 * n**3)
            - 1j * b**2 * (4 * pi**2 + 21 * b**2) / (256 * pi**3 * n**4)
            + g * b**6 * rot / (256 * pi ** (5 - al) * n ** (5 - al))
        )
    # a != 1: leading order only
    if branch == 1:
        return 1j * n * pi * math.sqrt(params.a)
    return 1j * (n + 0.5) * pi


def _discrete_frequency(k: float, h: float) -> float:
    """Eigenfrequency of the 3-point Laplacian for continuum wavenumber k."""
    return (2.0 / h) * math.sin(0.5 * k * h)


def discrete_seed(n: int, branch: int, caseid, params: FracParams, h: float, n0: int = 10) -> complex:
    """Asymptotic eigenvalue shifted by the mesh dispersion of its leading term.

    The undamped discrete wave frequencies are (2/h) sin(k h / 2) with
    k = n pi (y modes, scaled by sqrt(a)) or (n + 1/2) pi (u modes); without
    this correction a seed at large n h can land on a neighbouring branch.
    """
    lam = asymptotic_eigenvalue(n, branch, caseid, params, n0)
    m = abs(n)
    sign = 1 if n > 0 else -1
    if branch == 1:
        c = math.sqrt(params.a) if _normalize_case(caseid) == "a!=1" else 1.0
        k = m * math.pi
        corr = c * (_discrete_frequency(k, h) - k)
    else:
        k = (m + 0.5) * math.pi
        corr = _discrete_frequency(k, h) - k
    return lam + 1j * sign * corr


@dataclass
class SpectrumEntry:
    n: int
    branch: int
    numeric: complex
    asymptotic: complex
    seed: complex | None = None

    @property
    def gap(self) -> float:
        return abs(self.numeric - self.asymptotic)

    @property
    def mesh_gap(self) -> float:
        """Distance to the dispersion-corrected asymptotic value."""
        return abs(self.numeric - (self.asymptotic if self.seed is None else self.seed))


@dataclass
class SpectrumReport:
    case: str
    entries: list = field(default_factory=list)
    resolvent: list = field(default_factory=list)  # (lambda, norm)
    slope: float = float("nan")
    metadata: dict = field(default_factory=dict)

    @property
    def max_real(self) -> float:
        return max((e.numeric.real for e in self.entries), default=float("nan"))

    @property
    def min_abs_real(self) -> float:
        return min((abs(e.numeric.real) for e in self.entries), default=float("nan"))

    @property
    def stable(self) -> bool:
        return bool(self.entries) and self.max_real < 0.0

    def branch(self, b: int) -> list:
        return [e for e in self.entries if e.branch == b]

    def gap_trend(self, branch: int = 1) -> float:
        """Slope of a least-squares line through gap against n."""
        es = self.branch(branch)
        if len(es) < 2:
            return float("nan")
        n = np.array([e.n for e in es], dtype=float)
        gaps = np.array([e.gap for e in es])
        return float(np.polyfit(n, gaps, 1)[0])

    def spectrum_rows(self):
        for e in self.entries:
            yield (e.n, e.branch, e.numeric.real, e.numeric.imag, e.asymptotic.real, e.asymptotic.imag, e.gap)

    def to_csv(self, spectrum_path, resolvent_path=None):
        from .io import write_rows

        write_rows(
            spectrum_path,
            ["n", "branch", "re_num", "im_num", "re_asym", "im_asym", "gap"],
            self.spectrum_rows(),
        )
        if resolvent_path is not None:
            write_rows(resolvent_path, ["lambda", "resolvent_norm"], self.resolvent)


def spectrum_scan(
    gen: GeneratorMatrix,
    params: FracParams,
    n_range,
    caseid=None,
    branches=(1, 2),
    n0: int = 10,
) -> SpectrumReport:
    """Numeric eigenvalues seeded by the asymptotic branches for each n."""
    ns = list(n_range)
    if not ns:
        raise ConfigurationError("n_range is empty")
    case = detect_case(params) if caseid is None else _normalize_case(caseid)
    rep = SpectrumReport(case=case, metadata=gen.metadata())
    h = gen.domain.h
    for n in ns:
        for br in branches:
            asym = asymptotic_eigenvalue(n, br, case, params, n0)
            seed = discrete_seed(n, br, case, params, h, n0)
            rep.entries.append(SpectrumEntry(int(n), br, eigen_near(gen, seed), asym, seed))
    return rep


def branch1_peaks(gen: GeneratorMatrix, params: FracParams, n_range, caseid=None, n0: int = 10) -> list:
    """Frequencies Im(lambda_{1,n}) of the computed branch-1 eigenvalues.

    These are where ||(i lam - A_h)^{-1}|| peaks near n pi on the mesh.
    """
    case = detect_case(params) if caseid is None else _normalize_case(caseid)
    h = gen.domain.h
    return [eigen_near(gen, discrete_seed(n, 1, case, params, h, n0)).imag for n in n_range]


def resolvent_sweep(gen: GeneratorMatrix, lambdas, seed: int = 0) -> list:
    return [(float(lam), resolvent_norm(gen, lam, seed=seed)) for lam in lambdas]


def growth_slope(samples) -> float:
    """Least-squares slope of log||R|| against log lambda."""
    lam = np.array([s[0] for s in samples], dtype=float)
    r = np.array([s[1] for s in samples], dtype=float)
    if lam.size < 2 or np.any(lam <= 0) or np.any(r <= 0):
        raise ConfigurationError("need at least two samples with positive lambda and norm")
    return float(np.polyfit(np.log(lam), np.log(r), 1)[0])


# --------------------------------------------------------------------------
# characteristic function (a = 1)
# --------------------------------------------------------------------------


def _damping_symbol(lam: complex, params: FracParams, grid: DiffusiveGrid | None) -> complex:
    """g(lam) = gamma kappa int mu^2 lam/(lam + |xi|^2 + eta) dxi."""
    if grid is None:
        return params.gamma * lam * (lam + params.eta) ** (params.alpha - 1.0)
    q = grid.weights * grid.mu_vals**2 / (lam + grid.nodes**2 + params.eta)
    return params.gamma * kappa(params) * lam * complex(np.sum(q))


def characteristic_function(lam: complex, params: FracParams, length: float = 1.0, grid=None) -> complex:
    """Entire-in-the-wave-part characteristic function of the a = 1 problem.

    With p = u + i y, q = u - i y the eigenproblem splits into
    p'' = (lam^2 - i b lam) p, q'' = (lam^2 + i b lam) q, p(0) = q(0) = 0,
    p(L) = q(L) (from y(L) = 0) and u'(L) + g(lam) u(L) = 0, giving

        F = r1 cosh(r1 L) sinh(r2 L) + r2 cosh(r2 L) sinh(r1 L) + 2 g sinh(r1 L) sinh(r2 L).

    ``grid`` switches g to its quadrature on the diffusive grid.
    """
    if abs(params.a - 1.0) > _CASE_TOL:
        raise ConfigurationError("characteristic function is only available for a = 1")
    lam = complex(lam)
    b = params.b
    r1 = cmath.sqrt(lam * lam - 1j * b * lam)
    r2 = cmath.sqrt(lam * lam + 1j * b * lam)
    g = _damping_symbol(lam, params, grid)
    s1, s2 = cmath.sinh(r1 * length), cmath.sinh(r2 * length)
    c1, c2 = cmath.cosh(r1 * length), cmath.cosh(r2 * length)
    return r1 * c1 * s2 + r2 * c2 * s1 + 2.0 * g * s1 * s2


def continuum_eigenvalue(seed: complex, params: FracParams, length: float = 1.0, grid=None, tol: float = 1e-13) -> complex:
    """Root of :func:`characteristic_function` near ``seed`` (secant iteration)."""
    try:
        root = newton(
            lambda z: characteristic_function(z, params, length, grid),
            complex(seed),
            x1=complex(seed) * (1 + 1e-6) + 1e-6j,
            tol=tol,
            maxiter=200,
        )
    except RuntimeError as exc:
        raise NumericalError("characteristic root search failed", seed=seed) from exc
    return complex(root)
