"""Fractional-calculus kernels.

Diffusive realization of the exponentially weighted Caputo derivative
``D^{alpha,eta}``: a continuum of scalar channels

    omega'(xi) = -(|xi|^2 + eta) omega(xi) + mu(xi) U(t)

whose weighted output ``kappa * int mu(xi) omega(xi) dxi`` equals the
fractional integral ``I^{1-alpha,eta} U``.  The xi-integral is radial, so it is
discretized on a one dimensional geometric grid in |xi| with the unit-sphere
surface factor folded into the weights.

Also provided: direct product-integration (L1) convolution schemes used as an
independent oracle for the diffusive route, and the closed forms of the
radial integrals that appear in the well-posedness and decay estimates.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as Gamma
from scipy.special import gammainc

from .errors import (
    ConfigurationError,
    DomainError,
    HypothesisError,
    SingularCaseError,
    StructuralError,
)

__all__ = [
    "FracParams",
    "DiffusiveGrid",
    "DiffusiveChannels",
    "mu",
    "kappa",
    "surface_factor",
    "tail_bracket",
    "build_diffusive_grid",
    "closed_form_M2",
    "grid_M2",
    "closed_form_lambda_integrals",
    "grid_lambda_integrals",
    "appendix2_constants",
    "printed_c2",
    "closed_form_appendix2",
    "grid_appendix2",
    "evolve_channels",
    "diffusive_output",
    "diffusive_response",
    "caputo_direct",
    "fractional_integral_direct",
    "diffusive_vs_direct",
]


@dataclass(frozen=True)
class FracParams:
    """Physical and fractional constants of the damped coupled system.

    ``gamma = 0`` is accepted as the undamped limit.
    """

    alpha: float = 0.5
    eta: float = 1.0
    gamma: float = 1.0
    a: float = 1.0
    b: float = 0.1
    d: int = 1

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.eta >= 0.0:
            raise ConfigurationError(f"eta must be >= 0, got {self.eta}")
        if not self.gamma >= 0.0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
        if not self.a > 0.0:
            raise ConfigurationError(f"a must be > 0, got {self.a}")
        if not np.isfinite(self.b):
            raise ConfigurationError(f"b must be finite, got {self.b}")
        if int(self.d) != self.d or self.d < 1:
            raise ConfigurationError(f"d must be an integer >= 1, got {self.d}")

    def replace(self, **changes) -> "FracParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def surface_factor(d: int) -> float:
    """Area of the unit sphere in R^d, d pi^{d/2} / Gamma(d/2 + 1)."""
    return d * np.pi ** (d / 2) / Gamma(d / 2 + 1)


def mu(xi, params: FracParams):
    """Kernel weight |xi|^{(2 alpha - d)/2}."""
    x = np.asarray(xi, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("mu is only defined for xi > 0")
    out = x ** ((2.0 * params.alpha - params.d) / 2.0)
    return float(out) if out.ndim == 0 else out


def kappa(params: FracParams) -> float:
    """Normalization 2 sin(alpha pi) Gamma(d/2+1) / (d pi^{d/2+1})."""
    d = params.d
    return 2.0 * np.sin(params.alpha * np.pi) * Gamma(d / 2 + 1) / (d * np.pi ** (d / 2 + 1))


# --------------------------------------------------------------------------
# xi-space quadrature
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiffusiveGrid:
    """Radial quadrature in |xi| for the diffusive channels.

    ``sum(weights * g(nodes))`` approximates ``int_{R^d} g(|xi|) dxi``; the
    Euclidean volume element and the sphere area are already inside
    ``weights``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    mu_vals: np.ndarray
    surface_factor: float
    alpha: float
    d: int
    tail_tol: float = float("nan")

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def xi_min(self) -> float:
        return float(self.nodes[0])

    @property
    def xi_max(self) -> float:
        return float(self.nodes[-1])

    def integrate(self, values) -> float | complex:
        return np.sum(self.weights * values)

    def metadata(self) -> dict:
        return {
            "n_nodes": int(self.n_nodes),
            "xi_min": self.xi_min,
            "xi_max": self.xi_max,
            "spacing": "geometric",
            "rule": "trapezoidal in log|xi|",
            "surface_factor": float(self.surface_factor),
            "tail_tol": float(self.tail_tol),
        }


def tail_bracket(params: FracParams, tol: float = 1e-9) -> tuple[float, float]:
    """Radial bracket [xi_min, xi_max] whose truncated tails are below ``tol``.

    The governing integrand is the radial density of kappa mu^2/(1+eta+xi^2),
    i.e. (2 sin(alpha pi)/pi) rho^{2alpha-1}/(1+eta+rho^2).  Bounding
    1/(1+eta+rho^2) by 1 near zero and by rho^{-2} at infinity gives

        lower tail <= sin(alpha pi) xi_min^{2 alpha} / (pi alpha)
        upper tail <= sin(alpha pi) xi_max^{2 alpha - 2} / (pi (1 - alpha))

    and each is set equal to ``tol``.  Every other integrand handled by the
    package (time kernels, the I1/I2 and appendix integrals) decays at least
    as fast at both ends, so the same bracket serves them all.
    """
    if not tol > 0:
        raise ConfigurationError("tail tolerance must be positive")
    al = params.alpha
    s = np.sin(al * np.pi)
    xi_min = (tol * np.pi * al / s) ** (1.0 / (2.0 * al))
    xi_max = (tol * np.pi * (1.0 - al) / s) ** (-1.0 / (2.0 - 2.0 * al))
    return float(xi_min), float(xi_max)


def build_diffusive_grid(
    params: FracParams,
    xi_max: float | None = None,
    n_nodes: int = 400,
    *,
    xi_min: float | None = None,
    tail_tol: float = 1e-9,
) -> DiffusiveGrid:
    """Geometric radial grid with trapezoidal weights in log|xi|.

    In the variable s = log rho the integrand rho^d g(rho) of a radial
    integral is analytic in a strip and decays exponentially at both ends,
    so the trapezoidal rule converges geometrically in the node spacing.
    Unspecified ends of the bracket come from :func:`tail_bracket`.
    """
    n_nodes = int(n_nodes)
    if n_nodes < 2:
        raise ConfigurationError("n_nodes must be >= 2")
    auto_min, auto_max = tail_bracket(params, tail_tol)
    if xi_max is None:
        xi_max = auto_max
    if xi_min is None:
        xi_min = auto_min
    if not xi_max > 0 or not xi_min > 0:
        raise ConfigurationError("xi bracket must be positive")
    if not xi_max > xi_min:
        raise ConfigurationError(f"xi_max={xi_max} must exceed xi_min={xi_min}")

    s = np.linspace(np.log(xi_min), np.log(xi_max), n_nodes)
    ds = s[1] - s[0]
    nodes = np.exp(s)
    sf = surface_factor(params.d)
    trap = np.full(n_nodes, ds)
    trap[0] = trap[-1] = 0.5 * ds
    weights = sf * nodes ** params.d * trap
    return DiffusiveGrid(
        nodes=nodes,
        weights=weights,
        mu_vals=mu(nodes, params),
        surface_factor=sf,
        alpha=params.alpha,
        d=params.d,
        tail_tol=tail_tol,
    )


def _check_grid(grid: DiffusiveGrid, params: FracParams):
    if grid.alpha != params.alpha or grid.d != params.d:
        raise StructuralError(
            f"grid built for alpha={grid.alpha}, d={grid.d}; params have "
            f"alpha={params.alpha}, d={params.d}"
        )


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------


def closed_form_M2(params: FracParams) -> float:
    """gamma kappa int mu^2/(1+eta+|xi|^2) dxi = gamma (1+eta)^{alpha-1}."""
    return params.gamma * (1.0 + params.eta) ** (params.alpha - 1.0)


def grid_M2(params: FracParams, grid: DiffusiveGrid) -> float:
    _check_grid(grid, params)
    g = grid.mu_vals**2 / (1.0 + params.eta + grid.nodes**2)
    return params.gamma * kappa(params) * float(grid.integrate(g))


def closed_form_lambda_integrals(lam: float, params: FracParams) -> tuple[complex, complex]:
    """Closed forms of the boundary integrals at frequency ``lam``.

    I2 = gamma kappa int mu^2/(i lam + |xi|^2 + eta) dxi = gamma (i lam + eta)^{alpha-1}
    I1 = i lam I2

    Powers use the principal branch, so Re(I1) > 0 whenever lam != 0.
    """
    if params.eta == 0.0 and lam == 0.0:
        raise SingularCaseError("eta = 0 and lambda = 0: the generator is not invertible")
    z = complex(params.eta, lam)
    i2 = params.gamma * z ** (params.alpha - 1.0)
    return 1j * lam * i2, i2


def grid_lambda_integrals(lam: float, params: FracParams, grid: DiffusiveGrid) -> tuple[complex, complex]:
    _check_grid(grid, params)
    if params.eta == 0.0 and lam == 0.0:
        raise SingularCaseError("eta = 0 and lambda = 0: the generator is not invertible")
    g = grid.mu_vals**2 / (1j * lam + grid.nodes**2 + params.eta)
    i2 = params.gamma * kappa(params) * complex(grid.integrate(g))
    return 1j * lam * i2, i2


def appendix2_constants(alpha: float, d: int) -> tuple[float, float, float]:
    """Constants (c1, c2, c3) of the |lambda|-scaling laws of B1, A2, A3.

    Each follows from rho^2 = x and a Beta integral:
        c1 = S_d Gamma(d/4 - alpha/2 + 1) Gamma(alpha/2 + 3d/4) / (2 Gamma(d+1))
        c2 = S_d Gamma(3d/2 - 1) Gamma(d/2 + 1) / (2 Gamma(2d))
        c3 = S_d Gamma(3d/2) Gamma(d/2 + 2) / (2 Gamma(2d + 2))
    with S_d = d pi^{d/2}/Gamma(d/2+1).  See :func:`printed_c2` for the
    variant of c2 that does not match its defining integral.
    """
    sf = surface_factor(d)
    c1 = sf * Gamma(d / 4 - alpha / 2 + 1) * Gamma(alpha / 2 + 3 * d / 4) / (2 * Gamma(d + 1))
    c2 = sf * Gamma(3 * d / 2 - 1) * Gamma(d / 2 + 1) / (2 * Gamma(2 * d))
    c3 = sf * Gamma(3 * d / 2) * Gamma(d / 2 + 2) / (2 * Gamma(2 * d + 2))
    return float(c1), float(c2), float(c3)


def printed_c2(d: int) -> float:
    """d pi^{d/2} Gamma(d/2) Gamma(3d/2) / (2 Gamma(d/2+1) Gamma(2d)).

    Kept for comparison only: it exceeds the value of the A2 integral by the
    factor (3d - 2)/d (2 for d = 2), see :func:`appendix2_constants`.
    """
    return float(
        d * np.pi ** (d / 2) * Gamma(d / 2) * Gamma(3 * d / 2)
        / (2 * Gamma(d / 2 + 1) * Gamma(2 * d))
    )


def _check_appendix2(lambda_abs: float, params: FracParams):
    if params.d < 2 or not params.eta > 0:
        raise HypothesisError("the appendix-2 closed forms need eta > 0 and d >= 2")
    if lambda_abs < 0:
        raise DomainError("lambda_abs must be nonnegative")


def closed_form_appendix2(lambda_abs: float, params: FracParams) -> tuple[float, float, float]:
    """(B1, A2, A3) for L = |lambda| + eta.

    B1 = int |xi|^{alpha+d/2} / (L+|xi|^2)^{d+1}  = c1 L^{alpha/2 - d/4 - 1}
    A2 = int |xi|^{2d-2}      / (L+|xi|^2)^{2d}   = c2 L^{-1-d/2}
    A3 = int |xi|^{2d}        / (L+|xi|^2)^{2d+2} = c3 L^{-d/2-2}

    The estimate that uses these works with A1 = B1**2.
    """
    _check_appendix2(lambda_abs, params)
    c1, c2, c3 = appendix2_constants(params.alpha, params.d)
    L = lambda_abs + params.eta
    d = params.d
    return (
        c1 * L ** (params.alpha / 2 - d / 4 - 1),
        c2 * L ** (-1 - d / 2),
        c3 * L ** (-d / 2 - 2),
    )


def grid_appendix2(lambda_abs: float, params: FracParams, grid: DiffusiveGrid) -> tuple[float, float, float]:
    _check_appendix2(lambda_abs, params)
    _check_grid(grid, params)
    r = grid.nodes
    d = params.d
    L = lambda_abs + params.eta
    q = L + r**2
    b1 = grid.integrate(r ** (params.alpha + d / 2) / q ** (d + 1))
    a2 = grid.integrate(r ** (2 * d - 2) / q ** (2 * d))
    a3 = grid.integrate(r ** (2 * d) / q ** (2 * d + 2))
    return float(b1), float(a2), float(a3)


# --------------------------------------------------------------------------
# diffusive channels
# --------------------------------------------------------------------------


@dataclass
class DiffusiveChannels:
    """Channel values omega[point, node] at the damped boundary points."""

    omega: np.ndarray = field(default_factory=lambda: np.zeros((1, 0)))

    @classmethod
    def zeros(cls, grid: DiffusiveGrid, n_points: int = 1, dtype=float) -> "DiffusiveChannels":
        return cls(np.zeros((n_points, grid.n_nodes), dtype=dtype))

    @property
    def n_points(self) -> int:
        return self.omega.shape[0]

    def weighted_norm_sq(self, grid: DiffusiveGrid) -> float:
        """sum_j w_j |omega_j|^2, summed over boundary points."""
        return float(np.sum(grid.weights * np.abs(self.omega) ** 2))

    def dissipation_sq(self, grid: DiffusiveGrid, params: FracParams) -> float:
        """sum_j w_j (xi_j^2 + eta) |omega_j|^2."""
        return float(np.sum(grid.weights * (grid.nodes**2 + params.eta) * np.abs(self.omega) ** 2))

    def copy(self) -> "DiffusiveChannels":
        return DiffusiveChannels(self.omega.copy())


def evolve_channels(
    channels: DiffusiveChannels,
    drive,
    dt: float,
    params: FracParams,
    grid: DiffusiveGrid,
    drive_next=None,
) -> DiffusiveChannels:
    """Advance every channel ODE by one trapezoidal (implicit midpoint) step.

    ``drive`` is the input at the start of the step and ``drive_next`` the
    input at its end; when ``drive_next`` is omitted the input is taken
    constant over the step.  Both may be scalars or one value per boundary
    point.  The channel array is updated in place and returned.
    """
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    if channels.omega.ndim != 2 or channels.omega.shape[1] != grid.n_nodes:
        raise StructuralError(
            f"channels have shape {channels.omega.shape}, grid has {grid.n_nodes} nodes"
        )
    _check_grid(grid, params)
    u0 = np.asarray(drive)
    u1 = u0 if drive_next is None else np.asarray(drive_next)
    ubar = 0.5 * (u0 + u1)
    if ubar.ndim == 0:
        ubar = np.full(channels.n_points, ubar)
    if ubar.shape != (channels.n_points,):
        raise StructuralError("drive must be scalar or one value per boundary point")
    rate = grid.nodes**2 + params.eta
    half = 0.5 * dt * rate
    channels.omega *= (1.0 - half) / (1.0 + half)
    channels.omega += (dt * grid.mu_vals / (1.0 + half))[None, :] * ubar[:, None]
    return channels


def diffusive_output(channels: DiffusiveChannels, params: FracParams, grid: DiffusiveGrid) -> np.ndarray:
    """kappa sum_j w_j mu_j omega_j for each boundary point."""
    return kappa(params) * (channels.omega @ (grid.weights * grid.mu_vals))


def diffusive_response(samples, dt: float, params: FracParams, grid: DiffusiveGrid) -> np.ndarray:
    """Output of the channel system driven by ``samples`` from omega(0) = 0."""
    u = np.asarray(samples, dtype=float)
    ch = DiffusiveChannels.zeros(grid)
    out = np.empty_like(u)
    out[0] = 0.0
    for n in range(1, u.size):
        evolve_channels(ch, u[n - 1], dt, params, grid, drive_next=u[n])
        out[n] = diffusive_output(ch, params, grid)[0]
    return out


# --------------------------------------------------------------------------
# direct convolution quadrature
# --------------------------------------------------------------------------


def _kernel_moments(n: int, dt: float, p: float, eta: float):
    """Exact moments of k(tau) = tau^p e^{-eta tau} on [m dt, (m+1) dt].

    Returns (M0, M1) with M0[m] = int k, M1[m] = int tau k, m = 0..n-1.
    """
    x = dt * np.arange(n + 1)
    if eta == 0.0:
        g0 = x ** (p + 1) / (p + 1)
        g1 = x ** (p + 2) / (p + 2)
    else:
        g0 = eta ** (-(p + 1)) * Gamma(p + 1) * gammainc(p + 1, eta * x)
        g1 = eta ** (-(p + 2)) * Gamma(p + 2) * gammainc(p + 2, eta * x)
    return np.diff(g0), np.diff(g1)


def caputo_direct(samples, dt: float, params: FracParams) -> np.ndarray:
    """L1 product integration of D^{alpha,eta} f on a uniform grid from t = 0.

    f' is taken piecewise constant and the weakly singular kernel
    (t-s)^{-alpha} e^{-eta (t-s)} / Gamma(1-alpha) integrated exactly over
    each step.
    """
    f = np.asarray(samples, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ConfigurationError("caputo_direct needs at least two samples")
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    n = f.size - 1
    m0, _ = _kernel_moments(n, dt, -params.alpha, params.eta)
    slopes = np.diff(f) / dt
    out = np.zeros_like(f)
    out[1:] = np.convolve(m0, slopes)[:n] / Gamma(1.0 - params.alpha)
    return out


def fractional_integral_direct(samples, dt: float, order: float, eta: float) -> np.ndarray:
    """I^{order,eta} U by product integration with U piecewise linear.

    Second order accurate for smooth U; the kernel tau^{order-1} e^{-eta tau}
    is integrated exactly against the linear interpolant on each step.
    """
    u = np.asarray(samples, dtype=float)
    if u.ndim != 1 or u.size < 2:
        raise ConfigurationError("need at least two samples")
    if not (0.0 < order <= 1.0):
        raise ConfigurationError("order must lie in (0, 1]")
    n = u.size - 1
    m0, m1 = _kernel_moments(n, dt, order - 1.0, eta)
    tb = dt * np.arange(1, n + 1)
    # lag m pairs U_{k+1} (weight P) and U_k (weight Q), k = n - 1 - m
    P = (tb * m0 - m1) / dt
    Q = m0 - P
    out = np.zeros_like(u)
    out[1:] = (np.convolve(P, u[1:])[:n] + np.convolve(Q, u[:-1])[:n]) / Gamma(order)
    return out


def diffusive_vs_direct(
    test_signal,
    dt: float,
    params: FracParams,
    grid: DiffusiveGrid,
    t_final: float = 10.0,
) -> float:
    """Max deviation between the diffusive output and I^{1-alpha,eta} U.

    ``test_signal`` is a vectorized callable of t or an array of samples on
    the uniform grid t = k dt.  The deviation is the maximum over the window
    of |O_diffusive - O_direct| divided by max |O_direct| (0 when both
    outputs vanish identically).
    """
    if callable(test_signal):
        t = dt * np.arange(int(round(t_final / dt)) + 1)
        u = np.asarray(test_signal(t), dtype=float) * np.ones_like(t)
    else:
        u = np.asarray(test_signal, dtype=float)
    o_diff = diffusive_response(u, dt, params, grid)
    o_dir = fractional_integral_direct(u, dt, 1.0 - params.alpha, params.eta)
    scale = np.max(np.abs(o_dir))
    err = np.max(np.abs(o_diff - o_dir))
    if scale == 0.0:
        return 0.0 if err == 0.0 else float("inf")
    return float(err / scale)
