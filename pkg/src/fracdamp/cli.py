"""Command-line driver: ``fracdamp {simulate,spectrum,quadcheck}``.

Exit codes: 0 success, 1 validation failure (bad configuration or a
quadrature check outside tolerance), 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy.special import gamma as Gamma
from scipy.special import gammainc

from . import __version__
from .config import RunConfig, convert_value, parse_config
from .errors import ConfigurationError, FracDampError, NumericalError
from .geometry import check_mgc_1d
from .io import write_json, write_rows, write_state_csv, write_trace_csv
from .kernel import (
    build_diffusive_grid,
    caputo_direct,
    closed_form_appendix2,
    closed_form_lambda_integrals,
    closed_form_M2,
    diffusive_vs_direct,
    grid_appendix2,
    grid_lambda_integrals,
    grid_M2,
)
from .spectral import branch1_peaks, build_generator, growth_slope, resolvent_sweep, spectrum_scan
from .wave import Domain1D, Simulator, coupling_bound, decay_exponent, decay_reference, run

log = logging.getLogger("fracdamp")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

M2_TOL = 1e-6
LAMBDA_TOL = 1e-5
CAPUTO_TOL = 1e-3
CONV_TOL = 1e-3


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    m = {
        "command": command,
        "version": __version__,
        "config": cfg.as_dict(),
        "config_text": cfg.to_text(),
    }
    m.update(extra)
    return m


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def domain_coupling_bound(domain: Domain1D, x0: float = 0.0) -> float:
    m_inf = max(abs(x0), abs(domain.length - x0))
    return coupling_bound(m_inf, (math.pi / domain.length) ** 2, 1)


def initial_profiles(cfg: RunConfig):
    """(u0, y0) callables of x for the configured initial data."""
    L = cfg.length
    if cfg.initial == "sine":
        def u0(x):
            return cfg.u0_amp * np.sin(cfg.u0_mode * np.pi * x / L)

        def y0(x):
            return cfg.y0_amp * np.sin(cfg.y0_mode * np.pi * x / L)

        return u0, y0
    rng = np.random.default_rng(cfg.seed)
    k = np.arange(1, 9)
    cu = rng.standard_normal(k.size) / k**2
    cy = rng.standard_normal(k.size) / k**2

    def u0(x):
        # clamped/free modes sin((k - 1/2) pi x / L)
        return np.sin(np.outer(x, (k - 0.5) * np.pi / L)) @ cu

    def y0(x):
        return np.sin(np.outer(x, k * np.pi / L)) @ cy

    return u0, y0


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    params, domain, grid = cfg.params(), cfg.domain(), cfg.grid()
    ref = decay_reference(params.alpha)
    bound = domain_coupling_bound(domain)
    print(f"# simulate alpha={params.alpha} eta={params.eta} gamma={params.gamma} a={params.a} b={params.b}", file=stream)
    print(f"# reference exponent -2/(1-alpha) = {ref:.6g}", file=stream)
    if abs(params.b) > bound:
        log.warning("|b| = %g exceeds the coupling bound %.6f; decay estimates are not covered", params.b, bound)
    if params.a != 1.0:
        log.warning("a = %g != 1: the decay theorem assumes equal wave speeds", params.a)
    mgc = check_mgc_1d(domain.length, 0.0)

    out = _out_dir(cfg)
    sim = Simulator(domain, params, grid)
    u0, y0 = initial_profiles(cfg)
    init = sim.initial_state(u0=u0, y0=y0)
    pending = sorted(t for t in cfg.snapshots if t <= cfg.T + 0.5 * cfg.dt)
    written = []

    def on_sample(state):
        while pending and state.t >= pending[0] - 0.5 * cfg.dt:
            pending.pop(0)
            stem = out / f"snapshot_t{state.t:.6g}"
            write_state_csv(state, domain.x, grid, stem)
            written.append(stem.name)

    t0 = time.perf_counter()
    _, trace = run(sim, init, cfg.dt, cfg.T, cadence=cfg.cadence, on_sample=on_sample)
    wall = time.perf_counter() - t0
    write_trace_csv(trace, out / "trace.csv")

    fitted = None
    if cfg.T > 0:
        try:
            fitted = decay_exponent(trace, cfg.fit_window())
        except FracDampError as exc:
            log.warning("decay fit skipped: %s", exc)
    summary = {
        "n_steps": trace.n_steps,
        "E0": trace.energy[0],
        "E_final": trace.energy[-1],
        "max_residual": trace.max_residual,
        "max_increase": trace.max_increase if trace.n_steps else 0.0,
        "energy_nonincreasing": bool(trace.nonincreasing),
        "fitted_exponent": fitted,
        "reference_exponent": ref,
        "fit_window": list(cfg.fit_window()),
        "coupling_bound": bound,
        "mgc_1d": {"m0": mgc.m0, "satisfied": mgc.satisfied},
        "snapshots": written,
    }
    write_json(
        _manifest(cfg, "simulate", params=params.as_dict(), grid=grid.metadata(),
                  domain={"length": domain.length, "n_cells": domain.n_cells, "h": domain.h},
                  layout=sim.layout.as_dict(), summary=summary),
        out / "manifest.json",
    )
    fs = "n/a" if fitted is None else f"{fitted:.6g}"
    print(f"steps={trace.n_steps} E0={trace.energy[0]:.10g} E(T)={trace.energy[-1]:.10g}", file=stream)
    print(f"max balance residual = {trace.max_residual:.3e}; nonincreasing: {str(trace.nonincreasing).lower()}", file=stream)
    print(f"fitted exponent = {fs} (reference {ref:.6g}) over {cfg.fit_window()}", file=stream)
    log.info("simulate finished in %.2f s", wall)
    return EXIT_OK


# --------------------------------------------------------------------------
# spectrum
# --------------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    params, domain, grid = cfg.params(), cfg.domain(), cfg.grid()
    gen = build_generator(domain, params, grid)
    rep = spectrum_scan(gen, params, cfg.scan_n, cfg.caseid, n0=cfg.n0)
    out = _out_dir(cfg)
    if params.gamma > 0:
        lams = list(cfg.resolvent_lambdas) or branch1_peaks(gen, params, cfg.resolvent_n, rep.case, cfg.n0)
        rep.resolvent = resolvent_sweep(gen, lams, seed=cfg.seed)
        if len(rep.resolvent) >= 2:
            rep.slope = growth_slope(rep.resolvent)
    else:
        print("# gamma = 0: resolvent sweep skipped (no damping, spectrum on the imaginary axis)", file=stream)
    rep.to_csv(out / "spectrum.csv", out / "resolvent.csv")
    gaps = [e.gap for e in rep.entries]
    write_json(
        _manifest(cfg, "spectrum", params=params.as_dict(), case=rep.case, discretization=rep.metadata,
                  summary={"max_re": rep.max_real, "min_abs_re": rep.min_abs_real, "stable": rep.stable,
                           "max_gap": max(gaps),
                           "max_mesh_gap": max(e.mesh_gap for e in rep.entries), "slope": None if math.isnan(rep.slope) else rep.slope,
                           "target_slope": 1.0 - params.alpha, "gap_trend_branch1": rep.gap_trend(1)}),
        out / "manifest.json",
    )
    print(f"# case {rep.case}, n in {list(cfg.scan_n)}", file=stream)
    print(f"max Re λ < 0: {str(rep.stable).lower()} (max Re = {rep.max_real:.6e})", file=stream)
    print(f"max gap |λ_num - λ_asym| = {max(gaps):.3e}", file=stream)
    print(f"max gap after mesh-dispersion correction = {max(e.mesh_gap for e in rep.entries):.3e}", file=stream)
    if not math.isnan(rep.slope):
        print(f"resolvent growth slope = {rep.slope:.4f} (target 1-alpha = {1.0 - params.alpha:.4f})", file=stream)
    return EXIT_OK


# --------------------------------------------------------------------------
# quadcheck
# --------------------------------------------------------------------------


def _caputo_t2_exact(t, alpha, eta):
    """Tempered Caputo derivative of f(t) = t^2."""
    if eta == 0.0:
        return 2.0 * t ** (2 - alpha) / Gamma(3 - alpha)

    def G(p):  # int_0^t tau^{p-1} e^{-eta tau} d tau
        return eta ** (-p) * Gamma(p) * gammainc(p, eta * t)

    return 2.0 * (t * G(1 - alpha) - G(2 - alpha)) / Gamma(1 - alpha)


def quadrature_checks(cfg: RunConfig) -> list:
    """Rows (name, value, reference, error, tol, ok)."""
    params = cfg.params()
    grid = cfg.grid()
    rows = []

    def add(name, val, ref, tol):
        err = abs(val - ref) / abs(ref) if ref != 0 else abs(val)
        rows.append((name, val, ref, float(err), tol, bool(err <= tol)))

    add("M2", grid_M2(params, grid), closed_form_M2(params), M2_TOL)
    for lam in (0.5, 5.0, 50.0):
        i1, i2 = grid_lambda_integrals(lam, params, grid)
        c1, c2 = closed_form_lambda_integrals(lam, params)
        add(f"I1(lambda={lam:g})", i1, c1, LAMBDA_TOL)
        add(f"I2(lambda={lam:g})", i2, c2, LAMBDA_TOL)
    if params.eta > 0:
        dims = (params.d,) if params.d >= 2 else (2, 3)
        for d in dims:
            p2 = params.replace(d=d)
            g2 = build_diffusive_grid(p2, xi_max=cfg.xi_max, n_nodes=cfg.n_xi, xi_min=cfg.xi_min, tail_tol=cfg.tail_tol)
            for lam in (1.0, 10.0):
                q = grid_appendix2(lam, p2, g2)
                c = closed_form_appendix2(lam, p2)
                for name, v, r in zip(("B1", "A2", "A3"), q, c):
                    add(f"{name}(d={d},|lambda|={lam:g})", v, r, LAMBDA_TOL)
    dt = 1e-3
    t = dt * np.arange(1001)
    cap = caputo_direct(t**2, dt, params)
    ex = _caputo_t2_exact(t, params.alpha, params.eta)
    add("Caputo L1 (t^2 on [0,1])", float(np.max(np.abs(cap - ex)) / np.max(np.abs(ex))) , 0.0, CAPUTO_TOL)
    add("diffusive vs direct (sin 2t)", diffusive_vs_direct(lambda s: np.sin(2 * s), 1e-3, params, grid, 10.0), 0.0, CONV_TOL)
    return rows


def cmd_quadcheck(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    rows = quadrature_checks(cfg)
    out = _out_dir(cfg)
    write_rows(
        out / "quadcheck.csv",
        ["check", "error", "tol", "pass"],
        ((name, e, tol, "PASS" if ok else "FAIL") for name, _, _, e, tol, ok in rows),
    )
    n_fail = sum(not r[5] for r in rows)
    write_json(_manifest(cfg, "quadcheck", grid=cfg.grid().metadata(), failures=n_fail), out / "manifest.json")
    width = max(len(r[0]) for r in rows)
    print(f"{'check':<{width}}  {'rel.error':>10}  {'tol':>8}  result", file=stream)
    for name, _, _, e, tol, ok in rows:
        print(f"{name:<{width}}  {e:10.3e}  {tol:8.1e}  {'PASS' if ok else 'FAIL'}", file=stream)
    print(f"{len(rows) - n_fail}/{len(rows)} checks passed", file=stream)
    return EXIT_OK if n_fail == 0 else EXIT_INVALID


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

COMMANDS = {"simulate": cmd_simulate, "spectrum": cmd_spectrum, "quadcheck": cmd_quadcheck}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracdamp", description="Fractional boundary damping laboratory.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__ or name)
        p.add_argument("--config", type=Path, help="key = value configuration file")
        p.add_argument("--out", type=str, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="RNG seed, unsigned 64-bit (overrides the config)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration entry (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        text = args.config.read_text() if args.config else ""
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = (p.strip() for p in item.split("=", 1))
            overrides[k] = convert_value(k, v)
        overrides.update(out=args.out, seed=args.seed)
        cfg = parse_config(text, **overrides)
        return COMMANDS[args.command](cfg)
    except NumericalError as exc:
        print(f"numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FracDampError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
