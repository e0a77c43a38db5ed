"""Run configuration: flat ``key = value`` text files.

Blank lines and anything after ``#`` are ignored.  Keys are those of
:class:`RunConfig`; an unknown or repeated key is an error.  ``none`` (or
``auto``) selects the built-in default for optional entries.  Integer lists
are written ``10,20,30`` or as an inclusive range ``10:40`` (step 1) or
``10:40:5``.

Example::

    alpha = 0.5
    eta = 1
    n_cells = 400
    T = 50           # final time
    scan_n = 10:40:5
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigurationError
from .kernel import FracParams, build_diffusive_grid
from .wave import Domain1D

__all__ = ["RunConfig", "parse_config", "load_config", "parse_int_list", "convert_value"]


def parse_int_list(text: str) -> tuple:
    text = text.strip()
    if ":" in text:
        parts = [p.strip() for p in text.split(":")]
        if len(parts) not in (2, 3):
            raise ConfigurationError(f"bad range {text!r}")
        lo, hi = int(parts[0]), int(parts[1])
        st = int(parts[2]) if len(parts) == 3 else 1
        if st <= 0:
            raise ConfigurationError("range step must be positive")
        return tuple(range(lo, hi + 1, st))
    return tuple(int(p) for p in text.split(",") if p.strip())


def _parse_float_list(text: str) -> tuple:
    return tuple(float(p) for p in text.split(",") if p.strip())


@dataclass(frozen=True)
class RunConfig:
    # kernel / physics
    alpha: float = 0.5
    eta: float = 1.0
    gamma: float = 1.0
    a: float = 1.0
    b: float = 0.1
    d: int = 1
    # mesh and diffusive grid
    length: float = 1.0
    n_cells: int = 200
    n_xi: int = 400
    xi_min: typing.Optional[float] = None
    xi_max: typing.Optional[float] = None
    tail_tol: float = 1e-9
    # time stepping
    dt: float = 1e-3
    T: float = 200.0
    cadence: int = 100
    fit_t1: typing.Optional[float] = None
    fit_t2: typing.Optional[float] = None
    snapshots: tuple = (0.0, 50.0, 100.0, 200.0)
    # initial data: "sine" -> u0 = amp sin(k pi x / L); "random" -> seeded smooth Fourier sum
    initial: str = "sine"
    u0_mode: int = 1
    u0_amp: float = 1.0
    y0_mode: int = 0
    y0_amp: float = 0.0
    # spectral probing
    scan_n: tuple = tuple(range(10, 41, 5))
    n0: int = 10
    caseid: typing.Optional[str] = None
    resolvent_n: tuple = tuple(range(10, 61, 5))
    resolvent_lambdas: tuple = ()
    # bookkeeping
    out: str = "out"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- derived objects ------------------------------------------------

    def params(self) -> FracParams:
        return FracParams(alpha=self.alpha, eta=self.eta, gamma=self.gamma, a=self.a, b=self.b, d=self.d)

    def domain(self) -> Domain1D:
        return Domain1D(length=self.length, n_cells=self.n_cells)

    def grid(self):
        return build_diffusive_grid(
            self.params(), xi_max=self.xi_max, n_nodes=self.n_xi, xi_min=self.xi_min, tail_tol=self.tail_tol
        )

    def fit_window(self) -> tuple:
        t1 = self.T / 4.0 if self.fit_t1 is None else self.fit_t1
        t2 = self.T if self.fit_t2 is None else self.fit_t2
        return t1, t2

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = "none"
            elif isinstance(v, tuple):
                s = ",".join(repr(x) for x in v)
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    # -- checks ---------------------------------------------------------

    def validate(self):
        p = self.params()
        self.domain()
        if self.n_xi < 2:
            raise ConfigurationError("n_xi must be >= 2")
        if self.xi_max is not None and not self.xi_max > 0:
            raise ConfigurationError("xi_max must be positive")
        if self.xi_min is not None and not self.xi_min > 0:
            raise ConfigurationError("xi_min must be positive")
        if not self.tail_tol > 0:
            raise ConfigurationError("tail_tol must be positive")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError("dt must be positive")
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise ConfigurationError("T must be nonnegative")
        if self.cadence < 1:
            raise ConfigurationError("cadence must be >= 1")
        if self.T > 0:
            t1, t2 = self.fit_window()
            if not (0 < t1 < t2 <= self.T):
                raise ConfigurationError(f"fit window [{t1}, {t2}] must satisfy 0 < t1 < t2 <= T")
        if any(s < 0 for s in self.snapshots):
            raise ConfigurationError("snapshot times must be nonnegative")
        if self.initial not in ("sine", "random"):
            raise ConfigurationError("initial must be 'sine' or 'random'")
        if self.u0_mode < 0 or self.y0_mode < 0:
            raise ConfigurationError("mode numbers must be nonnegative")
        if self.n0 < 1:
            raise ConfigurationError("n0 must be >= 1")
        if not self.scan_n:
            raise ConfigurationError("scan_n is empty")
        for n in tuple(self.scan_n) + tuple(self.resolvent_n):
            if abs(n) < self.n0:
                raise ConfigurationError(f"|n| = {abs(n)} below n0 = {self.n0}")
        if self.caseid is not None:
            from .spectral import _normalize_case, detect_case

            if _normalize_case(self.caseid) != detect_case(p):
                raise ConfigurationError(f"caseid {self.caseid!r} inconsistent with a={self.a}, b={self.b}")
        if p.eta == 0.0 and any(lam == 0.0 for lam in self.resolvent_lambdas):
            raise ConfigurationError("eta = 0 and lambda = 0: resolvent undefined (0 is in the spectrum)")
        if not (0 <= self.seed < 2**64):
            raise ConfigurationError("seed must be an unsigned 64-bit integer")


_HINTS = typing.get_type_hints(RunConfig)


def convert_value(name: str, text: str):
    """Parse the text value of configuration key ``name``."""
    if name not in _HINTS:
        raise ConfigurationError(f"unknown key {name!r}")
    hint = _HINTS[name]
    low = text.strip().lower()
    optional = typing.get_origin(hint) is typing.Union
    if optional:
        if low in ("none", "auto", ""):
            return None
        hint = [h for h in typing.get_args(hint) if h is not type(None)][0]
    try:
        if hint is tuple:
            if name in ("scan_n", "resolvent_n"):
                return parse_int_list(text)
            return _parse_float_list(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigurationError(f"{name}: cannot parse {text!r}") from exc


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse configuration text; keyword overrides win over file entries."""
    known = {f.name for f in fields(RunConfig)}
    vals = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in vals:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        vals[key] = convert_value(key, val)
    for k, v in overrides.items():
        if v is None:
            continue
        if k not in known:
            raise ConfigurationError(f"unknown key {k!r}")
        vals[k] = v
    return RunConfig(**vals)


def load_config(path=None, **overrides) -> RunConfig:
    text = "" if path is None else Path(path).read_text()
    return parse_config(text, **overrides)
