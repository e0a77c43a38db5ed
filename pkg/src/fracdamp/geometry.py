"""Multiplier geometric control check for planar polygons.

With m(x) = x - x0 and nu the outward unit normal, the condition asks for
m.nu <= 0 on the clamped part Gamma_0 and m.nu >= m0 > 0 on the damped part
Gamma_1.  On a straight edge m.nu is constant, so one evaluation per edge
suffices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

__all__ = ["PolygonGeometry", "MGCReport", "check_mgc", "check_mgc_1d", "unit_square"]

LABELS = ("gamma0", "gamma1")


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _segments_intersect(p1, p2, q1, q2, eps) -> bool:
    """Closed-segment intersection test (collinear overlaps included)."""

    def orient(a, b, c):
        v = _cross(b - a, c - a)
        return 0 if abs(v) <= eps else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps and min(a[1], b[1]) - eps <= c[
            1
        ] <= max(a[1], b[1]) + eps

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_seg(p1, p2, q1))
        or (o2 == 0 and on_seg(p1, p2, q2))
        or (o3 == 0 and on_seg(q1, q2, p1))
        or (o4 == 0 and on_seg(q1, q2, p2))
    )


@dataclass(frozen=True)
class PolygonGeometry:
    """Simple closed polygon; edge k joins vertex k to vertex k+1 (mod n).

    ``labels[k]`` is ``"gamma0"`` (clamped) or ``"gamma1"`` (damped).
    """

    vertices: np.ndarray
    labels: tuple
    x0: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        x0 = np.asarray(self.x0, dtype=float)
        labels = tuple(self.labels)
        if V.ndim != 2 or V.shape[1] != 2 or V.shape[0] < 3:
            raise GeometryError("a polygon needs at least three 2D vertices")
        if not np.all(np.isfinite(V)) or x0.shape != (2,) or not np.all(np.isfinite(x0)):
            raise GeometryError("vertices and x0 must be finite 2D points")
        if len(labels) != V.shape[0]:
            raise GeometryError(f"{V.shape[0]} edges but {len(labels)} labels")
        bad = [lab for lab in labels if lab not in LABELS]
        if bad:
            raise GeometryError(f"unknown edge labels {bad}; use {LABELS}")
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "labels", labels)
        self._validate()

    @property
    def n_edges(self) -> int:
        return self.vertices.shape[0]

    def edges(self):
        V = self.vertices
        return [(V[k], V[(k + 1) % len(V)]) for k in range(len(V))]

    @property
    def signed_area(self) -> float:
        V = self.vertices
        W = np.roll(V, -1, axis=0)
        return 0.5 * float(np.sum(V[:, 0] * W[:, 1] - W[:, 0] * V[:, 1]))

    @property
    def diameter(self) -> float:
        V = self.vertices
        return float(np.max(np.linalg.norm(V[:, None, :] - V[None, :, :], axis=-1)))

    def _validate(self):
        scale = self.diameter
        if scale == 0:
            raise GeometryError("all vertices coincide")
        eps = 1e-12 * scale
        edges = self.edges()
        for k, (p, q) in enumerate(edges):
            if np.linalg.norm(q - p) <= eps:
                raise GeometryError(f"edge {k} has zero length")
        if abs(self.signed_area) <= 1e-12 * scale**2:
            raise GeometryError("polygon has zero area")
        n = len(edges)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    # adjacent edges share a vertex; reject only folding back
                    p, q = edges[i]
                    r, s = edges[j]
                    d1, d2 = q - p, s - r
                    if abs(_cross(d1, d2)) <= eps * max(np.linalg.norm(d1), np.linalg.norm(d2)) and np.dot(d1, d2) < 0:
                        raise GeometryError(f"edges {i} and {j} overlap")
                    continue
                if _segments_intersect(*edges[i], *edges[j], eps * scale):
                    raise GeometryError(f"polygon is not simple: edges {i} and {j} intersect")

    def outward_normals(self) -> np.ndarray:
        sgn = 1.0 if self.signed_area > 0 else -1.0
        out = []
        for p, q in self.edges():
            t = q - p
            out.append(sgn * np.array([t[1], -t[0]]) / np.linalg.norm(t))
        return np.array(out)

    def m_dot_nu(self) -> np.ndarray:
        """m.nu on each edge (constant along a straight edge)."""
        V = self.vertices
        return np.einsum("ij,ij->i", V - self.x0, self.outward_normals())

    def m_inf(self) -> float:
        """sup |x - x0| over the polygon (attained at a vertex)."""
        return float(np.max(np.linalg.norm(self.vertices - self.x0, axis=1)))

    def scaled(self, s: float) -> "PolygonGeometry":
        return PolygonGeometry(s * self.vertices, self.labels, s * self.x0)


@dataclass(frozen=True)
class MGCReport:
    m_dot_nu: tuple
    m0: float
    satisfied: bool
    closures_disjoint: bool


def check_mgc(geom: PolygonGeometry, tol: float = 0.0) -> MGCReport:
    """Evaluate the multiplier condition edge by edge.

    ``tol`` relaxes the sign test on Gamma_0 to m.nu <= tol (for vertices
    given in floating point).
    """
    md = geom.m_dot_nu()
    lab = np.array(geom.labels)
    g0, g1 = lab == "gamma0", lab == "gamma1"
    m0 = float(np.min(md[g1])) if np.any(g1) else math.nan
    satisfied = bool(np.any(g1)) and m0 > 0 and bool(np.all(md[g0] <= tol))
    n = geom.n_edges
    # vertex k closes edges k-1 and k
    shared = any(geom.labels[k - 1] != geom.labels[k] for k in range(n))
    return MGCReport(tuple(float(v) for v in md), m0, satisfied, not shared)


def check_mgc_1d(length: float = 1.0, x0: float = 0.0) -> MGCReport:
    """Interval (0, L) with Gamma_0 = {0}, Gamma_1 = {L}; outward normals -1 and +1."""
    if not length > 0:
        raise GeometryError("length must be positive")
    md0 = -(0.0 - x0)
    md1 = length - x0
    return MGCReport((md0, md1), md1, md0 <= 0 and md1 > 0, True)


def unit_square(labels, x0) -> PolygonGeometry:
    """Counter-clockwise unit square; edges bottom, right, top, left."""
    V = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return PolygonGeometry(V, tuple(labels), np.asarray(x0, dtype=float))
