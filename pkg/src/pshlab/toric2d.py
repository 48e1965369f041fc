"""Torus-invariant piecewise-linear potentials on P^2 in log coordinates.

A potential is u(x) = max_i (g_i . x + b_i) on R^2 with every gradient g_i in
the simplex D = {y >= 0, y_1 + y_2 <= 1}.  Its Legendre dual u* is the lower
convex hull of the lifted points (g_i, -b_i) over conv{g_i} and +inf off it.
All the geometry happens on the dual side:

* the real MA measure of u has an atom at each vertex x of the cell complex,
  with mass 2 * area of the dual facet whose slope is x;
* the envelope of min(u, v) has dual max(u*, v*), so its pieces are read off
  the vertices of that max.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull

from .errors import DomainError
from .measure_core import MAMeasure
from .toric1d import _lower_hull

__all__ = ["PLPotential2D", "DualPL", "legendre_dual", "ma_measure_2d", "min_envelope_2d"]

GEOM_TOL = 1e-12
SIMPLEX = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_halfplane(poly, a, c):
    """Keep the part of ``poly`` where a . y <= c (Sutherland-Hodgman step)."""
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        fp, fq = np.dot(a, p) - c, np.dot(a, q) - c
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            s = fp / (fp - fq)
            out.append(p + s * (q - p))
    return out


def _in_simplex(g):
    return bool(g[0] >= -GEOM_TOL and g[1] >= -GEOM_TOL and g[0] + g[1] <= 1 + GEOM_TOL)


def _rank(points):
    if len(points) <= 1:
        return 0
    sv = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    return int(np.sum(sv > 1e-10 * max(1.0, sv[0])))


@dataclass(frozen=True)
class DualPL:
    """u* on conv(G): vertices with values, and its affine facets.

    Facet k carries slope ``slopes[k]`` and offset ``offsets[k]``, so that
    u*(y) = max_k (slopes[k] . y - offsets[k]) on the domain.  The slope of a
    facet is the primal point where the pieces of its vertices meet, and the
    offset is the value of u there.
    """

    vertices: np.ndarray          # (m, 2) gradients g_i, pruned
    values: np.ndarray            # (m,)   u*(g_i) = -b_i
    domain: np.ndarray            # conv(G) vertices, counter-clockwise
    facets: tuple                 # vertex index triples (rank 2) or pairs (rank 1)
    slopes: np.ndarray            # (k, 2)
    offsets: np.ndarray           # (k,)
    areas: np.ndarray             # (k,) facet areas (0 for degenerate duals)
    rank: int

    def contains(self, y, tol=1e-10):
        y = np.asarray(y, dtype=float)
        d = self.domain
        if self.rank == 0:
            return bool(np.linalg.norm(y - d[0]) <= tol)
        if self.rank == 1:
            p, q = d[0], d[1]
            L = np.linalg.norm(q - p)
            s = np.dot(y - p, q - p) / L ** 2
            return bool(abs(_cross(p, q, y)) / L <= tol and -tol <= s <= 1 + tol)
        return all(_cross(d[k], d[(k + 1) % len(d)], y) >= -tol for k in range(len(d)))

    def __call__(self, y):
        """Evaluate u* at one point (+inf off the domain)."""
        if not self.contains(y):
            return np.inf
        return float(np.max(self.slopes @ np.asarray(y, dtype=float) - self.offsets))

    def edges(self):
        out = set()
        for f in self.facets:
            for a in range(len(f)):
                for b in range(a + 1, len(f)):
                    out.add((min(f[a], f[b]), max(f[a], f[b])))
        return [(self.vertices[a], self.vertices[b]) for a, b in sorted(out)]

    def conjugate(self) -> "PLPotential2D":
        """(u*)*: one piece per dual vertex, with intercept -u*(vertex)."""
        vals = np.array([self(v) for v in self.vertices])
        return PLPotential2D(tuple(zip(map(tuple, self.vertices), -vals)))


def _dual_from_pieces(g, b):
    """Prune to active pieces and build the dual (private; inputs validated)."""
    # duplicate gradients: only the largest intercept matters
    order = np.lexsort((-b, g[:, 1], g[:, 0]))
    g, b = g[order], b[order]
    keep = np.ones(len(g), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(g, axis=0)) > GEOM_TOL, axis=1)
    g, b = g[keep], b[keep]
    rank = _rank(g)
    if rank == 0:
        return DualPL(g[:1], -b[:1], g[:1], ((0,),), np.zeros((1, 2)), b[:1].copy(),
                      np.zeros(1), 0)
    if rank == 1:
        p0 = g[np.argmin(g[:, 0] + 1e-3 * g[:, 1])]
        direction = g[np.argmax(np.linalg.norm(g - p0, axis=1))] - p0
        direction = direction / np.linalg.norm(direction)
        s = (g - p0) @ direction
        order = np.argsort(s)
        g, b, s = g[order], b[order], s[order]
        hull = _lower_hull(s, -b)
        g, b, s = g[hull], b[hull], s[hull]
        slopes, offsets, facets = [], [], []
        for k in range(len(g) - 1):
            m = (-b[k + 1] + b[k]) / (s[k + 1] - s[k])
            x = m * direction
            slopes.append(x)
            offsets.append(float(x @ g[k] + b[k]))
            facets.append((k, k + 1))
        if not facets:
            slopes, offsets, facets = [np.zeros(2)], [float(b[0])], [(0,)]
        domain = np.array([g[0], g[-1]])
        return DualPL(g, -b, domain, tuple(facets), np.array(slopes), np.array(offsets),
                      np.zeros(len(facets)), 1)
    lifted = np.column_stack([g, -b])
    span = float(np.ptp(lifted[:, 2])) + 1.0
    apex = np.array([*g.mean(axis=0), lifted[:, 2].max() + span])
    hull = ConvexHull(np.vstack([lifted, apex]))
    n = len(g)
    facets, slopes, offsets, areas = [], [], [], []
    for simplex, eq in zip(hull.simplices, hull.equations):
        if n in simplex or eq[2] >= -GEOM_TOL:
            continue
        # plane a.y + c z + d = 0  ->  z = -(a.y + d)/c
        x = -eq[:2] / eq[2]
        off = eq[3] / eq[2]
        facets.append(tuple(int(i) for i in simplex))
        slopes.append(x)
        offsets.append(off)
        areas.append(abs(_cross(g[simplex[0]], g[simplex[1]], g[simplex[2]])) / 2)
    # Qhull leaves coplanar lifted points out of the simplices, so every
    # vertex used by a lower facet is extreme: exactly the active pieces
    used = sorted({i for f in facets for i in f})
    remap = {old: new for new, old in enumerate(used)}
    facets = tuple(tuple(remap[i] for i in f) for f in facets)
    g2, b2 = g[used], b[used]
    domain_idx = ConvexHull(g2).vertices  # counter-clockwise in 2D
    return DualPL(g2, -b2, g2[domain_idx], facets, np.array(slopes), np.array(offsets),
                  np.array(areas), 2)


@dataclass(frozen=True)
class PLPotential2D:
    """u(x) = max_i (g_i . x + b_i) with gradients in the unit simplex."""

    pieces: tuple
    is_minus_infinity: bool = False

    def __post_init__(self):
        if self.is_minus_infinity:
            object.__setattr__(self, "pieces", ())
            return
        pieces = tuple((tuple(float(c) for c in g), float(b)) for g, b in self.pieces)
        if not pieces:
            raise DomainError("a PL potential needs at least one piece")
        for g, b in pieces:
            if len(g) != 2 or not np.isfinite(b) or not np.all(np.isfinite(g)):
                raise DomainError("pieces are (g in R^2, finite b)")
            if not _in_simplex(g):
                raise DomainError(f"gradient {g} outside the simplex")
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def collapsed(cls):
        return cls((), True)

    @property
    def gradients(self):
        return np.array([g for g, _ in self.pieces], dtype=float).reshape(-1, 2)

    @property
    def intercepts(self):
        return np.array([b for _, b in self.pieces], dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_minus_infinity:
            return np.full(x.shape[:-1], -np.inf)
        return np.max(x @ self.gradients.T + self.intercepts, axis=-1)

    def normalized(self) -> "PLPotential2D":
        """Drop pieces that are never active on a set of positive area."""
        if self.is_minus_infinity:
            return self
        return legendre_dual(self).conjugate()

    def shifted(self, c):
        return PLPotential2D(tuple((g, b + c) for g, b in self.pieces))

    def translated(self, x0):
        """x -> u(x - x0)."""
        x0 = np.asarray(x0, dtype=float)
        return PLPotential2D(tuple((g, b - float(np.dot(g, x0))) for g, b in self.pieces))

    def to_dict(self):
        if self.is_minus_infinity:
            return {"pieces": [], "is_minus_infinity": True}
        return {"pieces": [{"g": list(g), "b": b} for g, b in self.pieces]}

    @classmethod
    def from_dict(cls, d):
        if d.get("is_minus_infinity"):
            return cls.collapsed()
        try:
            return cls(tuple((tuple(p["g"]), p["b"]) for p in d["pieces"]))
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed piece record: {exc}") from None


def legendre_dual(u: PLPotential2D) -> DualPL:
    if u.is_minus_infinity:
        raise DomainError("the dual of -inf is +inf everywhere")
    return _dual_from_pieces(u.gradients, u.intercepts)


# --------------------------------------------------------------------------
# MA measure

def _simplex_regions():
    """Split of the simplex by the largest barycentric coordinate."""
    lam = [np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    const = [1.0, 0.0, 0.0]
    regions = []
    for k in range(3):
        poly = [p.copy() for p in SIMPLEX]
        for m in range(3):
            if m != k:
                # lambda_m - lambda_k <= 0
                a = lam[m] - lam[k]
                poly = _clip_halfplane(poly, a, const[k] - const[m])
        regions.append(poly)
    return regions


_REGIONS = _simplex_regions()


def _clip_convex(poly, clipper):
    """Intersection of two convex polygons (clipper counter-clockwise)."""
    out = [np.asarray(p, dtype=float) for p in poly]
    m = len(clipper)
    for k in range(m):
        p, q = clipper[k], clipper[(k + 1) % m]
        edge = q - p
        a = np.array([edge[1], -edge[0]])  # outward normal for ccw polygons
        out = _clip_halfplane(out, a, float(a @ p))
        if not out:
            break
    return out


def ma_measure_2d(u: PLPotential2D) -> MAMeasure:
    """Real MA measure of u, normalised so the full simplex carries mass 1.

    Atoms sit at vertices of the cell complex of u with mass 2 * area of their
    dual facet.  The rest of the simplex, 2 * area(simplex minus conv G),
    goes to the three poles, split by the largest barycentric coordinate.
    """
    if u.is_minus_infinity:
        raise DomainError("MA is undefined for -inf")
    dual = legendre_dual(u)
    if dual.rank == 2:
        slopes, areas = dual.slopes, dual.areas
        # coplanar triangles share a slope: merge them into one atom
        keys = np.round(slopes, 9)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        masses = np.zeros(len(uniq))
        np.add.at(masses, inv.ravel(), 2 * areas)
        locs = np.array([slopes[inv.ravel() == k].mean(axis=0) for k in range(len(uniq))])
        dom = [p for p in dual.domain]
        poles = np.array([2 * max(0.0, _polygon_area(r) - _polygon_area(_clip_convex(r, dom)))
                          for r in _REGIONS])
    else:
        locs, masses = np.zeros((0, 2)), np.zeros(0)
        poles = np.array([2 * _polygon_area(r) for r in _REGIONS])
    return MAMeasure(None, None, locs.reshape(-1, 2), masses, poles)


# --------------------------------------------------------------------------
# envelopes

def _segment_intersection(p, q, r, s):
    d1, d2 = q - p, s - r
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < 1e-14:
        return None
    w = r - p
    a = (w[0] * d2[1] - w[1] * d2[0]) / den
    c = (w[0] * d1[1] - w[1] * d1[0]) / den
    if -1e-12 <= a <= 1 + 1e-12 and -1e-12 <= c <= 1 + 1e-12:
        return p + a * d1
    return None


def _crossings(p, q, f, g, breaks):
    """Points on segment pq where f - g changes sign, given kink parameters."""
    ts = np.unique(np.clip(np.concatenate([[0.0, 1.0], breaks]), 0, 1))
    pts = [p + t * (q - p) for t in ts]
    diff = [f(x) - g(x) for x in pts]
    out = []
    for k in range(len(ts) - 1):
        a, b = diff[k], diff[k + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b < 0:
            s = a / (a - b)
            out.append(pts[k] + s * (pts[k + 1] - pts[k]))
    return out


def _param_on(p, q, x):
    d = q - p
    return float(np.dot(x - p, d) / np.dot(d, d))


def min_envelope_2d(u: PLPotential2D, v: PLPotential2D) -> PLPotential2D:
    """Largest convex function with gradients in the simplex below min(u, v).

    Its dual is max(u*, v*) on conv(G_u) & conv(G_v); the returned pieces are
    the vertices of that PL function.  Disjoint gradient hulls make the
    envelope identically -inf.
    """
    if u.is_minus_infinity or v.is_minus_infinity:
        return PLPotential2D.collapsed()
    du, dv = legendre_dual(u), legendre_dual(v)
    eu, ev = du.edges(), dv.edges()
    cand = [y for y in du.vertices] + [y for y in dv.vertices]
    for p, q in eu:
        for r, s in ev:
            x = _segment_intersection(p, q, r, s)
            if x is not None:
                cand.append(x)
    # boundary segments of each domain also bound the other function's support
    for own, other, edges, other_edges in ((du, dv, eu, ev), (dv, du, ev, eu)):
        for p, q in edges:
            breaks = []
            for r, s in other_edges:
                x = _segment_intersection(p, q, r, s)
                if x is not None:
                    breaks.append(_param_on(p, q, x))
            for y in other.vertices:
                t = _param_on(p, q, y)
                if 0 <= t <= 1 and np.linalg.norm(p + t * (q - p) - y) < 1e-10:
                    breaks.append(t)
            cand.extend(_crossings(p, q, own, other, np.array(breaks)))
    pts, vals = [], []
    for y in cand:
        a, b = du(y), dv(y)
        val = max(a, b)
        if np.isfinite(val):
            pts.append(y)
            vals.append(val)
    if not pts:
        return PLPotential2D.collapsed()
    pts = np.clip(np.array(pts), 0.0, None)
    over = pts.sum(axis=1) > 1
    pts[over] = pts[over] / pts[over].sum(axis=1, keepdims=True)
    return PLPotential2D(tuple(zip(map(tuple, pts), -np.array(vals)))).normalized()
