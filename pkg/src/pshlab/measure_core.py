"""Grids, measures on the model spaces, weights and quadrature.

Everything here is immutable once built.  Measures are normalised so that
the reference volume of every model is 1; Monge-Ampere measures of
potentials with full asymptotic slope range are therefore probability
measures.

Extended reals: ``-inf`` is a legitimate value for pole evaluations and is
propagated through :func:`integrate` instead of raising.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, DomainMismatchError

__all__ = [
    "Grid1D",
    "MAMeasure",
    "Weight",
    "integrate",
    "weight_eval",
    "DEFAULT_T_MIN",
    "DEFAULT_T_MAX",
    "DEFAULT_N_NODES",
]

DEFAULT_T_MIN = -40.0
DEFAULT_T_MAX = 40.0
DEFAULT_N_NODES = 8001


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Strictly increasing nodes in the log-coordinate ``t``."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = _frozen(self.nodes)
        if nodes.ndim != 1 or nodes.size < 3:
            raise DomainError("a grid needs at least 3 nodes")
        if not np.all(np.isfinite(nodes)):
            raise DomainError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, t_min=DEFAULT_T_MIN, t_max=DEFAULT_T_MAX,
                n_nodes=DEFAULT_N_NODES):
        if not t_min < t_max:
            raise DomainError("t_min must be smaller than t_max")
        return cls(np.linspace(t_min, t_max, int(n_nodes)))

    @classmethod
    def default(cls):
        return _DEFAULT_GRID

    @classmethod
    def with_extension(cls, base=None, left=None, right=None, extra=(),
                       ratio=1.02):
        """Extend ``base`` geometrically out to ``left``/``right``.

        Nodes beyond the base grid are spaced with ratio ``ratio`` in the
        distance to the base boundary; ``extra`` points (e.g. kink locations
        of a family) are merged in verbatim.
        """
        base = base or _DEFAULT_GRID
        pieces = [base.nodes]
        h = float(base.nodes[1] - base.nodes[0])
        if left is not None and left < base.t_min:
            pieces.append(base.t_min - _geometric_offsets(base.t_min - left, h, ratio))
        if right is not None and right > base.t_max:
            pieces.append(base.t_max + _geometric_offsets(right - base.t_max, h, ratio))
        extra = np.asarray(list(extra), dtype=float)
        if extra.size:
            pieces.append(extra[np.isfinite(extra)])
        nodes = np.unique(np.concatenate(pieces))
        # merge near-duplicates created by the extra points
        keep = np.concatenate([[True], np.diff(nodes) > 1e-9 * np.maximum(1.0, np.abs(nodes[1:]))])
        return cls(nodes[keep])

    @property
    def t_min(self):
        return float(self.nodes[0])

    @property
    def t_max(self):
        return float(self.nodes[-1])

    @property
    def n_nodes(self):
        return int(self.nodes.size)

    @property
    def spacing(self):
        return np.diff(self.nodes)

    @property
    def cell_widths(self):
        """Dual-cell (trapezoid) weights attached to each node."""
        h = self.spacing
        w = np.empty(self.n_nodes)
        w[0] = h[0] / 2
        w[-1] = h[-1] / 2
        w[1:-1] = (h[:-1] + h[1:]) / 2
        return w

    def is_uniform(self, rtol=1e-9):
        h = self.spacing
        return bool(np.allclose(h, h[0], rtol=rtol, atol=0.0))

    def same_as(self, other):
        return self is other or (
            isinstance(other, Grid1D)
            and self.nodes.shape == other.nodes.shape
            and np.array_equal(self.nodes, other.nodes)
        )

    def nodes_in(self, intervals):
        """Boolean mask of nodes lying in a union of closed intervals."""
        mask = np.zeros(self.n_nodes, dtype=bool)
        for a, b in intervals:
            if a > b:
                raise DomainError(f"empty interval ({a}, {b})")
            mask |= (self.nodes >= a) & (self.nodes <= b)
        return mask

    def to_dict(self):
        if self.is_uniform():
            return {"t_min": self.t_min, "t_max": self.t_max, "n_nodes": self.n_nodes}
        return {"nodes": self.nodes.tolist()}

    @classmethod
    def from_dict(cls, d):
        if "nodes" in d:
            return cls(np.asarray(d["nodes"], dtype=float))
        return cls.uniform(d["t_min"], d["t_max"], d["n_nodes"])

    def __repr__(self):
        return f"Grid1D(t_min={self.t_min}, t_max={self.t_max}, n_nodes={self.n_nodes})"


def _geometric_offsets(length, h, ratio):
    offsets = []
    step = h
    pos = 0.0
    while pos + step < length:
        pos += step
        offsets.append(pos)
        step *= ratio
    offsets.append(length)
    return np.asarray(offsets)


_DEFAULT_GRID = Grid1D.uniform()


@dataclass(frozen=True, eq=False)
class MAMeasure:
    """A finite positive measure on a model space.

    In 1D, ``density`` holds one value per grid node, integrated against the
    dual-cell widths of the grid; atoms sit at arbitrary locations inside the
    grid.  In 2D the grid is ``None``, atoms live in R^2 and ``density`` is
    absent.  ``pole_masses`` carries mass sitting at the poles (1D: pole 0 at
    t = -inf, pole infinity at t = +inf; 2D: one entry per simplex vertex).
    """

    grid: Grid1D | None
    density: np.ndarray | None = None
    atom_locations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atom_masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pole_masses: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        masses = _frozen(self.atom_masses)
        locs = _frozen(self.atom_locations)
        poles = _frozen(self.pole_masses)
        if masses.ndim != 1 or locs.shape[:1] != masses.shape:
            raise DomainError("atom locations and masses do not match")
        if self.grid is not None:
            if locs.ndim != 1:
                raise DomainError("1D measures need scalar atom locations")
            if locs.size and (locs.min() < self.grid.t_min or locs.max() > self.grid.t_max):
                raise DomainError("atom outside the grid")
            dens = np.zeros(self.grid.n_nodes) if self.density is None else self.density
            dens = _frozen(dens)
            if dens.shape != (self.grid.n_nodes,):
                raise DomainError("density must have one value per node")
            if np.any(dens < 0):
                raise DomainError("negative density")
            object.__setattr__(self, "density", dens)
        if np.any(masses < 0) or np.any(poles < 0):
            raise DomainError("negative mass")
        object.__setattr__(self, "atom_masses", masses)
        object.__setattr__(self, "atom_locations", locs)
        object.__setattr__(self, "pole_masses", poles)

    @property
    def atoms(self):
        return list(zip(self.atom_locations.tolist(), self.atom_masses.tolist()))

    def density_mass(self):
        if self.grid is None:
            return 0.0
        return float(np.dot(self.density, self.grid.cell_widths))

    def total_mass(self):
        return self.density_mass() + float(self.atom_masses.sum()) + float(self.pole_masses.sum())

    def node_masses(self):
        """Interior mass lumped onto grid nodes (atoms split linearly)."""
        if self.grid is None:
            raise DomainError("node masses only exist for 1D measures")
        out = self.density * self.grid.cell_widths
        if self.atom_masses.size:
            out = out + _lump_atoms(self.grid, self.atom_locations, self.atom_masses)
        return out

    def __add__(self, other):
        if not isinstance(other, MAMeasure):
            return NotImplemented
        if (self.grid is None) != (other.grid is None):
            raise DomainMismatchError("cannot add a 1D and a 2D measure")
        if self.grid is not None and not self.grid.same_as(other.grid):
            raise DomainMismatchError("measures live on different grids")
        if self.pole_masses.shape != other.pole_masses.shape:
            raise DomainMismatchError("pole structure differs")
        return MAMeasure(
            self.grid,
            None if self.grid is None else self.density + other.density,
            np.concatenate([self.atom_locations, other.atom_locations]),
            np.concatenate([self.atom_masses, other.atom_masses]),
            self.pole_masses + other.pole_masses,
        )

    def scaled(self, c):
        if c < 0:
            raise DomainError("measures can only be scaled by c >= 0")
        return MAMeasure(
            self.grid,
            None if self.grid is None else c * self.density,
            self.atom_locations,
            c * self.atom_masses,
            c * self.pole_masses,
        )

    def to_dict(self):
        d = {
            "atoms": [[loc if np.ndim(loc) == 0 else list(loc), m]
                      for loc, m in zip(self.atom_locations.tolist(), self.atom_masses.tolist())],
            "pole_masses": self.pole_masses.tolist(),
        }
        if self.grid is not None:
            d["grid"] = self.grid.to_dict()
            d["density"] = self.density.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        grid = Grid1D.from_dict(d["grid"]) if "grid" in d else None
        atoms = d.get("atoms", [])
        locs = np.array([a[0] for a in atoms], dtype=float)
        if grid is not None:
            locs = locs.reshape(-1)
        elif locs.size == 0:
            locs = np.zeros((0, 2))
        masses = np.array([a[1] for a in atoms], dtype=float)
        return cls(grid, None if grid is None else np.asarray(d["density"], dtype=float),
                   locs, masses, np.asarray(d["pole_masses"], dtype=float))


def _lump_atoms(grid, locs, masses):
    out = np.zeros(grid.n_nodes)
    idx = np.clip(np.searchsorted(grid.nodes, locs, side="right") - 1, 0, grid.n_nodes - 2)
    left = grid.nodes[idx]
    theta = (locs - left) / (grid.nodes[idx + 1] - left)
    np.add.at(out, idx, masses * (1 - theta))
    np.add.at(out, idx + 1, masses * theta)
    return out


def _weighted_sum(values, weights):
    """sum(values * weights) skipping zero weights; -inf/+inf propagate."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    live = weights > 0
    if not np.any(live):
        return 0.0
    v = values[live]
    if np.any(np.isnan(v)):
        raise DomainError("NaN integrand")
    if np.any(v == -np.inf):
        if np.any(v == np.inf):
            raise DomainError("integrand takes both infinite values")
        return -np.inf
    if np.any(v == np.inf):
        return np.inf
    return float(np.dot(v, weights[live]))


def integrate(f, mu: MAMeasure, pole_values: Sequence[float] = (0.0, 0.0)) -> float:
    """Integrate ``f`` against ``mu``.

    For 1D measures ``f`` is an array of values at the grid nodes (atoms
    between nodes see the linear interpolant) or a callable of ``t``.
    For 2D measures ``f`` is a callable on points of R^2.  ``pole_values``
    gives the value of the integrand at each pole and may contain ``-inf``.
    """
    pole_values = np.asarray(pole_values, dtype=float)
    if pole_values.shape != mu.pole_masses.shape:
        raise DomainMismatchError(
            f"expected {mu.pole_masses.size} pole values, got {pole_values.size}")
    parts = []
    if mu.grid is not None:
        if callable(f):
            fv = np.asarray(f(mu.grid.nodes), dtype=float)
            fa = np.asarray(f(mu.atom_locations), dtype=float) if mu.atom_masses.size else np.zeros(0)
        else:
            fv = np.asarray(f, dtype=float)
            if fv.shape != (mu.grid.n_nodes,):
                raise DomainMismatchError(
                    f"integrand has {fv.size} samples, grid has {mu.grid.n_nodes} nodes")
            fa = _interp_extended(mu.grid.nodes, fv, mu.atom_locations)
        parts.append(_weighted_sum(fv, mu.density * mu.grid.cell_widths))
    else:
        if not callable(f):
            raise DomainError("2D integrands must be callables")
        fa = np.asarray(f(mu.atom_locations), dtype=float) if mu.atom_masses.size else np.zeros(0)
    parts.append(_weighted_sum(fa, mu.atom_masses))
    parts.append(_weighted_sum(pole_values, mu.pole_masses))
    return _weighted_sum(parts, np.ones(len(parts)))


def _interp_extended(x, y, xq):
    if xq.size == 0:
        return np.zeros(0)
    on_node = np.isin(xq, x)
    out = np.empty(xq.size)
    if np.any(on_node):
        out[on_node] = y[np.searchsorted(x, xq[on_node])]
    if np.any(~on_node):
        if not np.all(np.isfinite(y)):
            raise DomainError("cannot interpolate an integrand with infinite node values")
        out[~on_node] = np.interp(xq[~on_node], x, y)
    return out


# probe set used to validate weights
_PROBES = -np.concatenate([[0.0], np.logspace(-3, 6, 37)])


@dataclass(frozen=True, eq=False)
class Weight:
    """A nondecreasing weight ``chi`` on (-inf, 0] with chi(0) = 0.

    ``shape_tag`` is ``"convex"`` or ``"concave_polynomial_growth"``;
    ``exponent`` is set for the power family chi(t) = -(-t)^p.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    shape_tag: str
    exponent: float | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.shape_tag not in ("convex", "concave_polynomial_growth"):
            raise DomainError(f"unknown shape tag {self.shape_tag!r}")
        if self.exponent is not None and not self.exponent > 0:
            raise DomainError("power weights need p > 0")
        self._validate()

    @classmethod
    def power(cls, p):
        p = float(p)
        if not p > 0:
            raise DomainError("power weights need p > 0")
        tag = "convex" if p <= 1 else "concave_polynomial_growth"
        return cls(lambda s: -np.power(-np.asarray(s, dtype=float), p), tag, p, f"power({p:g})")

    @classmethod
    def logarithmic(cls):
        """chi(t) = -log(1 - t): convex, with slower growth than every power."""
        return cls(lambda s: -np.log1p(-np.asarray(s, dtype=float)), "convex", None, "log")

    @classmethod
    def from_spec(cls, spec):
        if not isinstance(spec, dict) or "type" not in spec:
            raise DomainError(f"malformed weight spec {spec!r}")
        if spec["type"] == "power":
            if "p" not in spec:
                raise DomainError("power weight spec needs 'p'")
            return cls.power(spec["p"])
        if spec["type"] == "log":
            return cls.logarithmic()
        raise DomainError(f"unknown weight type {spec['type']!r}")

    def to_spec(self):
        if self.exponent is not None:
            return {"type": "power", "p": self.exponent}
        if self.name == "log":
            return {"type": "log"}
        raise DomainError("custom weights are not serialisable")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s > 0):
            raise DomainError("weights are only defined on (-inf, 0]")
        with np.errstate(invalid="ignore"):
            out = np.asarray(self.evaluator(s), dtype=float)
        return out

    def _validate(self):
        vals = self(_PROBES)
        if vals[0] != 0:
            raise DomainError("chi(0) must vanish")
        # probes run from 0 towards -inf, so values must not increase
        if np.any(np.diff(vals) > 1e-12 * np.maximum(1, np.abs(vals[1:]))):
            raise DomainError("chi must be nondecreasing")
        decades = self(-np.logspace(0, 6, 7))
        drops = -np.diff(decades)
        if not np.all(drops > 0) or drops[-1] < 0.25 * drops[0]:
            raise DomainError("chi does not appear to tend to -inf")
        pts = -np.logspace(-2, 4, 61)
        v = self(pts)
        # second divided differences on a log-spaced probe set
        d1 = np.diff(v) / np.diff(pts)
        d2 = np.diff(d1) / (pts[2:] - pts[:-2])
        scale = np.maximum(np.abs(d1[1:]), np.abs(d1[:-1])) / np.abs(pts[2:] - pts[:-2])
        if self.shape_tag == "convex" and np.any(d2 < -1e-8 * scale):
            raise DomainError("weight tagged convex has negative second differences")
        if self.shape_tag == "concave_polynomial_growth" and np.any(d2 > 1e-8 * scale):
            raise DomainError("weight tagged concave has positive second differences")

    def __repr__(self):
        return f"Weight({self.name}, {self.shape_tag})"


def weight_eval(chi: Weight, s: float) -> float:
    """Evaluate ``chi`` at a nonpositive real."""
    if s > 0:
        raise DomainError(f"weight argument must be <= 0, got {s}")
    return float(chi(np.asarray([s]))[0])
