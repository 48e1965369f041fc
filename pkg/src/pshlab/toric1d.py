"""S^1-invariant omega_FS-psh functions on the Riemann sphere.

In the log chart t = log|z_1/z_0| such a function is recorded through the
convex profile f = f_omega + phi, where f_omega(t) = log sqrt(1 + e^{2t}) is
the Fubini-Study reference.  The constraint omega + dd^c phi >= 0 becomes:
f convex with slopes in [0, 1].  Beyond the grid every profile is continued
linearly with its asymptotic slopes, which encode the Lelong numbers at the
two poles (pole 0: t = -inf, pole infinity: t = +inf).

The volume of the sphere is normalised to 1, so Monge-Ampere measures of
potentials are probability measures.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.special import expit

from .errors import DomainError, DomainMismatchError, UndefinedInputError
from .measure_core import Grid1D, MAMeasure, Weight, integrate

__all__ = [
    "ToricPotential1D",
    "ObstacleFunction1D",
    "Membership",
    "f_omega",
    "reference_density",
    "project_envelope",
    "running_inf_envelope",
    "upper_envelope",
    "ma_measure",
    "energy_E",
    "quasi_distance_I",
    "quasi_distance_I_chi",
    "membership_E_chi",
    "capacity",
    "capacity_extremal",
    "lelong_numbers",
    "blocki_inequality_check",
    "cln_bound_check",
    "pointwise_min",
    "pointwise_max",
    "random_potential",
    "truncated_log_potential",
    "log_kink_location",
]

CONVEXITY_TOL = 1e-10
MASS_TOL = 1e-9
# an interior node mass is reported as an atom when it dominates both neighbours
KINK_RATIO = 4.0
KINK_FLOOR = 1e-10
# asymptotic slope not reached on the grid beyond this gap -> truncated-model caveat
CAVEAT_SLOPE_GAP = 1e-6


def f_omega(t):
    """Fubini-Study reference profile log sqrt(1 + e^{2t})."""
    return 0.5 * np.logaddexp(0.0, 2.0 * np.asarray(t, dtype=float))


def reference_density(t):
    """Second derivative of f_omega: 2 s (1 - s) with s = expit(2t)."""
    s = expit(2.0 * np.asarray(t, dtype=float))
    return 2.0 * s * (1.0 - s)


def log_kink_location(C):
    """Solution t of t = f_omega(t) - C, i.e. where log|z_1| - log|z| = -C."""
    C = float(C)
    if C <= 0:
        raise DomainError("kink location needs C > 0")
    return -C - 0.5 * np.log1p(-np.exp(-2.0 * C))


@lru_cache(maxsize=64)
def _reference_samples(grid: Grid1D):
    fo = f_omega(grid.nodes)
    fo.setflags(write=False)
    return fo


@dataclass(frozen=True, eq=False)
class ToricPotential1D:
    """Convex profile on a grid with asymptotic slope data.

    ``f_values`` are samples of f = f_omega + phi; between nodes the profile
    is linear, beyond the grid it is linear with slopes ``slope_left`` and
    ``slope_right``.  ``is_minus_infinity`` marks the collapsed envelope.
    """

    grid: Grid1D
    f_values: np.ndarray
    slope_left: float = 0.0
    slope_right: float = 1.0
    is_minus_infinity: bool = False

    def __post_init__(self):
        f = np.array(self.f_values, dtype=float, copy=True)
        f.setflags(write=False)
        object.__setattr__(self, "f_values", f)
        object.__setattr__(self, "slope_left", float(self.slope_left))
        object.__setattr__(self, "slope_right", float(self.slope_right))
        if self.is_minus_infinity:
            return
        if f.shape != (self.grid.n_nodes,):
            raise DomainError("one profile value per grid node is required")
        if not np.all(np.isfinite(f)):
            raise DomainError("profile values must be finite")
        a, b = self.slope_left, self.slope_right
        if not (-CONVEXITY_TOL <= a <= b + CONVEXITY_TOL and b <= 1 + CONVEXITY_TOL):
            raise DomainError(f"asymptotic slopes ({a}, {b}) outside 0 <= a <= b <= 1")
        s = self.slopes
        tol = CONVEXITY_TOL * max(1.0, float(np.max(np.abs(f))))
        h = self.grid.spacing
        if np.any(np.diff(s) < -tol / np.minimum(h[1:], h[:-1])):
            raise DomainError("profile is not convex")
        if s[0] < a - CONVEXITY_TOL * 10 or s[-1] > b + CONVEXITY_TOL * 10:
            raise DomainError("interior slopes inconsistent with asymptotic slopes")

    # constructors -------------------------------------------------------
    @classmethod
    def reference(cls, grid=None):
        grid = grid or Grid1D.default()
        return cls(grid, _reference_samples(grid), 0.0, 1.0)

    @classmethod
    def from_phi(cls, grid, phi, slope_left=0.0, slope_right=1.0):
        """Build from phi given as node values or as a callable of t."""
        vals = phi(grid.nodes) if callable(phi) else np.asarray(phi, dtype=float)
        return cls(grid, _reference_samples(grid) + vals, slope_left, slope_right)

    @classmethod
    def from_profile(cls, grid, f, slope_left=0.0, slope_right=1.0):
        vals = f(grid.nodes) if callable(f) else np.asarray(f, dtype=float)
        return cls(grid, vals, slope_left, slope_right)

    @classmethod
    def constant(cls, c, grid=None):
        grid = grid or Grid1D.default()
        return cls(grid, _reference_samples(grid) + float(c), 0.0, 1.0)

    @classmethod
    def collapsed(cls, grid):
        return cls(grid, np.full(grid.n_nodes, -np.inf), 0.0, 1.0, True)

    # derived quantities ---------------------------------------------------
    @property
    def slopes(self):
        return np.diff(self.f_values) / self.grid.spacing

    @property
    def phi_values(self):
        self._require_finite()
        return self.f_values - _reference_samples(self.grid)

    @property
    def pole_phi_values(self):
        """Limits of phi at pole 0 (t -> -inf) and pole infinity (t -> +inf)."""
        self._require_finite()
        f = self.f_values
        p0 = -np.inf if self.slope_left > 0 else float(f[0])
        pinf = -np.inf if self.slope_right < 1 else float(f[-1] - self.grid.t_max)
        return np.array([p0, pinf])

    @property
    def is_bounded(self):
        return not self.is_minus_infinity and self.slope_left == 0 and self.slope_right == 1

    def sup_phi(self):
        return float(max(np.max(self.phi_values), np.max(self.pole_phi_values)))

    def inf_phi(self):
        return float(min(np.min(self.phi_values), np.min(self.pole_phi_values)))

    def shifted(self, c):
        self._require_finite()
        return ToricPotential1D(self.grid, self.f_values + c, self.slope_left, self.slope_right)

    def scaled(self, lam):
        """phi -> lam * phi for lam in [0, 1] (a convex combination with 0)."""
        if not 0 <= lam <= 1:
            raise DomainError("only 0 <= lam <= 1 preserves omega-psh")
        fo = _reference_samples(self.grid)
        return ToricPotential1D(self.grid, fo + lam * (self.f_values - fo),
                                lam * self.slope_left, 1 - lam * (1 - self.slope_right))

    def truncated_caveat(self):
        """True when the asymptotic slopes are not yet attained on the grid."""
        s = self.slopes
        return bool(s[0] - self.slope_left > CAVEAT_SLOPE_GAP
                    or self.slope_right - s[-1] > CAVEAT_SLOPE_GAP)

    def _require_finite(self):
        if self.is_minus_infinity:
            raise UndefinedInputError("the potential is identically -inf")

    def to_dict(self):
        d = {"grid": self.grid.to_dict(), "slope_left": self.slope_left,
             "slope_right": self.slope_right, "is_minus_infinity": self.is_minus_infinity}
        d["f_values"] = None if self.is_minus_infinity else self.f_values.tolist()
        return d

    @classmethod
    def from_dict(cls, d, grid=None):
        grid = grid or Grid1D.from_dict(d["grid"])
        if d.get("is_minus_infinity"):
            return cls.collapsed(grid)
        return cls(grid, np.asarray(d["f_values"], dtype=float), d["slope_left"], d["slope_right"])


@dataclass(frozen=True, eq=False)
class ObstacleFunction1D:
    """An obstacle in f-coordinates.

    ``h_values`` may contain ``+inf`` (no constraint at that node) and
    ``-inf`` (forces collapse).  Beyond the grid the obstacle is continued
    linearly with slopes ``slope_left`` / ``slope_right``; these encode its
    pole behaviour (e.g. 0 and 1 for bounded obstacles, a left slope of 1
    for an obstacle carrying a unit Lelong number at pole 0).
    """

    grid: Grid1D
    h_values: np.ndarray
    slope_left: float = 0.0
    slope_right: float = 1.0
    void: bool = False

    def __post_init__(self):
        h = np.array(self.h_values, dtype=float, copy=True)
        h.setflags(write=False)
        object.__setattr__(self, "h_values", h)
        if h.shape != (self.grid.n_nodes,):
            raise DomainError("one obstacle value per grid node is required")
        if np.any(np.isnan(h)):
            raise DomainError("NaN obstacle value")
        if not self.void and np.all(h == np.inf):
            raise DomainError("obstacle imposes no constraint; declare it void instead")

    @classmethod
    def from_phi(cls, grid, phi, slope_left=0.0, slope_right=1.0):
        vals = phi(grid.nodes) if callable(phi) else np.asarray(phi, dtype=float)
        return cls(grid, _reference_samples(grid) + vals, slope_left, slope_right)

    @classmethod
    def from_potential(cls, pot: ToricPotential1D):
        return cls(pot.grid, pot.f_values, pot.slope_left, pot.slope_right)


# --------------------------------------------------------------------------
# envelopes

def _lower_hull(x, y):
    """Indices of the lower convex hull of points sorted by x (monotone chain)."""
    hull = []
    for i in range(x.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b unless it lies strictly below the chord from a to i
            if (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]) <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


def project_envelope(h: ObstacleFunction1D) -> ToricPotential1D:
    """Largest convex profile with slopes in [0, 1] lying below ``h``.

    Returns a collapsed potential when no such profile exists.
    """
    grid = h.grid
    lo = max(0.0, float(h.slope_left))
    hi = min(1.0, float(h.slope_right))
    if h.void or lo > hi or np.any(h.h_values == -np.inf):
        return ToricPotential1D.collapsed(grid)
    t = grid.nodes
    finite = np.flatnonzero(np.isfinite(h.h_values))
    xs, ys = t[finite], h.h_values[finite]
    idx = _lower_hull(xs, ys)
    hx, hy = xs[idx], ys[idx]
    if hx.size > 1:
        hs = np.diff(hy) / np.diff(hx)
        # vertex where the supporting line of slope lo touches, and the same for hi
        k_lo = int(np.searchsorted(hs, lo, side="left"))
        k_hi = int(np.searchsorted(hs, hi, side="right"))
    else:
        k_lo = k_hi = 0
    g = np.interp(t, hx, hy)
    left = t < hx[k_lo]
    right = t > hx[k_hi]
    g[left] = hy[k_lo] + lo * (t[left] - hx[k_lo])
    g[right] = hy[k_hi] + hi * (t[right] - hx[k_hi])
    # never exceed the obstacle through rounding
    g = np.minimum(g, np.where(np.isfinite(h.h_values), h.h_values, np.inf))
    return ToricPotential1D(grid, g, lo, hi)


def _common_grid(seq):
    seq = list(seq)
    if not seq:
        raise DomainError("empty sequence")
    grid = seq[0].grid
    for p in seq[1:]:
        if not grid.same_as(p.grid):
            raise DomainMismatchError("potentials live on different grids")
    return grid, seq


def pointwise_min(seq: Iterable[ToricPotential1D]) -> ObstacleFunction1D:
    """Pointwise minimum as an obstacle (the tails keep the steepest decay)."""
    grid, seq = _common_grid(seq)
    if any(p.is_minus_infinity for p in seq):
        return ObstacleFunction1D(grid, np.full(grid.n_nodes, -np.inf))
    vals = np.min(np.stack([p.f_values for p in seq]), axis=0)
    return ObstacleFunction1D(grid, vals, max(p.slope_left for p in seq),
                              min(p.slope_right for p in seq))


def pointwise_max(seq: Iterable[ToricPotential1D]) -> ToricPotential1D:
    grid, seq = _common_grid(seq)
    live = [p for p in seq if not p.is_minus_infinity]
    if not live:
        return ToricPotential1D.collapsed(grid)
    vals = np.max(np.stack([p.f_values for p in live]), axis=0)
    return ToricPotential1D(grid, vals, min(p.slope_left for p in live),
                            max(p.slope_right for p in live))


def running_inf_envelope(seq: Sequence[ToricPotential1D], j: int = 0) -> ToricPotential1D:
    """Envelope of the pointwise infimum of ``seq[j:]`` (0-based position)."""
    if not 0 <= j < len(seq):
        raise DomainError("index outside the sequence")
    return project_envelope(pointwise_min(seq[j:]))


def upper_envelope(seq: Sequence[ToricPotential1D], j: int = 0) -> ToricPotential1D:
    """Pointwise supremum of ``seq[j:]``; already admissible on a grid."""
    if not 0 <= j < len(seq):
        raise DomainError("index outside the sequence")
    return pointwise_max(seq[j:])


# --------------------------------------------------------------------------
# Monge-Ampere measure and functionals

def _node_masses(pot: ToricPotential1D):
    s = np.concatenate([[pot.slope_left], pot.slopes, [pot.slope_right]])
    m = np.diff(s)
    return np.where(m < 0, 0.0, m)


def ma_measure(phi: ToricPotential1D) -> MAMeasure:
    """Distributional second derivative of the profile plus pole masses."""
    if phi.is_minus_infinity:
        raise UndefinedInputError("MA is undefined for the collapsed potential")
    grid = phi.grid
    m = _node_masses(phi)
    nb = np.zeros_like(m)
    nb[1:-1] = np.maximum(m[:-2], m[2:])
    nb[0], nb[-1] = m[1], m[-2]
    kink = (m > KINK_RATIO * nb) & (m > KINK_FLOOR)
    mean_nb = np.zeros_like(m)
    mean_nb[1:-1] = 0.5 * (m[:-2] + m[2:])
    mean_nb[0], mean_nb[-1] = m[1], m[-2]
    atom_mass = np.where(kink, m - mean_nb, 0.0)
    smooth = m - atom_mass
    density = smooth / grid.cell_widths
    poles = np.array([phi.slope_left, 1.0 - phi.slope_right])
    return MAMeasure(grid, density, grid.nodes[kink], atom_mass[kink], np.maximum(poles, 0.0))


@lru_cache(maxsize=64)
def _reference_measure(grid: Grid1D):
    return ma_measure(ToricPotential1D.reference(grid))


def reference_measure(grid=None) -> MAMeasure:
    """MA(0): the normalised Fubini-Study area in the log chart."""
    return _reference_measure(grid or Grid1D.default())


def _integral(values, pole_values, mu):
    return integrate(values, mu, pole_values)


def energy_E(phi: ToricPotential1D) -> float:
    """Monge-Ampere energy (n = 1): (1/2)[int phi MA(0) + int phi MA(phi)]."""
    if phi.is_minus_infinity:
        return -np.inf
    v, pv = phi.phi_values, phi.pole_phi_values
    a = _integral(v, pv, reference_measure(phi.grid))
    b = _integral(v, pv, ma_measure(phi))
    return 0.5 * (a + b)


def _check_pair(u, v):
    if not u.grid.same_as(v.grid):
        raise DomainMismatchError("potentials live on different grids")


def _difference(u, v):
    """Node and pole values of u - v (pole values finite only if both are)."""
    du = u.phi_values - v.phi_values
    pu, pv = u.pole_phi_values, v.pole_phi_values
    with np.errstate(invalid="ignore"):
        dp = np.where(np.isfinite(pu) & np.isfinite(pv), pu - pv, np.nan)
    return du, dp


def quasi_distance_I(phi: ToricPotential1D, psi: ToricPotential1D) -> float:
    """int (phi - psi) [MA(psi) - MA(phi)]; requires finite energy."""
    _check_pair(phi, psi)
    for p in (phi, psi):
        if not np.isfinite(energy_E(p)):
            raise DomainError("I is only defined on finite-energy potentials")
    d, dp = _difference(phi, psi)
    dp = np.nan_to_num(dp)  # both measures carry no pole mass here
    val = _integral(d, dp, ma_measure(psi)) - _integral(d, dp, ma_measure(phi))
    return max(val, 0.0) if val > -1e-12 else val


@dataclass(frozen=True)
class Membership:
    member: bool
    integral: float
    pole_masses: tuple
    truncated_model: bool
    reason: str

    def __bool__(self):
        return self.member

    def to_dict(self):
        return {"member": self.member, "integral": self.integral,
                "pole_masses": list(self.pole_masses),
                "truncated_model": self.truncated_model, "reason": self.reason}


def membership_E_chi(chi: Weight, phi: ToricPotential1D) -> Membership:
    """Finite-energy test int |chi(-|phi|)| dMA(phi) < inf in the truncated model."""
    if phi.is_minus_infinity:
        return Membership(False, np.inf, (0.0, 0.0), False, "identically -inf")
    mu = ma_measure(phi)
    poles = tuple(mu.pole_masses.tolist())
    if np.any(mu.pole_masses > 0):
        return Membership(False, np.inf, poles, False,
                          "positive Lelong number: MA charges a pole where phi = -inf")
    vals = np.abs(chi(-np.abs(phi.phi_values)))
    pv = np.abs(chi(-np.abs(phi.pole_phi_values)))
    integral = _integral(vals, pv, mu)
    return Membership(bool(np.isfinite(integral)), float(integral), poles,
                      phi.truncated_caveat(), "ok")


def quasi_distance_I_chi(chi: Weight, u: ToricPotential1D, v: ToricPotential1D) -> float:
    """int |chi(-|u - v|)| (MA(u) + MA(v)) for u, v in E_chi."""
    _check_pair(u, v)
    for p in (u, v):
        if not membership_E_chi(chi, p):
            raise DomainError("I_chi needs both potentials in E_chi")
    d, dp = _difference(u, v)
    vals = np.abs(chi(-np.abs(d)))
    pv = np.abs(chi(-np.abs(np.nan_to_num(dp))))
    return _integral(vals, pv, ma_measure(u)) + _integral(vals, pv, ma_measure(v))


def lelong_numbers(phi: ToricPotential1D):
    """(nu at pole 0, nu at pole infinity) read off the asymptotic slopes."""
    if phi.is_minus_infinity:
        raise UndefinedInputError("Lelong numbers of -inf are undefined")
    return (phi.slope_left, 1.0 - phi.slope_right)


# --------------------------------------------------------------------------
# capacity

def _interval_mask(grid, K):
    K = list(K)
    for a, b in K:
        if a > b:
            raise DomainError(f"empty interval ({a}, {b})")
        for e in (a, b):
            if np.isfinite(e) and not grid.t_min - 1e-12 <= e <= grid.t_max + 1e-12:
                raise DomainError(f"interval endpoint {e} outside the grid")
    return grid.nodes_in(K)


def _mass_operator(grid):
    """Sparse D with node masses m = D f + c for slopes pinned to (0, 1)."""
    n = grid.n_nodes
    inv = 1.0 / grid.spacing
    # slopes S f, S is (n-1) x n
    rows = np.repeat(np.arange(n - 1), 2)
    cols = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1).ravel()
    data = np.stack([-inv, inv], axis=1).ravel()
    S = sparse.csr_matrix((data, (rows, cols)), shape=(n - 1, n))
    # m_i = s_i - s_{i-1} with s_{-1} = 0, s_{n-1} = 1
    E = sparse.diags([np.ones(n), -np.ones(n)], [0, -1], shape=(n, n - 1), format="csr")
    c = np.zeros(n)
    c[-1] = 1.0
    return E @ S, S, c


def _capacity_lp(grid, mask):
    n = grid.n_nodes
    D, S, c = _mass_operator(grid)
    w = mask.astype(float)
    obj = -(D.T @ w)
    # convexity s_{i} - s_{i+1} <= 0, and 0 <= s_0, s_{n-2} <= 1
    dS = sparse.diags([np.ones(n - 2), -np.ones(n - 2)], [0, 1], shape=(n - 2, n - 1)) @ S
    A = sparse.vstack([dS, -S[0], S[-1]], format="csr")
    b = np.concatenate([np.zeros(n - 2), [0.0], [1.0]])
    fo = _reference_samples(grid)
    res = optimize.linprog(
        obj, A_ub=A, b_ub=b, bounds=np.stack([fo, fo + 1.0], axis=1), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"capacity LP failed: {res.message}")
    return float(-res.fun + w @ c)


def _capacity_envelope(grid, mask):
    fo = _reference_samples(grid)
    h = ObstacleFunction1D(grid, np.where(mask, fo - 1.0, fo), 0.0, 1.0)
    env = project_envelope(h)
    return float(_node_masses(env)[mask].sum()), env


def capacity(K, grid=None, method="lp") -> float:
    """Monge-Ampere capacity of a finite union of closed t-intervals.

    ``method="lp"`` solves the discretised maximisation directly;
    ``method="envelope"`` integrates the MA measure of the relative extremal
    envelope over K.  Infinite endpoints stop at the grid boundary (the
    poles themselves are polar and carry no capacity).
    """
    grid = grid or Grid1D.default()
    mask = _interval_mask(grid, K)
    return capacity_of_nodes(mask, grid, method)


def capacity_of_nodes(mask, grid, method="envelope") -> float:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (grid.n_nodes,):
        raise DomainMismatchError("node mask does not match the grid")
    if not mask.any():
        return 0.0
    if method == "lp":
        return _capacity_lp(grid, mask)
    if method == "envelope":
        return _capacity_envelope(grid, mask)[0]
    raise DomainError(f"unknown capacity method {method!r}")


def capacity_extremal(K, grid=None):
    """Capacity through the relative extremal envelope, with the envelope."""
    grid = grid or Grid1D.default()
    mask = _interval_mask(grid, K)
    if not mask.any():
        return 0.0, ToricPotential1D.reference(grid)
    return _capacity_envelope(grid, mask)


def fit_inverse_linear(T, caps):
    """Fit ``cap ~ 1/(T + c)`` in the minimax relative sense.

    Returns ``(c, worst)`` where ``worst = max |cap * (T + c) - 1|``.  The
    objective is convex and piecewise linear in ``c``, so a bounded scalar
    search is enough.
    """
    T = np.asarray(T, dtype=float)
    caps = np.asarray(caps, dtype=float)
    if T.shape != caps.shape or np.any(caps <= 0):
        raise DomainError("need matching positive capacities")
    worst = lambda c: float(np.max(np.abs(caps * (T + c) - 1.0)))
    lo = float(np.min(1.0 / caps - T)) - 1.0
    hi = float(np.max(1.0 / caps - T)) + 1.0
    res = optimize.minimize_scalar(worst, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.x), worst(res.x)


# --------------------------------------------------------------------------
# inequality checks

def blocki_inequality_check(u, v, w, tol=1e-9):
    """Both sides of the Blocki-type inequality for n = 1.

    lhs = int (w - v)^2 MA(u),  rhs = 2 [int (w - v)^2 MA(0) + int (w - v) MA(v)].
    """
    _check_pair(u, v)
    _check_pair(v, w)
    uv = u.phi_values
    up = u.pole_phi_values
    if np.any(uv < -1 - tol) or np.any(uv > tol) or not np.all(np.isfinite(up)) \
            or np.any(up < -1 - tol) or np.any(up > tol):
        raise DomainError("u must satisfy -1 <= u <= 0")
    if not (v.is_bounded and w.is_bounded):
        raise DomainError("v and w must be bounded")
    d, dp = _difference(w, v)
    if np.any(d < -tol) or np.any(dp < -tol):
        raise DomainError("v <= w is required")
    d = np.maximum(d, 0.0)
    dp = np.maximum(dp, 0.0)
    lhs = _integral(d ** 2, dp ** 2, ma_measure(u))
    rhs = 2.0 * (_integral(d ** 2, dp ** 2, reference_measure(u.grid))
                 + _integral(d, dp, ma_measure(v)))
    return lhs, rhs, rhs - lhs


def cln_bound_check(phi: ToricPotential1D, C: float, method="envelope"):
    """Capacity of {phi < -C} against (||phi||_{L^1} + 1) / C."""
    if C <= 0:
        raise DomainError("C must be positive")
    if phi.sup_phi() > 1e-9:
        raise DomainError("the bound is stated for phi <= 0")
    v = phi.phi_values
    cap_value = capacity_of_nodes(v < -C, phi.grid, method)
    l1 = _integral(np.abs(v), np.abs(phi.pole_phi_values), reference_measure(phi.grid))
    bound = (l1 + 1.0) / C
    return cap_value, bound


# --------------------------------------------------------------------------
# generators

def truncated_log_potential(grid, eps, C) -> ToricPotential1D:
    """eps * max(log|z_1| - log|z|, -C); C = inf gives eps (log|z_1| - log|z|)."""
    eps = float(eps)
    if not 0 <= eps <= 1:
        raise DomainError("eps must lie in [0, 1]")
    t = grid.nodes
    fo = _reference_samples(grid)
    if np.isinf(C):
        inner = t
        left = eps
    else:
        inner = np.maximum(t, fo - float(C))
        left = 0.0
    return ToricPotential1D(grid, (1 - eps) * fo + eps * inner, left, 1.0)


def random_potential(grid, rng, lelong=(0.0, 0.0), n_terms=None, shift=None):
    """Random admissible profile built from softplus and hinge ramps.

    The asymptotic slopes are ``lelong[0]`` and ``1 - lelong[1]``.
    """
    nu0, nuinf = lelong
    if nu0 < 0 or nuinf < 0 or nu0 + nuinf > 1:
        raise DomainError("Lelong numbers must be nonnegative with sum <= 1")
    t = grid.nodes
    k = int(n_terms or rng.integers(1, 6))
    weights = rng.dirichlet(np.ones(k)) * (1 - nu0 - nuinf)
    span = 0.5 * min(-grid.t_min, grid.t_max, 20.0)
    centres = rng.uniform(-span, span, size=k)
    f = nu0 * t
    for wk, ak in zip(weights, centres):
        if rng.random() < 0.3:
            f = f + wk * np.maximum(t - ak, 0.0)
        else:
            b = float(np.exp(rng.uniform(np.log(0.3), np.log(20.0))))
            f = f + wk * np.logaddexp(0.0, b * (t - ak)) / b
    c = rng.normal() if shift is None else shift
    return ToricPotential1D(grid, f + c, nu0, 1.0 - nuinf)
