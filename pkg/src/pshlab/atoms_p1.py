"""Potentials with logarithmic poles on the Riemann sphere.

Points of P^1 are unit vectors z = (z_0, z_1) in C^2 up to phase.  The pole
potential G_p = log d(., p) uses the chordal distance
d(z, p) = |z_0 p_1 - z_1 p_0| / (|z||p|), which lies in [0, 1], so sup G_p = 0.
In the toric chart t = log|z_1/z_0| the point [1:0] sits at t = -inf and
G_[1:0] = t - f_omega(t).

Rotations of the sphere preserve omega_FS, capacities, MA(0)-integrals and
energies, so every functional of a single-centre potential is evaluated on its
rotated copy centred at [1:0], which is toric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import toric1d as T
from .errors import DomainError
from .measure_core import Grid1D, Weight
from .sequences import Diagnostic, RunningInf, SequenceFamily

__all__ = [
    "AtomPotential",
    "CollapseResult",
    "sphere_point",
    "chordal_distance",
    "sphere_mesh",
    "collapse_test",
    "symmetric_capacity_of_cap",
    "cap_t_edge",
    "ExtractionFamily",
    "InftyFamily",
    "extraction_family",
]

NORTH = np.array([1.0 + 0j, 0.0 + 0j])   # [1:0], t = -inf
SOUTH = np.array([0.0 + 0j, 1.0 + 0j])   # [0:1], t = +inf
POINT_TOL = 1e-12
MESH_STAGE_MAX = 4   # deepest stage whose centres are still resolved in floats


def sphere_point(theta, azimuth=0.0):
    """Unit representative of the point at polar angle ``theta`` from [1:0]."""
    return np.array([np.cos(theta / 2) + 0j, np.sin(theta / 2) * np.exp(1j * azimuth)])


def _normalise(p):
    p = np.asarray(p, dtype=complex)
    if p.shape != (2,):
        raise DomainError("a sphere point is a pair [z_0, z_1]")
    n = np.linalg.norm(p)
    if not np.isfinite(n) or n == 0:
        raise DomainError("[0:0] is not a point of P^1")
    return p / n


def chordal_distance(z, p):
    """Chordal distance between the rows of ``z`` (shape (m, 2)) and ``p``."""
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    p = _normalise(p)
    num = np.abs(z[:, 0] * p[1] - z[:, 1] * p[0])
    return np.minimum(num / np.linalg.norm(z, axis=1), 1.0)


def _rotation_to_north(p):
    p = _normalise(p)
    return np.array([[np.conj(p[0]), np.conj(p[1])], [-p[1], p[0]]])


def sphere_mesh(n, seed=None):
    """Quasi-uniform sphere points (golden-angle spiral), shape (n, 2).

    ``seed`` applies a random rotation so meshes do not align with atoms.
    """
    k = np.arange(n) + 0.5
    theta = np.arccos(1 - 2 * k / n)
    azim = np.pi * (1 + 5 ** 0.5) * k
    pts = np.stack([np.cos(theta / 2) + 0j, np.sin(theta / 2) * np.exp(1j * azim)], axis=1)
    if seed is not None:
        rng = np.random.default_rng(seed)
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        a, b = q[0] + 1j * q[1], q[2] + 1j * q[3]
        U = np.array([[a, -np.conj(b)], [b, np.conj(a)]])
        pts = pts @ U.T
    return pts


@dataclass(frozen=True)
class AtomPotential:
    """phi = max(sum_i a_i G_{p_i}, floor) + shift (no max when floor is None)."""

    atoms: tuple
    shift: float = 0.0
    floor: Optional[float] = None

    def __post_init__(self):
        atoms = tuple((_normalise(p), float(a)) for p, a in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        for _, a in atoms:
            if not 0 < a <= 1:
                raise DomainError("atom weights must lie in (0, 1]")
        if sum(a for _, a in atoms) > 1 + 1e-12:
            raise DomainError("total Lelong mass exceeds 1")
        for i in range(len(atoms)):
            for k in range(i):
                if chordal_distance(atoms[i][0], atoms[k][0])[0] < POINT_TOL:
                    raise DomainError("atom points must be distinct")
        if not np.isfinite(self.shift):
            raise DomainError("shift must be finite")
        if self.floor is not None and not np.isfinite(self.floor):
            raise DomainError("floor must be finite")

    @property
    def weights(self):
        return np.array([a for _, a in self.atoms])

    def __call__(self, z):
        z = np.atleast_2d(z)
        val = np.zeros(z.shape[0])
        with np.errstate(divide="ignore"):
            for p, a in self.atoms:
                val = val + a * np.log(chordal_distance(z, p))
        if self.floor is not None:
            val = np.maximum(val, self.floor)
        return val + self.shift

    def lelong_at(self, p):
        if self.floor is not None:
            return 0.0
        return sum(a for q, a in self.atoms if chordal_distance(q, p)[0] < POINT_TOL)

    def toric_representative(self, grid: Grid1D) -> T.ToricPotential1D:
        """The potential after a rotation taking its atoms to the poles.

        Available when there is one atom, or two antipodal atoms.
        """
        if not self.atoms:
            return T.ToricPotential1D.constant(max(0.0, self.floor or 0.0) + self.shift, grid)
        p0, a = self.atoms[0]
        b = 0.0
        if len(self.atoms) == 2:
            q, b = self.atoms[1]
            if abs(chordal_distance(q, p0)[0] - 1.0) > POINT_TOL:
                raise DomainError("two atoms must be antipodal to admit a toric form")
        elif len(self.atoms) > 2:
            raise DomainError("more than two atoms have no toric form")
        t = grid.nodes
        fo = T.f_omega(t)
        phi = a * (t - fo) - b * fo
        if self.floor is None:
            return T.ToricPotential1D(grid, fo + phi + self.shift, a, 1.0 - b)
        return T.ToricPotential1D(grid, fo + np.maximum(phi, self.floor) + self.shift, 0.0, 1.0)

    def to_dict(self):
        return {"atoms": [{"p": [[p[0].real, p[0].imag], [p[1].real, p[1].imag]], "a": a}
                          for p, a in self.atoms],
                "shift": self.shift, "floor": self.floor}

    @classmethod
    def from_dict(cls, d):
        atoms = [(np.array([complex(*x["p"][0]), complex(*x["p"][1])]), x["a"]) for x in d["atoms"]]
        return cls(tuple(atoms), d.get("shift", 0.0), d.get("floor"))


@dataclass(frozen=True)
class CollapseResult:
    collapsed: bool
    required_mass: float
    points: tuple
    masses: tuple
    certificate: Optional[AtomPotential] = None
    margin: Optional[float] = None

    def __bool__(self):
        return self.collapsed

    def to_dict(self):
        return {"collapsed": self.collapsed, "required_mass": self.required_mass,
                "masses": list(self.masses), "margin": self.margin,
                "certificate": None if self.certificate is None else self.certificate.to_dict()}


def collapse_test(family: Sequence[AtomPotential], mesh_size=10_000, mesh_seed=0) -> CollapseResult:
    """Decide whether P(min(family)) is identically -inf.

    The minimum carries Lelong number max_m a_m(p) at each atom point p, and
    a psh function on the sphere has total Lelong mass at most 1.  When the
    required mass r is at most 1 the minorant sum_p A_p G_p + min_m c_m is
    returned and checked against every member on a sphere mesh.
    """
    family = list(family)
    if not family:
        raise DomainError("collapse_test needs at least one member")
    points, masses = [], []
    for m in family:
        if not isinstance(m, AtomPotential):
            raise DomainError("members must be AtomPotential instances")
        if m.floor is not None:
            raise DomainError("members must be floor-free")
        for p, a in m.atoms:
            for k, q in enumerate(points):
                if chordal_distance(p, q)[0] < POINT_TOL:
                    masses[k] = max(masses[k], a)
                    break
            else:
                points.append(p)
                masses.append(a)
    r = float(sum(masses))
    if r > 1 + 1e-12:
        return CollapseResult(True, r, tuple(points), tuple(masses))
    cert = AtomPotential(tuple(zip(points, masses)), min(m.shift for m in family))
    z = sphere_mesh(mesh_size, seed=mesh_seed)
    c = cert(z)
    margin = np.inf
    for m in family:
        diff = m(z) - c
        ok = np.isfinite(diff)
        if ok.any():
            margin = min(margin, float(np.min(diff[ok])))
    return CollapseResult(False, r, tuple(points), tuple(masses), cert, margin)


# --------------------------------------------------------------------------
# caps

def cap_t_edge(radius=None, log_radius=None):
    """t-coordinate of the boundary of the cap d(., [1:0]) <= r."""
    if log_radius is None:
        if radius is None or not 0 < radius < 1:
            raise DomainError("cap radius must lie in (0, 1)")
        log_radius = math.log(radius)
    elif not log_radius < 0:
        raise DomainError("cap radius must lie in (0, 1)")
    # |z_1|/|z| <= r  <=>  t <= log r - log sqrt(1 - r^2)
    return log_radius - 0.5 * math.log1p(-math.exp(2 * log_radius))


@lru_cache(maxsize=256)
def _cap_grid(t_edge):
    base = Grid1D.default()
    left = min(base.t_min, t_edge - 40.0)
    right = max(base.t_max, t_edge + 40.0)
    return Grid1D.with_extension(base, left=left, right=right, extra=[t_edge])


def symmetric_capacity_of_cap(center, radius=None, log_radius=None, method="lp"):
    """Capacity of the chordal cap of radius r about ``center``.

    Very small caps can be passed as ``log_radius``.  The centre only enters
    through validation: a rotation moves it to [1:0] without changing the
    capacity.
    """
    _normalise(center)
    t_edge = cap_t_edge(radius, log_radius)
    grid = _cap_grid(round(t_edge, 12))
    return T.capacity([(-np.inf, t_edge)], grid, method=method)


# --------------------------------------------------------------------------
# the staged cover family

@dataclass(frozen=True)
class _StageNet:
    """Ring net with covering radius <= 2^-L <= e^{-2^n}.

    Rings sit at polar angles k*pi/K (k = 0..K, single points at k = 0, K);
    each interior ring carries M equally spaced points.  Any point is within
    pi/(2K) of a ring and within (pi/M) sin(theta) of a ring point along it,
    so the covering radius is at most pi/(2K) + pi/M = (pi/4) 2^-L.
    The plateau {max(G_a/2^n, -1) = -1} is the geodesic ball of radius
    2 asin(e^{-2^n}) >= 2 * 2^-L, more than twice the covering radius.
    """

    stage: int
    L: int
    K: int
    M: int

    @classmethod
    def for_stage(cls, n):
        L = math.ceil(2 ** n / math.log(2))
        return cls(n, L, 2 ** (L + 2), 2 ** (L + 3))

    @property
    def count(self):
        return (self.K - 1) * self.M + 2

    @property
    def log_covering_radius_bound(self):
        # pi/(2K) + pi/M = pi 2^{-L-2}; kept in log form since L grows like 2^n
        return math.log(math.pi) - (self.L + 2) * math.log(2.0)

    @property
    def covering_radius_bound(self):
        return math.exp(self.log_covering_radius_bound)

    @property
    def plateau_log_radius(self):
        return -float(2 ** self.stage)

    def verify_cover(self):
        """2 * covering radius <= plateau radius, checked in log form.

        Uses asin(x) >= x, so the plateau radius is at least 2 e^{-2^n}.
        """
        log_cover = self.log_covering_radius_bound
        return log_cover + math.log(2.0) <= math.log(2.0) - 2.0 ** self.stage

    def centre_angles(self, i):
        if i == 0:
            return 0.0, 0.0
        if i == self.count - 1:
            return math.pi, 0.0
        k, m = divmod(i - 1, self.M)
        return (k + 1) * math.pi / self.K, 2 * math.pi * m / self.M

    def centre_angles_array(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        k, m = np.divmod(idx - 1, self.M)
        theta = (k + 1) * math.pi / self.K
        azim = 2 * math.pi * m / self.M
        theta = np.where(idx == 0, 0.0, np.where(idx == self.count - 1, math.pi, theta))
        azim = np.where((idx == 0) | (idx == self.count - 1), 0.0, azim)
        return theta, azim

    def nearest_centre(self, theta, azim):
        """Index of a centre within the covering radius of each mesh point."""
        k = np.rint(np.asarray(theta) * self.K / math.pi).astype(np.int64)
        m = np.mod(np.rint(np.asarray(azim) * self.M / (2 * math.pi)), self.M).astype(np.int64)
        idx = 1 + (k - 1) * self.M + m
        idx = np.where(k == 0, 0, idx)
        return np.where(k == self.K, self.count - 1, idx)


class ExtractionFamily(SequenceFamily):
    """phi_j = max(G_{a_j}/2^{n_j}, floor) with stage-n centres covering the sphere.

    The default floor is -1.  Indices are Python ints and members are built
    lazily; stage n holds about 2^{2^n * 2.9} members.  The evaluation ladder
    takes the first member (centred at [1:0]) of each stage.
    """

    model = "atoms_p1"

    def __init__(self, stage_count, floor=-1.0):
        if stage_count < 1:
            raise DomainError("stage_count must be at least 1")
        recipe = {"type": "extraction", "stages": int(stage_count)}
        if floor != -1.0:
            recipe["truncate"] = -float(floor)
        super().__init__(f"extraction({stage_count})", recipe,
                         {"lower_bound": float(floor), "ground_truth": {
                             "capacity": "converges", "quasi_monotone": "diverges"}})
        self.stage_count = int(stage_count)
        self.floor = float(floor)
        self.nets = [_StageNet.for_stage(n) for n in range(1, self.stage_count + 2)]
        self.starts = [1]
        for net in self.nets:
            self.starts.append(self.starts[-1] + net.count)
        kinks = [T.log_kink_location(2.0 ** n * -self.floor) for n in range(1, self.stage_count + 2)]
        self.grid = Grid1D.with_extension(Grid1D.default(), left=min(-40.0, kinks[-1] - 40.0),
                                          extra=kinks)
        self._limit = T.ToricPotential1D.reference(self.grid)

    @property
    def declared_limit(self):
        return self._limit

    def stage_of(self, j):
        if j < 1 or j >= self.starts[-1]:
            raise DomainError(f"index {j} outside the generated stages")
        n = next(k for k in range(len(self.nets)) if j < self.starts[k + 1])
        return n + 1, j - self.starts[n]

    def label(self, j):
        if j < 2 ** 53:
            return j
        n, i = self.stage_of(j)
        return f"start(stage {n})+{i}" if i < 2 ** 53 else f"stage {n} member ~2^{i.bit_length() - 1}"

    def member(self, j) -> AtomPotential:
        n, i = self.stage_of(j)
        theta, azim = self.nets[n - 1].centre_angles(i)
        return AtomPotential(((sphere_point(theta, azim), 2.0 ** -n),), 0.0, self.floor)

    def toric_member(self, j):
        n, _ = self.stage_of(j)
        atom = AtomPotential(((NORTH, 2.0 ** -n),), 0.0, self.floor)
        return atom.toric_representative(self.grid)

    def ladder(self, j_max=None):
        return [self.starts[n] for n in range(self.stage_count)]

    def pole_subsequence(self):
        """Stage representatives centred at [1:0], as toric potentials."""
        return [self.toric_member(j) for j in self.ladder()]

    def l1_distance(self, j):
        u = self.toric_member(j)
        return Diagnostic(T.integrate(np.abs(u.phi_values), T.reference_measure(self.grid)))

    def deviation_capacity(self, j, delta):
        n, i = self.stage_of(j)
        if delta > -self.floor:
            return Diagnostic(0.0)
        # |phi_j| >= delta  <=>  G_a <= -delta 2^n: a cap about a_j
        centre = sphere_point(*self.nets[n - 1].centre_angles(i)) if n <= MESH_STAGE_MAX else NORTH
        return Diagnostic(symmetric_capacity_of_cap(centre, log_radius=-delta * 2.0 ** n,
                                                    method="envelope"))

    def running_inf(self, j, horizon=None, mesh_size=20_000):
        """phi_j^- = floor: the next complete stage lies in the tail and covers X."""
        n, _ = self.stage_of(j)
        net = self.nets[n]  # stage n + 1
        if not net.verify_cover():
            raise AssertionError("stage cover inequality failed")
        cert = {"stage": n + 1, "members": net.count,
                "log_covering_radius_bound": net.log_covering_radius_bound,
                "plateau_log_radius": net.plateau_log_radius}
        flags = ("cover verified by ring-net inequality",)
        if n + 1 <= MESH_STAGE_MAX:
            z = sphere_mesh(mesh_size, seed=n)
            theta = 2 * np.arccos(np.clip(np.abs(z[:, 0]), 0, 1))
            azim = np.angle(z[:, 1]) - np.angle(z[:, 0])
            idx = net.nearest_centre(theta, azim)
            ct, ca = net.centre_angles_array(idx)
            centres = np.stack([np.cos(ct / 2) + 0j, np.sin(ct / 2) * np.exp(1j * ca)], axis=1)
            d = np.abs(z[:, 0] * centres[:, 1] - z[:, 1] * centres[:, 0]) / np.linalg.norm(z, axis=1)
            with np.errstate(divide="ignore"):
                vals = np.maximum(np.log(d) * 2.0 ** -(n + 1), self.floor)
            cert["mesh_points"] = int(mesh_size)
            cert["mesh_max_deviation"] = float(np.max(np.abs(vals - self.floor)))
            flags += ("cover checked on a sphere mesh",)
        env = T.project_envelope(T.ObstacleFunction1D.from_phi(
            self.grid, np.full(self.grid.n_nodes, self.floor)))
        return RunningInf(env, False, certified=True, certificate=cert, flags=flags)

    def energy_distance(self, chi, j):
        return T.quasi_distance_I_chi(chi, self.toric_member(j), self._limit)

    def declared_minorant(self):
        return T.ToricPotential1D.constant(self.floor, self.grid)

    def truncated(self, C):
        return ExtractionFamily(self.stage_count, floor=max(self.floor, -float(C)))


def extraction_family(stage_count) -> ExtractionFamily:
    return ExtractionFamily(stage_count)


class InftyFamily(SequenceFamily):
    """phi_j = log|z_1 - tau_j z_0| - log|z| with tau_j = 2^-j, limit log|z_1| - log|z|.

    phi_j = G_{p_j} + log sqrt(1 + tau_j^2) with p_j = [1 : tau_j].
    """

    model = "atoms_p1"

    def __init__(self, floor=None, theta_points=512):
        recipe = {"type": "infty"}
        if floor is not None:
            recipe["truncate"] = -float(floor)
        super().__init__("infty", recipe, {"ground_truth": {
            "capacity": "converges", "quasi_monotone": "diverges"}})
        self.floor = floor
        self.theta_points = theta_points
        self.grid = Grid1D.with_extension(Grid1D.default(), left=-400.0)
        lim = AtomPotential(((NORTH, 1.0),), 0.0, floor)
        self._limit = lim.toric_representative(self.grid)

    @property
    def declared_limit(self):
        return self._limit

    @staticmethod
    def tau(j):
        return 2.0 ** -j

    def member(self, j) -> AtomPotential:
        tau = self.tau(j)
        p = np.array([1.0, tau]) / math.hypot(1.0, tau)
        return AtomPotential(((p, 1.0),), 0.5 * math.log1p(tau * tau), self.floor)

    def l1_distance(self, j):
        """Mesh-approximate int |phi_j - phi| dMA(0) in polar coordinates w = z_1/z_0."""
        tau = self.tau(j)
        s = np.linspace(-30.0, 30.0, 6001)          # s = log(|w| / tau)
        th = (np.arange(self.theta_points) + 0.5) * 2 * np.pi / self.theta_points
        w = np.exp(s)[:, None] * np.exp(1j * th)[None, :]
        diff = np.log(np.abs(1.0 - 1.0 / w))        # phi_j - phi without floors
        if self.floor is not None:
            base = (s[:, None] + math.log(tau)) - T.f_omega(s[:, None] + math.log(tau))
            a = np.maximum(base + diff, self.floor)
            b = np.maximum(base, self.floor)
            diff = a - b
        inner = np.mean(np.abs(diff), axis=1)
        dens = T.reference_density(s + math.log(tau))
        return Diagnostic(float(np.trapezoid(inner * dens, s)), ("mesh-approximate",))

    def deviation_capacity(self, j, delta):
        """Upper bound: the deviation set lies in |w| <= tau / (1 - e^{-delta})."""
        t_edge = math.log(self.tau(j)) - math.log(-math.expm1(-delta))
        grid = _cap_grid(round(t_edge, 12))
        cap = T.capacity([(-np.inf, t_edge)], grid, method="envelope")
        return Diagnostic(cap, ("upper bound by a disc enclosure",))

    def running_inf(self, j, horizon=None):
        if self.floor is not None:
            return None
        res = collapse_test([self.member(j), self.member(j + 1)])
        return RunningInf(None, res.collapsed, certified=True, certificate=res.to_dict(),
                          flags=("two unit Lelong numbers at distinct points",))

    def energy_distance(self, chi, j):
        # unit Lelong numbers put the members outside every E_chi; the
        # truncated members are not toric and no energy reduction is offered
        return None

    def truncated(self, C):
        return InftyFamily(floor=-float(C), theta_points=self.theta_points)
