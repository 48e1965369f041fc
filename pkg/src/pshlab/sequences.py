"""Sequence families: the common interface the convergence classifiers consume.

A family exposes per-index diagnostics rather than raw members, because some
families (atom potentials centred at many points of the sphere) are not toric
yet all their diagnostics reduce exactly to toric computations.  Toric
families get every diagnostic for free from :class:`ToricFamily`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import toric1d as T
from .errors import DomainError
from .measure_core import Grid1D, Weight, integrate

__all__ = ["Diagnostic", "RunningInf", "SequenceFamily", "ToricFamily", "doubling_ladder"]


@dataclass(frozen=True)
class Diagnostic:
    value: float
    flags: tuple = ()


@dataclass(frozen=True)
class RunningInf:
    """phi_j^- or a collapse report.

    ``certified`` is True when the envelope was computed from an exact
    description of the whole tail (not just the finitely many members that
    were generated).  ``lower_bound`` optionally holds a declared minorant of
    the true phi_j^-.
    """

    potential: Optional[T.ToricPotential1D]
    collapsed: bool = False
    certified: bool = False
    certificate: Optional[dict] = None
    lower_bound: Optional[T.ToricPotential1D] = None
    flags: tuple = ()


def doubling_ladder(j_max, j_min=8):
    if j_max < j_min:
        raise DomainError(f"j_max must be at least {j_min}")
    out, j = [], j_min
    while j <= j_max:
        out.append(j)
        j *= 2
    return out


class SequenceFamily:
    """Base class.  Indices are 1-based; ``recipe`` is a JSON-ready dict."""

    kind = "parametric"
    model = "toric1d"

    def __init__(self, name, recipe, tail_metadata=None):
        self.name = name
        self.recipe = dict(recipe)
        self.tail_metadata = dict(tail_metadata or {})

    # -- to be provided by subclasses ---------------------------------------
    @property
    def declared_limit(self) -> T.ToricPotential1D:
        raise NotImplementedError

    def member(self, j):
        raise NotImplementedError

    def ladder(self, j_max):
        return doubling_ladder(j_max)

    def l1_distance(self, j) -> Diagnostic:
        raise NotImplementedError

    def deviation_capacity(self, j, delta) -> Diagnostic:
        raise NotImplementedError

    def running_inf(self, j, horizon) -> Optional[RunningInf]:
        return None

    def energy_distance(self, chi: Weight, j) -> Optional[float]:
        """I_chi(phi_j, phi) or None when a member lies outside E_chi."""
        return None

    def truncated(self, C) -> "SequenceFamily":
        raise NotImplementedError

    def declared_minorant(self) -> Optional[T.ToricPotential1D]:
        return None

    def label(self, j):
        """JSON-safe name for index j (huge indices are summarised)."""
        return j if abs(j) < 2 ** 53 else f"~2^{j.bit_length() - 1}"

    def to_dict(self):
        return dict(self.recipe)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


def _abs_diff(u, v):
    d = np.abs(u.phi_values - v.phi_values)
    pu, pv = u.pole_phi_values, v.pole_phi_values
    with np.errstate(invalid="ignore"):
        dp = np.where(np.isfinite(pu) & np.isfinite(pv), np.abs(pu - pv), np.inf)
    return d, dp


class ToricFamily(SequenceFamily):
    """Family given by ``generator(j) -> ToricPotential1D`` on a shared grid.

    Optional hooks: ``inf_tail(j) -> ObstacleFunction1D`` describing the
    exact pointwise infimum over the whole tail ell >= j, and
    ``inf_lower_bound(j) -> ToricPotential1D``, a declared minorant of it.
    """

    def __init__(self, name, recipe, grid: Grid1D, generator: Callable,
                 limit: T.ToricPotential1D, tail_metadata=None, inf_tail=None,
                 inf_lower_bound=None, minorant=None, kind="parametric",
                 capacity_method="envelope"):
        super().__init__(name, recipe, tail_metadata)
        self.grid = grid
        self._gen = generator
        self._limit = limit
        self._inf_tail = inf_tail
        self._inf_lower = inf_lower_bound
        self._minorant = minorant
        self.kind = kind
        self.capacity_method = capacity_method
        self._cache = {}

    @property
    def declared_limit(self):
        return self._limit

    def member(self, j):
        if j < 1:
            raise DomainError("family indices start at 1")
        if j not in self._cache:
            self._cache[j] = self._gen(j)
        return self._cache[j]

    def l1_distance(self, j):
        d, dp = _abs_diff(self.member(j), self._limit)
        # MA(0) does not charge the poles, so the pole values never matter
        return Diagnostic(integrate(d, T.reference_measure(self.grid), np.nan_to_num(dp, posinf=0.0)))

    def deviation_capacity(self, j, delta):
        d, dp = _abs_diff(self.member(j), self._limit)
        mask = d >= delta
        flags = ()
        if (mask[0] and dp[0] >= delta) or (mask[-1] and dp[1] >= delta):
            flags = ("deviation persists at a pole",)
        return Diagnostic(T.capacity_of_nodes(mask, self.grid, self.capacity_method), flags)

    def running_inf(self, j, horizon):
        lower = self._inf_lower(j) if self._inf_lower else None
        if self._inf_tail is not None:
            env = T.project_envelope(self._inf_tail(j))
            return RunningInf(env, env.is_minus_infinity, certified=True, lower_bound=lower)
        members = [self.member(k) for k in range(j, max(j, horizon) + 1)]
        env = T.running_inf_envelope(members, 0)
        return RunningInf(env, env.is_minus_infinity, certified=False, lower_bound=lower,
                          flags=(f"finite tail {j}..{max(j, horizon)}: upper-biased",))

    def energy_distance(self, chi, j):
        u = self.member(j)
        if not (T.membership_E_chi(chi, u) and T.membership_E_chi(chi, self._limit)):
            return None
        return T.quasi_distance_I_chi(chi, u, self._limit)

    def declared_minorant(self):
        return self._minorant

    def truncated(self, C):
        floor = T.ToricPotential1D.constant(-float(C), self.grid)
        cut = lambda p: T.pointwise_max([p, floor])
        recipe = dict(self.recipe, truncate=float(C))
        return ToricFamily(f"max({self.name}, -{C:g})", recipe, self.grid,
                           lambda j: cut(self._gen(j)), cut(self._limit),
                           self.tail_metadata, kind=self.kind,
                           capacity_method=self.capacity_method)
