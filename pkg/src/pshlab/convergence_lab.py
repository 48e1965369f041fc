"""Convergence classifiers, constructive extractions and the MA-equation solver.

Every classifier reads a diagnostic along a doubling ladder of indices
(j = 8, 16, ..., j_max unless the family supplies its own ladder) and applies
:func:`decide`.  All decision thresholds live in the constants below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solveh_banded
from scipy.optimize import brentq

from . import toric1d as T
from .atoms_p1 import ExtractionFamily, InftyFamily
from .errors import (ConvergenceFailure, DomainError, ExtractionExhausted,
                     PreconditionError)
from .measure_core import Grid1D, MAMeasure, Weight, integrate
from .sequences import Diagnostic, RunningInf, SequenceFamily, ToricFamily, doubling_ladder

__all__ = [
    "ConvergenceVerdict",
    "ChainReport",
    "ExtractionResult",
    "CauchyResult",
    "decide",
    "classify_L1",
    "classify_capacity",
    "classify_quasi_monotone",
    "classify_energy",
    "theorem_chain",
    "extract_quasi_monotone",
    "energy_cauchy_extract",
    "solve_ma_equation",
    "ma_residual",
    "family_from_recipe",
    "SCHEDULES",
]

# decision rule ------------------------------------------------------------
TOL = 1e-6               # a diagnostic at or below this counts as zero
CONVERGE_RATIO = 0.85    # geometric-mean decay per ladder step needed to converge
DIVERGE_RATIO = 0.95     # decay no faster than this ...
DIVERGE_FLOOR = 10 * TOL  # ... while staying above this means divergence
TAIL_STEPS = 3           # ladder steps the ratio is averaged over
MONOTONE_SLACK = 1e-12   # relative slack when testing a nonincreasing tail
NODE_TOL = 1e-8          # node-wise tolerance for minorant checks
LOCAL_NEWTON_RESIDUAL = 1e-6  # below this the MA solver takes undamped steps

DEFAULT_DELTAS = (0.5, 0.1, 0.02)
DEFAULT_J_MAX = 256


def decide(values):
    """Classify a diagnostic sequence sampled along a doubling ladder.

    converges    last value <= TOL, or the last TAIL_STEPS steps are
                 nonincreasing with geometric-mean ratio <= CONVERGE_RATIO;
    diverges     that ratio is >= DIVERGE_RATIO and the tail stays above
                 DIVERGE_FLOOR;
    inconclusive otherwise (including too few samples).

    Halving per doubling, which the 1/j-type families only approach from
    above, sits well inside the convergence band.
    """
    v = np.asarray(values, dtype=float)
    info = {"ratio": None}
    if v.size and np.isfinite(v[-1]) and v[-1] <= TOL:
        return "converges", info
    if v.size < TAIL_STEPS + 1 or not np.all(np.isfinite(v[-TAIL_STEPS - 1:])):
        return "inconclusive", info
    tail = v[-TAIL_STEPS - 1:]
    if tail[0] <= 0:
        ratio = np.inf
    else:
        ratio = float((max(tail[-1], 0.0) / tail[0]) ** (1.0 / TAIL_STEPS))
    info["ratio"] = ratio
    nonincreasing = bool(np.all(np.diff(tail) <= MONOTONE_SLACK * np.abs(tail[:-1]) + 1e-300))
    if nonincreasing and ratio <= CONVERGE_RATIO:
        return "converges", info
    if ratio >= DIVERGE_RATIO and tail.min() > DIVERGE_FLOOR:
        return "diverges", info
    return "inconclusive", info


@dataclass
class ConvergenceVerdict:
    mode: str
    status: str
    evidence: list
    flags: list = field(default_factory=list)
    certified: Optional[bool] = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"mode": self.mode, "status": self.status, "evidence": self.evidence,
                "flags": self.flags, "certified": self.certified, "details": self.details}


def _jstr(j, seq=None):
    """Indices beyond 2^53 are reported as short strings to stay JSON-safe."""
    if seq is not None:
        return seq.label(j)
    return j if abs(j) < 2 ** 53 else f"~2^{j.bit_length() - 1}"


def _ladder(seq: SequenceFamily, j_max):
    return seq.ladder(j_max)


def classify_L1(seq: SequenceFamily, j_max=DEFAULT_J_MAX) -> ConvergenceVerdict:
    ladder = _ladder(seq, j_max)
    rows, vals, flags = [], [], set()
    for j in ladder:
        d = seq.l1_distance(j)
        rows.append({"j": _jstr(j, seq), "value": d.value})
        vals.append(d.value)
        flags.update(d.flags)
    status, info = decide(vals)
    return ConvergenceVerdict("L1", status, rows, sorted(flags), details=info)


def classify_capacity(seq: SequenceFamily, j_max=DEFAULT_J_MAX, deltas=DEFAULT_DELTAS):
    if not deltas or any(d <= 0 for d in deltas):
        raise DomainError("deltas must be positive")
    ladder = _ladder(seq, j_max)
    rows, flags, per_delta = [], set(), {}
    for delta in deltas:
        vals = []
        for j in ladder:
            d = seq.deviation_capacity(j, delta)
            rows.append({"j": _jstr(j, seq), "delta": delta, "value": d.value})
            vals.append(d.value)
            flags.update(d.flags)
        per_delta[str(delta)] = decide(vals)[0]
    statuses = set(per_delta.values())
    if statuses == {"converges"}:
        status = "converges"
    elif "diverges" in statuses:
        status = "diverges"
    else:
        status = "inconclusive"
    return ConvergenceVerdict("capacity", status, rows, sorted(flags), details={"per_delta": per_delta})


def _gap(limit, pot):
    d = np.abs(limit.phi_values - pot.phi_values)
    return integrate(d, T.reference_measure(limit.grid))


def classify_quasi_monotone(seq: SequenceFamily, j_max=DEFAULT_J_MAX, horizon=None):
    """Running-inf envelopes along the ladder; gap = int |phi - phi_j^-| dMA(0).

    The L^1(MA(0)) gap replaces sup(phi - phi_j^-), which is infinite for
    unbounded limits.  Finite-tail envelopes overestimate phi_j^-; verdicts
    built on them are flagged and left uncertified.
    """
    ladder = _ladder(seq, j_max)
    horizon = horizon or 2 * max(ladder)
    limit = seq.declared_limit
    rows, vals, lower_vals, flags = [], [], [], set()
    envs, certified = [], True
    for j in ladder:
        ri = seq.running_inf(j, horizon)
        if ri is None:
            return ConvergenceVerdict("quasi_monotone", "inconclusive", rows,
                                      sorted(flags | {"running-inf envelope unavailable"}), False)
        flags.update(ri.flags)
        if ri.collapsed:
            rows.append({"j": _jstr(j, seq), "value": math.inf, "collapsed": True})
            return ConvergenceVerdict("quasi_monotone", "diverges", rows, sorted(flags), True,
                                      {"collapse_certificate": ri.certificate, "collapsed_at": _jstr(j, seq)})
        g = _gap(limit, ri.potential)
        row = {"j": _jstr(j, seq), "value": g}
        if ri.lower_bound is not None:
            row["certified_upper"] = _gap(limit, ri.lower_bound)
            lower_vals.append(row["certified_upper"])
        rows.append(row)
        vals.append(g)
        envs.append(ri.potential)
        certified &= ri.certified or ri.lower_bound is not None
    worst = 0.0
    for a, b in zip(envs, envs[1:]):
        worst = max(worst, float(np.max(a.f_values - b.f_values)))
    if worst > NODE_TOL:
        flags.add(f"running-inf envelopes not nondecreasing (by {worst:.3g})")
    status, info = decide(vals)
    if status == "converges" and lower_vals:
        # the certified side must agree before convergence is claimed
        status = decide(lower_vals)[0]
    info["monotonicity_defect"] = worst
    return ConvergenceVerdict("quasi_monotone", status, rows, sorted(flags), bool(certified), info)


def _minorant_report(chi, seq, ladder, horizon):
    """Common E_chi minorant: a declared one, else a certified phi_j^-."""
    cands = []
    dec = seq.declared_minorant()
    if dec is not None:
        cands.append(("declared", dec, True))
    ri = seq.running_inf(ladder[0], horizon)
    if ri is not None and not ri.collapsed and ri.potential is not None:
        cands.append(("running_inf", ri.potential, ri.certified))
    for source, pot, certified in cands:
        m = T.membership_E_chi(chi, pot)
        if m.member:
            # A finite grid hides slowly divergent tails (an envelope like
            # -sqrt|g| has finite truncated energy), so only a declared,
            # bounded minorant counts as certified.
            bounded = np.isfinite(pot.inf_phi())
            ok = bool(certified and source == "declared" and bounded)
            return {"found": True, "source": source, "certified": ok,
                    "membership": m.to_dict(), "from_j": _jstr(ladder[0], seq)}
    return {"found": False, "certified": False}


def classify_energy(chi: Weight, seq: SequenceFamily, j_max=DEFAULT_J_MAX, horizon=None):
    ladder = _ladder(seq, j_max)
    rows, vals, flags = [], [], []
    for j in ladder:
        v = seq.energy_distance(chi, j)
        if v is None:
            flags.append(f"j={_jstr(j, seq)}: member or limit outside E_chi")
            rows.append({"j": _jstr(j, seq), "value": None})
        else:
            rows.append({"j": _jstr(j, seq), "value": v})
            vals.append(v)
    if flags:
        status, info = "inconclusive", {}
    else:
        status, info = decide(vals)
    info["minorant"] = _minorant_report(chi, seq, ladder, horizon or 2 * max(ladder))
    info["chi"] = chi.to_spec()
    return ConvergenceVerdict("energy_chi", status, rows, flags, details=info)


@dataclass
class ChainReport:
    family: str
    verdicts: dict
    minorant_certified: bool
    violations: list

    def to_dict(self):
        return {"family": self.family, "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
                "minorant_certified": self.minorant_certified, "violations": self.violations}


def theorem_chain(seq: SequenceFamily, j_max=DEFAULT_J_MAX, deltas=DEFAULT_DELTAS,
                  chi: Optional[Weight] = None) -> ChainReport:
    """Run the four classifiers and check the three implications.

    (1) quasi-monotone => capacity; (2) capacity and a certified E^1
    minorant => energy (chi = power(1)); (3) energy => capacity.
    Inconclusive verdicts never count as violations.
    """
    chi = chi or Weight.power(1)
    v = {"L1": classify_L1(seq, j_max),
         "capacity": classify_capacity(seq, j_max, deltas),
         "quasi_monotone": classify_quasi_monotone(seq, j_max),
         "energy_chi": classify_energy(chi, seq, j_max)}
    cap, qm, en = v["capacity"].status, v["quasi_monotone"].status, v["energy_chi"].status
    minorant = bool(v["energy_chi"].details["minorant"].get("certified"))
    bad = []
    if qm == "converges" and cap == "diverges":
        bad.append("quasi-monotone convergence without capacity convergence")
    if cap == "converges" and minorant and en == "diverges":
        bad.append("capacity convergence above an E^1 minorant without energy convergence")
    if en == "converges" and cap == "diverges":
        bad.append("energy convergence without capacity convergence")
    return ChainReport(seq.name, v, minorant, bad)


# --------------------------------------------------------------------------
# constructive proofs

def _combine(parts, grid, shift=0.0):
    """sum_k w_k phi_k + shift as a potential (weights sum to at most 1)."""
    fo = T._reference_samples(grid)
    total = sum(w for w, _ in parts)
    if total > 1 + 1e-12:
        raise DomainError("weights exceed 1")
    f = (1 - total) * fo + shift
    left = 0.0
    right = 1 - total
    for w, p in parts:
        f = f + w * p.f_values
        left += w * p.slope_left
        right += w * p.slope_right
    return T.ToricPotential1D(grid, f, left, min(1.0, right))


@dataclass
class ExtractionResult:
    indices: list
    minorants: list
    deviation_caps: list
    below_margin: float
    monotone_margin: float
    gaps: list

    @property
    def verified(self):
        return self.below_margin >= -NODE_TOL and self.monotone_margin >= -NODE_TOL

    def to_dict(self):
        return {"indices": self.indices, "deviation_caps": self.deviation_caps,
                "below_margin": self.below_margin, "monotone_margin": self.monotone_margin,
                "gaps": self.gaps, "verified": self.verified}


def _toric_candidates(seq, j_max):
    if isinstance(seq, ExtractionFamily):
        return [(j, seq.toric_member(j)) for j in seq.ladder()]
    if not isinstance(seq, ToricFamily):
        raise DomainError("extraction needs toric members")
    return [(j, seq.member(j)) for j in range(1, j_max + 1)]


def extract_quasi_monotone(seq: SequenceFamily, j_max=DEFAULT_J_MAX, levels=3,
                           method="envelope") -> ExtractionResult:
    """Extract a subsequence with explicit increasing minorants.

    With delta_j = 2^{-j-1}/(1-2^{-j}), eps_j = 2^{-2(j+1)}, A_j = 2^{j+1}:
    pick k_1 < k_2 < ... with Cap{|phi_{k_j} - phi_{k_{j+1}}| >= delta_j} <=
    eps_j - eps_{j+1}, let h_j be the envelope of (-A_j on F_j, 0 elsewhere)
    with F_j the union of the later exceptional sets, and return
    psi_j = max((1-2^{-j}) phi_{k_j} + sum_{l>=j} 2^{-l-1} h_l - 2^{-j+1}, -1).
    """
    cands = _toric_candidates(seq, j_max)
    limit = seq.declared_limit
    grid = limit.grid
    for j, p in cands:
        v = np.concatenate([p.phi_values, p.pole_phi_values])
        if np.any(v < -1 - 1e-12) or np.any(v > 1e-12):
            raise PreconditionError(f"member {_jstr(j, seq)} is not between -1 and 0")
    delta = lambda j: 2.0 ** (-j - 1) / (1 - 2.0 ** -j)
    eps = lambda j: 2.0 ** (-2 * (j + 1))
    cap = lambda mask: T.capacity_of_nodes(mask, grid, method)

    chosen, pos = [], 0
    for lev in range(1, levels + 2):
        budget = 0.5 * (eps(lev) - eps(lev + 1))
        while pos < len(cands):
            j, p = cands[pos]
            pos += 1
            if cap(np.abs(p.phi_values - limit.phi_values) >= 0.5 * delta(lev)) <= budget:
                chosen.append((j, p))
                break
        else:
            raise ExtractionExhausted(f"no candidate meets level {lev} within the available indices")
    masks, caps = [], []
    for lev in range(1, levels + 1):
        a, b = chosen[lev - 1][1], chosen[lev][1]
        E = np.abs(a.phi_values - b.phi_values) >= delta(lev)
        c = cap(E)
        if c > eps(lev) - eps(lev + 1) + 1e-12:
            raise ExtractionExhausted(f"level {lev}: exceptional set too large ({c:.3g})")
        masks.append(E)
        caps.append(c)
    fo = T._reference_samples(grid)
    hs = []
    for lev in range(1, levels + 1):
        F = np.any(masks[lev - 1:], axis=0)
        if F.any():
            h = T.project_envelope(T.ObstacleFunction1D(grid, np.where(F, fo - 2.0 ** (lev + 1), fo)))
        else:
            h = T.ToricPotential1D.reference(grid)
        hs.append(h)
    floor = T.ToricPotential1D.constant(-1.0, grid)
    psis = []
    for lev in range(1, levels + 1):
        parts = [(1 - 2.0 ** -lev, chosen[lev - 1][1])]
        parts += [(2.0 ** (-l - 1), hs[l - 1]) for l in range(lev, levels + 1)]
        raw = _combine(parts, grid, shift=-(2.0 ** (-lev + 1)))
        psis.append(T.pointwise_max([raw, floor]))
    below = min(float(np.min(chosen[k][1].f_values - psis[k].f_values)) for k in range(levels))
    mono = min([float(np.min(b.f_values - a.f_values)) for a, b in zip(psis, psis[1:])] or [0.0])
    gaps = [_gap(limit, p) for p in psis]
    return ExtractionResult([seq.label(j) for j, _ in chosen], psis, caps, below, mono, gaps)


@dataclass
class CauchyResult:
    minorants: list
    distances: list
    kappa: float
    bound_ok: list
    common_minorant: T.ToricPotential1D
    membership: T.Membership
    minorant_margin: float

    def to_dict(self):
        return {"distances": self.distances, "kappa": self.kappa, "bound_ok": self.bound_ok,
                "membership": self.membership.to_dict(), "minorant_margin": self.minorant_margin}


def energy_cauchy_extract(chi: Weight, members: Sequence[T.ToricPotential1D], j_max=8,
                          fit_at=2) -> CauchyResult:
    """Minorants phi_j^- = lim_k P(min_{j<=l<=j+k} phi_l) of a Cauchy sequence.

    ``members[0]`` is phi_1.  Requires I_chi(phi_j, phi_{j+1}) <= 2^{-j};
    checks that the partial envelopes decrease in k, fits kappa from
    I_chi(phi_j, phi_j^-) <= kappa 2^{-j+1} at j = ``fit_at`` and validates
    it up to ``j_max``.
    """
    members = list(members)
    n = len(members)
    if n < j_max + 1:
        raise DomainError("need members beyond j_max to form the tails")
    for j in range(1, n):
        inc = T.quasi_distance_I_chi(chi, members[j - 1], members[j])
        if inc > 2.0 ** -j * (1 + 1e-9):
            raise PreconditionError(f"increment at j={j} is {inc:.3g} > 2^-{j}")
    mins, dists = [], []
    for j in range(1, j_max + 1):
        prev = None
        for k in range(0, n - j + 1):
            env = T.project_envelope(T.pointwise_min(members[j - 1:j + k]))
            if prev is not None and np.any(env.f_values > prev.f_values + NODE_TOL):
                raise PreconditionError(f"partial envelopes increase at j={j}, k={k}")
            prev = env
        mins.append(prev)
        dists.append(T.quasi_distance_I_chi(chi, members[j - 1], prev))
    kappa = dists[fit_at - 1] / 2.0 ** (-fit_at + 1)
    ok = [bool(dists[j - 1] <= kappa * 2.0 ** (-j + 1) * (1 + 1e-9)) for j in range(fit_at + 1, j_max + 1)]
    psi = mins[0]
    margin = min(float(np.min(m.f_values - psi.f_values)) for m in members)
    return CauchyResult(mins, dists, kappa, ok, psi, T.membership_E_chi(chi, psi), margin)


# --------------------------------------------------------------------------
# MA equation

def ma_residual(phi: T.ToricPotential1D, mu: MAMeasure):
    """Total variation of MA(phi) - e^phi mu, node by node."""
    m = T._node_masses(phi)
    return float(np.sum(np.abs(m - np.exp(phi.phi_values) * mu.node_masses())))


def _stiffness_banded(h, extra):
    """Upper banded form of L + diag(extra), L the 1D stiffness matrix."""
    n = h.size + 1
    ab = np.zeros((2, n))
    diag = np.zeros(n)
    diag[:-1] += 1 / h
    diag[1:] += 1 / h
    ab[1] = diag + extra
    ab[0, 1:] = -1 / h
    return ab


def solve_ma_equation(mu: MAMeasure, tol=1e-9, init=None, max_iter=200) -> T.ToricPotential1D:
    """Solve MA(phi) = e^phi mu on the grid of ``mu`` by damped Newton.

    The discrete equation is the optimality condition of the strictly convex
    functional  1/2 sum h_i s_i^2 - f_N + sum mu_i e^{f_i - f_omega_i}, whose
    Hessian is tridiagonal.  ``init`` is a starting potential (default 0).
    """
    grid = mu.grid
    if grid is None:
        raise DomainError("the solver works on 1D measures")
    if np.any(mu.pole_masses > 0):
        raise DomainError("mu must not charge the poles")
    if abs(mu.total_mass() - 1) > T.MASS_TOL:
        raise DomainError("mu must be a probability measure")
    w = mu.node_masses()
    h = grid.spacing
    fo = T._reference_samples(grid)
    f = (init.f_values.copy() if init is not None else fo.copy())

    def energy(f):
        s = np.diff(f) / h
        return 0.5 * np.dot(h, s * s) - f[-1] + np.dot(w, np.exp(f - fo))

    def gradient(f):
        s = np.concatenate([[0.0], np.diff(f) / h, [1.0]])
        return -np.diff(s) + w * np.exp(f - fo)

    val = energy(f)
    stalled, best = 0, np.inf
    for it in range(max_iter):
        g = gradient(f)
        res = float(np.sum(np.abs(g)))
        if res <= tol:
            return T.ToricPotential1D(grid, f, 0.0, 1.0)
        stalled = stalled + 1 if (res < LOCAL_NEWTON_RESIDUAL and res >= best) else 0
        best = min(best, res)
        if stalled >= 5:
            raise ConvergenceFailure("residual stagnated above tol", residual=res, iterations=it)
        step = solveh_banded(_stiffness_banded(h, w * np.exp(f - fo)), -g)
        if res < LOCAL_NEWTON_RESIDUAL:
            # inside the quadratic basin the objective is flat to rounding,
            # so full steps are judged by the residual alone
            f = f + step
            val = energy(f)
            continue
        t = 1.0
        while True:
            cand = f + t * step
            cv = energy(cand)
            if cv <= val + 1e-4 * t * np.dot(g, step) or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            raise ConvergenceFailure("line search stalled", residual=res, iterations=it)
        f, val = cand, cv
    raise ConvergenceFailure("Newton iteration limit reached",
                             residual=float(np.sum(np.abs(gradient(f)))), iterations=max_iter)


# --------------------------------------------------------------------------
# family recipes

SCHEDULES = {
    "1": lambda j: 1.0,
    "1/j": lambda j: 1.0 / j,
    "2^-j": lambda j: 2.0 ** -j,
    "4^-j": lambda j: 4.0 ** -j,
    "j": lambda j: float(j),
    "j^2": lambda j: float(j) ** 2,
}


def _schedule(spec):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return lambda j: float(spec)
    if spec in SCHEDULES:
        return SCHEDULES[spec]
    raise DomainError(f"unknown schedule {spec!r}; use a number or one of {sorted(SCHEDULES)}")


def _g(grid):
    return grid.nodes - T._reference_samples(grid)


def _trunc_log(grid, C):
    return T.truncated_log_potential(grid, 1.0, C)


def _energy_family(recipe):
    eps_s, C_s = _schedule(recipe["eps"]), _schedule(recipe["C"])
    j_max = int(recipe.get("j_max", DEFAULT_J_MAX))
    ladder = doubling_ladder(j_max)
    Cs = [C_s(j) for j in range(1, j_max + 1)]
    kinks = [T.log_kink_location(c) for c in Cs if c > 0]
    grid = Grid1D.with_extension(Grid1D.default(), left=min(-40.0, -max(Cs) - 40.0), extra=kinks)
    limit = T.ToricPotential1D.reference(grid)
    g = _g(grid)
    gmax = float(-g.min())
    named = all(isinstance(recipe[k], str) for k in ("eps", "C"))

    def gen(j):
        return T.truncated_log_potential(grid, eps_s(j), C_s(j))

    def inf_tail(j):
        best = np.zeros_like(g)
        ell, horizon = j, j + 4096
        while ell <= horizon:
            block = np.arange(ell, min(ell + 256, horizon + 1))
            e = np.array([eps_s(int(k)) for k in block])
            c = np.array([C_s(int(k)) for k in block])
            vals = e[:, None] * np.maximum(g[None, :], -c[:, None])
            best = np.minimum(best, vals.min(axis=0))
            if c[-1] >= gmax and horizon > block[-1]:
                horizon = int(block[-1])
            ell = int(block[-1]) + 1
        return T.ObstacleFunction1D.from_phi(grid, best)

    minorant = None
    if named:
        # every member is >= -eps_j C_j; the named schedules make this
        # product either eventually nonincreasing or unbounded
        eC = np.array([eps_s(j) * C_s(j) for j in range(1, 4 * j_max)])
        tail = eC[eC.size // 2:]
        if np.all(np.diff(tail) <= 0):
            minorant = T.ToricPotential1D.constant(-float(eC.max()), grid)
    name = f"energy(eps={recipe['eps']}, C={recipe['C']})"
    return ToricFamily(name, recipe, grid, gen, limit, {"schedules": [recipe["eps"], recipe["C"]]},
                       inf_tail=inf_tail if named else None, minorant=minorant)


def _sandwich_family(recipe):
    grid = Grid1D.with_extension(Grid1D.default(),
                                 extra=[T.log_kink_location(2.0), T.log_kink_location(5.0)])
    phi = _trunc_log(grid, 2.0).scaled(0.5)
    psi = _trunc_log(grid, 5.0).shifted(-1.0)
    eps = _schedule(recipe.get("eps", "1/j"))

    def lower(j):
        e = eps(j)
        return _combine([(1 - e, phi), (e, psi)], grid)

    def gen(j):
        bump = phi.shifted(0.5 * eps(j) * math.cos(j))
        return T.pointwise_max([lower(j), bump])

    return ToricFamily("sandwich", recipe, grid, gen, phi,
                       {"lower_bound": "(1-eps_j) phi + eps_j psi"}, inf_lower_bound=lower,
                       minorant=psi)


def _monotone_family(recipe):
    grid = Grid1D.with_extension(Grid1D.default(), extra=[T.log_kink_location(2.0)])
    psi = _trunc_log(grid, 2.0)
    obst = T.ObstacleFunction1D.from_potential(psi)
    return ToricFamily("monotone", recipe, grid, lambda j: psi.scaled(1 - 1.0 / j), psi,
                       {"monotone": "decreasing"}, inf_tail=lambda j: obst, minorant=psi)


def _geometric_family(recipe):
    base = float(recipe.get("base", 2.0))
    C = float(recipe.get("C", 1.0))
    grid = Grid1D.with_extension(Grid1D.default(), extra=[T.log_kink_location(C)])
    psi = _trunc_log(grid, C)
    obst = T.ObstacleFunction1D.from_potential(psi)
    return ToricFamily(f"geometric({base:g})", recipe, grid,
                       lambda j: psi.scaled(1 - base ** -j), psi, {"monotone": "decreasing"},
                       inf_tail=lambda j: obst, minorant=psi)


def _tuned_family(recipe):
    """phi_j = eps_j max(g, -C) with eps_1 = 0 and I_chi(phi_j, phi_{j+1}) = c 2^-j.

    The eps_j are found by root finding on the computed I_chi, for j < n.
    """
    c = float(recipe.get("c", 0.25))
    C = float(recipe.get("C", 1.0))
    n = int(recipe.get("n", 24))
    chi = Weight.from_spec(recipe.get("chi", {"type": "power", "p": 1.0}))
    grid = Grid1D.with_extension(Grid1D.default(), extra=[T.log_kink_location(C)])
    pot = lambda e: T.truncated_log_potential(grid, e, C)
    eps, members = [0.0], [pot(0.0)]
    for j in range(1, n):
        gap = lambda e: T.quasi_distance_I_chi(chi, members[-1], pot(e)) - c * 2.0 ** -j
        if gap(1.0) < 0:
            raise DomainError("increment target unreachable; lower c or raise C")
        e = brentq(gap, eps[-1], 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        eps.append(e)
        members.append(pot(e))

    def gen(j):
        if j > n:
            raise DomainError(f"tuned family only has {n} members")
        return members[j - 1]

    psi = _trunc_log(grid, C)
    return ToricFamily(f"tuned(c={c:g}, C={C:g})", recipe, grid, gen, psi.scaled(eps[-1]),
                       {"increments": "c 2^-j", "eps": eps}, kind="explicit_list")


def _constant_family(recipe):
    grid = Grid1D.default()
    rng = np.random.default_rng(int(recipe.get("seed", 0)))
    psi = T.random_potential(grid, rng, shift=0.0)
    psi = psi.shifted(-psi.sup_phi())
    obst = T.ObstacleFunction1D.from_potential(psi)
    return ToricFamily("constant", recipe, grid, lambda j: psi, psi, {"monotone": "constant"},
                       inf_tail=lambda j: obst, minorant=psi, kind="explicit_list")


_BUILDERS = {
    "energy": _energy_family,
    "sandwich": _sandwich_family,
    "monotone": _monotone_family,
    "geometric": _geometric_family,
    "constant": _constant_family,
    "tuned": _tuned_family,
    "extraction": lambda r: ExtractionFamily(int(r.get("stages", 12))),
    "infty": lambda r: InftyFamily(),
}


def family_from_recipe(recipe) -> SequenceFamily:
    """Build a family from its JSON recipe (``truncate: C`` applies max(., -C))."""
    recipe = dict(recipe)
    kind = recipe.get("type")
    if kind not in _BUILDERS:
        raise DomainError(f"unknown family type {kind!r}")
    trunc = recipe.pop("truncate", None)
    fam = _BUILDERS[kind](recipe)
    return fam.truncated(trunc) if trunc is not None else fam
