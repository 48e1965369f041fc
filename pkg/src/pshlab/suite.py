"""The acceptance checks, runnable from the CLI (paper_suite) and from pytest.

Each ``criterion_k(seed)`` returns a :class:`Check` carrying the measured
value, the tolerance it was held to and enough detail to audit the verdict.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import toric1d as T
from . import toric2d as D
from .atoms_p1 import AtomPotential, ExtractionFamily, InftyFamily, collapse_test, sphere_point
from .convergence_lab import (classify_capacity, classify_energy, classify_quasi_monotone,
                              energy_cauchy_extract, extract_quasi_monotone, family_from_recipe,
                              ma_residual, solve_ma_equation, theorem_chain)
from .errors import ConvergenceFailure
from .measure_core import Grid1D, MAMeasure, Weight

__all__ = ["Check", "CRITERIA", "CHAIN_FAMILIES", "ENERGY_REGIMES", "run_criterion", "run_all",
           "energy_sweep_point"]

ENERGY_REGIMES = [("1/j", "1"), ("1/j", "j"), ("1/j", "j^2"), ("2^-j", "j")]
CHAIN_FAMILIES = (
    [{"type": "constant"}, {"type": "monotone"}, {"type": "sandwich"}]
    + [{"type": "energy", "eps": e, "C": c} for e, c in ENERGY_REGIMES]
    + [{"type": "extraction", "stages": 12}, {"type": "infty"}]
)
SMALL_GRID = Grid1D.uniform(-20.0, 20.0, 1601)


@dataclass
class Check:
    criterion: int
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return (f"criterion {self.criterion:2d} [{mark}] {self.name}: value={self.value:.4g} "
                f"tol={self.tolerance:.3g} ({self.seconds:.1f}s)")

    def to_dict(self):
        return {"criterion": self.criterion, "name": self.name, "passed": self.passed,
                "value": self.value, "tolerance": self.tolerance, "detail": self.detail,
                "seconds": self.seconds}


def _chain_row(recipe):
    rep = theorem_chain(family_from_recipe(recipe), 256)
    return {"family": rep.family, "violations": rep.violations,
            "verdicts": {k: v.status for k, v in rep.verdicts.items()},
            "minorant_certified": rep.minorant_certified}


def criterion_1(seed=0, jobs=1):
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_chain_row, CHAIN_FAMILIES))
    else:
        rows = [_chain_row(r) for r in CHAIN_FAMILIES]
    n = sum(len(r["violations"]) for r in rows)
    return Check(1, "theorem-chain consistency", n == 0, n, 0, {"families": rows})


def criterion_2(seed=0, jobs=1):
    fam = family_from_recipe({"type": "sandwich"})
    caps = {j: fam.deviation_capacity(j, 0.1).value for j in (8, 16, 32, 64)}
    return Check(2, "sandwich: Cap{|phi_j - phi| >= 0.1} at j=64", caps[64] < 1e-4, caps[64], 1e-4,
                 {"caps": caps})


def criterion_3(seed=0, jobs=1):
    fam = ExtractionFamily(12)
    cap = classify_capacity(fam).status
    qm = classify_quasi_monotone(fam)
    err = 0.0
    for j in fam.ladder():
        ri = fam.running_inf(j)
        p = ri.potential
        err = max(err, float(np.max(np.abs(p.phi_values + 1))), float(np.max(np.abs(p.pole_phi_values + 1))))
    ext = extract_quasi_monotone(ExtractionFamily(20), levels=3)
    ok = cap == "converges" and qm.status == "diverges" and err <= 1e-10 and ext.verified
    return Check(3, "extraction: capacity yes, quasi-monotone no, subsequence yes", ok, err, 1e-10,
                 {"capacity": cap, "quasi_monotone": qm.status, "extraction": ext.to_dict()})


def criterion_4(seed=0, jobs=1):
    fam = InftyFamily()
    two = collapse_test([fam.member(2), fam.member(3)])
    rng = np.random.default_rng(seed)
    single = AtomPotential(((sphere_point(rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)), 1.0),),
                           shift=float(rng.normal()))
    one = collapse_test([single])
    ok = two.collapsed and two.required_mass > 1 and not one.collapsed and one.margin >= -1e-9
    return Check(4, "two unit atoms collapse, one does not", ok, two.required_mass, 1.0,
                 {"two_atoms": two.to_dict(), "single_atom": one.to_dict()})


def _energy_normalisation(eps, C, p):
    return eps * (eps * C) ** p + eps ** p


def energy_sweep_point(eps, C, p):
    """I_chi(eps max(g, -C), 0) for chi = power(p)."""
    grid = Grid1D.with_extension(SMALL_GRID, left=-(C + 40.0), extra=[T.log_kink_location(C)])
    phi = T.truncated_log_potential(grid, eps, C)
    return T.quasi_distance_I_chi(Weight.power(p), phi, T.ToricPotential1D.reference(grid))


LOG_SCHED = {"1": lambda j: 0.0, "1/j": lambda j: -np.log(j), "2^-j": lambda j: -j * np.log(2.0),
             "j": lambda j: np.log(j), "j^2": lambda j: 2 * np.log(j)}


def _expected_energy_status(eps, C, p):
    """Sign of eps_j chi(-eps_j C_j) -> 0, read off the log of eps (eps C)^p."""
    log_s = lambda j: LOG_SCHED[eps](j) + p * (LOG_SCHED[eps](j) + LOG_SCHED[C](j))
    lo, hi = log_s(2.0 ** 20), log_s(2.0 ** 30)
    return "converges" if hi < lo - 1 and hi < np.log(1e-3) else "diverges"


def criterion_5(seed=0, jobs=1):
    rows = []
    for p in (0.5, 1.0, 2.0):
        for k in range(0, 9):
            for m in range(0, 11):
                eps, C = 2.0 ** -k, 2.0 ** m
                val = energy_sweep_point(eps, C, p)
                rows.append({"p": p, "eps": eps, "C": C, "I_chi": val,
                             "ratio": val / _energy_normalisation(eps, C, p)})
    r = np.array([row["ratio"] for row in rows])
    kappa = float(max(r.max(), 1 / r.min()))
    verdicts = []
    for p in (0.5, 1.0, 2.0):
        for e, c in ENERGY_REGIMES:
            got = classify_energy(Weight.power(p), family_from_recipe({"type": "energy", "eps": e, "C": c})).status
            verdicts.append({"p": p, "eps": e, "C": c, "status": got,
                             "expected": _expected_energy_status(e, c, p)})
    match = all(v["status"] == v["expected"] for v in verdicts)
    return Check(5, "energy criterion: ratio window and verdict signs", kappa <= 8 and match, kappa, 8.0,
                 {"sweep": rows, "verdicts": verdicts, "normalisation": "eps (eps C)^p + eps^p"})


def _bounded_random(rng, grid):
    u = T.random_potential(grid, rng)
    return u.shifted(-u.sup_phi())


def criterion_6(seed=0, jobs=1):
    rng = np.random.default_rng(seed + 6)
    grid = SMALL_GRID
    worst = np.inf
    for _ in range(500):
        u = _bounded_random(rng, grid)
        osc = -u.inf_phi()
        if osc > 1:
            u = u.scaled(1 / osc)
            u = u.shifted(-u.sup_phi())
        v = T.random_potential(grid, rng)
        other = T.random_potential(grid, rng)
        # lift the second potential so that w = max(v, .) differs from v
        gap = v.phi_values - other.phi_values
        lift = float(gap.max() - rng.uniform(0.1, 0.9) * (gap.max() - gap.min()))
        w = T.pointwise_max([v, other.shifted(lift)])
        worst = min(worst, T.blocki_inequality_check(u, v, w)[2])
    return Check(6, "Blocki inequality on 500 random triples", worst >= -1e-9, worst, -1e-9)


def criterion_7(seed=0, jobs=1):
    rng = np.random.default_rng(seed + 7)
    grid = Grid1D.with_extension(SMALL_GRID, left=-60.0)
    worst, fails = np.inf, 0
    for i in range(100):
        lel = (0.0, 0.0) if i % 2 == 0 else tuple(rng.dirichlet(np.ones(3))[:2] * 0.8)
        phi = T.random_potential(grid, rng, lelong=lel)
        phi = phi.shifted(-phi.sup_phi())
        for C in (1.0, 2.0, 5.0, 10.0):
            cap, bound = T.cln_bound_check(phi, C)
            worst = min(worst, bound - cap)
            fails += cap > bound
    return Check(7, "CLN bound Cap{phi < -C} <= (||phi||_1 + 1)/C", fails == 0, worst, 0.0,
                 {"failures": fails})


def criterion_8(seed=0, jobs=1):
    rng = np.random.default_rng(seed + 8)
    err1 = 0.0
    for _ in range(200):
        lel = tuple(rng.dirichlet(np.ones(3))[:2] * rng.uniform(0, 1))
        mu = T.ma_measure(T.random_potential(SMALL_GRID, rng, lelong=lel))
        err1 = max(err1, abs(mu.total_mass() - 1))
    err2 = 0.0
    for _ in range(200):
        k = int(rng.integers(1, 12))
        g = np.vstack([D.SIMPLEX, rng.dirichlet(np.ones(3), size=k)[:, :2]])
        u = D.PLPotential2D(tuple(zip(map(tuple, g), rng.normal(size=len(g)))))
        err2 = max(err2, abs(D.ma_measure_2d(u).total_mass() - 1))
    flag = D.ma_measure_2d(D.PLPotential2D((((0, 0), 0.0), ((1, 0), 0.0), ((0, 1), 0.0))))
    atom_err = abs(flag.atom_masses.sum() - 1) + float(np.abs(flag.atom_locations).max()) + flag.pole_masses.sum()
    worst = max(err1, err2, atom_err)
    return Check(8, "MA mass conservation (1D, 2D, flagship atom)", worst <= 1e-9, worst, 1e-9,
                 {"mass_error_1d": err1, "mass_error_2d": err2, "flagship_error": atom_err})


def criterion_9(seed=0, jobs=1):
    rng = np.random.default_rng(seed + 9)
    grid = SMALL_GRID
    worst = 0.0
    for _ in range(50):
        k = int(rng.integers(1, 4))
        ends = np.sort(rng.uniform(-15, 15, size=2 * k))
        K = [(ends[2 * i], ends[2 * i + 1]) for i in range(k)]
        if rng.random() < 0.3:
            K[0] = (-np.inf, K[0][1])
        worst = max(worst, abs(T.capacity(K, grid, "lp") - T.capacity(K, grid, "envelope")))
    big = Grid1D.with_extension(grid, left=-60.0)
    Ts = np.array([5.0, 10.0, 20.0, 50.0])
    caps = np.array([T.capacity([(-np.inf, -t)], big) for t in Ts])
    c, fit = T.fit_inverse_linear(Ts, caps)
    ok = worst <= 1e-6 and fit <= 0.10
    return Check(9, "capacity: LP vs envelope, and 1/(T+c) tail", ok, worst, 1e-6,
                 {"fit_offset": c, "fit_worst_relative": fit, "fit_tolerance": 0.10,
                  "caps": dict(zip(Ts.tolist(), caps.tolist()))})


def criterion_10(seed=0, jobs=1):
    rng = np.random.default_rng(seed + 10)
    grid = SMALL_GRID
    tol = 1e-9
    res_worst, agree_worst, super_worst, fails = 0.0, 0.0, -np.inf, []
    for i in range(20):
        a = rng.uniform(0, 1)
        mu = T.ma_measure(T.random_potential(grid, rng))
        mix = MAMeasure(grid, a * mu.density + (1 - a) * T.reference_measure(grid).density,
                        mu.atom_locations, a * mu.atom_masses)
        mix = mix.scaled(1 / mix.total_mass())
        try:
            u = solve_ma_equation(mix, tol=tol)
            v = solve_ma_equation(mix, tol=tol, init=T.random_potential(grid, rng))
        except ConvergenceFailure as e:
            fails.append({"measure": i, "residual": e.residual})
            continue
        res_worst = max(res_worst, ma_residual(u, mix))
        agree_worst = max(agree_worst, float(np.max(np.abs(u.f_values - v.f_values))))
    ref = T.reference_measure(grid)
    mass = ref.node_masses()
    for _ in range(20):
        sups = []
        for _ in range(2):
            w = 0.3 + 0.7 * rng.random() * (1 + np.sin(rng.uniform(0.1, 2) * grid.nodes + rng.uniform(0, 6))) / 2
            sub = MAMeasure(grid, ref.density * w)
            total = sub.total_mass()
            sups.append(solve_ma_equation(sub.scaled(1 / total), tol=tol).shifted(-np.log(total)))
        env = T.project_envelope(T.pointwise_min(sups))
        excess = T._node_masses(env) - np.exp(env.phi_values) * mass
        super_worst = max(super_worst, float(excess.max()))
    ok = not fails and res_worst <= 1e-8 and agree_worst <= 1e-7 and super_worst <= 10 * tol
    return Check(10, "MA equation: residual, uniqueness, supersolution envelopes", ok, res_worst, 1e-8,
                 {"agreement": agree_worst, "agreement_tolerance": 1e-7,
                  "supersolution_excess": super_worst, "supersolution_tolerance": 10 * tol,
                  "failures": fails})


def criterion_11(seed=0, jobs=1):
    fam = family_from_recipe({"type": "tuned", "c": 0.25, "C": 1.0})
    res = energy_cauchy_extract(Weight.power(1), [fam.member(j) for j in range(1, 25)], 8)
    ok = all(res.bound_ok) and res.membership.member and res.minorant_margin >= -1e-8
    worst = max(d / (res.kappa * 2.0 ** (-j + 1)) for j, d in enumerate(res.distances, 1) if j > 2)
    return Check(11, "energy-Cauchy extraction: kappa fitted at j=2 holds for j=3..8", ok, worst, 1.0,
                 res.to_dict())


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 12)}


def run_criterion(k, seed=0, jobs=1) -> Check:
    t0 = time.perf_counter()
    chk = CRITERIA[k](seed=seed, jobs=jobs)
    chk.seconds = time.perf_counter() - t0
    return chk


def run_all(seed=0, jobs=1):
    return [run_criterion(k, seed, jobs) for k in CRITERIA]
