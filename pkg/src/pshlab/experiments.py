"""Experiment implementations behind ``pshlab run``.

Every experiment has a ``prepare`` step, which turns recipes into objects and
reports problems as :class:`ConfigError` (exit code 2), and an ``execute``
step, which computes results, records checks and fills diagnostic tables.
"""
from __future__ import annotations

import contextlib
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import toric1d as T
from . import toric2d as D
from .atoms_p1 import AtomPotential, collapse_test, sphere_point, symmetric_capacity_of_cap
from .convergence_lab import (DEFAULT_DELTAS, DEFAULT_J_MAX, energy_cauchy_extract,
                              extract_quasi_monotone, family_from_recipe, ma_residual,
                              solve_ma_equation, theorem_chain)
from .errors import ConfigError, PshlabError
from .measure_core import Grid1D, MAMeasure, Weight
from .report import Report, Table
from .suite import CRITERIA, _energy_normalisation, energy_sweep_point, run_criterion

__all__ = ["EXPERIMENTS", "prepare", "execute"]

MASS_CHECK_TOL = 1e-9
ENVELOPE_TOL = 1e-9
CAPACITY_AGREEMENT_TOL = 1e-6
SOLVER_AGREEMENT_TOL = 1e-7


@contextlib.contextmanager
def config_stage(where):
    """Library domain errors raised while building objects are config errors."""
    try:
        yield
    except ConfigError:
        raise
    except (PshlabError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _require(cfg, key, experiment):
    if key not in cfg:
        raise ConfigError(f"experiment {experiment!r} needs field {key!r}")
    return cfg[key]


def _models(cfg, allowed, experiment):
    model = cfg.get("model", "toric1d")
    if model not in allowed:
        raise ConfigError(f"experiment {experiment!r} does not support model {model!r} "
                          f"(use one of {', '.join(allowed)})")
    return model


def build_grid(cfg):
    g = cfg.get("grid")
    if not g:
        return Grid1D.default()
    with config_stage("grid"):
        return Grid1D.uniform(g.get("t_min", -40.0), g.get("t_max", 40.0), g.get("n_nodes", 8001))


_MODEL_OF = {"atoms": "atoms_p1", "pl2d": "toric2d"}


def build_potential(recipe, grid, model, where):
    kind = recipe["type"]
    if _MODEL_OF.get(kind, "toric1d") != model:
        raise ConfigError(f"{where}: potential type {kind!r} does not belong to model {model!r}")
    with config_stage(where):
        if kind == "reference":
            return T.ToricPotential1D.reference(grid)
        if kind == "constant":
            return T.ToricPotential1D.constant(recipe["c"], grid)
        if kind == "truncated_log":
            C = math.inf if recipe["C"] == "inf" else float(recipe["C"])
            if math.isfinite(C) and T.log_kink_location(C) > grid.t_min:
                grid = Grid1D.with_extension(grid, extra=[T.log_kink_location(C)])
            return T.truncated_log_potential(grid, recipe["eps"], C)
        if kind == "random":
            rng = np.random.default_rng(recipe["seed"])
            pot = T.random_potential(grid, rng, lelong=tuple(recipe.get("lelong", (0.0, 0.0))))
            return pot.shifted(-pot.sup_phi()) if recipe.get("normalize", False) else pot
        if kind == "atoms":
            atoms = tuple((sphere_point(a["theta"], a["azimuth"]), a["mass"]) for a in recipe["atoms"])
            return AtomPotential(atoms, recipe.get("shift", 0.0), recipe.get("floor"))
        if kind == "pl2d":
            return D.PLPotential2D(tuple((tuple(p["gradient"]), p["intercept"]) for p in recipe["pieces"]))
    raise ConfigError(f"{where}: unknown potential type {kind!r}")


def build_potentials(cfg, grid, model, experiment, count=None):
    recipes = _require(cfg, "potentials", experiment)
    if count is not None and len(recipes) != count:
        raise ConfigError(f"experiment {experiment!r} needs exactly {count} potentials")
    pots = [build_potential(r, grid, model, f"potentials[{i}]") for i, r in enumerate(recipes)]
    if model == "toric1d" and len({p.grid.n_nodes for p in pots}) > 1:
        # a kink node was added for one recipe; rebuild all on the union grid
        extra = sorted({float(t) for p in pots for t in p.grid.nodes if t not in set(grid.nodes)})
        grid = Grid1D.with_extension(grid, extra=extra)
        pots = [build_potential(r, grid, model, f"potentials[{i}]") for i, r in enumerate(recipes)]
    return pots


def build_measure(recipe, grid):
    with config_stage("measure"):
        if recipe["type"] == "reference":
            return T.reference_measure(grid)
        if recipe["type"] == "atoms":
            if len(recipe["locations"]) != len(recipe["masses"]):
                raise ConfigError("measure: locations and masses differ in length")
            return MAMeasure(grid, atom_locations=np.array(recipe["locations"], float),
                             atom_masses=np.array(recipe["masses"], float))
        pot = build_potential(recipe["potential"], grid, "toric1d", "measure.potential")
        return T.ma_measure(pot)


def build_family(recipe, where):
    with config_stage(where):
        return family_from_recipe(recipe)


def _chi(cfg):
    with config_stage("parameters.chi"):
        return Weight.from_spec(cfg.get("parameters", {}).get("chi", {"type": "power", "p": 1.0}))


def _params(cfg):
    return cfg.get("parameters", {})


# --------------------------------------------------------------------------
# experiments: prepare returns a dict of built objects, execute fills the report

def prep_envelope(cfg):
    model = _models(cfg, ("toric1d", "atoms_p1", "toric2d"), "envelope")
    grid = build_grid(cfg)
    pots = build_potentials(cfg, grid, model, "envelope", 2 if model == "toric2d" else None)
    return {"model": model, "potentials": pots}


def run_envelope(prep, cfg, rep: Report, jobs):
    model, pots = prep["model"], prep["potentials"]
    if model == "toric1d":
        env = T.project_envelope(T.pointwise_min(pots))
        rep.results["envelope"] = {"collapsed": env.is_minus_infinity}
        if env.is_minus_infinity:
            return
        obst = np.min([p.f_values for p in pots], axis=0)
        excess = float(np.max(env.f_values - obst))
        rep.check("envelope below obstacle", excess <= ENVELOPE_TOL, excess, ENVELOPE_TOL)
        rep.results["envelope"].update({"slopes": [env.slope_left, env.slope_right],
                                        "lelong": list(T.lelong_numbers(env))})
        fo = env.f_values - env.phi_values
        rep.tables.append(Table("envelope", ["t", "phi_envelope", "obstacle"],
                                [{"t": t, "phi_envelope": a, "obstacle": b}
                                 for t, a, b in zip(env.grid.nodes, env.phi_values, obst - fo)],
                                "envelope P(min phi_i) and the obstacle min phi_i on the grid"))
    elif model == "atoms_p1":
        with config_stage("potentials"):
            res = collapse_test(pots)
        rep.results["collapse"] = res.to_dict()
        if not res.collapsed:
            rep.check("collapse certificate lies below every member", res.margin >= -ENVELOPE_TOL,
                      res.margin, -ENVELOPE_TOL)
    else:
        u, v = pots
        env = D.min_envelope_2d(u, v)
        rep.results["envelope"] = env.to_dict()
        if not env.is_minus_infinity:
            s = np.linspace(-6, 6, 121)
            X = np.stack(np.meshgrid(s, s), axis=-1).reshape(-1, 2)
            excess = float(np.max(env(X) - np.minimum(u(X), v(X))))
            rep.check("2D envelope below min(u, v) on a 121^2 grid", excess <= ENVELOPE_TOL, excess,
                      ENVELOPE_TOL)


def prep_ma(cfg):
    model = _models(cfg, ("toric1d", "toric2d"), "ma")
    return {"model": model, "potentials": build_potentials(cfg, build_grid(cfg), model, "ma")}


def run_ma(prep, cfg, rep, jobs):
    rows, out = [], []
    for i, u in enumerate(prep["potentials"]):
        if prep["model"] == "toric1d":
            mu = T.ma_measure(u)
            for t, m in zip(u.grid.nodes, T._node_masses(u)):
                if m > 0:
                    rows.append({"potential": i, "t": t, "mass": m})
        else:
            mu = D.ma_measure_2d(u)
            for (x1, x2), m in zip(mu.atom_locations, mu.atom_masses):
                rows.append({"potential": i, "x1": x1, "x2": x2, "mass": m})
        err = abs(mu.total_mass() - 1)
        rep.check(f"potentials[{i}]: total MA mass is 1", err <= MASS_CHECK_TOL, err, MASS_CHECK_TOL)
        out.append({"total_mass": mu.total_mass(), "pole_masses": mu.pole_masses.tolist(),
                    "atoms": len(mu.atom_masses)})
    rep.results["ma"] = out
    cols = ["potential", "t", "mass"] if prep["model"] == "toric1d" else ["potential", "x1", "x2", "mass"]
    rep.tables.append(Table("ma", cols, rows, "nonzero MA node masses (1D) or atoms (2D)"))


def _interval(x):
    return -math.inf if x == "-inf" else (math.inf if x == "inf" else float(x))


def prep_capacity(cfg):
    model = _models(cfg, ("toric1d", "atoms_p1"), "capacity")
    sets = _require(cfg, "sets", "capacity")
    key = "intervals" if model == "toric1d" else "cap"
    for i, s in enumerate(sets):
        if key not in s:
            raise ConfigError(f"sets[{i}]: model {model!r} expects {key!r} sets")
    return {"model": model, "sets": sets, "grid": build_grid(cfg)}


def run_capacity(prep, cfg, rep, jobs):
    rows = []
    for i, s in enumerate(prep["sets"]):
        if prep["model"] == "toric1d":
            K = [(_interval(a), _interval(b)) for a, b in s["intervals"]]
            with config_stage(f"sets[{i}]"):
                lp = T.capacity(K, prep["grid"], "lp")
            env = T.capacity(K, prep["grid"], "envelope")
            rep.check(f"sets[{i}]: LP and envelope capacities agree", abs(lp - env) <= CAPACITY_AGREEMENT_TOL,
                      abs(lp - env), CAPACITY_AGREEMENT_TOL)
            rows.append({"set": i, "lp": lp, "envelope": env})
        else:
            c = s["cap"]
            with config_stage(f"sets[{i}]"):
                val = symmetric_capacity_of_cap(sphere_point(c["theta"], c["azimuth"]), c.get("radius"),
                                                c.get("log_radius"))
            rows.append({"set": i, "lp": val, "envelope": ""})
    rep.results["capacity"] = rows
    rep.tables.append(Table("capacity_sets", ["set", "lp", "envelope"], rows,
                            "capacity of each configured set by the LP and extremal-envelope routes"))


def prep_energy(cfg):
    _models(cfg, ("toric1d",), "energy")
    return {"potentials": build_potentials(cfg, build_grid(cfg), "toric1d", "energy"), "chi": _chi(cfg)}


def run_energy(prep, cfg, rep, jobs):
    out = []
    for u in prep["potentials"]:
        m = T.membership_E_chi(prep["chi"], u)
        row = {"membership": m.to_dict(), "lelong": list(T.lelong_numbers(u))}
        row["energy_E"] = T.energy_E(u) if u.is_bounded or m.member else None
        out.append(row)
    rep.results["energy"] = out


def prep_distance(cfg):
    _models(cfg, ("toric1d",), "distance")
    return {"potentials": build_potentials(cfg, build_grid(cfg), "toric1d", "distance", 2), "chi": _chi(cfg)}


def run_distance(prep, cfg, rep, jobs):
    u, v = prep["potentials"]
    chi = prep["chi"]
    res = {}
    both = T.membership_E_chi(chi, u) and T.membership_E_chi(chi, v)
    res["I_chi"] = T.quasi_distance_I_chi(chi, u, v) if both else None
    if not both:
        rep.notes.append("I_chi undefined: a potential lies outside E_chi")
    try:
        res["I"] = T.quasi_distance_I(u, v)
    except PshlabError as exc:
        res["I"] = None
        rep.notes.append(f"I undefined: {exc}")
    for key in ("I", "I_chi"):
        if res[key] is not None:
            rep.check(f"{key} is nonnegative", res[key] >= -1e-12, res[key], -1e-12)
    rep.results["distance"] = res


def prep_classify(cfg):
    _models(cfg, ("toric1d", "atoms_p1"), "classify")
    recipes = cfg.get("families") or [_require(cfg, "family", "classify")]
    fams = [build_family(r, f"families[{i}]") for i, r in enumerate(recipes)]
    p = _params(cfg)
    j_max = p.get("j_max", DEFAULT_J_MAX)
    for i, f in enumerate(fams):
        with config_stage(f"families[{i}]"):
            if not f.ladder(j_max):
                raise ConfigError(f"families[{i}]: empty ladder")
    return {"recipes": recipes, "chi": _chi(cfg), "j_max": j_max,
            "deltas": tuple(p.get("deltas", DEFAULT_DELTAS))}


def _classify_one(args):
    recipe, j_max, deltas, chi_spec = args
    fam = family_from_recipe(recipe)
    return fam.name, theorem_chain(fam, j_max, deltas, Weight.from_spec(chi_spec)).to_dict()


def _safe(name):
    return "".join(c if c.isalnum() else "_" for c in name).strip("_")


def run_classify(prep, cfg, rep, jobs):
    args = [(r, prep["j_max"], prep["deltas"], prep["chi"].to_spec()) for r in prep["recipes"]]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            done = list(pool.map(_classify_one, args))
    else:
        done = [_classify_one(a) for a in args]
    rep.results["classify"] = {}
    for name, chain in done:
        rep.results["classify"][name] = chain
        rep.check(f"{name}: theorem-chain implications", not chain["violations"], len(chain["violations"]), 0,
                  violations=chain["violations"])
        v = chain["verdicts"]
        tag = _safe(name)
        rep.tables.append(Table(f"capacity_{tag}", ["j", "delta", "cap"],
                                [{"j": r["j"], "delta": r["delta"], "cap": r["value"]}
                                 for r in v["capacity"]["evidence"]],
                                f"{name}: capacity of {{|phi_j - phi| >= delta}}"))
        rep.tables.append(Table(f"energy_{tag}", ["j", "I_chi"],
                                [{"j": r["j"], "I_chi": r["value"]} for r in v["energy_chi"]["evidence"]
                                 if r["value"] is not None],
                                f"{name}: I_chi(phi_j, phi) for chi = {v['energy_chi']['details'].get('chi')}"))
        rep.tables.append(Table(f"gap_{tag}", ["j", "gap"],
                                [{"j": r["j"], "gap": r["value"]} for r in v["quasi_monotone"]["evidence"]],
                                f"{name}: envelope gap int |phi - phi_j^-| dMA(0)"))
        rep.tables.append(Table(f"l1_{tag}", ["j", "L1"],
                                [{"j": r["j"], "L1": r["value"]} for r in v["L1"]["evidence"]],
                                f"{name}: L1 distance int |phi_j - phi| dMA(0)"))


def prep_extract(cfg):
    _models(cfg, ("toric1d", "atoms_p1"), "extract")
    fam = build_family(_require(cfg, "family", "extract"), "family")
    p = _params(cfg)
    method = p.get("method", "quasi_monotone")
    if method not in ("quasi_monotone", "cauchy"):
        raise ConfigError("parameters.method must be 'quasi_monotone' or 'cauchy' for extract")
    return {"family": fam, "method": method, "chi": _chi(cfg), "j_max": p.get("j_max", DEFAULT_J_MAX),
            "levels": p.get("levels", 3), "members": p.get("members", 16)}


def run_extract(prep, cfg, rep, jobs):
    fam = prep["family"]
    if prep["method"] == "quasi_monotone":
        res = extract_quasi_monotone(fam, prep["j_max"], levels=prep["levels"])
        rep.results["extract"] = res.to_dict()
        rep.check("minorants lie below their members", res.below_margin >= -1e-8, res.below_margin, -1e-8)
        rep.check("minorants are nondecreasing", res.monotone_margin >= -1e-8, res.monotone_margin, -1e-8)
        rep.tables.append(Table("extract_gap", ["level", "index", "gap"],
                                [{"level": k + 1, "index": j, "gap": g}
                                 for k, (j, g) in enumerate(zip(res.indices, res.gaps))],
                                "int |phi - psi_j| dMA(0) for the extracted minorants"))
    else:
        members = [fam.member(j) for j in range(1, prep["members"] + 1)]
        res = energy_cauchy_extract(prep["chi"], members, min(8, prep["members"] - 1))
        rep.results["extract"] = res.to_dict()
        ok = all(res.bound_ok)
        rep.check("I_chi(phi_j, phi_j^-) <= kappa 2^{-j+1} with kappa fitted at j=2", ok,
                  sum(not b for b in res.bound_ok), 0, kappa=res.kappa)
        rep.check("common minorant phi_1^- lies in E_chi", res.membership.member,
                  res.membership.integral, "finite")
        rep.tables.append(Table("cauchy_distances", ["j", "I_chi"],
                                [{"j": j, "I_chi": d} for j, d in enumerate(res.distances, 1)],
                                "I_chi(phi_j, phi_j^-) along the sequence"))


def prep_solve(cfg):
    _models(cfg, ("toric1d",), "solve")
    grid = build_grid(cfg)
    mu = build_measure(_require(cfg, "measure", "solve"), grid)
    if abs(mu.total_mass() - 1) > T.MASS_TOL:
        raise ConfigError(f"measure: total mass {mu.total_mass():.12g} is not 1")
    if np.any(mu.pole_masses > 0):
        raise ConfigError("measure: the solver needs a measure without pole mass")
    return {"measure": mu, "tol": _params(cfg).get("tol", 1e-9)}


def run_solve(prep, cfg, rep, jobs):
    mu, tol = prep["measure"], prep["tol"]
    u = solve_ma_equation(mu, tol=tol)
    rng = np.random.default_rng(cfg.get("seed", 0))
    v = solve_ma_equation(mu, tol=tol, init=T.random_potential(mu.grid, rng))
    res = ma_residual(u, mu)
    agree = float(np.max(np.abs(u.f_values - v.f_values)))
    rep.check("TV residual of MA(phi) - e^phi mu", res <= max(tol, 1e-8), res, max(tol, 1e-8))
    rep.check("two initialisations agree", agree <= SOLVER_AGREEMENT_TOL, agree, SOLVER_AGREEMENT_TOL)
    rep.results["solve"] = {"residual": res, "agreement": agree, "sup_phi": u.sup_phi(), "inf_phi": u.inf_phi()}
    rep.tables.append(Table("solution", ["t", "phi"],
                            [{"t": t, "phi": p} for t, p in zip(u.grid.nodes, u.phi_values)],
                            "solution phi of MA(phi) = e^phi mu"))


def prep_sweep(cfg):
    _models(cfg, ("toric1d",), "sweep")
    p = _params(cfg)
    return {"eps": p.get("eps", [2.0 ** -k for k in range(9)]),
            "C": p.get("C", [2.0 ** m for m in range(11)]),
            "p": p.get("p", [0.5, 1.0, 2.0]), "kappa_max": p.get("kappa_max", 8.0)}


def _sweep_point(args):
    return energy_sweep_point(*args)


def run_sweep(prep, cfg, rep, jobs):
    pts = [(e, C, p) for p in prep["p"] for e in prep["eps"] for C in prep["C"]]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            vals = list(pool.map(_sweep_point, pts, chunksize=8))
    else:
        vals = [_sweep_point(a) for a in pts]
    ratios = [v / _energy_normalisation(e, C, p) for (e, C, p), v in zip(pts, vals)]
    kappa = float(max(max(ratios), 1 / min(ratios)))
    rep.check("I_chi / (eps (eps C)^p + eps^p) within [1/kappa, kappa]", kappa <= prep["kappa_max"], kappa,
              prep["kappa_max"])
    rep.results["sweep"] = {"kappa": kappa, "points": len(pts)}
    for p in prep["p"]:
        rows = [{"eps": e, "C": C, "I_chi": v} for (e, C, q), v in zip(pts, vals) if q == p]
        rep.tables.append(Table(f"sweep_p{p:g}", ["eps", "C", "I_chi"], rows,
                                f"I_chi(eps max(g, -C), 0) with chi = power({p:g})"))


def prep_paper_suite(cfg):
    crit = _params(cfg).get("criteria", sorted(CRITERIA))
    return {"criteria": crit}


def run_paper_suite(prep, cfg, rep, jobs):
    seed = cfg.get("seed", 0)
    rep.results["criteria"] = {}
    for k in prep["criteria"]:
        chk = run_criterion(k, seed=seed, jobs=jobs)
        rep.results["criteria"][str(k)] = chk.to_dict()
        rep.check(f"criterion {k}: {chk.name}", chk.passed, chk.value, chk.tolerance)
        if k == 2:
            rep.tables.append(Table("suite_capacity", ["j", "delta", "cap"],
                                    [{"j": j, "delta": 0.1, "cap": c} for j, c in chk.detail["caps"].items()],
                                    "sandwich family: capacity of {|phi_j - phi| >= delta}"))
        if k == 5:
            for p in (0.5, 1.0, 2.0):
                rows = [r for r in chk.detail["sweep"] if r["p"] == p]
                rep.tables.append(Table(f"suite_sweep_p{p:g}", ["eps", "C", "I_chi"], rows,
                                        f"I_chi(eps max(g, -C), 0) with chi = power({p:g})"))
        if k == 11:
            rep.tables.append(Table("suite_cauchy", ["j", "I_chi"],
                                    [{"j": j, "I_chi": d} for j, d in enumerate(chk.detail["distances"], 1)],
                                    "tuned family: I_chi(phi_j, phi_j^-)"))


EXPERIMENTS = {
    "envelope": (prep_envelope, run_envelope),
    "ma": (prep_ma, run_ma),
    "capacity": (prep_capacity, run_capacity),
    "energy": (prep_energy, run_energy),
    "distance": (prep_distance, run_distance),
    "classify": (prep_classify, run_classify),
    "extract": (prep_extract, run_extract),
    "solve": (prep_solve, run_solve),
    "sweep": (prep_sweep, run_sweep),
    "paper_suite": (prep_paper_suite, run_paper_suite),
}


def prepare(cfg):
    return EXPERIMENTS[cfg["experiment"]][0](cfg)


def execute(prep, cfg, rep, jobs=1):
    EXPERIMENTS[cfg["experiment"]][1](prep, cfg, rep, jobs)
