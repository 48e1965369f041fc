import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pshlab import toric1d as T
from pshlab.atoms_p1 import ExtractionFamily
from pshlab.convergence_lab import (CONVERGE_RATIO, TOL, classify_capacity, classify_energy,
                                    classify_L1, classify_quasi_monotone, decide,
                                    energy_cauchy_extract, extract_quasi_monotone,
                                    family_from_recipe, ma_residual, solve_ma_equation,
                                    theorem_chain)
from pshlab.errors import DomainError, ExtractionExhausted, PreconditionError
from pshlab.measure_core import Grid1D, MAMeasure, Weight, integrate

LADDER = np.array([8, 16, 32, 64, 128, 256])

RECIPES = [
    {"type": "constant", "seed": 3},
    {"type": "monotone"},
    {"type": "sandwich"},
    {"type": "geometric", "base": 2},
    {"type": "energy", "eps": "1/j", "C": "1"},
    {"type": "energy", "eps": "1/j", "C": "j"},
    {"type": "energy", "eps": "1/j", "C": "j^2"},
    {"type": "energy", "eps": "2^-j", "C": "j"},
    {"type": "energy", "eps": "1", "C": "j"},
    {"type": "extraction", "stages": 12},
    {"type": "infty"},
]


# decision rule ------------------------------------------------------------

def test_decide_basic_shapes():
    assert decide(1.0 / LADDER)[0] == "converges"
    assert decide(np.ones(6))[0] == "diverges"
    assert decide(LADDER.astype(float))[0] == "diverges"
    assert decide([0.3, 0.0])[0] == "converges"
    assert decide([0.3, 0.2])[0] == "inconclusive"
    assert decide(1.0 / np.sqrt(LADDER))[0] == "converges"  # ratio 2^-1/2
    assert decide(1.0 / np.log(LADDER))[0] == "inconclusive"


@given(st.floats(0.01, CONVERGE_RATIO), st.floats(1e-2, 1e3))
def test_decide_geometric_decay_converges(r, c):
    assert decide(c * r ** np.arange(6))[0] == "converges"


@given(st.floats(1e-3, 1e3), st.lists(st.floats(0.96, 1.5), min_size=5, max_size=5))
def test_decide_nondecaying_diverges(c, ratios):
    v = c * np.cumprod([1.0] + ratios)
    assert decide(v)[0] == "diverges"


@given(st.floats(1e-2, 1e2))
def test_decide_scale_invariant_above_tol(c):
    base = np.array([3.0, 2.5, 1.2, 0.7, 0.3, 0.2])
    assert decide(base)[0] == decide(c * base)[0]


def test_decide_zero_tail():
    assert decide([1.0, 0.5, TOL / 2])[0] == "converges"


# families -----------------------------------------------------------------

@pytest.mark.parametrize("recipe", RECIPES[:9] + [{"type": "energy", "eps": "1/j", "C": "j", "truncate": 3}],
                         ids=lambda r: json.dumps(r))
def test_recipe_round_trip_is_bit_identical(recipe):
    fam = family_from_recipe(recipe)
    again = family_from_recipe(json.loads(json.dumps(fam.to_dict())))
    for j in (8, 64):
        assert fam.l1_distance(j).value == again.l1_distance(j).value
        assert fam.deviation_capacity(j, 0.1).value == again.deviation_capacity(j, 0.1).value
        np.testing.assert_array_equal(fam.member(j).f_values, again.member(j).f_values)


def test_unknown_recipes_rejected():
    with pytest.raises(DomainError):
        family_from_recipe({"type": "spiral"})
    with pytest.raises(DomainError):
        family_from_recipe({"type": "energy", "eps": "1/log j", "C": "1"})


@pytest.mark.parametrize("recipe", RECIPES, ids=lambda r: json.dumps(r))
def test_theorem_chain_has_no_violations(recipe):
    rep = theorem_chain(family_from_recipe(recipe), 256)
    assert rep.violations == []
    json.dumps(rep.to_dict())


def test_expected_verdict_matrix():
    want = {
        "sandwich": ("converges", "converges", "converges", "converges"),
        "energy(eps=1, C=j)": ("diverges", "diverges", "diverges", "diverges"),
        "extraction(12)": ("converges", "converges", "diverges", "converges"),
    }
    for recipe in ({"type": "sandwich"}, {"type": "energy", "eps": "1", "C": "j"},
                   {"type": "extraction", "stages": 12}):
        fam = family_from_recipe(recipe)
        got = (classify_L1(fam).status, classify_capacity(fam).status,
               classify_quasi_monotone(fam).status, classify_energy(Weight.power(1), fam).status)
        assert got == want[fam.name]


def test_infty_family_energy_undefined_and_collapse_certified():
    fam = family_from_recipe({"type": "infty"})
    en = classify_energy(Weight.power(1), fam, 64)
    assert en.status == "inconclusive" and en.flags
    qm = classify_quasi_monotone(fam, 64)
    assert qm.status == "diverges" and qm.certified
    assert qm.details["collapse_certificate"]


def test_finite_tail_verdict_is_flagged():
    fam = family_from_recipe({"type": "sandwich"})
    qm = classify_quasi_monotone(fam, 64)
    assert any("upper-biased" in f for f in qm.flags)
    # the declared lower bound keeps the verdict certified
    assert qm.certified and all("certified_upper" in r for r in qm.evidence)


@pytest.mark.parametrize("recipe", [{"type": "monotone"}, {"type": "energy", "eps": "1/j", "C": "j"},
                                    {"type": "sandwich"}])
def test_running_inf_envelopes_increase(recipe):
    fam = family_from_recipe(recipe)
    qm = classify_quasi_monotone(fam, 256)
    assert qm.details["monotonicity_defect"] <= 1e-8


def test_unbounded_running_inf_is_not_a_certified_minorant():
    # eps_j = 1/j, C_j = j^2: phi_j^- behaves like -sqrt|g|, outside E^1
    fam = family_from_recipe({"type": "energy", "eps": "1/j", "C": "j^2"})
    rep = classify_energy(Weight.power(1), fam, 64)
    assert rep.details["minorant"]["certified"] is False


@pytest.mark.parametrize("recipe", RECIPES, ids=lambda r: json.dumps(r))
def test_reduction_to_bounded(recipe):
    """Capacity verdicts agree for phi_j and max(phi_j, -C)."""
    fam = family_from_recipe(recipe)
    base = classify_capacity(fam, 128).status
    for C in (2.0, 5.0, 10.0):
        assert classify_capacity(fam.truncated(C), 128).status == base


BOUNDED = [{"type": "monotone"}, {"type": "sandwich"}, {"type": "geometric", "base": 2},
           {"type": "energy", "eps": "1/j", "C": "1"}, {"type": "energy", "eps": "2^-j", "C": "1"}]


@pytest.mark.parametrize("recipe", BOUNDED, ids=lambda r: json.dumps(r))
@pytest.mark.parametrize("chi", [np.exp, np.cos, lambda s: np.abs(s) ** 1.5],
                         ids=["exp", "cos", "abs^1.5"])
def test_weighted_weak_convergence(recipe, chi):
    """int chi(phi_j) dMA(phi_j) -> int chi(phi) dMA(phi) for continuous chi."""
    fam = family_from_recipe(recipe)
    assert classify_capacity(fam).status == "converges"

    def weighted(u):
        return integrate(chi(u.phi_values), T.ma_measure(u), chi(u.pole_phi_values))

    target = weighted(fam.declared_limit)
    gaps = [abs(weighted(fam.member(j)) - target) for j in LADDER]
    assert decide(gaps)[0] == "converges"
    if recipe.get("eps") == "2^-j" or recipe.get("base") == 2:
        assert gaps[-1] <= 1e-5


# constructive extractions -------------------------------------------------

@pytest.mark.slow
def test_extraction_family_quasi_monotone_subsequence():
    res = extract_quasi_monotone(ExtractionFamily(20), levels=3)
    assert res.verified
    assert all(a > b for a, b in zip(res.gaps, res.gaps[1:]))
    eps = [2.0 ** (-2 * (j + 1)) for j in range(1, 5)]
    assert all(c <= eps[k] - eps[k + 1] for k, c in enumerate(res.deviation_caps))


def test_extraction_runs_out_of_stages():
    with pytest.raises(ExtractionExhausted):
        extract_quasi_monotone(ExtractionFamily(14), levels=2)


def test_extraction_precondition():
    with pytest.raises(PreconditionError):
        extract_quasi_monotone(family_from_recipe({"type": "monotone"}), 64)


@pytest.mark.parametrize("eps", ["1/j", "2^-j"])
def test_extraction_on_toric_family(eps):
    fam = family_from_recipe({"type": "energy", "eps": eps, "C": "1"})
    res = extract_quasi_monotone(fam, 256, levels=2)
    assert res.verified
    for psi, j in zip(res.minorants, res.indices):
        assert np.all(psi.f_values <= fam.member(j).f_values + 1e-8)


def test_cauchy_extract_with_fast_increments():
    fam = family_from_recipe({"type": "geometric", "base": 4, "C": 1})
    res = energy_cauchy_extract(Weight.power(1), [fam.member(j) for j in range(1, 17)], 8)
    assert all(res.bound_ok)
    assert res.membership.member and res.minorant_margin >= 0


def test_cauchy_extract_halving_increments_stay_under_unit_constant():
    """With increments ~2^-j the ratio I(phi_j, phi_j^-) / 2^{-j+1} stays below 1."""
    fam = family_from_recipe({"type": "geometric", "base": 2, "C": 1})
    res = energy_cauchy_extract(Weight.power(1), [fam.member(j) for j in range(1, 17)], 8)
    ratios = np.array(res.distances) / 2.0 ** (-np.arange(1, 9) + 1)
    assert np.all(ratios <= 1.0)
    assert res.membership.member and res.minorant_margin >= 0


def test_cauchy_extract_tuned_halving_family():
    fam = family_from_recipe({"type": "tuned", "c": 0.25, "C": 1.0})
    members = [fam.member(j) for j in range(1, 25)]
    incs = [T.quasi_distance_I_chi(Weight.power(1), a, b) for a, b in zip(members, members[1:])]
    np.testing.assert_allclose(incs, 0.25 * 2.0 ** -np.arange(1, 24), rtol=1e-8, atol=1e-15)
    res = energy_cauchy_extract(Weight.power(1), members, 8)
    assert all(res.bound_ok)
    assert res.membership.member and res.minorant_margin >= 0


def test_untuned_geometric_ratio_rises():
    """(1 - 2^-j) psi has increments only asymptotically 2^-j, and the ratio
    I(phi_j, phi_j^-) / 2^{-j+1} climbs toward its limit, so a constant
    fitted at j = 2 is too small."""
    fam = family_from_recipe({"type": "geometric", "base": 2, "C": 1})
    res = energy_cauchy_extract(Weight.power(1), [fam.member(j) for j in range(1, 17)], 8)
    ratios = np.array(res.distances) / 2.0 ** (-np.arange(1, 9) + 1)
    assert np.all(np.diff(ratios[:6]) > 0)
    assert not any(res.bound_ok)


def test_cauchy_extract_rejects_large_increments():
    fam = family_from_recipe({"type": "geometric", "base": 2, "C": 5})
    with pytest.raises(PreconditionError):
        energy_cauchy_extract(Weight.power(1), [fam.member(j) for j in range(1, 17)], 8)


# MA equation --------------------------------------------------------------

def test_solver_point_mass(grid):
    mu = MAMeasure(grid, atom_locations=np.array([0.0]), atom_masses=np.array([1.0]))
    u = solve_ma_equation(mu)
    exact = 0.5 * np.log(2) + np.maximum(0, grid.nodes) - T.f_omega(grid.nodes)
    np.testing.assert_allclose(u.phi_values, exact, atol=1e-10)


def test_solver_rejects_bad_measures(grid):
    with pytest.raises(DomainError):
        solve_ma_equation(T.reference_measure(grid).scaled(0.5))
    with pytest.raises(DomainError):
        solve_ma_equation(MAMeasure(grid, pole_masses=np.array([1.0, 0.0])))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_solver_residual_and_uniqueness(seed):
    grid = Grid1D.uniform(-20, 20, 2001)
    rng = np.random.default_rng(seed)
    mu = T.ma_measure(T.random_potential(grid, rng))
    u = solve_ma_equation(mu)
    assert ma_residual(u, mu) <= 1e-8
    v = solve_ma_equation(mu, init=T.random_potential(grid, rng))
    np.testing.assert_allclose(u.f_values, v.f_values, atol=1e-8)


def _weighted(mu, w):
    return MAMeasure(mu.grid, density=mu.density * w)


def test_supersolution_envelopes(grid):
    """P(min(phi, psi)) of supersolutions MA <= e^phi mu is again one."""
    tol = 1e-9
    rng = np.random.default_rng(7)
    mu = T.reference_measure(grid)
    fo_mass = mu.node_masses()
    for _ in range(20):
        sups = []
        for _ in range(2):
            w = 0.3 + 0.7 * rng.random() * (1 + np.sin(rng.uniform(0.1, 2) * grid.nodes + rng.uniform(0, 6))) / 2
            sub = _weighted(mu, w)
            sup = solve_ma_equation(sub.scaled(1 / sub.total_mass()), tol=tol)
            sups.append(sup.shifted(-np.log(sub.total_mass())))
        for s in sups:
            assert np.all(T._node_masses(s) <= np.exp(s.phi_values) * fo_mass + tol)
        env = T.project_envelope(T.pointwise_min(sups))
        assert np.all(T._node_masses(env) <= np.exp(env.phi_values) * fo_mass + 10 * tol)
