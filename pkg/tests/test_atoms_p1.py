import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pshlab import atoms_p1 as A
from pshlab import toric1d as T
from pshlab.errors import DomainError
from pshlab.measure_core import Grid1D


def random_point(rng):
    v = rng.normal(size=4)
    return np.array([v[0] + 1j * v[1], v[2] + 1j * v[3]])


def t_coordinate(z):
    return np.log(np.abs(z[:, 1])) - np.log(np.abs(z[:, 0]))


# --- AtomPotential ----------------------------------------------------------

def test_atom_validation():
    p = A.sphere_point(1.0, 2.0)
    with pytest.raises(DomainError):
        A.AtomPotential(((p, 0.7), (A.NORTH, 0.5)))
    with pytest.raises(DomainError):
        A.AtomPotential(((p, 0.3), (p * 1j, 0.3)))  # same point, other phase
    with pytest.raises(DomainError):
        A.AtomPotential(((p, 0.0),))
    with pytest.raises(DomainError):
        A.AtomPotential(((np.zeros(2), 0.5),))


def test_pole_potential_sup_zero_and_lelong():
    rng = np.random.default_rng(0)
    p = random_point(rng)
    G = A.AtomPotential(((p, 1.0),))
    z = A.sphere_mesh(4000, seed=1)
    vals = G(z)
    assert np.max(vals) <= 1e-12
    antipode = np.array([-np.conj(p[1]), np.conj(p[0])])
    assert G(antipode)[0] == pytest.approx(0.0, abs=1e-12)
    assert G.lelong_at(p) == 1.0 and G.lelong_at(antipode) == 0.0


def test_toric_representative_matches_rotated_evaluation():
    rng = np.random.default_rng(2)
    z = A.sphere_mesh(2000, seed=3)
    t = t_coordinate(z)
    grid = Grid1D(np.unique(t))
    for floor in (None, -0.7):
        p = random_point(rng)
        pot = A.AtomPotential(((p, 0.6),), shift=0.3, floor=floor)
        north = A.AtomPotential(((A.NORTH, 0.6),), shift=0.3, floor=floor)
        rep = pot.toric_representative(grid)
        assert np.allclose(np.interp(t, grid.nodes, rep.phi_values), north(z), atol=1e-12)
        # the rotation taking p to [1:0] transports pot onto north
        U = A._rotation_to_north(p)
        assert np.allclose(pot(z), north(z @ U.T), atol=1e-10)


def test_two_antipodal_atoms_toric():
    grid = Grid1D.uniform(-20, 20, 401)
    rep = A.AtomPotential(((A.NORTH, 0.3), (A.SOUTH, 0.5))).toric_representative(grid)
    assert T.lelong_numbers(rep) == pytest.approx((0.3, 0.5))
    assert T.ma_measure(rep).pole_masses.tolist() == pytest.approx([0.3, 0.5])


def test_atom_roundtrip():
    pot = A.AtomPotential(((A.sphere_point(0.4, 1.1), 0.25), (A.SOUTH, 0.5)), -1.0, -3.0)
    back = A.AtomPotential.from_dict(pot.to_dict())
    z = A.sphere_mesh(500)
    assert np.array_equal(back(z), pot(z))


# --- collapse ------------------------------------------------------------------

def test_two_unit_atoms_collapse():
    tau = 0.25
    fam = A.InftyFamily()
    res = A.collapse_test([fam.member(2), fam.member(3)])
    assert res.collapsed and res.required_mass == pytest.approx(2.0)
    assert res.certificate is None
    assert tau == fam.tau(2)


def test_single_member_not_collapsed():
    member = A.AtomPotential(((A.sphere_point(0.9, 0.2), 1.0),), shift=0.5)
    res = A.collapse_test([member])
    assert not res.collapsed and res.required_mass == 1.0
    assert res.margin == pytest.approx(0.0, abs=1e-9)


def test_three_small_atoms_certificate():
    rng = np.random.default_rng(4)
    fam = [A.AtomPotential(((random_point(rng), 0.3),), shift=float(c)) for c in (0.0, -0.5, 1.0)]
    res = A.collapse_test(fam)
    assert not res.collapsed and res.required_mass == pytest.approx(0.9)
    assert res.margin >= -1e-9
    assert res.certificate.shift == -0.5


@st.composite
def atom_families(draw):
    n_points = draw(st.integers(1, 5))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    pts = [random_point(rng) for _ in range(n_points)]
    fam = []
    for _ in range(draw(st.integers(1, 4))):
        chosen = rng.choice(n_points, size=rng.integers(1, n_points + 1), replace=False)
        w = rng.dirichlet(np.ones(len(chosen))) * rng.uniform(0.2, 1.0)
        fam.append(A.AtomPotential(tuple((pts[i], float(a)) for i, a in zip(chosen, w)),
                                   shift=float(rng.normal())))
    return fam


@settings(max_examples=30, deadline=None)
@given(fam=atom_families(), extra=atom_families())
def test_collapse_monotone_and_certificate_sound(fam, extra):
    res = A.collapse_test(fam)
    if res.collapsed:
        assert A.collapse_test(fam + extra).collapsed
    else:
        assert res.margin >= -1e-9
        assert res.required_mass <= 1 + 1e-12


def test_collapse_rejects_bad_input():
    with pytest.raises(DomainError):
        A.collapse_test([])
    with pytest.raises(DomainError):
        A.collapse_test([A.AtomPotential(((A.NORTH, 0.5),), floor=-1.0)])


# --- caps --------------------------------------------------------------------

def test_cap_edge():
    r = 0.3
    t = A.cap_t_edge(r)
    z = A.sphere_point(2 * math.asin(r))  # on the boundary circle
    assert t_coordinate(z[None, :])[0] == pytest.approx(t, abs=1e-12)
    assert A.cap_t_edge(log_radius=-100.0) == pytest.approx(-100.0)
    with pytest.raises(DomainError):
        A.cap_t_edge(1.0)


def test_full_sphere_limit():
    assert A.symmetric_capacity_of_cap(A.NORTH, 0.999) == pytest.approx(1.0, abs=1e-8)


def test_cap_center_independence():
    rng = np.random.default_rng(5)
    a = A.symmetric_capacity_of_cap(random_point(rng), 0.05)
    b = A.symmetric_capacity_of_cap(random_point(rng), 0.05)
    assert abs(a - b) <= 1e-9


def test_cap_sweep_against_toric_oracle():
    caps, oracle = [], []
    for T_ in (5.0, 10.0, 20.0):
        caps.append(A.symmetric_capacity_of_cap(A.sphere_point(0.3, 0.1), math.exp(-T_)))
        edge = -T_ - 0.5 * math.log1p(-math.exp(-2 * T_))
        g = Grid1D.with_extension(Grid1D.uniform(-60, 40, 10001), extra=[edge])
        oracle.append(T.capacity([(-np.inf, edge)], g, method="lp"))
    caps = np.array(caps)
    assert np.all(np.diff(caps) < 0)
    assert np.allclose(caps, oracle, atol=1e-6)
    _, worst = T.fit_inverse_linear([5.0, 10.0, 20.0], caps)
    assert worst < 0.10


def test_cap_strictly_decreasing_in_T():
    vals = [A.symmetric_capacity_of_cap(A.NORTH, log_radius=-T_, method="envelope")
            for T_ in np.linspace(1, 30, 12)]
    assert np.all(np.diff(vals) < 0)


# --- staged covers ------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3])
def test_stage_cover_geometry(n):
    net = A._StageNet.for_stage(n)
    assert net.verify_cover()
    z = A.sphere_mesh(20000, seed=n)
    theta = 2 * np.arccos(np.clip(np.abs(z[:, 0]), 0, 1))
    azim = np.angle(z[:, 1]) - np.angle(z[:, 0])
    ct, ca = net.centre_angles_array(net.nearest_centre(theta, azim))
    c = np.stack([np.cos(ct / 2) + 0j, np.sin(ct / 2) * np.exp(1j * ca)], axis=1)
    chord = np.abs(z[:, 0] * c[:, 1] - z[:, 1] * c[:, 0])
    geo = 2 * np.arcsin(np.minimum(chord, 1))
    assert np.max(geo) <= net.covering_radius_bound * (1 + 1e-9)
    # every mesh point lies in the plateau of its nearest stage member
    assert np.all(chord <= math.exp(-(2 ** n)))


def test_stage_one_members():
    fam = A.extraction_family(2)
    n0 = fam.nets[0].count
    z = A.sphere_mesh(3000, seed=9)
    for j in (1, 2, 17, n0 // 2, n0):
        m = fam.member(j)
        assert fam.stage_of(j)[0] == 1
        assert np.all(m(z) >= -1.0)
        (p, a), = m.atoms
        near = p * np.cos(0.05) + np.array([-np.conj(p[1]), np.conj(p[0])]) * np.sin(0.05)
        assert m(near)[0] == -1.0  # inside the plateau d <= e^{-2}


def test_members_bounded_below_random_indices():
    fam = A.extraction_family(3)
    rng = np.random.default_rng(10)
    z = A.sphere_mesh(2000, seed=11)
    for j in rng.integers(1, fam.starts[-1], size=20):
        assert np.all(fam.member(int(j))(z) >= -1.0)


def test_running_inf_is_minus_one():
    fam = A.extraction_family(4)
    for j in fam.ladder():
        r = fam.running_inf(j)
        assert r.certified and not r.collapsed
        assert np.max(np.abs(r.potential.phi_values + 1.0)) <= 1e-10
        if "mesh_max_deviation" in r.certificate:
            assert r.certificate["mesh_max_deviation"] <= 1e-10


def test_extraction_capacities_shrink():
    fam = A.extraction_family(8)
    caps = [fam.deviation_capacity(j, 0.1).value for j in fam.ladder()]
    assert np.all(np.diff(caps) <= 1e-12) and caps[-1] < 0.05


def test_infty_family_capacity_bound_and_l1():
    fam = A.InftyFamily()
    caps = [fam.deviation_capacity(j, 0.1).value for j in (8, 16, 32, 64)]
    assert np.all(np.diff(caps) < 0)
    l1 = [fam.l1_distance(j).value for j in (4, 8, 16)]
    assert np.all(np.diff(l1) < 0)
    assert "mesh-approximate" in fam.l1_distance(4).flags
