import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize
from scipy.spatial import Delaunay
from scipy.stats import qmc

from pshlab import toric2d as D
from pshlab.errors import DomainError

FLAGSHIP = D.PLPotential2D((((0, 0), 0.0), ((1, 0), 0.0), ((0, 1), 0.0)))


def random_pl(rng, k, full_range=False):
    g = rng.dirichlet(np.ones(3), size=k)[:, :2]
    if full_range:
        g = np.vstack([D.SIMPLEX, g])
    b = rng.normal(size=len(g))
    return D.PLPotential2D(tuple(zip(map(tuple, g), b)))


def eval_grid(n, half=6.0):
    s = np.linspace(-half, half, n)
    X, Y = np.meshgrid(s, s)
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def envelope_lp_oracle(u, v, x0):
    """sup { a.x0 + c : a.x + c <= min(u, v) } as a linear programme.

    Unknowns: convex weights lam (pieces of u), mu (pieces of v), a, s with
    a = G_u lam = G_v mu, s >= -b_u.lam, s >= -b_v.mu; maximise a.x0 - s.
    """
    Gu, bu, Gv, bv = u.gradients, u.intercepts, v.gradients, v.intercepts
    m, n = len(bu), len(bv)
    nv = m + n + 3
    c = np.zeros(nv)
    c[m + n:m + n + 2] = -x0
    c[-1] = 1.0
    A_eq, b_eq = [], []
    for k in range(2):
        row = np.zeros(nv); row[:m] = Gu[:, k]; row[m + n + k] = -1; A_eq.append(row); b_eq.append(0)
        row = np.zeros(nv); row[m:m + n] = Gv[:, k]; row[m + n + k] = -1; A_eq.append(row); b_eq.append(0)
    row = np.zeros(nv); row[:m] = 1; A_eq.append(row); b_eq.append(1)
    row = np.zeros(nv); row[m:m + n] = 1; A_eq.append(row); b_eq.append(1)
    A_ub = [np.concatenate([-bu, np.zeros(n), [0, 0, -1]]),
            np.concatenate([np.zeros(m), -bv, [0, 0, -1]])]
    bounds = [(0, None)] * (m + n) + [(None, None)] * 3
    res = optimize.linprog(c, A_ub=A_ub, b_ub=[0, 0], A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                           method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                                    "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        return -np.inf
    return -res.fun


# --- potentials and duals ---------------------------------------------------

def test_validation():
    with pytest.raises(DomainError):
        D.PLPotential2D((((0.8, 0.5), 0.0),))
    with pytest.raises(DomainError):
        D.PLPotential2D(())
    with pytest.raises(DomainError):
        D.PLPotential2D.from_dict({"pieces": [{"g": [0.1, 0.1]}]})


def test_roundtrip():
    u = random_pl(np.random.default_rng(0), 5)
    back = D.PLPotential2D.from_dict(u.to_dict())
    assert back.pieces == u.pieces


def test_normalization_prunes_inactive_pieces():
    u = D.PLPotential2D(FLAGSHIP.pieces + (((1 / 3, 1 / 3), 0.0), ((0.2, 0.2), -1.0)))
    assert len(u.normalized().pieces) == 3
    X = eval_grid(50)
    assert np.array_equal(u(X), u.normalized()(X))


def test_dual_examples():
    d = D.legendre_dual(FLAGSHIP)
    for y in ([0.2, 0.3], [0, 0], [1, 0], [0.5, 0.5]):
        assert d(y) == pytest.approx(0.0, abs=1e-12)
    aff = D.PLPotential2D((((0.2, 0.5), 1.5),))
    da = D.legendre_dual(aff)
    assert da([0.2, 0.5]) == -1.5
    assert da([0.3, 0.5]) == np.inf


def test_biconjugate_random():
    rng = np.random.default_rng(1)
    X = eval_grid(100)
    for _ in range(10):
        u = random_pl(rng, 5)
        back = D.legendre_dual(u).conjugate()
        assert np.max(np.abs(back(X) - u(X))) <= 1e-9


def test_collinear_and_single_gradients():
    u = D.PLPotential2D((((0.0, 0.0), 0.0), ((0.5, 0.0), -0.2), ((1.0, 0.0), -1.0), ((0.25, 0.0), -5.0)))
    d = D.legendre_dual(u)
    assert d.rank == 1 and len(d.vertices) == 3
    X = eval_grid(40)
    assert np.max(np.abs(d.conjugate()(X) - u(X))) <= 1e-12
    mu = D.ma_measure_2d(u)
    assert mu.atom_masses.size == 0 and mu.total_mass() == pytest.approx(1.0, abs=1e-12)
    single = D.ma_measure_2d(D.PLPotential2D((((0.3, 0.3), 2.0),)))
    assert single.atom_masses.size == 0 and single.total_mass() == pytest.approx(1.0)


# --- MA measures -----------------------------------------------------------------

def test_flagship_unit_atom():
    mu = D.ma_measure_2d(FLAGSHIP)
    assert len(mu.atoms) == 1
    loc, mass = mu.atoms[0]
    assert np.allclose(loc, 0.0, atol=1e-12)
    assert abs(mass - 1.0) <= 1e-9
    assert np.all(mu.pole_masses == 0)


def test_affine_has_no_interior_atoms():
    mu = D.ma_measure_2d(D.PLPotential2D((((0.1, 0.6), -3.0),)))
    assert mu.atom_masses.size == 0


def test_atom_masses_against_sobol_oracle():
    rng = np.random.default_rng(2)
    u = random_pl(rng, 4, full_range=False)
    G, b = u.gradients, u.intercepts
    # brute-force primal vertices: every triple of pieces meeting at a point where they are maximal
    verts = []
    for i in range(len(b)):
        for j in range(i + 1, len(b)):
            for k in range(j + 1, len(b)):
                A = np.array([G[i] - G[j], G[i] - G[k]])
                if abs(np.linalg.det(A)) < 1e-12:
                    continue
                x = np.linalg.solve(A, [b[j] - b[i], b[k] - b[i]])
                if G[i] @ x + b[i] >= u(x) - 1e-10:
                    verts.append(x)
    verts = np.unique(np.round(verts, 10), axis=0)
    y = qmc.Sobol(2, scramble=True, seed=3).random_base2(20)
    flip = y.sum(axis=1) > 1
    y[flip] = 1 - y[flip]
    inside = Delaunay(G).find_simplex(y) >= 0
    owner = np.argmax(y @ verts.T - u(verts)[None, :], axis=1)
    mc = np.bincount(owner[inside], minlength=len(verts)) / len(y)
    mu = D.ma_measure_2d(u)
    for x, m in zip(verts, mc):
        k = np.argmin(np.linalg.norm(mu.atom_locations - x, axis=1))
        assert np.linalg.norm(mu.atom_locations[k] - x) < 1e-8
        assert abs(mu.atom_masses[k] - m) <= 1e-3
    assert mu.total_mass() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 8))
def test_full_range_mass_conservation(seed, k):
    u = random_pl(np.random.default_rng(seed), k, full_range=True)
    mu = D.ma_measure_2d(u)
    assert abs(mu.atom_masses.sum() - 1.0) <= 1e-9
    assert np.all(mu.pole_masses <= 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(-5, 5), x0=st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_atoms_shift_and_translation(seed, c, x0):
    u = random_pl(np.random.default_rng(seed), 6)
    mu = D.ma_measure_2d(u)
    shifted = D.ma_measure_2d(u.shifted(c))
    moved = D.ma_measure_2d(u.translated(x0))

    def key(m, off=(0.0, 0.0)):
        order = np.lexsort((m.atom_locations[:, 1] - off[1], m.atom_locations[:, 0] - off[0]))
        return m.atom_locations[order] - np.asarray(off), m.atom_masses[order]

    a_loc, a_m = key(mu)
    for other, off in ((shifted, (0.0, 0.0)), (moved, x0)):
        loc, m = key(other, off)
        assert np.allclose(loc, a_loc, atol=1e-7) and np.allclose(m, a_m, atol=1e-9)


def test_pole_masses_total():
    rng = np.random.default_rng(4)
    for _ in range(20):
        mu = D.ma_measure_2d(random_pl(rng, 4))
        assert mu.total_mass() == pytest.approx(1.0, abs=1e-9)


# --- envelopes ----------------------------------------------------------------

def test_envelope_trivial_examples():
    rng = np.random.default_rng(5)
    u = random_pl(rng, 5).normalized()
    X = eval_grid(60)
    for v in (u.shifted(1.0), u):
        env = D.min_envelope_2d(u, v)
        assert np.max(np.abs(env(X) - u(X))) <= 1e-9


def test_disjoint_gradient_hulls_collapse():
    u = D.PLPotential2D((((0, 0), 0.0),))
    v = D.PLPotential2D((((1, 0), 0.0),))
    env = D.min_envelope_2d(u, v)
    assert env.is_minus_infinity
    assert np.isneginf(envelope_lp_oracle(u, v, np.zeros(2)))


def test_envelope_against_lp_and_grid():
    rng = np.random.default_rng(6)
    X = eval_grid(200, half=4.0)
    probe = eval_grid(12, half=5.0)
    for _ in range(6):
        u, v = random_pl(rng, 5, True), random_pl(rng, 4, True)
        env = D.min_envelope_2d(u, v)
        assert np.all(env(X) <= np.minimum(u(X), v(X)) + 1e-9)
        oracle = np.array([envelope_lp_oracle(u, v, x) for x in probe])
        assert np.max(np.abs(env(probe) - oracle)) <= 1e-7
        again = D.min_envelope_2d(env, env)
        assert np.max(np.abs(again(X) - env(X))) <= 1e-9


def test_envelope_partial_overlap_against_lp():
    rng = np.random.default_rng(7)
    probe = eval_grid(10, half=5.0)
    done = 0
    while done < 6:
        u, v = random_pl(rng, 4), random_pl(rng, 4)
        env = D.min_envelope_2d(u, v)
        oracle = np.array([envelope_lp_oracle(u, v, x) for x in probe])
        if env.is_minus_infinity:
            assert np.all(np.isneginf(oracle))
            continue
        assert np.max(np.abs(env(probe) - oracle)) <= 1e-7
        done += 1


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_envelope_monotone(seed):
    rng = np.random.default_rng(seed)
    u, v = random_pl(rng, 4, True), random_pl(rng, 4, True)
    bigger = D.PLPotential2D(u.pieces + random_pl(rng, 2).pieces)  # u <= bigger
    X = eval_grid(40)
    a = D.min_envelope_2d(u, v)(X)
    b = D.min_envelope_2d(bigger, v)(X)
    c = D.min_envelope_2d(v, bigger)(X)
    assert np.all(a <= b + 1e-9)
    assert np.allclose(b, c, atol=1e-9)
