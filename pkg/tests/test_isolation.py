import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsconley import catalog
from lsconley.conley_e import classical_index
from lsconley.isolation import (
    CubicalSet,
    GridBox,
    IndexPairCombinatorial,
    IsolationCalibration,
    IsolationError,
    build_index_pair,
    calibrate_isolation,
    compute_GammaT,
    compute_GT,
    exit_time,
    probe_regularity,
    verify_index_pair,
)
from lsconley.ls_system import LSField, SplitModel
from lsconley.z2_chain import is_face_closed

EXPAND = LSField(SplitModel((-1.0,)), linear=(1.0,))
CONTRACT = LSField(SplitModel((1.0,)), linear=(-1.0,))
SADDLE = LSField(SplitModel((1.0, -1.0)))
U1 = GridBox((-1.0,), (1.0,), 64)


def cell_interval(cs: CubicalSet):
    lo, hi = cs.bounds()
    return float(lo[0]), float(hi[0])


def test_gridbox_basics():
    g = GridBox((0.0, -1.0), (2.0, 1.0), (4, 8))
    assert np.allclose(g.width, [0.5, 0.25])
    assert g.n_cells == 32
    assert np.allclose(g.from_lattice(g.to_lattice([1.3, 0.2])), [1.3, 0.2])
    assert GridBox.from_header(g.header()) == g
    with pytest.raises(ValueError):
        GridBox((1.0,), (0.0,), 4)


@pytest.mark.parametrize("T", [1.0, 2.0, 3.0])
def test_gt_expanding_interval(T):
    lo, hi = cell_interval(compute_GT(EXPAND, U1, T))
    w = 2 / 64
    r = math.exp(-T)
    assert abs(lo + r) <= 2 * w and abs(hi - r) <= 2 * w


def test_gt_small_horizon_is_everything():
    assert len(compute_GT(EXPAND, U1, 1e-9).cells) == 64


def test_gt_saddle_square():
    U = GridBox((-1.0, -1.0), (1.0, 1.0), 64)
    lo, hi = compute_GT(SADDLE, U, 3.0).bounds()
    r, w = math.exp(-3), 2 / 64
    assert np.all(np.abs(lo + r) <= 2 * w) and np.all(np.abs(hi - r) <= 2 * w)


def test_gamma_examples():
    G = compute_GT(EXPAND, U1, 2.0)
    Gam = compute_GammaT(EXPAND, G, U1, 2.0)
    lo, hi = cell_interval(G)
    assert Gam.cells and Gam.cells <= G.cells
    extremes = {min(G.cells), max(G.cells)}
    assert extremes <= Gam.cells
    centers = [U1.from_lattice(np.array(c) + 0.5)[0] for c in Gam.cells]
    assert min(abs(c) for c in centers) > 0.5 * math.exp(-2)
    Gc = compute_GT(CONTRACT, U1, 2.0)
    assert compute_GammaT(CONTRACT, Gc, U1, 2.0).is_empty()
    # 1D attractor at x = sqrt(3) of x' = 2x - x^3 - x
    Ub = GridBox((1.2,), (2.2,), 16)
    F1 = LSField(SplitModel((1.0,)), lambda x: -(np.asarray(x) ** 3) + 2 * np.asarray(x), linear=(-1.0,))
    Gb = compute_GT(F1, Ub, 2.0)
    assert compute_GammaT(F1, Gb, Ub, 2.0).is_empty()


def test_index_pair_examples():
    p = build_index_pair(EXPAND, U1, 2.0)
    assert classical_index(p) == {1: 1}
    q = build_index_pair(CONTRACT, U1, 2.0)
    assert q.L.is_empty() and classical_index(q) == {0: 1}
    off = build_index_pair(EXPAND, GridBox((0.2,), (1.0,), 32), 2.0)
    assert off.N.is_empty() and classical_index(off).is_zero()


def test_index_pair_structure():
    for F, U in ((EXPAND, U1), (SADDLE, GridBox((-1.0, -1.0), (1.0, 1.0), 32))):
        p = build_index_pair(F, U)
        assert p.L <= p.N
        assert is_face_closed(p.N.cubes) and is_face_closed(p.L.cubes)


def test_index_pair_too_small_T():
    with pytest.raises(IsolationError):
        build_index_pair(SADDLE, GridBox((-1.0, -1.0), (1.0, 1.0), 32), 0.05)
    # expanding boundary cells exit, so a short horizon is still a valid pair
    assert classical_index(build_index_pair(EXPAND, U1, 0.05)) == {1: 1}


def test_monotone_in_T():
    U = GridBox((-1.0, -1.0), (1.0, 1.0), 32)
    prev = None
    for T in (0.5, 1.0, 2.0, 3.0):
        G = compute_GT(SADDLE, U, T)
        if prev is not None:
            assert G.cells <= prev.cells
        prev = G


def test_double_horizon_nests():
    U = GridBox((-1.0, -1.0), (1.0, 1.0), 32)
    G2 = compute_GT(SADDLE, U, 2.0)
    G1 = compute_GT(SADDLE, U, 1.0)
    lo1, hi1 = G1.bounds()
    sub = GridBox(tuple(lo1), tuple(hi1), tuple(int(round(v)) for v in (hi1 - lo1) / U.width))
    G11 = compute_GT(SADDLE, sub, 1.0)
    a, b = G2.bounds()
    c, d = G11.bounds()
    w = float(np.max(U.width))
    assert np.all(a >= c - w - 1e-12) and np.all(b <= d + w + 1e-12)


@pytest.mark.parametrize("name", ["expand1d", "saddle2d", "doublewell"])
def test_refinement_stabilises(name):
    s = catalog.get(name)
    n0 = s.U.subdivisions[0]
    coarse = classical_index(build_index_pair(s.field, s.U, s.T))
    fine_U = GridBox(s.U.lower, s.U.upper, tuple(2 * n for n in s.U.subdivisions))
    fine = classical_index(build_index_pair(s.field, fine_U, s.T))
    assert fine.total() <= coarse.total()
    assert fine == {"expand1d": {1: 1}, "saddle2d": {1: 1}, "doublewell": {1: 1}}[name]


def test_verify_pair_examples():
    p = build_index_pair(EXPAND, U1, 2.0)
    assert verify_index_pair(EXPAND, p, samples=200).ok
    no_exit = IndexPairCombinatorial(N=p.N, L=CubicalSet(U1), T_used=2.0)
    assert verify_index_pair(EXPAND, no_exit, samples=200).exit_violations > 0
    full = CubicalSet.full(U1)
    assert verify_index_pair(EXPAND, IndexPairCombinatorial(full, full, 2.0), samples=50).total == 0


def test_exit_time_examples():
    full = CubicalSet.full(U1)
    ends = CubicalSet(U1, [((0, 0),), ((64, 64),)])
    pair = IndexPairCombinatorial(full, ends, 2.0)
    assert exit_time(EXPAND, pair, [0.5], cap=10.0) == pytest.approx(math.log(2), abs=0.01)
    assert exit_time(EXPAND, pair, [1.0], cap=10.0) == 0.0
    assert math.isinf(exit_time(EXPAND, pair, [0.0], cap=10.0))


def test_regularity_probe_on_expanding_pair():
    p = build_index_pair(EXPAND, U1, 2.0)
    assert not probe_regularity(EXPAND, p).irregular


def test_calibration_examples():
    c = calibrate_isolation(EXPAND, U1)
    assert 0.43 <= c.epsilon0 <= 0.5
    assert c.rho < c.epsilon0 and not c.delta_checked
    U2 = GridBox((-1.0, -1.0), (1.0, 1.0), 32)
    c2 = calibrate_isolation(SADDLE, U2)
    assert c2.epsilon0 == pytest.approx(0.5, abs=0.07)
    assert c2.T >= math.log((1 + c2.rho) / (1 - c2.rho))
    b = compute_GT(SADDLE, U2.inflate(c2.rho), c2.T).bounds()
    assert np.all(b[0] > -1) and np.all(b[1] < 1)
    with pytest.raises(IsolationError, match="not isolating"):
        calibrate_isolation(EXPAND, GridBox((0.0,), (1.0,), 32))
    with pytest.raises(ValueError):
        IsolationCalibration(0.1, 0.2, 1.0, 1.0)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), min_size=0, max_size=10, unique=True))
def test_snapshot_roundtrip(cells):
    g = GridBox((-1.0, 0.0), (1.0, 3.0), 8)
    cs = CubicalSet.from_cells(g, cells)
    back = CubicalSet.from_text(cs.to_text("N"))
    assert back == cs and back.grid == g
