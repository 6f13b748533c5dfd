import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsconley import catalog
from lsconley.conley_e import (
    EIndex,
    LevelFamily,
    classical_index,
    e_cohomology_limit,
    e_dimension,
    e_index,
    nontriviality_check,
    sphere_family,
    suspend_box,
    suspend_field,
    suspension_check,
)
from lsconley.isolation import CubicalSet, GridBox, IndexPairCombinatorial, build_index_pair
from lsconley.ls_system import LSField, SplitModel
from lsconley.z2_chain import (
    ChainComplexError,
    GradedDims,
    closure,
    full_cube,
    mv_connecting,
    pair_homology,
    rank_z2,
)

SQUARE = GridBox((-1.0, -1.0), (1.0, 1.0), 32)


def test_classical_examples():
    s = catalog.saddle2d(64)
    assert classical_index(build_index_pair(s.field, s.U, s.T)) == {1: 1}
    empty = IndexPairCombinatorial(CubicalSet(SQUARE), CubicalSet(SQUARE), 1.0)
    assert classical_index(empty).is_zero()
    sink = LSField(SplitModel((1.0, 1.0)), linear=(-1.0, -1.0))
    assert classical_index(build_index_pair(sink, SQUARE, 2.0)) == {0: 1}


def test_e_index_examples():
    s = catalog.saddle2d(64)
    p = build_index_pair(s.field, s.U, s.T)
    e = e_index(p, s.model)
    assert e == {0: 1} and e.offset == -1
    sink_model = SplitModel((1.0, 1.0))
    sink = LSField(sink_model, linear=(-1.0, -1.0))
    assert e_index(build_index_pair(sink, SQUARE, 2.0), sink_model) == {0: 1}
    src_model = SplitModel((-1.0, -1.0))
    src = LSField(src_model, linear=(1.0, 1.0))
    q = build_index_pair(src, SQUARE, 2.0)
    assert classical_index(q) == {2: 1}
    assert e_index(q, src_model) == {0: 1}


@pytest.mark.parametrize("name", ["expand1d", "contract1d", "saddle2d", "doublewell"])
def test_e_index_is_reindexing(name):
    s = catalog.get(name)
    p = build_index_pair(s.field, s.U, s.T)
    h = classical_index(p)
    e = e_index(p, s.model)
    d = s.model.d_minus
    for q in range(-3, 4):
        assert e[q] == h[q + d]


# horizons are kept where the cell width stays below e^{-T}
@pytest.mark.parametrize("name,horizons", [("saddle2d", (2.0, 3.0)), ("doublewell", (1.5, 2.0)), ("expand1d", (2.0, 3.0))])
def test_index_independent_of_T(name, horizons):
    s = catalog.get(name)
    tables = {str(e_index(build_index_pair(s.field, s.U, T), s.model).as_dict()) for T in horizons}
    assert len(tables) == 1 and "{}" not in tables


def test_nontriviality():
    assert nontriviality_check(GradedDims.from_dict({0: 1}))
    assert not nontriviality_check(GradedDims())
    dw = catalog.doublewell()
    assert nontriviality_check(e_index(build_index_pair(dw.field, dw.U, dw.T), dw.model))


def test_e_dimension_examples():
    m = SplitModel((1.0, 1.0, -1.0))
    assert e_dimension({0, 1, 2}, m) == 2
    assert e_dimension({2}, m) == 0
    assert e_dimension(set(), m) == -1
    with pytest.raises(ValueError):
        e_dimension({5}, m)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from([1.0, -1.0]), min_size=1, max_size=6), st.data())
def test_e_dimension_formula(spec, data):
    m = SplitModel(tuple(spec))
    V = data.draw(st.sets(st.integers(0, len(spec) - 1)))
    plus = {i for i, v in enumerate(spec) if v > 0}
    # linear-algebra oracle with explicit bases
    B_V = np.eye(len(spec))[sorted(V)]
    B_P = np.eye(len(spec))[sorted(plus)]
    rank = lambda B: np.linalg.matrix_rank(B) if B.size else 0
    inter = rank(B_V) + rank(B_P) - rank(np.vstack([B_V, B_P]) if (B_V.size or B_P.size) else B_V)
    codim = len(spec) - rank(np.vstack([B_V, B_P]) if (B_V.size or B_P.size) else B_V)
    assert e_dimension(V, m) == inter - codim


@pytest.mark.parametrize("p", [0, 1, 2])
def test_sphere_limits(p):
    rec = e_cohomology_limit(sphere_family(p))
    assert rec.limit == {p - 1: 1}
    assert rec.exact


def test_empty_family_and_short_family():
    empty = LevelFamily(((0, frozenset()), (1, frozenset()), (2, frozenset())), (0, 1))
    assert e_cohomology_limit(empty).limit.is_zero()
    fam = sphere_family(1)
    with pytest.raises(ValueError):
        e_cohomology_limit(LevelFamily(fam.levels[:2], fam.axes[:1]))


def test_family_validation():
    fam = sphere_family(1)
    with pytest.raises(ValueError):
        LevelFamily((fam.levels[0], fam.levels[2]), (fam.axes[0],))


def test_no_plateau_raises():
    # two segments that a band joins at the top level: Delta into the band has rank 1,
    # while nothing reaches it from the two points below
    unit = [(-1, 0), (0, 1)]
    walls = [((a, a), y, z) for a in (-1, 1) for y in unit for z in unit]
    lids = [(x, y, (c, c)) for c in (-1, 1) for x in unit for y in unit]
    band = closure(walls + lids)
    segs = frozenset(q for q in band if q[2] == (0, 0))
    pts = frozenset(q for q in segs if q[1] == (0, 0))
    fam = LevelFamily(((0, pts), (1, segs), (2, band)), (1, 2))
    with pytest.raises(ChainComplexError, match="plateau"):
        e_cohomology_limit(fam)


@pytest.mark.parametrize("p", [0, 1, 2])
def test_orientation_choice_is_immaterial(p):
    fam = sphere_family(p)
    for (_, x), ax in zip(fam.levels[1:], fam.axes):
        a = mv_connecting(x, ax)
        b = mv_connecting(x, ax, flip=True)
        assert {k: rank_z2(m) for k, m in a.items()} == {k: rank_z2(m) for k, m in b.items()}


def test_kunneth_oracle_for_suspension():
    # (N x I, L x I u N x dI) has the homology of (N, L) shifted by one
    N = closure([((0, 1),)])
    L = frozenset({((0, 0),), ((1, 1),)})
    I = [(0, 1)]
    prod = closure([q + ((0, 1),) for q in N])
    Lp = closure([q + ((0, 1),) for q in L] + [q + ((0, 0),) for q in N] + [q + ((1, 1),) for q in N])
    assert pair_homology(prod, Lp) == pair_homology(N, L).shifted(1)


def test_suspension_examples():
    e1 = catalog.expand1d()
    r = suspension_check(e1.field, e1.U, T=e1.T)
    assert r.classical == {1: 1} and r.classical_suspended == {2: 1}
    assert r.e == {0: 1} and r.ok
    off = catalog.offcenter_saddle()
    r0 = suspension_check(off.field, off.U, T=off.T)
    assert r0.classical.is_zero() and r0.classical_suspended.is_zero() and r0.ok
    dw = catalog.doublewell()
    r2 = suspension_check(dw.field, dw.U, T=dw.T)
    assert r2.e == {0: 1} and r2.ok


def test_suspended_field_structure():
    F = catalog.doublewell().field
    G = suspend_field(F, 0.25)
    x = np.array([[0.3, -0.4, 0.7]])
    assert np.allclose(G(x)[:, :2], F(x[:, :2]))
    assert G(x)[0, 2] == pytest.approx(0.25 * 0.7)
    assert G.model.d_minus == F.model.d_minus + 1
    assert suspend_box(SQUARE, 16).subdivisions == (32, 32, 16)
