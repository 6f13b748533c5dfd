import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsconley import catalog
from lsconley.continuation import (
    ContinuationError,
    HomotopyFamily,
    closeness_epsilon,
    field_distance,
    g_nesting_check,
    galerkin_continuation,
    gronwall_check,
    inclusion_slack,
    reineck_verify,
    verify_isolating_along,
)
from lsconley.isolation import CubicalSet, GridBox
from lsconley.ls_system import Box, GradientSpec, LSField, SplitModel, flow_map, negative_gradient_field

SQUARE64 = GridBox((-1.0, -1.0), (1.0, 1.0), 64)


def test_closeness_examples():
    assert closeness_epsilon(1, 2, 0.2) == pytest.approx(0.2 / (4 * math.e**2))
    assert closeness_epsilon(1, 2, 0.2) == pytest.approx(0.006767, abs=1e-6)
    assert closeness_epsilon(0, 1, 2) == 1.0
    assert closeness_epsilon(1, 2, 1e-12) < 1e-12
    with pytest.raises(ValueError):
        closeness_epsilon(1, 0, 1)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 5), st.floats(0.1, 5), st.floats(0.01, 2), st.floats(1.01, 3))
def test_closeness_monotone(c, T, rho, k):
    e = closeness_epsilon(c, T, rho)
    assert closeness_epsilon(c, T, k * rho) > e
    assert closeness_epsilon(c, k * T, rho) < e
    assert closeness_epsilon(c + k, T, rho) < e
    # the criterion itself
    assert e * T * math.exp(c * T) == pytest.approx(rho / 2)


def test_homotopy_endpoints():
    rs = catalog.rotated_saddle_homotopy()
    H = rs.homotopy
    box = rs.U.box
    assert H.endpoint_defect(box) <= 1e-10
    X = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    R = H.reversed()
    assert np.allclose(R.evaluate(0.0, X), H.evaluate(1.0, X))
    assert np.allclose(H.field_at(0.3)(X), H.evaluate(0.3, X))


def test_gronwall_examples():
    s = catalog.saddle2d(32)
    same = gronwall_check(s.field, s.field, s.U, 2.0)
    assert same.epsilon == 0 and same.ok
    shift = LSField(s.model, lambda x: np.broadcast_to(np.array([1e-3, 0.0]), np.shape(x)).copy())
    lin = LSField(SplitModel((1.0,)))
    # explicit check of the linear bound at t = 1
    x0 = np.array([0.2])
    F1 = LSField(lin.model, lambda x: np.full(np.shape(x), 1e-3))
    gap = abs(flow_map(F1, x0, 1.0, 1e-3) - flow_map(lin, x0, 1.0, 1e-3))[0]
    assert gap <= 1e-3 * math.e * 1.05
    assert gap == pytest.approx(1e-3 * (math.e - 1), rel=1e-6)
    bumped = catalog.bump_perturbation(s.field, 1e-3)
    r = gronwall_check(s.field, bumped, s.U, 2.0, starts=20)
    assert r.violations == 0 and r.checked > 0
    assert gronwall_check(s.field, LSField(s.model, shift.K), s.U, 2.0).ok


def test_verify_isolating_examples():
    rs = catalog.rotated_saddle_homotopy()
    rep = verify_isolating_along(rs.homotopy, rs.U, 11, rs.T)
    assert all(rep.isolating_at) and rep.verdict and rep.lost_at is None
    assert rep.endpoint_e_indices[0] == {0: 1} and rep.endpoints_equal
    assert len(rep.lines()) >= 11
    const = verify_isolating_along(HomotopyFamily.constant(catalog.saddle2d(32).field), rs.U, 5, 2.0)
    assert const.verdict
    br = catalog.isolation_breaker()
    b = verify_isolating_along(br.homotopy, br.U, 11, br.T)
    assert not b.verdict and b.lost_at == pytest.approx(0.5, abs=0.1)
    assert b.endpoint_e_indices[0] == {0: 1} and b.endpoint_e_indices[1].dims.is_zero()
    with pytest.raises(ValueError):
        verify_isolating_along(rs.homotopy, rs.U, 1, 2.0)


@pytest.mark.parametrize("name", ["rotated-saddle-homotopy", "isolation-breaker"])
def test_verdict_invariant_under_reversal(name):
    s = catalog.get(name)
    a = verify_isolating_along(s.homotopy, s.U, 11, s.T)
    b = verify_isolating_along(s.homotopy.reversed(), s.U, 11, s.T)
    assert a.verdict == b.verdict
    assert a.isolating_at == b.isolating_at[::-1]


def test_inclusion_slack():
    g = GridBox((0.0, 0.0), (1.0, 1.0), 8)
    A = CubicalSet.from_cells(g, [(1, 1), (2, 2)])
    B = CubicalSet.from_cells(g, [(1, 1)])
    assert inclusion_slack(B, A) == 0
    assert inclusion_slack(A, B) == 1


def test_nesting_examples():
    s = catalog.saddle2d(64)
    same = g_nesting_check(s.field, s.field, s.U, 1.0)
    assert same.hypothesis_met and same.slack == (0, 0, 0)
    bumped = catalog.bump_perturbation(s.field, 1e-3)
    r = g_nesting_check(s.field, bumped, s.U, 1.0)
    assert r.hypothesis_met and r.ok and max(r.slack) == 0
    far = catalog.bump_perturbation(s.field, 5.0)
    f = g_nesting_check(s.field, far, s.U, 1.0)
    assert not f.hypothesis_met and f.note == "hypothesis unmet" and not f.ok


def test_nesting_doublewell():
    s = catalog.doublewell(64)
    bumped = catalog.bump_perturbation(s.field, 1e-3)
    r = g_nesting_check(s.field, bumped, s.U, 1.0)
    assert r.hypothesis_met and all(v <= 1 for v in r.slack)


def _coupled(strength):
    m = SplitModel((1.0, -1.0, -1.0), (1, 2, 3))

    def K(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 1] = 0.3 * x[..., 0] ** 2
        out[..., 2] = strength * x[..., 0] * x[..., 1]
        return out

    return LSField(m, K, name=f"coupled {strength:g}")


def test_galerkin_examples():
    U3 = GridBox((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), 12)
    m = SplitModel((1.0, -1.0), (1, 2))
    F1 = LSField(m, lambda x: np.stack([-np.asarray(x)[..., 0] ** 3, np.zeros(np.shape(x)[:-1])], -1))
    r1 = galerkin_continuation(F1, GridBox((-1.5, -1.5), (1.5, 1.5), 32), 2.0)
    assert r1.level == 1 and r1.distance == 0 and r1.indices_equal
    r2 = galerkin_continuation(_coupled(1e-2), U3, 1.0)
    assert r2.level == 2 and r2.distance <= r2.budget and r2.indices_equal
    with pytest.raises(ContinuationError):
        galerkin_continuation(_coupled(1.0), U3, 1.0)


def test_reineck_examples():
    dw = catalog.doublewell()
    r = reineck_verify(dw.field, dw.U, dw.gradient, HomotopyFamily.constant(dw.field), dw.T)
    assert r.ok and r.morse == {0: 1}

    m1 = SplitModel((-1.0,))
    g1 = GradientSpec(m1, lambda x: np.zeros(np.shape(x)[:-1]), support_level=1)
    F = LSField(m1, lambda x: 0.2 * np.sin(np.asarray(x)), linear=(1.0,))
    U1 = GridBox((-1.0,), (1.0,), 64)
    r1 = reineck_verify(F, U1, g1, HomotopyFamily.linear(F, negative_gradient_field(g1)), 2.0)
    assert r1.ok and r1.e_field == {0: 1} and r1.e_gradient == {0: 1} and r1.morse == {0: 1}

    rot = LSField(dw.model, lambda x: dw.field.K(x) + 0.05 * np.stack([-np.asarray(x)[..., 1], np.asarray(x)[..., 0]], -1),
                  linear=dw.field.linear, name="dw+rot")
    r2 = reineck_verify(rot, dw.U, dw.gradient, HomotopyFamily.linear(rot, dw.field), dw.T)
    assert r2.ok and r2.e_field == {0: 1}


def test_reineck_rejects_wrong_homotopy():
    dw = catalog.doublewell()
    other = catalog.saddle2d(32).field
    with pytest.raises(ValueError):
        reineck_verify(dw.field, dw.U, dw.gradient, HomotopyFamily.constant(other), dw.T)


def test_field_distance_constant_shift():
    s = catalog.saddle2d(32)
    shifted = LSField(s.model, lambda x: np.broadcast_to(np.array([3e-3, 4e-3]), np.shape(x)).copy())
    assert field_distance(s.field, shifted, Box((-1.0, -1.0), (1.0, 1.0))) == pytest.approx(5e-3)
