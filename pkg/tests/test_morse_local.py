import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsconley import catalog
from lsconley.acceptance import random_separable_gradient
from lsconley.isolation import GridBox
from lsconley.ls_system import GradientSpec, SplitModel, negative_gradient_field, separable_polynomial_b
from lsconley.morse_local import (
    DegenerateCriticalPointError,
    FastSlowSpec,
    GradientFamily,
    LyapunovViolation,
    OMEGA_PRIME_MAX,
    build_boundary,
    build_fastslow,
    compare_with_e_index,
    count_connections,
    eta,
    eta_prime,
    fastslow_box,
    fastslow_monotonicity_check,
    fastslow_threshold,
    find_critical_points,
    local_morse_homology,
    mcf_homology,
    mu_velocity,
    omega,
    omega_prime,
)

BOX15 = GridBox((-1.5, -1.5), (1.5, 1.5), 32)


def quadratic(spectrum):
    return GradientSpec(SplitModel(tuple(spectrum)), lambda x: np.zeros(np.shape(x)[:-1]),
                        lambda x: np.zeros(np.shape(x)), lambda x: np.zeros(np.shape(x) + (len(spectrum),)))


def by_point(crit):
    return {tuple(round(v, 6) for v in c.x): c for c in crit}


# ---- critical points ------------------------------------------------------

def test_doublewell_critical_points():
    g = catalog.doublewell_gradient()
    crit = by_point(find_critical_points(g, BOX15))
    assert set(crit) == {(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0)}
    o = crit[(0.0, 0.0)]
    assert np.allclose(o.hess_spectrum, [-1, -1]) and o.mu_neg == 2 and o.rel_index == 1
    for x in (1.0, -1.0):
        c = crit[(x, 0.0)]
        assert np.allclose(sorted(c.hess_spectrum), [-1, 2]) and c.mu_neg == 1 and c.rel_index == 0
        assert c.f_value == pytest.approx(-0.25)
    for c in crit.values():
        assert np.linalg.norm(g.grad(c.point)) <= 1e-8 * (1 + np.linalg.norm(c.point))
        assert c.nondegenerate and c.rel_index == c.mu_neg - g.model.d_minus


def test_quadratic_and_empty():
    crit = find_critical_points(quadratic((1.0, -1.0)), BOX15)
    assert len(crit) == 1 and crit[0].rel_index == 0
    assert find_critical_points(catalog.doublewell_gradient(), GridBox((0.2, 0.2), (0.8, 0.8), 8)) == []


def test_degenerate_point_flagged():
    b, gb, hb = separable_polynomial_b([[0, 0, -0.5, 0, 0.25], []])  # f = x^4/4 near 0
    g = GradientSpec(SplitModel((1.0, -1.0)), b, gb, hb)
    crit = find_critical_points(g, GridBox((-0.5, -0.5), (0.5, 0.5), 8), seeds_per_axis=1)
    assert crit and not crit[0].nondegenerate
    with pytest.raises(DegenerateCriticalPointError, match="perturb"):
        build_boundary(g, GridBox((-0.5, -0.5), (0.5, 0.5), 8), seeds_per_axis=1)
    tilted = catalog.tilt_gradient(g, 1e-3)
    assert all(c.nondegenerate for c in find_critical_points(tilted, GridBox((-0.5, -0.5), (0.5, 0.5), 8)))


# ---- connections ----------------------------------------------------------

def test_doublewell_connections():
    g = catalog.doublewell_gradient()
    crit = by_point(find_critical_points(g, BOX15))
    o = crit[(0.0, 0.0)]
    for y in (1.0, -1.0):
        con = count_connections(g, o, crit[(y, 0.0)], BOX15)
        assert con.count_mod2 == 1 and con.orbits == 1
        for w in con.witnesses:
            assert np.all(BOX15.box.contains(np.asarray(w), tol=1e-9))
    with pytest.raises(ValueError):
        count_connections(g, crit[(1.0, 0.0)], crit[(-1.0, 0.0)], BOX15)


def test_ring_counts_two_orbits():
    # f = (|x|^2 - 1)^2 / 4 tilted: a maximum near 0, a saddle and a minimum on the ring
    model = SplitModel((1.0, 1.0))

    def b(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return 0.25 * (r2 - 1) ** 2 + 0.1 * x[..., 0] - 0.5 * r2

    g = GradientSpec(model, b)
    U = GridBox((-1.6, -1.6), (1.6, 1.6), 32)
    crit = find_critical_points(g, U)
    ranks = sorted(c.rel_index for c in crit)
    assert ranks == [0, 1, 2]
    mc = build_boundary(g, U)
    saddle = mc.generators[1][0]
    minimum = mc.generators[0][0]
    con = count_connections(g, saddle, minimum, U)
    assert con.orbits == 2 and con.count_mod2 == 0
    # the maximum reaches the saddle along one branch of its stable manifold
    assert mc.boundary[2].to_dense().tolist() == [[1]]
    assert mc.boundary[1].to_dense().tolist() == [[0]]
    assert mc.homology() == {0: 1}


# ---- complexes ------------------------------------------------------------

def test_doublewell_complex():
    mc = build_boundary(catalog.doublewell_gradient(), BOX15)
    assert [len(mc.generators[k]) for k in (0, 1)] == [2, 1]
    assert mc.boundary[1].to_dense().tolist() == [[1], [1]]
    assert mc.homology() == {0: 1}


def test_trivial_complexes():
    q = quadratic((1.0, -1.0))
    mc = build_boundary(q, BOX15)
    assert not mc.boundary and local_morse_homology(q, BOX15) == {0: 1}
    b, gb, hb = separable_polynomial_b([[0, 0, -1, 0, 0.25], [0, 0, 0.5]])
    wells = GridBox((0.5, -0.5), (1.5, 0.5), 16)
    two = GradientSpec(SplitModel((1.0, 1.0)), b, gb, hb)
    assert local_morse_homology(two, wells) == {0: 1}
    U2 = GridBox((-1.5, -0.5), (1.5, 0.5), 16)
    crit = [c for c in find_critical_points(two, U2) if c.rel_index == 0]
    mc2 = build_boundary(two, U2, critical_points=crit)
    assert len(mc2.generators[0]) == 2 and not mc2.boundary
    assert local_morse_homology(catalog.doublewell_gradient(), GridBox((0.2, 0.2), (0.8, 0.8), 8)).is_zero()


def test_compare_examples():
    assert compare_with_e_index(catalog.doublewell_gradient(), BOX15, 2.0).summary() == "EQUAL: {0: 1}"
    q = compare_with_e_index(quadratic((1.0, -1.0)), GridBox((-1.0, -1.0), (1.0, 1.0), 64), 3.0)
    assert q.equal and q.morse == {0: 1}
    off = compare_with_e_index(catalog.doublewell_gradient(), GridBox((0.2, 0.2), (0.8, 0.8), 16), 2.0)
    assert off.equal and off.morse.is_zero()


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000))
def test_random_systems_square_to_zero(seed):
    g, U = random_separable_gradient(np.random.default_rng(seed))
    mc = build_boundary(g, U)  # raises on a nonzero square
    for k, m in mc.boundary.items():
        if k - 1 in mc.boundary:
            assert (mc.boundary[k - 1] @ m).is_zero()
    for con in mc.connections:
        assert con.source.rel_index == con.target.rel_index + 1


def test_gradient_field_descends():
    for name in ("doublewell",):
        g = catalog.get(name).gradient
        F = negative_gradient_field(g)
        X = np.random.default_rng(7).uniform(-1.5, 1.5, (500, 2))
        gn = np.linalg.norm(g.grad(X), axis=-1)
        X = X[gn > 1e-3]
        assert np.all(np.sum(g.differential(X) * F(X), axis=-1) < 0)


def test_suspension_keeps_rel_index():
    g = catalog.doublewell_gradient()
    model = g.model.suspended(-1.0)
    gs = GradientSpec(model, lambda z: g.b(np.asarray(z)[..., :2]),
                      lambda z: np.concatenate([g.grad_b(np.asarray(z)[..., :2]), np.zeros(np.shape(z)[:-1] + (1,))], -1))
    U3 = GridBox((-1.5, -1.5, -1.0), (1.5, 1.5, 1.0), 8)
    base = sorted((c.x, c.rel_index, c.mu_neg) for c in find_critical_points(g, BOX15))
    susp = sorted((c.x[:2], c.rel_index, c.mu_neg - 1) for c in find_critical_points(gs, U3, seeds_per_axis=5))
    assert [(r, m) for _, r, m in base] == [(r, m) for _, r, m in susp]


# ---- fast-slow ------------------------------------------------------------

def test_cutoffs():
    t = np.linspace(-0.5, 1.5, 2001)
    w = omega(t)
    assert np.all(w[t <= 1 / 3] == 1) and np.all(w[t >= 2 / 3] == 0)
    mid = (t > 1 / 3) & (t < 2 / 3)
    assert np.all(np.diff(w[mid]) < 0)
    assert np.max(np.abs(omega_prime(t))) == pytest.approx(OMEGA_PRIME_MAX, rel=1e-4)
    fd = (omega(t + 1e-6) - omega(t - 1e-6)) / 2e-6
    assert np.allclose(fd, omega_prime(t), atol=1e-5)
    mu = np.linspace(-1, 2, 3001)
    assert np.all(eta(mu[(mu >= 0) & (mu <= 1)]) == 0)
    assert np.all(eta_prime(mu[mu < 0]) < 0) and np.all(eta_prime(mu[mu > 1]) > 0)
    outside = (mu < -0.5) | (mu > 1.5)
    assert np.all(np.abs(eta_prime(mu[outside])) > 1)


def _const_spec(r_factor=2.0, kappa=0.1):
    g = catalog.doublewell_gradient()
    fam = GradientFamily.constant(g)
    spec = FastSlowSpec(fam, 0.0, kappa, catalog.doublewell(16).U)
    C, r_min = fastslow_threshold(spec)
    spec.r = r_factor * r_min
    return g, spec


def test_fastslow_threshold_refusal():
    _, spec = _const_spec(0.5)
    with pytest.raises(ValueError, match="threshold"):
        build_fastslow(spec)


def test_fastslow_constant_family():
    g, spec = _const_spec()
    G = build_fastslow(spec)
    box = fastslow_box(spec)
    crit = find_critical_points(G, box)
    base = find_critical_points(g, spec.U)
    mus = sorted({round(c.x[-1], 6) for c in crit})
    assert mus == [0.0, 1.0]
    assert len(crit) == 2 * len(base)
    interior = find_critical_points(G, box, seed_box=(spec.U.lower + (0.05,), spec.U.upper + (0.95,)))
    assert all(c.x[-1] < 0.05 or c.x[-1] > 0.95 for c in interior)
    # index bookkeeping: C_k(F) = C_{k-1}(f0) + C_k(f1)
    count = lambda cs, k: sum(1 for c in cs if c.rel_index == k)
    for k in range(0, 4):
        assert count(crit, k) == count(base, k - 1) + count(base, k)
    at = lambda m: sorted(c.mu_neg for c in crit if abs(c.x[-1] - m) < 1e-6)
    assert [a - b for a, b in zip(at(0.0), at(1.0))] == [1] * len(base)


def test_fastslow_velocity():
    _, spec = _const_spec()
    rep = fastslow_monotonicity_check(spec, samples=1000)
    assert rep.ok and rep.samples == 1000
    z = np.array([0.3, -0.2, 0.5])
    assert mu_velocity(spec, z) == pytest.approx(spec.kappa * spec.r * math.pi)


def test_fastslow_needs_r():
    g0 = catalog.doublewell_gradient()
    b, gb, hb = separable_polynomial_b([[0, 0, -1, 0, 0.25], [0, 3.0]])
    g1 = GradientSpec(g0.model, b, gb, hb)
    spec = FastSlowSpec(GradientFamily.interpolate(g0, g1), 0.0, 0.1, catalog.doublewell(16).U)
    assert not fastslow_monotonicity_check(spec, samples=1000).ok
    spec.r = 2 * fastslow_threshold(spec)[1]
    assert fastslow_monotonicity_check(spec, samples=1000).ok


def test_fastslow_hessian_consistent():
    g, spec = _const_spec()
    G = build_fastslow(spec)
    z = np.array([0.4, -0.3, 0.45])
    h = 1e-5
    fd = np.stack([(G.differential(z + e) - G.differential(z - e)) / (2 * h) for e in np.eye(3) * h], -1)
    assert np.allclose(G.hess(z), fd, atol=1e-4)


# ---- Morse-Conley-Floer ---------------------------------------------------

def test_mcf_examples():
    q = quadratic((1.0, -1.0))
    U = GridBox((-1.0, -1.0), (1.0, 1.0), 64)
    rep = mcf_homology(negative_gradient_field(q), U, q, 3.0)
    assert rep.dims == local_morse_homology(q, U) == {0: 1}
    g1 = quadratic((-1.0,))
    U1 = GridBox((-1.0,), (1.0,), 256)
    assert mcf_homology(negative_gradient_field(g1), U1, g1, 3.0).dims == {0: 1}
    # increasing along the flow
    up = quadratic((1.0,))
    with pytest.raises(LyapunovViolation) as exc:
        mcf_homology(negative_gradient_field(g1), U1, up, 3.0)
    assert exc.value.witness is not None


def test_mcf_refuses_nonconstant_on_invariant_set():
    dw = catalog.doublewell()
    with pytest.raises(LyapunovViolation):
        mcf_homology(dw.field, dw.U, dw.gradient, dw.T)
