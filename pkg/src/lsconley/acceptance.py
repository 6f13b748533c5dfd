"""Acceptance battery: one function per criterion, each returning a :class:`CriterionResult`.

Report lines carry only computed quantities (never timings), so the suite text
is reproducible; elapsed time is kept on the result objects.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import catalog
from .conley_e import classical_index, e_cohomology_limit, e_index, nontriviality_check, suspension_check
from .continuation import g_nesting_check, gronwall_check, verify_isolating_along
from .isolation import CubicalSet, GridBox, IndexPairCombinatorial, build_index_pair, compute_GammaT, compute_GT, exit_time
from .ls_system import GradientSpec, SplitModel, separable_polynomial_b
from .morse_local import (
    FastSlowSpec,
    GradientFamily,
    build_boundary,
    build_fastslow,
    fastslow_box,
    fastslow_monotonicity_check,
    fastslow_threshold,
    find_critical_points,
)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: Optional[float] = None

    @property
    def within_time(self) -> bool:
        return self.limit is None or self.seconds < self.limit

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.title}: {self.detail}"


def _table(d) -> str:
    return str(d.as_dict() if hasattr(d, "as_dict") else dict(d))


def criterion_1() -> CriterionResult:
    s = catalog.saddle2d(64)
    pair = build_index_pair(s.field, s.U, 3.0)
    h = classical_index(pair)
    e = e_index(pair, s.model, h)
    ok = h == {1: 1} and e == {0: 1}
    return CriterionResult(1, "saddle index", ok, f"classical {_table(h)} E {_table(e)}", limit=10.0)


def criterion_2() -> CriterionResult:
    s = catalog.expand1d()
    U = s.U
    G = compute_GT(s.field, U, 2.0)
    Gam = compute_GammaT(s.field, G, U, 2.0)
    lo, hi = G.bounds()
    w = float(U.width[0])
    target = math.exp(-2.0)
    geom = abs(lo[0] + target) <= 2 * w and abs(hi[0] - target) <= 2 * w
    cells = sorted(G.cells)
    extreme = Gam.cells == frozenset({cells[0], cells[-1]})
    n = U.subdivisions[0]
    pair = IndexPairCombinatorial(CubicalSet.full(U), CubicalSet(U, [((0, 0),), ((n, n),)]), 2.0)
    tau = exit_time(s.field, pair, [0.5], cap=10.0)
    ok = geom and extreme and abs(tau - math.log(2)) <= 0.01
    detail = f"G^T [{lo[0]:.4f}, {hi[0]:.4f}] Gamma^T extreme={'yes' if extreme else 'no'} exit_time(0.5)={tau:.4f}"
    return CriterionResult(2, "G^T geometry", ok, detail)


def criterion_3() -> CriterionResult:
    s = catalog.doublewell()
    mc = build_boundary(s.gradient, s.U)
    d1 = mc.boundary.get(1)
    boundary_ok = d1 is not None and d1.shape == (2, 1) and d1.to_dense().ravel().tolist() == [1, 1]
    h = mc.homology()
    pair = build_index_pair(s.field, s.U, s.T)
    e = e_index(pair, s.model)
    ok = boundary_ok and h == {0: 1} and e == h
    d1s = d1.to_dense().ravel().tolist() if d1 is not None else None
    return CriterionResult(3, "Morse = Conley", ok, f"d1 {d1s} morse {_table(h)} E {_table(e)}", limit=30.0)


def random_separable_gradient(rng: np.random.Generator) -> Tuple[GradientSpec, GridBox]:
    """Separable polynomial gradient with at most nine nondegenerate critical points in ``[-1.3, 1.3]^d``."""
    d = int(rng.integers(1, 4))
    triples = int(rng.integers(0, min(d, 2) + 1))
    kinds = ["triple"] * triples + ["single"] * (d - triples)
    rng.shuffle(kinds)
    spectrum = tuple(float(rng.choice([-1.0, 1.0])) for _ in range(d))
    coeffs = []
    for kind, s in zip(kinds, spectrum):
        if kind == "single":
            a = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))
            c = [0.0, 0.0, 0.5 * (a - s)]
        else:
            while True:
                r = np.sort(rng.uniform(-1.0, 1.0, 3))
                if np.min(np.diff(r)) >= 0.4:
                    break
            slope = np.polynomial.Polynomial.fromroots(r) * float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))
            p = slope.integ()
            c = list(p.coef) + [0.0] * max(0, 3 - len(p.coef))
            c[2] -= 0.5 * s
        coeffs.append(c)
    b, gb, hb = separable_polynomial_b(coeffs)
    g = GradientSpec(SplitModel(spectrum), b, gb, hb, support_level=d, name="random separable")
    return g, GridBox((-1.3,) * d, (1.3,) * d, 8)


def criterion_4(seed: int = 0, systems: int = 25) -> CriterionResult:
    rng = np.random.default_rng(seed)
    runs = stable = squares = 0
    sizes = []
    for _ in range(systems):
        g, U = random_separable_gradient(rng)
        crit = find_critical_points(g, U, 9)
        a = build_boundary(g, U, directions=64, critical_points=crit)
        b = build_boundary(g, U, directions=128, critical_points=crit)
        runs += 1
        squares += 1  # build_boundary raises if the square is nonzero
        same = {k: m.to_dense().tolist() for k, m in a.boundary.items()} == {
            k: m.to_dense().tolist() for k, m in b.boundary.items()
        }
        stable += int(same)
        sizes.append(len(crit))
    ok = runs == systems and squares == systems and stable == systems and max(sizes) <= 9
    return CriterionResult(
        4, "boundary squares to zero", ok,
        f"{squares}/{systems} with d^2 = 0, {stable}/{systems} stable under doubling, critical points {min(sizes)}..{max(sizes)}",
    )


def criterion_5() -> CriterionResult:
    parts, ok = [], True
    for s in (catalog.saddle2d(), catalog.doublewell()):
        r = suspension_check(s.field, s.U, T=s.T)
        ok &= r.ok and not r.classical.is_zero()
        parts.append(f"{s.name} {_table(r.classical)}->{_table(r.classical_suspended)} E {_table(r.e)}={_table(r.e_suspended)}")
    return CriterionResult(5, "suspension invariance", ok, "; ".join(parts))


def criterion_6() -> CriterionResult:
    parts, ok = [], True
    for p, fam in catalog.sphere_families().items():
        rec = e_cohomology_limit(fam)
        good = rec.limit == {p - 1: 1} and rec.exact
        ok &= good
        parts.append(f"p={p} {_table(rec.limit)} exact={'yes' if rec.exact else 'no'}")
    return CriterionResult(6, "sphere dimension", ok, "; ".join(parts))


def _saddle_pair():
    s = catalog.saddle2d(64)
    return s, catalog.bump_perturbation(s.field, 1e-3)


def criterion_7(seed: int = 0) -> CriterionResult:
    s, F1 = _saddle_pair()
    r = gronwall_check(s.field, F1, s.U, 2.0, starts=20, seed=seed)
    return CriterionResult(
        7, "Gronwall bound", r.violations == 0,
        f"eps={r.epsilon:.3e} c={r.c:.3f} violations={r.violations} worst ratio={r.worst_ratio:.3f}",
    )


def criterion_8(seed: int = 0) -> CriterionResult:
    s, F1 = _saddle_pair()
    r = g_nesting_check(s.field, F1, s.U, 1.0, seed=seed)
    detail = f"hypothesis {'met' if r.hypothesis_met else 'unmet'} gap={r.flow_gap:.3e} rho={r.rho:.4f} slack={list(r.slack)}"
    return CriterionResult(8, "G^T nesting", r.ok, detail)


def criterion_9() -> CriterionResult:
    rs = catalog.rotated_saddle_homotopy()
    a = verify_isolating_along(rs.homotopy, rs.U, 11, rs.T)
    br = catalog.isolation_breaker()
    b = verify_isolating_along(br.homotopy, br.U, 11, br.T)
    e0, e1 = a.endpoint_e_indices
    ok = a.verdict and e0 == {0: 1} and b.lost_at is not None and not b.endpoints_equal
    f0, f1 = b.endpoint_e_indices
    detail = (
        f"rotated: isolating {sum(a.isolating_at)}/11 E {_table(e0)}={_table(e1)}; "
        f"breaker: isolation lost at s={b.lost_at} E {_table(f0) if f0 else None} vs {_table(f1) if f1 else None}"
    )
    return CriterionResult(9, "continuation invariance", ok, detail)


def criterion_10(seed: int = 0) -> CriterionResult:
    dw = catalog.doublewell(16)
    fam = GradientFamily.constant(dw.gradient)
    spec = FastSlowSpec(fam, r=0.0, kappa=0.1, U=dw.U, seed=seed)
    C, r_min = fastslow_threshold(spec)
    spec.r = 2 * r_min
    G = build_fastslow(spec)
    Ub = fastslow_box(spec)
    crit = find_critical_points(G, Ub, 7)
    mus = sorted({round(c.x[-1], 6) for c in crit})
    only_ends = all(abs(m) < 1e-6 or abs(m - 1) < 1e-6 for m in mus)
    sweep = find_critical_points(G, Ub, 7, seed_box=(dw.U.lower + (0.05,), dw.U.upper + (0.95,)))
    interior = [c for c in sweep if 0.05 <= c.x[-1] <= 0.95]
    at0 = {tuple(round(v, 6) for v in c.x[:-1]): c.mu_neg for c in crit if abs(c.x[-1]) < 1e-6}
    at1 = {tuple(round(v, 6) for v in c.x[:-1]): c.mu_neg for c in crit if abs(c.x[-1] - 1) < 1e-6}
    shift = bool(at0) and at0.keys() == at1.keys() and all(at0[k] == at1[k] + 1 for k in at0)
    mono = fastslow_monotonicity_check(spec, 1000, seed)
    ok = only_ends and not interior and shift and mono.ok
    detail = (
        f"r={spec.r:.4f} (threshold {r_min:.4f}) critical mu values {mus} interior {len(interior)} "
        f"index shift={'yes' if shift else 'no'} velocity violations {mono.violations}/1000"
    )
    return CriterionResult(10, "fast-slow construction", ok, detail)


def criterion_11() -> CriterionResult:
    s = catalog.offcenter_saddle()
    pair = build_index_pair(s.field, s.U, s.T)
    h = classical_index(pair)
    e = e_index(pair, s.model, h)
    ok = h.is_zero() and e.dims.is_zero() and not nontriviality_check(e)
    return CriterionResult(
        11, "non-triviality", ok, f"classical {_table(h)} E {_table(e)} nontrivial={nontriviality_check(e)}"
    )


CRITERIA: Dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
}


SEEDED = {4, 7, 8, 10}


def run_criterion(n: int, seed: int = 0) -> CriterionResult:
    t = time.perf_counter()
    try:
        res = CRITERIA[n](seed=seed) if n in SEEDED else CRITERIA[n]()
    except Exception as exc:  # a crash is a failed criterion, reported with its message
        res = CriterionResult(n, CRITERIA[n].__name__, False, f"error: {type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t
    return res


def run_suite(which=None, seed: int = 0) -> List[CriterionResult]:
    return [run_criterion(n, seed) for n in (sorted(CRITERIA) if which is None else which)]


def suite_report(results: List[CriterionResult]) -> str:
    lines = [r.line() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} criteria passed")
    return "\n".join(lines) + "\n"
