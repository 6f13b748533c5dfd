"""Homotopies of LS fields: closeness bounds, nesting of G^T sets, Galerkin reduction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .conley_e import EIndex, e_index
from .isolation import (
    CubicalSet,
    GridBox,
    IsolationCalibration,
    IsolationError,
    build_index_pair,
    calibrate_isolation,
    compute_GT,
)
from .ls_system import (
    Box,
    GradientSpec,
    LSField,
    _rk4_step,
    galerkin_truncate,
    lipschitz_estimate,
    negative_gradient_field,
)
from .morse_local import local_morse_homology
from .z2_chain import GradedDims


class ContinuationError(RuntimeError):
    pass


@dataclass
class HomotopyFamily:
    """``s -> H(s, .)`` on ``[0, 1]`` joining ``F0`` to ``F1``."""

    evaluate: Callable[[float, np.ndarray], np.ndarray]
    F0: LSField
    F1: LSField
    lipschitz_hint: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.F0.dim != self.F1.dim:
            raise ValueError("endpoint fields have different dimensions")

    @classmethod
    def linear(cls, F0: LSField, F1: LSField, name: str = "") -> "HomotopyFamily":
        return cls(lambda s, x: (1 - s) * F0(x) + s * F1(x), F0, F1, name=name or f"{F0.name}~{F1.name}")

    @classmethod
    def constant(cls, F: LSField) -> "HomotopyFamily":
        return cls(lambda s, x: F(x), F, F, name=f"const {F.name}".strip())

    def reversed(self) -> "HomotopyFamily":
        ev = self.evaluate
        return HomotopyFamily(lambda s, x: ev(1 - s, x), self.F1, self.F0, self.lipschitz_hint, f"rev {self.name}")

    def field_at(self, s: float) -> LSField:
        lin = (1 - s) * np.asarray(self.F0.linear) + s * np.asarray(self.F1.linear)
        ev = self.evaluate

        def K(x):
            x = np.asarray(x, dtype=float)
            return ev(s, x) - lin * x

        return LSField(self.F0.model, K, linear=tuple(lin), name=f"{self.name}@{s:g}")

    def endpoint_defect(self, box: Box, samples: int = 100, seed: int = 0) -> float:
        """Largest sampled ``|H(0,x) - F0(x)|`` or ``|H(1,x) - F1(x)|``."""
        rng = np.random.default_rng(seed)
        lo, hi = np.asarray(box.lower), np.asarray(box.upper)
        X = lo + (hi - lo) * rng.random((samples, len(lo)))
        d0 = np.max(np.abs(self.evaluate(0.0, X) - self.F0(X)))
        d1 = np.max(np.abs(self.evaluate(1.0, X) - self.F1(X)))
        return float(max(d0, d1))


def closeness_epsilon(c: float, T: float, rho: float) -> float:
    """Largest ``eps`` with ``eps T e^{cT} <= rho/2``; no extra margin applied."""
    if c < 0 or T <= 0 or rho <= 0:
        raise ValueError("need c >= 0 and positive T, rho")
    return rho / (2 * T * math.exp(c * T))


def _uniform(box: Box, n: int, rng) -> np.ndarray:
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    return lo + (hi - lo) * rng.random((n, len(lo)))


def field_distance(F0, F1, box: Box, samples: int = 400, seed: int = 0) -> float:
    """Sampled ``sup |F0 - F1|`` over ``box`` (random points plus corners and centre)."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    d = len(lo)
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")).reshape(d, -1).T
    X = np.vstack([corners, 0.5 * (lo + hi), _uniform(box, samples, rng)])
    return float(np.max(np.linalg.norm(F0(X) - F1(X), axis=-1)))


@dataclass
class GronwallReport:
    epsilon: float
    c: float
    T: float
    starts: int
    checked: int
    violations: int
    worst_ratio: float
    witnesses: List[Tuple[float, Tuple[float, ...]]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def gronwall_check(
    F0: LSField, F1: LSField, U: GridBox, T: float, starts: int = 20, step: float = 1e-2, seed: int = 0
) -> GronwallReport:
    """Compare ``|x0(t) - x1(t)|`` with ``eps t e^{ct} * 1.05`` while both orbits stay in ``U``."""
    box = U.box
    eps = field_distance(F0, F1, box, seed=seed)
    c = lipschitz_estimate(F0, box, seed=seed)
    rng = np.random.default_rng(seed)
    x0 = _uniform(box, starts, rng)
    x1 = x0.copy()
    alive = np.ones(starts, dtype=bool)
    n = int(math.ceil(T / step - 1e-9))
    h = T / n
    checked = violations = 0
    worst = 0.0
    wit = []
    for i in range(1, n + 1):
        x0 = _rk4_step(F0, x0, h)
        x1 = _rk4_step(F1, x1, h)
        t = i * h
        alive &= box.contains(x0) & box.contains(x1)
        if not alive.any():
            break
        div = np.linalg.norm(x0 - x1, axis=-1)[alive]
        bound = eps * t * math.exp(c * t) * 1.05
        checked += int(alive.sum())
        if bound > 0:
            worst = max(worst, float(np.max(div)) / bound)
        bad = div > bound
        if bad.any():
            violations += int(bad.sum())
            if len(wit) < 5:
                wit.append((t, tuple(x0[alive][np.argmax(div)])))
    return GronwallReport(eps, c, T, starts, checked, violations, worst, wit)


# ---------------------------------------------------------------------------
# isolation along a homotopy


@dataclass
class ContinuationReport:
    s_samples: List[float]
    isolating_at: List[bool]
    margins: List[int]
    endpoint_e_indices: Tuple[Optional[EIndex], Optional[EIndex]]
    calibration: Optional[IsolationCalibration] = None
    T: float = 0.0

    @property
    def lost_at(self) -> Optional[float]:
        for s, ok in zip(self.s_samples, self.isolating_at):
            if not ok:
                return s
        return None

    @property
    def endpoints_equal(self) -> bool:
        a, b = self.endpoint_e_indices
        return a is not None and b is not None and a == b

    @property
    def verdict(self) -> bool:
        return all(self.isolating_at) and self.endpoints_equal

    @property
    def min_margin(self) -> int:
        return min(self.margins)

    def lines(self) -> List[str]:
        out = [f"s={s:.4f} margin={m} isolating={'yes' if ok else 'no'}"
               for s, m, ok in zip(self.s_samples, self.margins, self.isolating_at)]
        if self.lost_at is not None:
            out.append(f"isolation lost at s={self.lost_at:.4f}")
        for tag, e in zip(("s=0", "s=1"), self.endpoint_e_indices):
            out.append(f"E-index {tag}: {e.as_dict() if e is not None else 'undefined'}")
        out.append(f"verdict: {'continuation holds' if self.verdict else 'continuation not verified'}")
        return out


def _endpoint_index(F: LSField, U: GridBox, T: float, step: float) -> Optional[EIndex]:
    try:
        return e_index(build_index_pair(F, U, T, step), F.model)
    except IsolationError:
        return None


def verify_isolating_along(
    H: HomotopyFamily, U: GridBox, s_count: int = 11, T: float = 2.0, step: float = 1e-2, calibrate: bool = False
) -> ContinuationReport:
    """Check a one-cell margin of ``G^T`` at uniformly spaced ``s`` and compare endpoint E-indices."""
    if s_count < 2:
        raise ValueError("s_count must be at least 2")
    ss = [i / (s_count - 1) for i in range(s_count)]
    margins, flags = [], []
    for s in ss:
        m = compute_GT(H.field_at(s), U, T, step).cell_margin()
        margins.append(m)
        flags.append(m >= 1)
    e0 = _endpoint_index(H.field_at(0.0), U, T, step) if flags[0] else None
    e1 = _endpoint_index(H.field_at(1.0), U, T, step) if flags[-1] else None
    cal = None
    if calibrate and flags[0]:
        try:
            cal = calibrate_isolation(H.field_at(0.0), U, step)
        except IsolationError:
            cal = None
    return ContinuationReport(ss, flags, margins, (e0, e1), cal, T)


# ---------------------------------------------------------------------------
# nesting


@dataclass
class NestingReport:
    hypothesis_met: bool
    flow_gap: float
    rho: float
    T: float
    sizes: Tuple[int, ...] = ()
    slack: Tuple[int, ...] = ()
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.hypothesis_met and all(s <= 1 for s in self.slack)


def inclusion_slack(A: CubicalSet, B: CubicalSet) -> int:
    """Largest Chebyshev cell distance from a cell of ``A`` to the cells of ``B`` (0 if ``A`` is inside)."""
    extra = A.cells - B.cells
    if not extra:
        return 0
    if not B.cells:
        return max(A.grid.subdivisions)
    b = np.asarray(sorted(B.cells))
    return int(max(np.min(np.max(np.abs(b - np.asarray(c)), axis=-1)) for c in extra))


def flow_gap(F_phi, F_psi, box: Box, horizon: float, samples: int = 100, step: float = 1e-2, seed: int = 0) -> float:
    """Largest sampled ``|phi(t,x) - psi(t,x)|`` for ``|t| <= horizon`` while both orbits stay in ``box``."""
    rng = np.random.default_rng(seed)
    X = _uniform(box, samples, rng)
    gap = 0.0
    n = int(math.ceil(horizon / step - 1e-9))
    h = horizon / n
    for sgn in (1.0, -1.0):
        a, b = X.copy(), X.copy()
        fa = lambda y: sgn * F_phi(y)
        fb = lambda y: sgn * F_psi(y)
        alive = np.ones(samples, dtype=bool)
        with np.errstate(all="ignore"):
            for _ in range(n):
                a = _rk4_step(fa, a, h)
                b = _rk4_step(fb, b, h)
                alive &= box.contains(a) & box.contains(b)
                if not alive.any():
                    break
                gap = max(gap, float(np.max(np.linalg.norm(a - b, axis=-1)[alive])))
    return gap


def g_nesting_check(
    F_phi: LSField,
    F_psi: LSField,
    U: GridBox,
    T: float,
    step: float = 1e-2,
    rho: Optional[float] = None,
    samples: int = 100,
    seed: int = 0,
) -> NestingReport:
    """``G_psi^{4T} <= G_phi^{3T} <= G_psi^{2T} <= G_phi^T`` up to cell slack.

    The flows must first be ``rho/2``-close on orbit segments inside ``U_rho``
    for ``|t| <= 4T``; otherwise the inclusions are not evaluated.
    """
    if rho is None:
        rho = calibrate_isolation(F_phi, U, step).rho
    gap = flow_gap(F_phi, F_psi, U.inflate(rho).box, 4 * T, samples, step, seed)
    if not gap < rho / 2:
        return NestingReport(False, gap, rho, T, note="hypothesis unmet")
    chain = [
        compute_GT(F_psi, U, 4 * T, step),
        compute_GT(F_phi, U, 3 * T, step),
        compute_GT(F_psi, U, 2 * T, step),
        compute_GT(F_phi, U, T, step),
    ]
    slack = tuple(inclusion_slack(a, b) for a, b in zip(chain, chain[1:]))
    return NestingReport(True, gap, rho, T, tuple(len(g.cells) for g in chain), slack)


# ---------------------------------------------------------------------------
# Galerkin reduction and the gradient comparison


@dataclass
class GalerkinReport:
    level: int
    distance: float
    budget: float
    continuation: ContinuationReport

    @property
    def indices_equal(self) -> bool:
        return self.continuation.endpoints_equal


def galerkin_continuation(
    F: LSField, U: GridBox, T: float, step: float = 1e-2, s_count: int = 11, rho: Optional[float] = None
) -> GalerkinReport:
    """Smallest proper ladder level ``n`` whose truncation ``L + P_n K P_n`` is within the
    closeness budget and joined to ``F`` by an isolating linear homotopy."""
    if rho is None:
        rho = calibrate_isolation(F, U, step).rho
    c = lipschitz_estimate(F, U.box)
    budget = closeness_epsilon(c, T, rho)
    tried = []
    for n in F.model.levels:
        if n >= F.dim:
            continue
        Fn = galerkin_truncate(F, n)
        dist = field_distance(F, Fn, U.box)
        tried.append((n, dist))
        if dist > budget:
            continue
        rep = verify_isolating_along(HomotopyFamily.linear(F, Fn), U, s_count, T, step)
        if rep.verdict:
            return GalerkinReport(n, dist, budget, rep)
    detail = ", ".join(f"n={n}: {d:.3g}" for n, d in tried) or "no proper level"
    raise ContinuationError(f"no admissible level in the ladder (budget {budget:.3g}; {detail})")


@dataclass
class ReineckReport:
    continuation: ContinuationReport
    e_field: Optional[EIndex]
    e_gradient: Optional[EIndex]
    morse: GradedDims

    @property
    def equal(self) -> bool:
        a, b = self.e_field, self.e_gradient
        return a is not None and b is not None and a == b and a.dims == self.morse

    @property
    def ok(self) -> bool:
        return self.equal and all(self.continuation.isolating_at)


def reineck_verify(
    F: LSField, U: GridBox, g: GradientSpec, H: HomotopyFamily, T: float, step: float = 1e-2, s_count: int = 11, **morse_kw
) -> ReineckReport:
    """Continuation of ``F`` to ``-grad f`` plus three tables: E-index of ``F``,
    E-index of the gradient flow and the local Morse homology of ``f``."""
    if g.support_level is None and g.model.levels[-1] != g.dim:
        raise ValueError("gradient needs a finite support level")
    X = _uniform(U.box, 50, np.random.default_rng(0))
    G = negative_gradient_field(g)
    if np.max(np.abs(H.evaluate(1.0, X) - G(X))) > 1e-8 or np.max(np.abs(H.evaluate(0.0, X) - F(X))) > 1e-8:
        raise ValueError("homotopy does not join F to the negative gradient")
    rep = verify_isolating_along(H, U, s_count, T, step)
    e_grad = _endpoint_index(G, U, T, step)
    return ReineckReport(rep, rep.endpoint_e_indices[0], e_grad, local_morse_homology(g, U, **morse_kw))
