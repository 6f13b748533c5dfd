"""Local Morse homology of gradient systems and the fast-slow continuation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .conley_e import e_index, EIndex
from .isolation import GridBox, build_index_pair, compute_GT
from .ls_system import GradientSpec, SplitModel, _rk4_step, lipschitz_estimate, negative_gradient_field
from .z2_chain import ChainComplexZ2, GradedDims, Z2Matrix, homology_dims

GRAD_TOL = 1e-8
DEGENERACY_TOL = 1e-6
DEDUP_RADIUS = 1e-5
HIT_RADIUS = 1e-3
CLUSTER_DIST = 1e-2


class DegenerateCriticalPointError(RuntimeError):
    pass


class BoundarySquareError(RuntimeError):
    """Raised when the assembled boundary does not square to zero."""


class ResolutionError(RuntimeError):
    pass


class LyapunovViolation(RuntimeError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class CriticalPoint:
    x: Tuple[float, ...]
    f_value: float
    hess_spectrum: Tuple[float, ...]
    mu_neg: int
    rel_index: int
    nondegenerate: bool

    @property
    def point(self) -> np.ndarray:
        return np.asarray(self.x)

    def label(self) -> str:
        return "(" + ", ".join(f"{v:.4f}" for v in self.x) + ")"


@dataclass
class Connection:
    source: CriticalPoint
    target: CriticalPoint
    count_mod2: int
    orbits: int = 0
    witnesses: List[np.ndarray] = field(default_factory=list, repr=False)


# ---------------------------------------------------------------------------
# critical points


def _seed_lattice(lower, upper, per_axis: int) -> np.ndarray:
    axes = [np.linspace(a, b, per_axis + 2)[1:-1] for a, b in zip(lower, upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lower))


def _newton(g: GradientSpec, X: np.ndarray, iters: int = 60, max_step: float = 0.5) -> np.ndarray:
    X = X.copy()
    for _ in range(iters):
        with np.errstate(all="ignore"):
            D = g.differential(X)
            H = g.hess(X)
            try:
                dx = np.linalg.solve(H, D[..., None])[..., 0]
            except np.linalg.LinAlgError:
                dx = np.stack([np.linalg.lstsq(h, d, rcond=None)[0] for h, d in zip(H, D)])
        n = np.linalg.norm(dx, axis=-1, keepdims=True)
        dx = np.where(n > max_step, dx * (max_step / np.maximum(n, 1e-300)), dx)
        dx = np.nan_to_num(dx, nan=0.0, posinf=0.0, neginf=0.0)
        X = X - dx
        if np.all(n < 1e-14):
            break
    return X


def critical_point_at(g: GradientSpec, x) -> CriticalPoint:
    x = np.asarray(x, dtype=float)
    spec = np.sort(np.linalg.eigvalsh(g.metric_hess(x[None])[0]))
    mu = int(np.sum(spec < 0))
    return CriticalPoint(
        x=tuple(float(v) for v in x),
        f_value=float(g.f(x[None])[0]),
        hess_spectrum=tuple(float(v) for v in spec),
        mu_neg=mu,
        rel_index=mu - g.model.d_minus,
        nondegenerate=bool(np.min(np.abs(spec)) > DEGENERACY_TOL),
    )


def find_critical_points(
    g: GradientSpec, U: GridBox, seeds_per_axis: int = 9, seed_box: Optional[Tuple[Sequence[float], Sequence[float]]] = None
) -> List[CriticalPoint]:
    """Newton from a seed lattice; converged points inside ``U``, deduplicated, sorted by (rel_index, x)."""
    lo, hi = (U.lower, U.upper) if seed_box is None else seed_box
    X = _newton(g, _seed_lattice(lo, hi, seeds_per_axis))
    D = g.differential(X)
    ok = np.all(np.isfinite(X), axis=-1)
    ok &= np.linalg.norm(np.nan_to_num(D, nan=np.inf), axis=-1) <= GRAD_TOL * (1 + np.linalg.norm(np.nan_to_num(X), axis=-1))
    ok &= U.box.contains(np.nan_to_num(X, nan=np.inf), tol=1e-12)
    found: List[np.ndarray] = []
    for x in X[ok]:
        if all(np.linalg.norm(x - y) > DEDUP_RADIUS for y in found):
            found.append(x)
    pts = [critical_point_at(g, x) for x in found]
    return sorted(pts, key=lambda c: (c.rel_index, c.x))


# ---------------------------------------------------------------------------
# shooting


def _sphere_directions(k: int, n: int) -> np.ndarray:
    """Deterministic directions on the unit sphere of R^k, axes included."""
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        th = 2 * np.pi * np.arange(n) / n
        u = np.stack([np.cos(th), np.sin(th)], axis=-1)
        # exact zeros keep shots on invariant coordinate subspaces
        u[np.abs(u) < 1e-14] = 0.0
        return u / np.linalg.norm(u, axis=-1, keepdims=True)
    pts = [np.eye(k)[i] * s for i in range(k) for s in (1.0, -1.0)]
    m = max(n - len(pts), 0)
    if k == 3:
        i = np.arange(m) + 0.5
        phi = np.arccos(1 - 2 * i / m)
        th = np.pi * (1 + 5**0.5) * i
        fib = np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=-1)
    else:
        fib = np.random.default_rng(12345).normal(size=(m, k))
        fib /= np.linalg.norm(fib, axis=-1, keepdims=True)
    return np.vstack([pts, fib]) if m else np.asarray(pts)


def _unstable_basis(g: GradientSpec, x: np.ndarray, sign: float = 1.0) -> np.ndarray:
    """Unit columns spanning the unstable space at ``x`` of ``sign * (-grad f)``.

    The linearisation ``-W H`` is similar to ``-W^(1/2) H W^(1/2)``, so the
    symmetric eigenproblem gives the eigenvectors after scaling by ``W^(1/2)``.
    """
    w = np.ones(g.dim) if g.metric is None else np.sqrt(np.asarray(g.metric, dtype=float))
    evals, evecs = np.linalg.eigh(g.metric_hess(x[None])[0])
    basis = w[:, None] * evecs[:, sign * evals < 0]
    basis = basis / np.linalg.norm(basis, axis=0, keepdims=True)
    for j in range(basis.shape[1]):
        i = int(np.argmax(np.abs(basis[:, j])))
        if basis[i, j] < 0:
            basis[:, j] *= -1
    return basis


class _Shooter:
    """Integrates ``sign * (-grad f)`` in rescaled time ``F / max(|F|, v0)``.

    Far from rest points a step advances ``step`` in arclength; near them the
    parametrisation is proportional to true time, so slow eigendirections cost
    a bounded number of steps.  With ``sign = -1`` orbits run backwards and the
    level function ``sign * f`` still decreases along them.
    """

    def __init__(self, g: GradientSpec, U: GridBox, step: float, cap: float, rest=(), sign: float = 1.0, lam=None):
        self.g = g
        self.sign = float(sign)
        self.box = U.box
        self.step = step
        self.max_steps = int(math.ceil(cap / step))
        field_ = negative_gradient_field(g)
        if lam is None:
            # stiffness only matters where the speed is small, i.e. near rest points
            w = 1.0 if g.metric is None else float(np.max(g.metric))
            spec = [abs(v) * w for c in rest for v in c.hess_spectrum]
            lam = max(spec) if spec else lipschitz_estimate(field_, U.box, samples=100)
        self.lam = lam
        v0 = step * max(self.lam, 1e-6) / 0.3
        sg = self.sign
        self.field = lambda x: (lambda v: sg * v / np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), v0))(field_(x))
        self.rest = np.asarray([c.x for c in rest], dtype=float).reshape(len(rest), g.dim)
        self._rest_pts = list(rest)
        self._U = U
        self._cap = cap

    def reverse(self) -> "_Shooter":
        return _Shooter(self.g, self._U, self.step, self._cap, self._rest_pts, -self.sign, self.lam)

    def level(self, x: np.ndarray) -> np.ndarray:
        return self.sign * self.g.f(x)

    def _at_rest(self, x: np.ndarray) -> np.ndarray:
        # with index difference one, a counted orbit never passes through another rest point
        if len(self.rest) == 0:
            return np.zeros(len(x), dtype=bool)
        return np.any(np.linalg.norm(x[:, None, :] - self.rest[None], axis=-1) < HIT_RADIUS, axis=-1)

    def separation(self, y: np.ndarray) -> float:
        """Distance from ``y`` to the nearest other rest point, capped by the box size."""
        cap = 0.5 * float(np.min(np.asarray(self.box.upper) - np.asarray(self.box.lower)))
        if len(self.rest) == 0:
            return cap
        d = np.linalg.norm(self.rest - y, axis=-1)
        d = d[d > DEDUP_RADIUS]
        return float(min(cap, d.min())) if len(d) else cap

    def closest(self, Z: np.ndarray, targets: np.ndarray, f_targets: np.ndarray, slack: np.ndarray, mask=None) -> np.ndarray:
        """Minimum distance from each orbit (while in ``U``) to each target, shape (n, m).

        ``mask[i, j]`` false skips target ``j`` for shot ``i`` (its entry stays ``inf``).
        """
        n, m = len(Z), len(targets)
        D = np.full((n, m), np.inf)
        if n == 0:
            return D
        x = Z.copy()
        active = np.arange(n)
        open_ = np.ones((n, m), dtype=bool) if mask is None else np.array(mask, dtype=bool)
        with np.errstate(all="ignore"):
            for _ in range(self.max_steps + 1):
                inside = np.all(np.isfinite(x), axis=-1) & self.box.contains(x)
                dist = np.linalg.norm(x[:, None, :] - targets[None], axis=-1)
                upd = open_[active] & inside[:, None]
                cur = D[active]
                D[active] = np.where(upd, np.minimum(cur, dist), cur)
                fx = self.level(x)
                passed = fx[:, None] < f_targets[None] - slack[None]
                hit = D[active] < HIT_RADIUS
                open_[active] &= ~(passed | hit) & inside[:, None] & ~self._at_rest(x)[:, None]
                keep = np.any(open_[active], axis=-1)
                active, x = active[keep], x[keep]
                if len(active) == 0:
                    break
                x = _rk4_step(self.field, x, self.step)
        return D

    def path(self, z: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Sampled orbit from ``z`` until it enters the hit ball of ``target``."""
        pts = [z.copy()]
        x = z[None].copy()
        for _ in range(self.max_steps):
            if np.linalg.norm(x[0] - target) < HIT_RADIUS:
                break
            x = _rk4_step(self.field, x, self.step)
            pts.append(x[0].copy())
        return np.asarray(pts)


def _hausdorff(a: np.ndarray, b: np.ndarray, cap: int = 400) -> float:
    a = a[:: max(1, len(a) // cap)]
    b = b[:: max(1, len(b) // cap)]
    d = np.linalg.norm(a[:, None] - b[None], axis=-1)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def _neighbors(dirs: np.ndarray, k: int) -> List[np.ndarray]:
    n = len(dirs)
    if k == 2:
        return [np.array([(i - 1) % n, (i + 1) % n]) for i in range(n)]
    sim = dirs @ dirs.T
    return [np.argsort(-sim[i])[1:7] for i in range(n)]


def _tangent_moves(u: np.ndarray) -> np.ndarray:
    """Orthonormal tangent directions to the sphere at ``u`` (both signs)."""
    k = len(u)
    Q, _ = np.linalg.qr(np.column_stack([u, np.eye(k)]))
    T = Q[:, 1:k]
    return np.vstack([T.T, -T.T])


def _refine(shooter, x, basis, dirs, D0, targets, f_targets, slack, radius, reach, max_rounds=60, patience=12):
    """Directions whose shots enter the hit ball of each target.

    Sampled directions that already hit are kept.  Local minima of the sampled
    closest-approach distance below ``reach[j]`` are refined by a compass
    search on the sphere; a candidate is dropped once its step underflows or
    it fails to halve its distance within ``patience`` rounds.
    """
    k = basis.shape[1]
    m = len(targets)
    hits = [[dirs[i] for i in range(len(dirs)) if D0[i, j] < HIT_RADIUS] for j in range(m)]
    if k == 1:
        return hits
    nbr = _neighbors(dirs, k)
    spacing = 2 * np.pi / len(dirs) if k == 2 else math.sqrt(4 * np.pi / len(dirs))
    # candidate state: [target, direction, distance, step, start distance, rounds]
    state = []
    for j in range(m):
        for i in range(len(dirs)):
            d = D0[i, j]
            if HIT_RADIUS <= d < reach[j] and all(d <= D0[n, j] for n in nbr[i]):
                state.append([j, dirs[i].copy(), d, 0.5 * spacing, d, 0])
    for _ in range(max_rounds):
        live = [c for c in state if c[2] >= HIT_RADIUS and c[3] > 1e-12 and (c[5] < patience or c[2] < 0.5 * c[4])]
        if not live:
            break
        trials, owners = [], []
        for c in live:
            for t in _tangent_moves(c[1]):
                v = c[1] + c[3] * t
                trials.append(v / np.linalg.norm(v))
                owners.append(c)
        mask = np.zeros((len(trials), m), dtype=bool)
        for i, c in enumerate(owners):
            mask[i, c[0]] = True
        Z = x + radius * np.asarray(trials) @ basis.T
        D = shooter.closest(Z, targets, f_targets, slack, mask)
        for c in live:
            idx = [i for i, o in enumerate(owners) if o is c]
            best = min(idx, key=lambda i: D[i, c[0]])
            if D[best, c[0]] < c[2]:
                c[1], c[2] = trials[best], D[best, c[0]]
            else:
                c[3] *= 0.5
            c[5] += 1
    for c in state:
        if c[2] < HIT_RADIUS:
            hits[c[0]].append(c[1])
    return hits


def _sweep(shooter: _Shooter, x: CriticalPoint, ys: Sequence[CriticalPoint], radius: float, directions: int):
    """Hit paths from ``x`` to each of ``ys`` along ``shooter``'s flow, listed from ``x`` to the target."""
    xp = x.point
    basis = _unstable_basis(shooter.g, xp, shooter.sign)
    k = basis.shape[1]
    if k == 0 or not ys:
        return [[] for _ in ys]
    dirs = _sphere_directions(k, directions)
    T = np.array([y.point for y in ys])
    fT = shooter.sign * np.array([y.f_value for y in ys])
    slack = np.array([1e-6 * (1 + max(abs(v) for v in y.hess_spectrum)) for y in ys])
    D0 = shooter.closest(xp + radius * dirs @ basis.T, T, fT, slack)
    reach = np.array([0.5 * shooter.separation(y.point) for y in ys])
    hits = _refine(shooter, xp, basis, dirs, D0, T, fT, slack, radius, reach)
    return [
        [np.vstack([xp, shooter.path(xp + radius * basis @ u, T[j]), T[j]]) for u in hits[j]]
        for j in range(len(ys))
    ]


def _count_from(
    shooter: _Shooter, x: CriticalPoint, ys: Sequence[CriticalPoint], shoot_radius: float, directions: int
) -> List[Connection]:
    """Counts orbits ``x -> y``, shooting from whichever end has the smaller sphere of directions.

    Forward shots leave ``x`` along its unstable space; backward shots leave
    ``y`` along its stable space.  Ridge-like connections are only well
    conditioned in one of the two directions.
    """
    d = shooter.g.dim
    live = [y for y in ys if y.f_value < x.f_value and y.mu_neg < d and x.mu_neg > 0]
    fwd = [y for y in live if x.mu_neg <= d - y.mu_neg]
    bwd = [y for y in live if x.mu_neg > d - y.mu_neg]
    paths = dict(zip(fwd, _sweep(shooter, x, fwd, shoot_radius, directions)))
    if bwd:
        back = shooter.reverse()
        for y in bwd:
            paths[y] = [p[::-1] for p in _sweep(back, y, [x], shoot_radius, directions)[0]]
    out = []
    for y in ys:
        clusters: List[np.ndarray] = []
        for p in paths.get(y, []):
            if all(_hausdorff(p, c) >= CLUSTER_DIST for c in clusters):
                clusters.append(p)
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                if _hausdorff(clusters[a], clusters[b]) < 3 * CLUSTER_DIST:
                    raise ResolutionError(f"orbits from {x.label()} to {y.label()} are closer than {3 * CLUSTER_DIST}")
        out.append(Connection(x, y, len(clusters) % 2, len(clusters), clusters))
    return out


def count_connections(
    g: GradientSpec,
    x: CriticalPoint,
    y: CriticalPoint,
    U: GridBox,
    shoot_radius: float = 1e-2,
    directions: int = 64,
    step: float = 0.01,
    cap: float = 200.0,
) -> Connection:
    """Mod-2 number of negative-gradient orbits from ``x`` to ``y`` that stay in ``U``."""
    if x.rel_index - y.rel_index != 1:
        raise ValueError(f"index difference must be 1, got {x.rel_index} -> {y.rel_index}")
    if not (x.nondegenerate and y.nondegenerate):
        raise DegenerateCriticalPointError("connection counting needs nondegenerate endpoints")
    return _count_from(_Shooter(g, U, step, cap, [x, y]), x, [y], shoot_radius, directions)[0]


# ---------------------------------------------------------------------------
# the complex


@dataclass
class MorseComplexLocal:
    generators: Dict[int, List[CriticalPoint]]
    boundary: Dict[int, Z2Matrix]
    neighborhood: GridBox
    connections: List[Connection] = field(default_factory=list, repr=False)

    def chain_complex(self) -> ChainComplexZ2:
        gens = {k: tuple(c.x for c in v) for k, v in self.generators.items() if v}
        return ChainComplexZ2(gens, dict(self.boundary))

    def homology(self) -> GradedDims:
        return homology_dims(self.chain_complex())


def build_boundary(
    g: GradientSpec,
    U: GridBox,
    directions: int = 64,
    seeds_per_axis: int = 9,
    critical_points: Optional[List[CriticalPoint]] = None,
    shoot_radius: float = 1e-2,
    step: float = 0.01,
    cap: float = 200.0,
) -> MorseComplexLocal:
    """Critical points, connection counts and the boundary matrices.

    ``step`` is the shooting step in rescaled time (about arclength away from
    rest points) and ``cap`` bounds the rescaled length of a shot.
    """
    crit = find_critical_points(g, U, seeds_per_axis) if critical_points is None else list(critical_points)
    bad = [c for c in crit if not c.nondegenerate]
    if bad:
        raise DegenerateCriticalPointError(
            f"degenerate critical point at {bad[0].label()} (spectrum {bad[0].hess_spectrum}); try --perturb"
        )
    gens: Dict[int, List[CriticalPoint]] = {}
    for c in sorted(crit, key=lambda c: (c.rel_index, c.x)):
        gens.setdefault(c.rel_index, []).append(c)
    bd: Dict[int, Z2Matrix] = {}
    conns: List[Connection] = []
    shooter = _Shooter(g, U, step, cap, crit)
    for k in sorted(gens):
        lower = gens.get(k - 1, [])
        if not lower:
            continue
        cols = []
        for x in gens[k]:
            cs = _count_from(shooter, x, lower, shoot_radius, directions)
            conns.extend(cs)
            cols.append(sum(c.count_mod2 << i for i, c in enumerate(cs)))
        bd[k] = Z2Matrix.from_columns(len(lower), cols)
    for k in bd:
        if k - 1 in bd and not (bd[k - 1] @ bd[k]).is_zero():
            raise BoundarySquareError(f"boundary squares to a nonzero map in degree {k}; rerun with more directions")
    return MorseComplexLocal(gens, bd, U, conns)


def local_morse_homology(g: GradientSpec, U: GridBox, **kw) -> GradedDims:
    return build_boundary(g, U, **kw).homology()


@dataclass
class ComparisonReport:
    morse: GradedDims
    e: EIndex

    @property
    def equal(self) -> bool:
        return self.morse == self.e.dims

    def summary(self) -> str:
        if self.equal:
            return f"EQUAL: {self.morse.as_dict()}"
        return f"DIFFERENT: morse {self.morse.as_dict()} vs E-index {self.e.as_dict()}"


def compare_with_e_index(g: GradientSpec, U: GridBox, T: float, step: float = 1e-2, **kw) -> ComparisonReport:
    morse = local_morse_homology(g, U, **kw)
    pair = build_index_pair(negative_gradient_field(g), U, T, step)
    return ComparisonReport(morse, e_index(pair, g.model))


# ---------------------------------------------------------------------------
# fast-slow construction


class GradientFamily:
    """``lam -> f_lam`` on a fixed model, evaluated pointwise with per-point ``lam``."""

    def __init__(self, model: SplitModel, value, grad, dlam, hess=None, name: str = ""):
        self.model = model
        self.value = value
        self.grad = grad
        self.dlam = dlam
        self.hess = hess
        self.name = name

    @classmethod
    def constant(cls, g: GradientSpec) -> "GradientFamily":
        return cls(
            g.model,
            lambda x, lam: g.f(x),
            lambda x, lam: g.differential(x),
            lambda x, lam: np.zeros(np.shape(x)[:-1]),
            lambda x, lam: g.hess(x),
            name=f"const {g.name}".strip(),
        )

    @classmethod
    def interpolate(cls, g0: GradientSpec, g1: GradientSpec) -> "GradientFamily":
        if g0.model != g1.model:
            raise ValueError("endpoints live on different models")
        lam_ = lambda lam: np.asarray(lam, dtype=float)[..., None]
        return cls(
            g0.model,
            lambda x, lam: (1 - np.asarray(lam)) * g0.f(x) + np.asarray(lam) * g1.f(x),
            lambda x, lam: (1 - lam_(lam)) * g0.differential(x) + lam_(lam) * g1.differential(x),
            lambda x, lam: g1.f(x) - g0.f(x),
            lambda x, lam: (1 - lam_(lam)[..., None]) * g0.hess(x) + lam_(lam)[..., None] * g1.hess(x),
            name=f"{g0.name}->{g1.name}",
        )

    def at(self, lam: float) -> GradientSpec:
        L = self.model.L

        def b(x):
            x = np.asarray(x, dtype=float)
            return self.value(x, lam) - 0.5 * np.sum(L * x * x, axis=-1)

        def grad_b(x):
            x = np.asarray(x, dtype=float)
            return self.grad(x, lam) - L * x

        hess_b = None
        if self.hess is not None:
            hess_b = lambda x: self.hess(np.asarray(x, dtype=float), lam) - np.diag(L)
        return GradientSpec(self.model, b, grad_b, hess_b, name=f"{self.name}@{lam:g}")


def omega(t):
    """Quintic smoothstep from 1 (t <= 1/3) down to 0 (t >= 2/3); C^2."""
    s = np.clip(3 * np.asarray(t, dtype=float) - 1, 0.0, 1.0)
    return 1 - s**3 * (10 - 15 * s + 6 * s * s)


def omega_prime(t):
    s = 3 * np.asarray(t, dtype=float) - 1
    inside = (s > 0) & (s < 1)
    return np.where(inside, -3 * 30 * s**2 * (1 - s) ** 2, 0.0)


OMEGA_PRIME_MAX = 45.0 / 8.0


def eta(mu):
    """Zero on [0, 1]; cubic walls ``2 |mu|^3`` and ``2 (mu - 1)^3`` outside."""
    mu = np.asarray(mu, dtype=float)
    return np.where(mu < 0, 2 * (-mu) ** 3, np.where(mu > 1, 2 * (mu - 1) ** 3, 0.0))


def eta_prime(mu):
    mu = np.asarray(mu, dtype=float)
    return np.where(mu < 0, -6 * mu**2, np.where(mu > 1, 6 * (mu - 1) ** 2, 0.0))


def eta_second(mu):
    mu = np.asarray(mu, dtype=float)
    return np.where(mu < 0, -12 * mu, np.where(mu > 1, 12 * (mu - 1), 0.0))


@dataclass
class FastSlowSpec:
    family: GradientFamily
    r: float
    kappa: float
    U: GridBox
    C: Optional[float] = None
    samples: int = 400
    seed: int = 0


def fastslow_threshold(spec: FastSlowSpec) -> Tuple[float, float]:
    """``(C, r_min)``; ``C`` is a strict bound ``1.05 sup|d_lam f| + 0.01`` from samples."""
    if spec.C is not None:
        C = float(spec.C)
    else:
        rng = np.random.default_rng(spec.seed)
        lo, hi = np.asarray(spec.U.lower), np.asarray(spec.U.upper)
        X = lo + (hi - lo) * rng.random((spec.samples, spec.U.dim))
        X = np.vstack([X, spec.U.vertices()[:: max(1, len(spec.U.vertices()) // 200)]])
        lam = np.linspace(0, 1, 11)
        sup = max(float(np.max(np.abs(spec.family.dlam(X, np.full(len(X), l))))) for l in lam)
        C = 1.05 * sup + 0.01
    return C, 2 * OMEGA_PRIME_MAX * C / (math.sqrt(3) * math.pi)


def _fs_parts(spec: FastSlowSpec, z):
    z = np.asarray(z, dtype=float)
    x, mu = z[..., :-1], z[..., -1]
    lam = omega(mu)
    return x, mu, lam


def fastslow_value(spec: FastSlowSpec, z) -> np.ndarray:
    x, mu, lam = _fs_parts(spec, z)
    return spec.family.value(x, lam) + spec.r * (1 + np.cos(np.pi * mu)) + eta(mu) / spec.kappa


def fastslow_differential(spec: FastSlowSpec, z) -> np.ndarray:
    x, mu, lam = _fs_parts(spec, z)
    dx = spec.family.grad(x, lam)
    dmu = (
        omega_prime(mu) * spec.family.dlam(x, lam)
        - spec.r * np.pi * np.sin(np.pi * mu)
        + eta_prime(mu) / spec.kappa
    )
    return np.concatenate([dx, dmu[..., None]], axis=-1)


def mu_velocity(spec: FastSlowSpec, z) -> np.ndarray:
    """The mu-component of the negative gradient, ``-kappa d_mu F``."""
    return -spec.kappa * fastslow_differential(spec, z)[..., -1]


def build_fastslow(spec: FastSlowSpec, check: bool = True) -> GradientSpec:
    """Gradient system on ``H (+) R`` with metric weight ``1/kappa`` on the slow axis."""
    if spec.kappa <= 0:
        raise ValueError("kappa must be positive")
    if check:
        C, r_min = fastslow_threshold(spec)
        if not spec.r > r_min:
            raise ValueError(f"r = {spec.r} is not above the threshold {r_min:.6g} (C = {C:.6g})")
    model = SplitModel(spec.family.model.spectrum + (1.0,), spec.family.model.levels + (spec.family.model.dim + 1,))
    L = model.L
    d = spec.family.model.dim

    def b(z):
        z = np.asarray(z, dtype=float)
        return fastslow_value(spec, z) - 0.5 * np.sum(L * z * z, axis=-1)

    def grad_b(z):
        z = np.asarray(z, dtype=float)
        return fastslow_differential(spec, z) - L * z

    hess_b = None
    if spec.family.hess is not None:

        def hess_b(z):
            z = np.asarray(z, dtype=float)
            x, mu, lam = _fs_parts(spec, z)
            n = z.shape[:-1]
            H = np.zeros(n + (d + 1, d + 1))
            H[..., :d, :d] = spec.family.hess(x, lam)
            h = 1e-5
            # mixed and slow terms by differencing the analytic first derivatives
            zp, zm = z.copy(), z.copy()
            zp[..., -1] += h
            zm[..., -1] -= h
            col = (fastslow_differential(spec, zp) - fastslow_differential(spec, zm)) / (2 * h)
            H[..., :d, d] = col[..., :d]
            H[..., d, :d] = col[..., :d]
            H[..., d, d] = col[..., d]
            return H - np.diag(L)

    metric = (1.0,) * d + (float(spec.kappa),)
    return GradientSpec(model, b, grad_b, hess_b, metric=metric, name=f"fastslow[{spec.family.name}]")


def fastslow_window(spec: FastSlowSpec) -> Tuple[float, float]:
    """Slow-axis interval of the extended neighbourhood.

    Left of 0 the cosine term pushes mu away from 0 while the wall pushes back,
    which creates extra rest points at ``-t_c``; the window stops halfway there.
    """
    k, r = spec.kappa, spec.r
    phi = lambda t: r * np.pi * np.sin(np.pi * t) - 6 * t * t / k
    lower = -1.0 / 3.0
    if r > 0 and phi(1.0 / 3.0) < 0:
        t_small = min(1e-3, r * np.pi**2 * k / 60)
        if phi(t_small) > 0:
            lower = -0.5 * brentq(phi, t_small, 1.0 / 3.0)
    return lower, 4.0 / 3.0


def fastslow_box(spec: FastSlowSpec, mu_subdivisions: int = 16) -> GridBox:
    lo, hi = fastslow_window(spec)
    U = spec.U
    return GridBox(U.lower + (lo,), U.upper + (hi,), U.subdivisions + (mu_subdivisions,))


@dataclass
class MonotonicityReport:
    samples: int
    violations: int
    min_velocity: float
    witnesses: List[Tuple[float, ...]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def fastslow_monotonicity_check(spec: FastSlowSpec, samples: int = 1000, seed: int = 0) -> MonotonicityReport:
    """Sample ``(x, mu)`` with ``mu`` in (0.02, 0.98) and require positive mu-velocity."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(spec.U.lower), np.asarray(spec.U.upper)
    X = lo + (hi - lo) * rng.random((samples, spec.U.dim))
    mu = 0.02 + 0.96 * rng.random(samples)
    Z = np.column_stack([X, mu])
    v = mu_velocity(spec, Z)
    bad = ~(v > 0)
    wit = [tuple(float(c) for c in z) for z in Z[bad][:5]]
    return MonotonicityReport(samples, int(np.sum(bad)), float(np.min(v)), wit)


# ---------------------------------------------------------------------------
# Morse-Conley-Floer homology


@dataclass
class MCFReport:
    dims: GradedDims
    spread: float
    tolerance: float
    decrease_samples: int
    note: str = "single representative of the inverse-limit class; all structure maps are isomorphisms"


def mcf_homology(
    F, U: GridBox, lyapunov: GradientSpec, T: float, step: float = 1e-2, samples: int = 500, seed: int = 0, **kw
) -> MCFReport:
    """Check the Lyapunov conditions by sampling, then compute the local Morse homology of ``lyapunov``."""
    fn = F if callable(F) else F.__call__
    G = compute_GT(F, U, T, step)
    cells = np.asarray(sorted(G.cells), dtype=float)
    grid_pts = U.vertices()
    fU = lyapunov.f(grid_pts)
    scale = float(np.max(fU) - np.min(fU))
    tol = 1e-2 * scale
    spread = 0.0
    if len(cells):
        offs = np.array(list(np.ndindex(*(2,) * U.dim)), dtype=float)
        probe = np.vstack([cells + 0.5] + [cells + o for o in offs])
        vals = lyapunov.f(U.from_lattice(probe))
        spread = float(np.max(vals) - np.min(vals))
        if spread > tol:
            i = int(np.argmax(vals))
            raise LyapunovViolation(
                f"lyapunov function varies by {spread:.3g} on the invariant-set enclosure (tolerance {tol:.3g})",
                tuple(U.from_lattice(probe[i])),
            )
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(U.lower), np.asarray(U.upper)
    X = lo + (hi - lo) * rng.random((4 * samples, U.dim))
    if len(cells):
        idx = np.floor(U.to_lattice(X))
        near = np.zeros(len(X), dtype=bool)
        for c in cells:
            near |= np.all(np.abs(idx - c) <= 1, axis=-1)
        X = X[~near]
    X = X[:samples]
    rate = np.sum(lyapunov.differential(X) * fn(X), axis=-1)
    bad = np.flatnonzero(~(rate < 0))
    if len(bad):
        raise LyapunovViolation(
            f"lyapunov function does not decrease at {len(bad)} of {len(X)} samples", tuple(X[bad[0]])
        )
    dims = local_morse_homology(lyapunov, U, **kw)
    return MCFReport(dims, spread, tol, len(X))
