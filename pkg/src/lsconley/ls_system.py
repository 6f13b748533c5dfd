"""Finite-dimensional split models, LS vector fields and their flows.

All callables act on arrays whose last axis is the state dimension, so a
whole batch of points can be pushed through the integrator at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

ArrayMap = Callable[[np.ndarray], np.ndarray]

FD_STEP = 1e-4


class IntegrationError(FloatingPointError):
    """Raised when a trajectory produces non-finite values."""


@dataclass(frozen=True)
class SplitModel:
    """Diagonal model of ``L`` on ``E+ (+) E-``; levels are coordinate prefixes."""

    spectrum: Tuple[float, ...]
    levels: Tuple[int, ...] = ()

    def __post_init__(self):
        spec = tuple(float(v) for v in self.spectrum)
        if not spec:
            raise ValueError("empty spectrum")
        if any(v == 0.0 for v in spec):
            raise ValueError("L must be invertible (zero in spectrum)")
        levels = tuple(int(n) for n in self.levels) or (len(spec),)
        if list(levels) != sorted(set(levels)) or levels[0] < 1 or levels[-1] > len(spec):
            raise ValueError(f"levels must increase within 1..{len(spec)}")
        object.__setattr__(self, "spectrum", spec)
        object.__setattr__(self, "levels", levels)

    @property
    def dim(self) -> int:
        return len(self.spectrum)

    @property
    def minus_set(self) -> frozenset:
        return frozenset(i for i, v in enumerate(self.spectrum) if v < 0)

    @property
    def plus_set(self) -> frozenset:
        return frozenset(i for i, v in enumerate(self.spectrum) if v > 0)

    @property
    def d_minus(self) -> int:
        return len(self.minus_set)

    @property
    def L(self) -> np.ndarray:
        return np.asarray(self.spectrum)

    def projector(self, n: int) -> np.ndarray:
        """Mask for the orthogonal projection onto the first ``n`` coordinates."""
        mask = np.zeros(self.dim)
        mask[:n] = 1.0
        return mask

    def suspended(self, entry: float = -1.0) -> "SplitModel":
        return SplitModel(self.spectrum + (entry,), self.levels + (self.dim + 1,))


def _zero_map(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _check_dim(x: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ValueError(f"expected state dimension {d}, got {x.shape[-1]}")
    return x


@dataclass(frozen=True)
class LSField:
    """Vector field ``F(x) = linear * x + K(x)``.

    ``linear`` is the diagonal linear part; it is the model spectrum unless a
    convention flips it (negative-gradient fields carry ``-L``).
    """

    model: SplitModel
    K: ArrayMap = _zero_map
    support_level: Optional[int] = None
    lipschitz_hint: Optional[float] = None
    linear: Optional[Tuple[float, ...]] = None
    name: str = ""

    def __post_init__(self):
        lin = self.model.spectrum if self.linear is None else tuple(float(v) for v in self.linear)
        if len(lin) != self.model.dim:
            raise ValueError("linear part has wrong length")
        object.__setattr__(self, "linear", lin)

    @property
    def dim(self) -> int:
        return self.model.dim

    def __call__(self, x) -> np.ndarray:
        return evaluate_field(self, x)


def evaluate_field(F: LSField, x) -> np.ndarray:
    x = _check_dim(x, F.dim)
    if F.K is _zero_map:
        return np.asarray(F.linear) * x
    return np.asarray(F.linear) * x + F.K(x)


def jacobian_fd(fn: ArrayMap, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``fn`` at a batch of points, shape (..., d, d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class GradientSpec:
    """``f(x) = 1/2 <Lx, x> + b(x)`` with optional analytic derivatives of ``b``.

    ``metric`` holds the diagonal of the inverse metric; the gradient is
    ``metric * df``.  Missing derivatives fall back to central differences.
    """

    model: SplitModel
    b: ArrayMap
    grad_b: Optional[ArrayMap] = None
    hess_b: Optional[ArrayMap] = None
    support_level: Optional[int] = None
    metric: Optional[Tuple[float, ...]] = None
    name: str = ""

    @property
    def dim(self) -> int:
        return self.model.dim

    def f(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        return 0.5 * np.sum(self.model.L * x * x, axis=-1) + self.b(x)

    def differential(self, x) -> np.ndarray:
        """Euclidean derivative ``df`` (equals the gradient for the flat metric)."""
        x = _check_dim(x, self.dim)
        if self.grad_b is not None:
            gb = self.grad_b(x)
        else:
            gb = np.stack(
                [(self.b(x + e) - self.b(x - e)) / (2 * FD_STEP) for e in np.eye(self.dim) * FD_STEP],
                axis=-1,
            )
        return self.model.L * x + gb

    def grad(self, x) -> np.ndarray:
        df = self.differential(x)
        if self.metric is None:
            return df
        return np.asarray(self.metric) * df

    def hess(self, x) -> np.ndarray:
        """Euclidean Hessian of ``f`` (symmetric)."""
        x = _check_dim(x, self.dim)
        if self.hess_b is not None:
            hb = self.hess_b(x)
        else:
            hb = jacobian_fd(lambda y: self.differential(y) - self.model.L * y, x)
            hb = 0.5 * (hb + np.swapaxes(hb, -1, -2))
        return np.diag(self.model.L) + hb

    def metric_hess(self, x) -> np.ndarray:
        """Symmetrised ``W^{1/2} H W^{1/2}``; same inertia as ``H``, spectrum of the linearised flow up to sign."""
        H = self.hess(x)
        if self.metric is None:
            return H
        s = np.sqrt(np.asarray(self.metric))
        return s[:, None] * H * s[None, :]


def negative_gradient_field(g: GradientSpec) -> LSField:
    """``x -> -grad f(x)``; the linear part is recorded as ``-L``."""
    L = g.model.L
    W = np.ones(g.dim) if g.metric is None else np.asarray(g.metric)

    def K(x):
        return -(g.grad(x) - W * L * x)

    return LSField(
        model=g.model,
        K=K,
        support_level=g.support_level,
        linear=tuple(-W * L),
        name=f"-grad {g.name}".strip(),
    )


# ---------------------------------------------------------------------------
# integration


def _rk4_step(fn: ArrayMap, x: np.ndarray, h) -> np.ndarray:
    k1 = fn(x)
    k2 = fn(x + 0.5 * h * k1)
    k3 = fn(x + 0.5 * h * k2)
    k4 = fn(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _time_grid(t: float, step: float) -> np.ndarray:
    """Step sizes covering ``[0, |t|]``: full steps then one partial step."""
    t = abs(float(t))
    n = int(np.floor(t / step + 1e-12))
    hs = [step] * n
    rest = t - n * step
    if rest > 1e-12 * max(1.0, t):
        hs.append(rest)
    return np.asarray(hs)


def flow_map(F, x, t: float, step: float = 1e-2) -> np.ndarray:
    """Fixed-step RK4 approximation of ``phi(t, x)``; negative ``t`` runs the negated field."""
    if step <= 0:
        raise ValueError("step must be positive")
    fn = F if callable(F) else F.__call__
    x = np.array(x, dtype=float)
    if t == 0:
        return x
    sgn = 1.0 if t > 0 else -1.0
    g = (lambda y: sgn * fn(y)) if sgn < 0 else fn
    with np.errstate(over="ignore", invalid="ignore"):
        for h in _time_grid(t, step):
            x = _rk4_step(g, x, h)
            if not np.all(np.isfinite(x)):
                raise IntegrationError("non-finite state while integrating")
    return x


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    step: float

    def __post_init__(self):
        if len(self.times) != len(self.points):
            raise ValueError("times and points differ in length")


def trajectory(F, x, t: float, step: float = 1e-2) -> Trajectory:
    """Sampled orbit over ``[0, t]`` (or ``[t, 0]`` for negative ``t``)."""
    fn = F if callable(F) else F.__call__
    sgn = 1.0 if t >= 0 else -1.0
    g = (lambda y: sgn * fn(y)) if sgn < 0 else fn
    x = np.array(x, dtype=float)
    times, pts = [0.0], [x.copy()]
    s = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for h in _time_grid(t, step):
            x = _rk4_step(g, x, h)
            if not np.all(np.isfinite(x)):
                raise IntegrationError("non-finite state while integrating")
            s += h
            times.append(sgn * s)
            pts.append(x.copy())
    return Trajectory(np.asarray(times), np.asarray(pts), step)


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("box needs lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.all((x >= lo - tol) & (x <= hi + tol), axis=-1)

    def boundary_distance(self, x) -> np.ndarray:
        """Per-axis distance to the nearest face (negative outside), shape (..., d)."""
        x = np.asarray(x, dtype=float)
        return np.minimum(x - np.asarray(self.lower), np.asarray(self.upper) - x)

    def inflate(self, rho: float) -> "Box":
        return Box(tuple(v - rho for v in self.lower), tuple(v + rho for v in self.upper))


@dataclass(frozen=True)
class ExitReport:
    stays: bool
    first_exit_time: Optional[float] = None
    exit_forward: Optional[bool] = None


def _first_exit(fn, x, t_end, U: Box, step):
    """Exit time from ``U`` over ``[0, t_end]`` (t_end may be negative), bisection refined."""
    if t_end == 0:
        return None
    sgn = 1.0 if t_end > 0 else -1.0
    g = (lambda y: sgn * fn(y)) if sgn < 0 else fn
    s = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for h in _time_grid(t_end, step):
            y = _rk4_step(g, x, h)
            if not np.all(np.isfinite(y)):
                raise IntegrationError("non-finite state while integrating")
            if not U.contains(y):
                lo, hi = 0.0, h
                while hi - lo > step / 16:
                    mid = 0.5 * (lo + hi)
                    if U.contains(_rk4_step(g, x, mid)):
                        lo = mid
                    else:
                        hi = mid
                return sgn * (s + 0.5 * (lo + hi))
            x, s = y, s + h
    return None


def trajectory_in_set(F, x, t_minus: float, t_plus: float, U: Box, step: float = 1e-2) -> ExitReport:
    """Whether ``x . [t_minus, t_plus]`` stays in ``U``; otherwise the exit closest to ``t = 0``."""
    if not t_minus <= 0 <= t_plus:
        raise ValueError("need t_minus <= 0 <= t_plus")
    fn = F if callable(F) else F.__call__
    x = np.asarray(x, dtype=float)
    fwd = _first_exit(fn, x, t_plus, U, step)
    bwd = _first_exit(fn, x, t_minus, U, step)
    if fwd is None and bwd is None:
        return ExitReport(True)
    if bwd is None or (fwd is not None and fwd <= -bwd):
        return ExitReport(False, fwd, True)
    return ExitReport(False, bwd, False)


def lipschitz_estimate(F, box: Box, samples: int = 200, seed: int = 0) -> float:
    """Sampled Lipschitz bound on ``box`` (pair ratios and FD Jacobian norms) times 1.1."""
    if samples < 2:
        raise ValueError("need at least two samples")
    fn = F if callable(F) else F.__call__
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    d = len(lo)
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")).reshape(d, -1).T
    pts = np.vstack([corners, lo + (hi - lo) * rng.random((samples, d))])
    vals = fn(pts)
    i = rng.integers(0, len(pts), size=samples)
    j = rng.integers(0, len(pts), size=samples)
    keep = np.linalg.norm(pts[i] - pts[j], axis=-1) > 1e-9
    ratio = 0.0
    if np.any(keep):
        ratio = float(np.max(
            np.linalg.norm(vals[i[keep]] - vals[j[keep]], axis=-1)
            / np.linalg.norm(pts[i[keep]] - pts[j[keep]], axis=-1)
        ))
    J = jacobian_fd(fn, pts)
    opnorm = float(np.max(np.linalg.norm(J, ord=2, axis=(-2, -1))))
    return 1.1 * max(ratio, opnorm)


def galerkin_truncate(F: LSField, level: int) -> LSField:
    """``L + P_n K P_n``; coordinates beyond ``n`` evolve linearly."""
    if level not in F.model.levels:
        raise ValueError(f"level {level} not in model ladder {F.model.levels}")
    P = F.model.projector(level)
    K = F.K

    def Kn(x):
        return P * K(P * np.asarray(x, dtype=float))

    return replace(F, K=Kn, support_level=level, name=f"{F.name}|P{level}")


# ---------------------------------------------------------------------------
# polynomial building blocks (used by the catalog and declarative configs)


def separable_polynomial_b(coeffs: Sequence[Sequence[float]]):
    """``b(x) = sum_i p_i(x_i)`` with ``coeffs[i]`` in increasing-power order.

    Returns ``(b, grad_b, hess_b)`` with analytic derivatives.
    """
    polys = [np.polynomial.Polynomial(c) if len(c) else np.polynomial.Polynomial([0.0]) for c in coeffs]
    d1 = [p.deriv(1) for p in polys]
    d2 = [p.deriv(2) for p in polys]

    def b(x):
        x = np.asarray(x, dtype=float)
        return sum(p(x[..., i]) for i, p in enumerate(polys))

    def grad_b(x):
        x = np.asarray(x, dtype=float)
        return np.stack([p(x[..., i]) for i, p in enumerate(d1)], axis=-1)

    def hess_b(x):
        x = np.asarray(x, dtype=float)
        diag = np.stack([p(x[..., i]) for i, p in enumerate(d2)], axis=-1)
        return diag[..., :, None] * np.eye(len(polys))

    return b, grad_b, hess_b


def polynomial_field_K(coeffs: Sequence[Sequence[float]]) -> ArrayMap:
    """Separable nonlinearity ``K_i(x) = p_i(x_i)``."""
    polys = [np.polynomial.Polynomial(c) if len(c) else np.polynomial.Polynomial([0.0]) for c in coeffs]

    def K(x):
        x = np.asarray(x, dtype=float)
        return np.stack([p(x[..., i]) for i, p in enumerate(polys)], axis=-1)

    return K


# ---------------------------------------------------------------------------
# batched exit classification


_THREADS = 1


def set_threads(n: int) -> None:
    """Worker count for batched integration; results do not depend on it."""
    global _THREADS
    if n < 1:
        raise ValueError("thread count must be positive")
    _THREADS = int(n)


def get_threads() -> int:
    return _THREADS


def _chunked(fn, X: np.ndarray, *args):
    """Apply ``fn`` to row chunks of ``X`` (possibly in threads) and concatenate in order."""
    n = len(X)
    k = min(_THREADS, max(1, n // 256))
    if k <= 1:
        return fn(X, *args)
    bounds = np.linspace(0, n, k + 1).astype(int)
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=k) as pool:
        parts = list(pool.map(lambda ab: fn(X[ab[0]:ab[1]], *args), zip(bounds[:-1], bounds[1:])))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))


def _exit_scan(X, fn, t, U: Box, step, near_width):
    n = len(X)
    exited = np.zeros(n, dtype=bool)
    near = np.zeros(n, dtype=bool)
    if n == 0:
        return exited, near
    sgn = 1.0 if t >= 0 else -1.0
    g = (lambda y: sgn * fn(y)) if sgn < 0 else fn
    w = None if near_width is None else np.asarray(near_width, dtype=float)

    def mark_near(idx, pts):
        if w is not None:
            near[idx] |= np.any(U.boundary_distance(pts) < w, axis=-1)

    exited[:] = ~U.contains(X)
    active = np.flatnonzero(~exited)
    x = np.array(X[active], dtype=float)
    mark_near(active, x)
    with np.errstate(over="ignore", invalid="ignore"):
        for h in _time_grid(t, step):
            if len(active) == 0:
                break
            x = _rk4_step(g, x, h)
            out = ~(np.all(np.isfinite(x), axis=-1) & U.contains(x))
            if out.any():
                exited[active[out]] = True
                active, x = active[~out], x[~out]
            mark_near(active, x)
    return exited, near


def batch_exit(F, X, t: float, U: Box, step: float = 1e-2, near_width=None):
    """For each row of ``X``: does its orbit over ``[0, t]`` leave ``U``?

    Also reports whether the orbit comes within ``near_width`` (per axis) of
    the boundary while staying inside.  Non-finite states count as exits.
    Returns ``(exited, near)`` boolean arrays.
    """
    fn = F if callable(F) else F.__call__
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return _chunked(_exit_scan, X, fn, t, U, step, near_width)
