"""Grid realisations of G^T, Gamma^T and combinatorial index pairs.

Cells of a ``GridBox`` with ``n_i`` subdivisions per axis live on the integer
lattice ``0..n_i``; cell ``(i, j)`` is the elementary cube
``((i, i+1), (j, j+1))``.  Each cell is probed at its ``2^d`` corners and its
center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .ls_system import Box, _rk4_step, _time_grid, batch_exit
from .z2_chain import Cube, closure, cube_dim, format_cubes, full_cube, parse_cubes

SAMPLE_SCHEME = "corners+center"
T_LADDER = (1.0, 2.0, 4.0, 8.0)


class IsolationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridBox:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    subdivisions: Tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        sub = self.subdivisions
        if isinstance(sub, int):
            sub = (sub,) * len(lo)
        sub = tuple(int(n) for n in sub)
        if not (len(lo) == len(hi) == len(sub)) or not lo:
            raise ValueError("lower, upper and subdivisions must share a dimension")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("GridBox needs lower < upper componentwise")
        if any(n < 1 for n in sub):
            raise ValueError("subdivisions must be positive")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "subdivisions", sub)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def width(self) -> np.ndarray:
        return (np.asarray(self.upper) - np.asarray(self.lower)) / np.asarray(self.subdivisions)

    @property
    def box(self) -> Box:
        return Box(self.lower, self.upper)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.subdivisions))

    def all_cells(self) -> List[Tuple[int, ...]]:
        return [tuple(int(v) for v in i) for i in np.ndindex(*self.subdivisions)]

    def to_lattice(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - np.asarray(self.lower)) / self.width

    def from_lattice(self, u) -> np.ndarray:
        return np.asarray(self.lower) + np.asarray(u, dtype=float) * self.width

    def vertices(self) -> np.ndarray:
        """All lattice vertices as points, C-ordered over shape ``subdivisions + 1``."""
        axes = [np.linspace(a, b, n + 1) for a, b, n in zip(self.lower, self.upper, self.subdivisions)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)

    def centers(self) -> np.ndarray:
        axes = [a + (np.arange(n) + 0.5) * (b - a) / n for a, b, n in zip(self.lower, self.upper, self.subdivisions)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)

    def inflate(self, rho: float) -> "GridBox":
        """``U_rho``: the box grown by ``rho`` on every side at (about) the same cell width."""
        w = self.width
        sub = tuple(int(math.ceil(n * (1 + 2 * rho / (n * wi)) - 1e-9)) for n, wi in zip(self.subdivisions, w))
        return GridBox(tuple(v - rho for v in self.lower), tuple(v + rho for v in self.upper), sub)

    def header(self) -> str:
        fmt = lambda seq: ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in seq)
        return f"# grid lower={fmt(self.lower)} upper={fmt(self.upper)} subdivisions={fmt(self.subdivisions)}"

    @classmethod
    def from_header(cls, line: str) -> "GridBox":
        fields = dict(tok.split("=", 1) for tok in line.lstrip("#").split()[1:])
        vec = lambda s, t: tuple(t(v) for v in s.split(","))
        return cls(vec(fields["lower"], float), vec(fields["upper"], float), vec(fields["subdivisions"], int))


class CubicalSet:
    """Face-closed set of elementary cubes on a grid's lattice."""

    def __init__(self, grid: GridBox, cubes: Iterable[Cube] = ()):
        cubes = closure(cubes)
        for q in cubes:
            if len(q) != grid.dim or any(a < 0 or b > n for (a, b), n in zip(q, grid.subdivisions)):
                raise ValueError(f"cube {q} outside grid range")
        self.grid = grid
        self.cubes = cubes

    @classmethod
    def from_cells(cls, grid: GridBox, cells: Iterable[Sequence[int]]) -> "CubicalSet":
        return cls(grid, (full_cube(c) for c in cells))

    @classmethod
    def full(cls, grid: GridBox) -> "CubicalSet":
        return cls.from_cells(grid, grid.all_cells())

    @cached_property
    def cells(self) -> frozenset:
        d = self.grid.dim
        return frozenset(tuple(a for a, _ in q) for q in self.cubes if cube_dim(q) == d)

    def __len__(self):
        return len(self.cubes)

    def __eq__(self, other):
        return isinstance(other, CubicalSet) and self.grid == other.grid and self.cubes == other.cubes

    def __hash__(self):
        return hash((self.grid, self.cubes))

    def __le__(self, other: "CubicalSet") -> bool:
        return self.cubes <= other.cubes

    def __repr__(self):
        return f"CubicalSet({len(self.cells)} cells, {len(self.cubes)} cubes)"

    def is_empty(self) -> bool:
        return not self.cubes

    def union(self, other: "CubicalSet") -> "CubicalSet":
        return CubicalSet(self.grid, self.cubes | other.cubes)

    def difference_closure(self, other: "CubicalSet") -> "CubicalSet":
        """``cl(|self| \\ |other|)``."""
        return CubicalSet(self.grid, self.cubes - other.cubes)

    # geometry ---------------------------------------------------------------

    @cached_property
    def _keys(self) -> np.ndarray:
        if not self.cubes:
            return np.zeros(0, dtype=np.int64)
        codes = np.array([[a + b for a, b in q] for q in self.cubes], dtype=np.int64)
        return np.sort(self._encode(codes))

    def _encode(self, codes: np.ndarray) -> np.ndarray:
        base = 2 * max(self.grid.subdivisions) + 3
        key = np.zeros(codes.shape[:-1], dtype=np.int64)
        for i in reversed(range(codes.shape[-1])):
            key = key * base + (codes[..., i] + 1)
        return key

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        """Closed-realisation membership; ``tol`` is measured in cell widths."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        u = self.grid.to_lattice(pts)
        k = np.rint(u)
        on_grid = np.abs(u - k) <= tol
        codes = np.where(on_grid, 2 * k, 2 * np.floor(u) + 1)
        n2 = 2 * np.asarray(self.grid.subdivisions)
        inside = np.all((codes >= 0) & (codes <= n2) & np.isfinite(u), axis=-1)
        codes = np.clip(np.nan_to_num(codes), -1, n2 + 1).astype(np.int64)
        keys = self._encode(codes)
        res = np.zeros(len(pts), dtype=bool)
        if len(self._keys):
            pos = np.clip(np.searchsorted(self._keys, keys), 0, len(self._keys) - 1)
            res = inside & (self._keys[pos] == keys)
        return res[0] if single else res

    def interior_contains(self, points, h: float = 1e-6) -> np.ndarray:
        """Whether each point has all diagonal offsets of size ``h`` cells inside the set."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(len(pts), dtype=bool)
        w = self.grid.width
        for signs in np.ndindex(*(2,) * self.grid.dim):
            off = (2 * np.asarray(signs) - 1) * h * w
            ok &= self.contains(pts + off, tol=0.0)
        return ok

    def bounds(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        if not self.cubes:
            return None
        lo = np.min([[a for a, _ in q] for q in self.cubes], axis=0)
        hi = np.max([[b for _, b in q] for q in self.cubes], axis=0)
        return self.grid.from_lattice(lo), self.grid.from_lattice(hi)

    def boundary_distance(self) -> float:
        """Distance from the realisation to the boundary of the grid box (inf if empty)."""
        b = self.bounds()
        if b is None:
            return math.inf
        lo, hi = b
        return float(min(np.min(lo - np.asarray(self.grid.lower)), np.min(np.asarray(self.grid.upper) - hi)))

    def cell_margin(self) -> int:
        """Number of whole cell layers separating the cells from the grid boundary."""
        if not self.cubes:
            return max(self.grid.subdivisions)
        lo = np.min([[a for a, _ in q] for q in self.cubes], axis=0)
        hi = np.max([[b for _, b in q] for q in self.cubes], axis=0)
        return int(min(np.min(lo), np.min(np.asarray(self.grid.subdivisions) - hi)))

    def touches_boundary(self) -> frozenset:
        """Full cells sharing a face with the grid boundary."""
        n = self.grid.subdivisions
        return frozenset(c for c in self.cells if any(i == 0 or i == m - 1 for i, m in zip(c, n)))

    def sample_points(self, count: int, rng: np.random.Generator, top_only: bool = True) -> np.ndarray:
        """Uniform samples from random full cells (or random maximal cubes)."""
        pool = sorted(self.cells) if top_only and self.cells else sorted(self._maximal())
        if not pool or count <= 0:
            return np.zeros((0, self.grid.dim))
        pick = rng.integers(0, len(pool), size=count)
        out = np.empty((count, self.grid.dim))
        for r, p in enumerate(pick):
            q = pool[p]
            if isinstance(q[0], tuple):
                lo = np.array([a for a, _ in q], dtype=float)
                ext = np.array([b - a for a, b in q], dtype=float)
            else:
                lo, ext = np.asarray(q, dtype=float), np.ones(self.grid.dim)
            out[r] = self.grid.from_lattice(lo + ext * rng.random(self.grid.dim))
        return out

    def _maximal(self) -> List[Cube]:
        from .z2_chain import cube_faces

        faces = set()
        for q in self.cubes:
            faces.update(cube_faces(q))
        return [q for q in self.cubes if q not in faces]

    # snapshots --------------------------------------------------------------

    def to_text(self, label: str = "") -> str:
        head = self.grid.header()
        if label:
            head += f" label={label}"
        return head + "\n" + format_cubes(self.cubes)

    @classmethod
    def from_text(cls, text: str) -> "CubicalSet":
        first = text.lstrip().splitlines()[0]
        if not first.startswith("# grid"):
            raise ValueError("snapshot lacks a grid header")
        return cls(GridBox.from_header(first), parse_cubes(text))


@dataclass(frozen=True)
class IndexPairCombinatorial:
    N: CubicalSet
    L: CubicalSet
    T_used: float
    sample_scheme: str = SAMPLE_SCHEME
    GT: Optional[CubicalSet] = field(default=None, compare=False)
    GammaT: Optional[CubicalSet] = field(default=None, compare=False)

    def __post_init__(self):
        if self.N.grid != self.L.grid:
            raise ValueError("N and L live on different grids")
        if not self.L <= self.N:
            raise ValueError("L must be contained in N")

    @property
    def grid(self) -> GridBox:
        return self.N.grid


@dataclass(frozen=True)
class IsolationCalibration:
    epsilon0: float
    rho: float
    T: float
    T0: float
    delta_checked: bool = False

    def __post_init__(self):
        if not (self.epsilon0 > 0 and self.rho > 0 and self.T > 0 and self.T0 > 0):
            raise ValueError("calibration constants must be positive")
        if not self.rho < self.epsilon0:
            raise ValueError("rho must be smaller than epsilon0")


# ---------------------------------------------------------------------------
# sample classification


@dataclass(frozen=True)
class _Flags:
    """Per-sample outcomes; vertex arrays have shape ``subdivisions + 1``, centers ``subdivisions``."""

    stays: Tuple[np.ndarray, np.ndarray]
    fwd_exit: Tuple[np.ndarray, np.ndarray]
    near: Tuple[np.ndarray, np.ndarray]


def _classify(F, U: GridBox, T: float, step: float) -> _Flags:
    box = U.box
    pts = np.vstack([U.vertices(), U.centers()])
    nv = int(np.prod(np.asarray(U.subdivisions) + 1))
    vshape = tuple(n + 1 for n in U.subdivisions)
    split = lambda a: (a[:nv].reshape(vshape), a[nv:].reshape(U.subdivisions))
    if T > 0:
        bwd, _ = batch_exit(F, pts, -T, box, step)
        # forward orbits matter only for samples of cells that keep a backward survivor
        cand = _any_sample(U, split(~bwd))
        need = np.zeros(len(pts), dtype=bool)
        vneed, cneed = split(need)
        cneed |= cand
        for corner in np.ndindex(*(2,) * U.dim):
            sl = tuple(slice(c, c + n) for c, n in zip(corner, U.subdivisions))
            vneed[sl] |= cand
        idx = np.flatnonzero(need)
        fwd = np.ones(len(pts), dtype=bool)
        near = np.zeros(len(pts), dtype=bool)
        f_sub, n_sub = batch_exit(F, pts[idx], T, box, step, near_width=U.width)
        fwd[idx], near[idx] = f_sub, n_sub
    else:
        fwd = ~box.contains(pts)
        bwd = fwd.copy()
        near = np.any(box.boundary_distance(pts) < U.width, axis=-1)
    return _Flags(split(~fwd & ~bwd), split(fwd), split(near & ~fwd))


def _any_sample(U: GridBox, pair: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Cellwise OR over the 2^d corners and the center."""
    vert, cent = pair
    out = cent.copy()
    for corner in np.ndindex(*(2,) * U.dim):
        sl = tuple(slice(c, c + n) for c, n in zip(corner, U.subdivisions))
        out |= vert[sl]
    return out


def _cells_of(mask: np.ndarray) -> List[Tuple[int, ...]]:
    return [tuple(int(v) for v in idx) for idx in np.argwhere(mask)]


def _gt_mask(U, flags):
    return _any_sample(U, flags.stays)


def _gamma_mask(U, flags, gt_mask):
    exits = _any_sample(U, flags.fwd_exit) | _any_sample(U, flags.near)
    return gt_mask & exits


def compute_GT(F, U: GridBox, T: float, step: float = 1e-2) -> CubicalSet:
    """Cells of ``U`` with a sample whose orbit over ``[-T, T]`` stays in ``U``."""
    if T < 0:
        raise ValueError("T must be non-negative")
    flags = _classify(F, U, T, step)
    return CubicalSet.from_cells(U, _cells_of(_gt_mask(U, flags)))


def compute_GammaT(F, GT: CubicalSet, U: GridBox, T: float, step: float = 1e-2) -> CubicalSet:
    """Cells of ``GT`` having a sample whose forward orbit over ``[0, T]`` leaves ``U`` or
    comes within one cell width of its boundary."""
    if GT.grid != U:
        raise ValueError("GT lives on a different grid")
    flags = _classify(F, U, T, step)
    exits = _any_sample(U, flags.fwd_exit) | _any_sample(U, flags.near)
    return CubicalSet.from_cells(U, [c for c in GT.cells if exits[c]])


def _pair_at(F, U: GridBox, T: float, step: float):
    flags = _classify(F, U, T, step)
    gt = _gt_mask(U, flags)
    gamma = _gamma_mask(U, flags, gt)
    GT = CubicalSet.from_cells(U, _cells_of(gt))
    GammaT = CubicalSet.from_cells(U, _cells_of(gamma))
    exits = frozenset(_cells_of(gt & _any_sample(U, flags.fwd_exit)))
    return GT, GammaT, exits


def build_index_pair(F, U: GridBox, T: Optional[float] = None, step: float = 1e-2) -> IndexPairCombinatorial:
    """``(cl G^T, cl Gamma^T)``; without ``T`` the first ladder value leaving a one-cell margin is used."""
    if T is None:
        for T_try in T_LADDER:
            GT, GammaT, exits = _pair_at(F, U, T_try, step)
            if GT.cell_margin() >= 1:
                T = T_try
                break
        else:
            raise IsolationError(f"G^T still reaches the boundary at T = {T_LADDER[-1]}")
    else:
        if T <= 0:
            raise ValueError("T must be positive")
        GT, GammaT, exits = _pair_at(F, U, T, step)
    # proximity alone puts every boundary cell in Gamma^T; demand a genuine exit there
    bad = GT.touches_boundary() - exits
    if bad:
        raise IsolationError(
            f"N touches the boundary outside L at {len(bad)} cell(s), e.g. {min(bad)}; T = {T} is too small"
        )
    return IndexPairCombinatorial(N=GT, L=GammaT, T_used=float(T), GT=GT, GammaT=GammaT)


# ---------------------------------------------------------------------------
# exit times


def _batch_exit_times(F, X: np.ndarray, N: CubicalSet, L: CubicalSet, cap: float, step: float) -> np.ndarray:
    """First time each orbit leaves ``|N| \\ |L|``; ``inf`` beyond ``cap``."""
    fn = F if callable(F) else F.__call__
    X = np.atleast_2d(np.asarray(X, dtype=float))
    inside = lambda p: N.contains(p) & ~L.contains(p)
    tau = np.full(len(X), np.inf)
    ok0 = inside(X)
    tau[~ok0] = 0.0
    active = np.flatnonzero(ok0)
    x = X[active].copy()
    s = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for h in _time_grid(cap, step):
            if len(active) == 0:
                break
            y = _rk4_step(fn, x, h)
            out = ~(np.all(np.isfinite(y), axis=-1) & inside(y))
            if np.any(out):
                x0 = x[out]
                lo = np.zeros(len(x0))
                hi = np.full(len(x0), h)
                while np.max(hi - lo) > step / 16:
                    mid = 0.5 * (lo + hi)
                    ym = _rk4_step(fn, x0, mid[:, None])
                    good = np.all(np.isfinite(ym), axis=-1) & inside(ym)
                    lo = np.where(good, mid, lo)
                    hi = np.where(good, hi, mid)
                tau[active[out]] = s + 0.5 * (lo + hi)
            active, x = active[~out], y[~out]
            s += h
    return tau


def exit_time(F, pair: IndexPairCombinatorial, x, cap: float, step: float = 1e-2) -> float:
    """Exit time from ``N \\ L``: 0 on ``L``, ``inf`` when the orbit outlasts ``cap``."""
    return float(_batch_exit_times(F, np.asarray(x, dtype=float)[None], pair.N, pair.L, cap, step)[0])


@dataclass(frozen=True)
class RegularityProbe:
    max_jump: float
    threshold: float
    samples: int

    @property
    def irregular(self) -> bool:
        return self.max_jump > self.threshold


def probe_regularity(F, pair: IndexPairCombinatorial, cap: Optional[float] = None, step: float = 1e-2) -> RegularityProbe:
    """Sample the exit time at centers of ``N`` cells and look for jumps between neighbours.

    A jump larger than ten cell-crossing times between face-adjacent cells flags
    the pair as irregular; pairs of capped values are ignored.
    """
    fn = F if callable(F) else F.__call__
    U = pair.grid
    cap = 4 * pair.T_used if cap is None else cap
    cells = sorted(pair.N.cells)
    if not cells:
        return RegularityProbe(0.0, math.inf, 0)
    centers = U.from_lattice(np.asarray(cells, dtype=float) + 0.5)
    tau = _batch_exit_times(fn, centers, pair.N, pair.L, cap, step)
    speed = float(np.max(np.linalg.norm(fn(centers), axis=-1)))
    crossing = float(np.min(U.width)) / max(speed, 1e-12)
    index = {c: i for i, c in enumerate(cells)}
    jump = 0.0
    for c, i in index.items():
        for ax in range(U.dim):
            nb = c[:ax] + (c[ax] + 1,) + c[ax + 1:]
            j = index.get(nb)
            if j is not None and np.isfinite(tau[i]) and np.isfinite(tau[j]):
                jump = max(jump, abs(tau[i] - tau[j]))
    return RegularityProbe(jump, 10 * crossing, len(cells))


# ---------------------------------------------------------------------------
# verification


@dataclass
class IndexPairReport:
    samples: int
    invariance_violations: int = 0
    exit_violations: int = 0
    isolation_violations: int = 0
    witnesses: Dict[str, List[Tuple[float, ...]]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.invariance_violations + self.exit_violations + self.isolation_violations

    @property
    def ok(self) -> bool:
        return self.total == 0

    def _witness(self, kind, x):
        lst = self.witnesses.setdefault(kind, [])
        if len(lst) < 5:
            lst.append(tuple(float(v) for v in x))


def _walk(fn, X, horizon, step):
    """Orbit samples of shape (steps+1, n, d) over ``[0, horizon]`` (negative runs backwards)."""
    sgn = 1.0 if horizon >= 0 else -1.0
    g = (lambda y: sgn * fn(y)) if sgn < 0 else fn
    out = [X.copy()]
    x = X.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for h in _time_grid(horizon, step):
            x = _rk4_step(g, x, h)
            x = np.where(np.isfinite(x), x, np.inf)
            out.append(x.copy())
    return np.stack(out)


def verify_index_pair(
    F, pair: IndexPairCombinatorial, samples: int = 200, seed: int = 0, step: float = 1e-2, horizon: Optional[float] = None
) -> IndexPairReport:
    """Sampled check of the three index-pair conditions; violations are counted, not raised."""
    fn = F if callable(F) else F.__call__
    rng = np.random.default_rng(seed)
    H = 2 * pair.T_used if horizon is None else horizon
    N, L = pair.N, pair.L
    rep = IndexPairReport(samples=samples)
    tol = 0.1

    # positive invariance of L relative to N
    if not L.is_empty():
        XL = L.sample_points(samples, rng, top_only=bool(L.cells))
        path = _walk(fn, XL, H, step)
        inN = np.stack([N.contains(p) for p in path])
        inL = np.stack([L.contains(p, tol=1e-6) for p in path])
        left_N = np.cumsum(~inN, axis=0) > 0
        bad = np.any(inN & ~inL & ~left_N, axis=0)
        rep.invariance_violations = int(np.sum(bad))
        for x in XL[bad]:
            rep._witness("invariance", x)

    # exits from N pass through L
    if not N.is_empty():
        XN = N.sample_points(samples, rng)
        path = _walk(fn, XN, H, step)
        inN = np.stack([N.contains(p) for p in path])
        for k in range(len(XN)):
            outs = np.flatnonzero(~inN[:, k])
            if len(outs) == 0:
                continue
            j = outs[0]
            a = path[j - 1, k]
            lo, hi = 0.0, step
            x0 = a[None]
            while hi - lo > step / 64:
                mid = 0.5 * (lo + hi)
                if N.contains(_rk4_step(fn, x0, mid))[0]:
                    lo = mid
                else:
                    hi = mid
            last = _rk4_step(fn, x0, lo)[0]
            if not (L.contains(last, tol=tol) or L.contains(a, tol=tol)):
                rep.exit_violations += 1
                rep._witness("exit", XN[k])

    # isolation: long orbits inside cl(N \ L) stay off its boundary
    core = N.difference_closure(L)
    if not core.is_empty():
        XC = core.sample_points(samples, rng)
        fwd = _walk(fn, XC, H, step)
        bwd = _walk(fn, XC, -H, step)
        stays = np.all(np.stack([core.contains(p) for p in fwd]), axis=0)
        stays &= np.all(np.stack([core.contains(p) for p in bwd]), axis=0)
        bad = stays & ~core.interior_contains(XC)
        rep.isolation_violations = int(np.sum(bad))
        for x in XC[bad]:
            rep._witness("isolation", x)
    return rep


# ---------------------------------------------------------------------------
# calibration


def calibrate_isolation(
    F, U: GridBox, step: float = 1e-2, T0: float = 2.0, T_max: float = 16.0
) -> IsolationCalibration:
    """Constants ``(epsilon0, rho, T)`` with ``G^T(U_rho)`` inside the interior of ``U``.

    ``T0`` is doubled until ``G^{T0}(U)`` keeps a one-cell margin and then until the
    cell set stops shrinking; ``epsilon0`` is half the distance from the boundary
    to that enclosure.  The uniform-continuity
    modulus is not computed, so ``delta_checked`` stays false.
    """
    enclosure = None
    T_try = T0
    while T_try <= T_max:
        G = compute_GT(F, U, T_try, step)
        if G.cell_margin() >= 1:
            enclosure = G
            break
        T_try *= 2
    if enclosure is None:
        raise IsolationError(f"not isolating: G^T reaches the boundary for every tested T <= {T_max}")
    # tighten the enclosure until doubling the horizon no longer changes it
    while 2 * T_try <= T_max:
        G = compute_GT(F, U, 2 * T_try, step)
        if G.cells == enclosure.cells:
            break
        enclosure, T_try = G, 2 * T_try
    T0 = T_try
    half = 0.5 * (np.asarray(U.upper) - np.asarray(U.lower))
    dist = enclosure.boundary_distance()
    eps0 = 0.5 * (float(np.min(half)) if not math.isfinite(dist) else dist)

    w = float(np.max(U.width))
    rho = None
    enc = enclosure.bounds()
    for k in range(1, 6):
        cand = eps0 / 2**k
        Ur = U.inflate(cand)
        Gr = compute_GT(F, Ur, T0, step).bounds()
        if enc is None and Gr is None:
            rho = cand
            break
        if enc is not None and Gr is not None:
            if np.all(Gr[0] >= enc[0] - w - 1e-12) and np.all(Gr[1] <= enc[1] + w + 1e-12):
                rho = cand
                break
    if rho is None:
        raise IsolationError("no tested inflation U_rho keeps the same invariant-set enclosure")

    Ur = U.inflate(rho)
    lo, hi = np.asarray(U.lower), np.asarray(U.upper)
    k = 1
    while True:
        T = T0 * 2 ** (k / 2)
        if T > T_max * 2:
            raise IsolationError("no tested horizon puts G^T(U_rho) inside int U")
        b = compute_GT(F, Ur, T, step).bounds()
        if b is None or (np.all(b[0] > lo) and np.all(b[1] < hi)):
            break
        k += 1
    return IsolationCalibration(epsilon0=eps0, rho=rho, T=float(T), T0=float(T0))
