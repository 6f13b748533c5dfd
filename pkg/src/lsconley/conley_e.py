"""Classical and E-graded Conley indices, E-dimensions and direct limits over levels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .isolation import GridBox, IndexPairCombinatorial, build_index_pair
from .ls_system import LSField, SplitModel, _zero_map
from .z2_chain import (
    ChainComplexError,
    GradedDims,
    Z2Matrix,
    _cube_set,
    cohomology_dims,
    cubical_sphere,
    mv_connecting,
    mv_exactness,
    pair_homology,
    rank_z2,
    relative_pair_complex,
)


@dataclass(frozen=True)
class EIndex:
    """E-graded table: degree ``q`` holds the classical degree ``q + d_minus``."""

    dims: GradedDims
    d_minus: int

    @property
    def offset(self) -> int:
        return -self.d_minus

    def as_dict(self) -> Dict[int, int]:
        return self.dims.as_dict()

    def __getitem__(self, q: int) -> int:
        return self.dims[q]

    def __eq__(self, other):
        if isinstance(other, EIndex):
            return self.dims == other.dims
        return self.dims == other

    def __hash__(self):
        return hash(self.dims)


def classical_index(pair: IndexPairCombinatorial) -> GradedDims:
    return pair_homology(pair.N.cubes, pair.L.cubes)


def e_index(pair: IndexPairCombinatorial, model: SplitModel, classical: Optional[GradedDims] = None) -> EIndex:
    h = classical_index(pair) if classical is None else classical
    return EIndex(h.shifted(-model.d_minus), model.d_minus)


def nontriviality_check(e) -> bool:
    dims = e.dims if isinstance(e, EIndex) else e
    return not dims.is_zero()


def e_dimension(V: Iterable[int], model: SplitModel) -> int:
    """``dim(V & E+) - codim(V + E+)`` for ``V`` spanned by model coordinates."""
    V = frozenset(int(i) for i in V)
    if any(i < 0 or i >= model.dim for i in V):
        raise ValueError("subspace axis outside the model")
    plus = model.plus_set
    return len(V & plus) - (model.dim - len(V | plus))


# ---------------------------------------------------------------------------
# level families and the direct limit


@dataclass(frozen=True)
class LevelFamily:
    """Sections ``X_{V_j}`` with ``dim V_{j+1} = dim V_j + 1``.

    ``axes[j]`` is the coordinate spanning ``V_{j+1} / V_j``; the section
    ``X_{V_j}`` must be ``X_{V_{j+1}}`` cut by that coordinate's zero hyperplane.
    """

    levels: Tuple[Tuple[int, frozenset], ...]
    axes: Tuple[int, ...]
    p: Optional[int] = None

    def __post_init__(self):
        levels = tuple((int(v), _cube_set(x)) for v, x in self.levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "axes", tuple(int(a) for a in self.axes))
        if len(self.axes) != len(levels) - 1:
            raise ValueError("need one orientation axis per consecutive pair of levels")
        for (v0, x0), (v1, x1), ax in zip(levels, levels[1:], self.axes):
            if v1 != v0 + 1:
                raise ValueError("consecutive levels must differ by one dimension")
            if x1 and frozenset(q for q in x1 if q[ax] == (0, 0)) != x0:
                raise ValueError(f"level with dim V = {v0} is not the section of the next level")


def sphere_family(p: int, count: int = 3) -> LevelFamily:
    """Sections of the unit sphere of a space of E-dimension ``p``.

    Axes ``0..p-1`` span the ``E+`` part and the following axes are successive
    ``E-`` directions, so ``X_{V_j}`` is a cubical ``(p + j - 1)``-sphere.
    """
    if p < 0:
        raise ValueError("p must be non-negative")
    start = max(0, 1 - p)
    ambient = p + start + count - 1
    levels = tuple((j, cubical_sphere(p + j - 1, ambient)) for j in range(start, start + count))
    axes = tuple(p + j for j in range(start, start + count - 1))
    return LevelFamily(levels, axes, p)


@dataclass
class EDimensionRecord:
    p: Optional[int]
    level_dims: List[Dict[int, int]]
    delta_ranks: List[Dict[int, int]]
    composite_ranks: Dict[int, List[int]]
    limit: GradedDims
    exact: bool
    exactness: List[list] = field(default_factory=list)


def e_cohomology_limit(fam: LevelFamily, check_exactness: bool = True) -> EDimensionRecord:
    """Direct limit of ``H^{q + dim V}(X_V)`` along the connecting maps.

    The limit in degree ``q`` is read off as the rank of the composite from a
    level into the top level; the value must agree for the two levels below
    the top.
    """
    if len(fam.levels) < 3:
        raise ValueError("a level family needs at least three levels")
    vdims = [v for v, _ in fam.levels]
    level_dims = [cohomology_dims(relative_pair_complex(x)).as_dict() for _, x in fam.levels]
    deltas = [mv_connecting(x1, ax) for (_, x1), ax in zip(fam.levels[1:], fam.axes)]
    exactness = [mv_exactness(x1, ax) for (_, x1), ax in zip(fam.levels[1:], fam.axes)] if check_exactness else []
    exact = all(r.exact for rs in exactness for r in rs)

    top = len(fam.levels) - 1
    qs = sorted({k - v for d, v in zip(level_dims, vdims) for k in d} | {0})
    qs = list(range(min(qs) - 1, max(qs) + 2))
    composite: Dict[int, List[int]] = {}
    limit = {}
    for q in qs:
        ranks = []
        for j in range(top):
            k = q + vdims[j]
            mat = _identity(level_dims[j].get(k, 0))
            for i in range(j, top):
                ki = q + vdims[i]
                step = deltas[i].get(ki)
                rows = level_dims[i + 1].get(ki + 1, 0)
                cols = level_dims[i].get(ki, 0)
                if step is None or step.shape != (rows, cols):
                    step = Z2Matrix.zeros(rows, cols)
                mat = step @ mat
            ranks.append(rank_z2(mat))
        composite[q] = ranks
        if ranks[-1] != ranks[-2]:
            raise ChainComplexError(f"no plateau in degree {q}: composite ranks {ranks}")
        limit[q] = ranks[-1]
    delta_ranks = [{k: rank_z2(m) for k, m in d.items()} for d in deltas]
    return EDimensionRecord(fam.p, level_dims, delta_ranks, composite, GradedDims.from_dict(limit), exact, exactness)


def _identity(n: int) -> Z2Matrix:
    return Z2Matrix.identity(n) if n else Z2Matrix.zeros(0, 0)


# ---------------------------------------------------------------------------
# suspension


def suspend_field(F: LSField, rate: float = 1.0) -> LSField:
    """Append a coordinate in ``E-`` that expands at ``rate`` and does not interact."""
    d = F.dim
    K = F.K

    def K2(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., :d] = K(x[..., :d])
        return out

    return LSField(
        model=F.model.suspended(-rate),
        K=_zero_map if K is _zero_map else K2,
        support_level=F.support_level,
        lipschitz_hint=F.lipschitz_hint,
        linear=tuple(F.linear) + (rate,),
        name=f"{F.name}+susp".strip("+"),
    )


def suspend_box(U: GridBox, subdivisions: int = 16, half_width: float = 1.0) -> GridBox:
    return GridBox(U.lower + (-half_width,), U.upper + (half_width,), U.subdivisions + (subdivisions,))


@dataclass
class SuspensionReport:
    classical: GradedDims
    classical_suspended: GradedDims
    e: EIndex
    e_suspended: EIndex
    rate: float

    @property
    def shift_ok(self) -> bool:
        return self.classical_suspended == self.classical.shifted(1)

    @property
    def e_equal(self) -> bool:
        return self.e == self.e_suspended

    @property
    def ok(self) -> bool:
        return self.shift_ok and self.e_equal


def suspension_check(
    F: LSField,
    U: GridBox,
    model: Optional[SplitModel] = None,
    T: float = 2.0,
    step: float = 1e-2,
    subdivisions: int = 16,
    rate: Optional[float] = None,
    pair: Optional[IndexPairCombinatorial] = None,
) -> SuspensionReport:
    """Compare indices before and after appending one expanding ``E-`` coordinate.

    The appended rate defaults to ``1/(2T)`` so that its ``G^T`` slab spans
    several cells of the extra axis.
    """
    model = F.model if model is None else model
    rate = 0.5 / T if rate is None else rate
    p0 = build_index_pair(F, U, T, step) if pair is None else pair
    h0 = classical_index(p0)
    Fs = suspend_field(F, rate)
    Us = suspend_box(U, subdivisions)
    p1 = build_index_pair(Fs, Us, T, step)
    h1 = classical_index(p1)
    return SuspensionReport(h0, h1, e_index(p0, model, h0), e_index(p1, Fs.model, h1), rate)
