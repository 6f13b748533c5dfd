"""Z2 linear algebra and cubical (co)homology of cell pairs.

Matrices are stored as bit-packed rows (Python ints, bit ``j`` of row ``i`` is
entry ``(i, j)``).  Elimination always pivots on the lowest available column
index, so every derived basis is reproducible.

Elementary cubes live on an integer lattice and are written as tuples of
``(lo, hi)`` pairs with ``hi - lo`` in ``{0, 1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

Cube = Tuple[Tuple[int, int], ...]


class ChainComplexError(ValueError):
    """Raised for malformed complexes, pairs or triads."""


# ---------------------------------------------------------------------------
# matrices


@dataclass(frozen=True)
class Z2Matrix:
    rows: int
    cols: int
    data: Tuple[int, ...] = ()

    def __post_init__(self):
        if not self.data:
            object.__setattr__(self, "data", (0,) * self.rows)
        if len(self.data) != self.rows:
            raise ValueError("row count mismatch")
        limit = 1 << self.cols
        for r in self.data:
            if r < 0 or r >= limit:
                raise ValueError("row has bits outside the column range")

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Z2Matrix":
        return cls(rows, cols, (0,) * rows)

    @classmethod
    def identity(cls, n: int) -> "Z2Matrix":
        return cls(n, n, tuple(1 << i for i in range(n)))

    @classmethod
    def from_dense(cls, array) -> "Z2Matrix":
        a = np.asarray(array, dtype=np.int64) % 2
        if a.ndim != 2:
            raise ValueError("expected a 2-d array")
        rows = tuple(int(sum(1 << j for j in np.flatnonzero(row))) for row in a)
        return cls(a.shape[0], a.shape[1], rows)

    @classmethod
    def from_columns(cls, rows: int, columns: Sequence[int]) -> "Z2Matrix":
        """Build from bit-packed columns (bit ``i`` of column ``j`` is entry ``(i, j)``)."""
        data = [0] * rows
        for j, col in enumerate(columns):
            while col:
                low = col & -col
                data[low.bit_length() - 1] |= 1 << j
                col ^= low
        return cls(rows, len(columns), tuple(data))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=np.uint8)
        for i, r in enumerate(self.data):
            j = 0
            while r:
                if r & 1:
                    out[i, j] = 1
                r >>= 1
                j += 1
        return out

    def __getitem__(self, ij):
        i, j = ij
        return (self.data[i] >> j) & 1

    def columns(self) -> List[int]:
        cols = [0] * self.cols
        for i, r in enumerate(self.data):
            while r:
                low = r & -r
                cols[low.bit_length() - 1] |= 1 << i
                r ^= low
        return cols

    def transpose(self) -> "Z2Matrix":
        return Z2Matrix(self.cols, self.rows, tuple(self.columns()))

    def __matmul__(self, other: "Z2Matrix") -> "Z2Matrix":
        if self.cols != other.rows:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        out = []
        for r in self.data:
            acc = 0
            while r:
                low = r & -r
                acc ^= other.data[low.bit_length() - 1]
                r ^= low
            out.append(acc)
        return Z2Matrix(self.rows, other.cols, tuple(out))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    def is_zero(self) -> bool:
        return not any(self.data)

    def rank(self) -> int:
        return rank_z2(self)


def _reduce(rows: Iterable[int]) -> Dict[int, int]:
    """Echelon form keyed by pivot bit (lowest set bit of each stored row)."""
    pivots: Dict[int, int] = {}
    for r in rows:
        while r:
            low = r & -r
            p = pivots.get(low)
            if p is None:
                pivots[low] = r
                break
            r ^= p
    return pivots


def rank_z2(m: Z2Matrix) -> int:
    """Rank over Z2; the input is left untouched."""
    return len(_reduce(m.data))


def rank_of_vectors(vectors: Iterable[int]) -> int:
    return len(_reduce(vectors))


def nullspace_z2(m: Z2Matrix) -> List[int]:
    """Basis of ``{v : m v = 0}`` as bit-packed vectors of length ``m.cols``."""
    # reduced row echelon form with pivots on lowest column index
    pivots: Dict[int, int] = {}
    for r in m.data:
        for col, prow in pivots.items():
            if (r >> col) & 1:
                r ^= prow
        if not r:
            continue
        col = (r & -r).bit_length() - 1
        for c in list(pivots):
            if (pivots[c] >> col) & 1:
                pivots[c] ^= r
        pivots[col] = r
    basis = []
    for free in range(m.cols):
        if free in pivots:
            continue
        v = 1 << free
        for col, prow in pivots.items():
            if (prow >> free) & 1:
                v |= 1 << col
        basis.append(v)
    return basis


class _Span:
    """Incremental Z2 span that tracks how each reduced row was combined.

    Rows are tagged; ``coordinates`` expresses a vector in terms of the tags of
    the rows added through ``add`` with ``tag`` set.
    """

    def __init__(self):
        self._piv: Dict[int, Tuple[int, int]] = {}
        self._ntags = 0

    def add(self, v: int, tagged: bool = False) -> bool:
        tag = 0
        if tagged:
            tag = 1 << self._ntags
            self._ntags += 1
        while v:
            low = v & -v
            hit = self._piv.get(low)
            if hit is None:
                self._piv[low] = (v, tag)
                return True
            v ^= hit[0]
            tag ^= hit[1]
        return False

    def coordinates(self, v: int) -> Optional[int]:
        tag = 0
        while v:
            low = v & -v
            hit = self._piv.get(low)
            if hit is None:
                return None
            v ^= hit[0]
            tag ^= hit[1]
        return tag


# ---------------------------------------------------------------------------
# graded dimension tables


@dataclass(frozen=True, eq=False)
class GradedDims:
    """Betti-number table; ``dims[i]`` is the dimension in degree ``offset + i``."""

    offset: int = 0
    dims: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if any(d < 0 for d in self.dims):
            raise ValueError("dimensions must be non-negative")

    @classmethod
    def from_dict(cls, table: Mapping[int, int]) -> "GradedDims":
        nz = {int(k): int(v) for k, v in table.items() if v}
        if not nz:
            return cls(0, ())
        lo, hi = min(nz), max(nz)
        return cls(lo, tuple(nz.get(k, 0) for k in range(lo, hi + 1)))

    def __getitem__(self, degree: int) -> int:
        i = degree - self.offset
        if 0 <= i < len(self.dims):
            return self.dims[i]
        return 0

    def as_dict(self) -> Dict[int, int]:
        return {self.offset + i: d for i, d in enumerate(self.dims) if d}

    def shifted(self, by: int) -> "GradedDims":
        return GradedDims(self.offset + by, self.dims)

    def is_zero(self) -> bool:
        return not any(self.dims)

    def total(self) -> int:
        return sum(self.dims)

    def __eq__(self, other):
        if isinstance(other, GradedDims):
            return self.as_dict() == other.as_dict()
        if isinstance(other, Mapping):
            return self.as_dict() == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self):
        return hash(tuple(sorted(self.as_dict().items())))

    def __repr__(self):
        return f"GradedDims({self.as_dict()})"


# ---------------------------------------------------------------------------
# chain complexes


@dataclass(frozen=True)
class ChainComplexZ2:
    """Finite chain complex; ``boundaries[k]`` maps degree ``k`` to ``k - 1``.

    ``generators[k]`` lists labels of degree-``k`` generators; missing degrees
    are zero groups.
    """

    generators: Mapping[int, Tuple] = field(default_factory=dict)
    boundaries: Mapping[int, Z2Matrix] = field(default_factory=dict)

    def size(self, k: int) -> int:
        return len(self.generators.get(k, ()))

    def boundary(self, k: int) -> Z2Matrix:
        m = self.boundaries.get(k)
        if m is None:
            return Z2Matrix.zeros(self.size(k - 1), self.size(k))
        return m

    def degrees(self) -> List[int]:
        return sorted(k for k, g in self.generators.items() if len(g))

    def validate(self) -> None:
        for k, m in self.boundaries.items():
            if m.shape != (self.size(k - 1), self.size(k)):
                raise ChainComplexError(f"boundary {k} has shape {m.shape}")
        for k in self.degrees():
            prod = self.boundary(k) @ self.boundary(k + 1)
            if not prod.is_zero():
                raise ChainComplexError(f"boundary composite {k}o{k + 1} is nonzero")

    def dual(self) -> "ChainComplexZ2":
        """Cochain complex re-graded as a chain complex in degree ``-k``."""
        gens = {-k: g for k, g in self.generators.items()}
        bds = {-(k - 1): m.transpose() for k, m in self.boundaries.items()}
        return ChainComplexZ2(gens, bds)


def homology_dims(c: ChainComplexZ2) -> GradedDims:
    """``dim H_k = nullity(d_k) - rank(d_{k+1})``; rejects complexes with dd != 0."""
    c.validate()
    table = {}
    for k in c.degrees():
        n = c.size(k)
        nullity = n - rank_z2(c.boundary(k))
        table[k] = nullity - rank_z2(c.boundary(k + 1))
    return GradedDims.from_dict(table)


def cohomology_dims(c: ChainComplexZ2) -> GradedDims:
    """Cohomology dimension table computed from the transposed complex."""
    d = homology_dims(c.dual())
    return GradedDims.from_dict({-k: v for k, v in d.as_dict().items()})


# ---------------------------------------------------------------------------
# elementary cubes


def cube_dim(q: Cube) -> int:
    return sum(hi - lo for lo, hi in q)


def cube_faces(q: Cube) -> List[Cube]:
    """Codimension-one faces."""
    out = []
    for i, (lo, hi) in enumerate(q):
        if hi != lo:
            out.append(q[:i] + ((lo, lo),) + q[i + 1:])
            out.append(q[:i] + ((hi, hi),) + q[i + 1:])
    return out


def full_cube(index: Sequence[int]) -> Cube:
    return tuple((int(i), int(i) + 1) for i in index)


def closure(cubes: Iterable[Cube]) -> frozenset:
    """Smallest face-closed set containing ``cubes``."""
    seen = set()
    stack = list(cubes)
    while stack:
        q = stack.pop()
        if q in seen:
            continue
        seen.add(q)
        stack.extend(cube_faces(q))
    return frozenset(seen)


def is_face_closed(cubes: frozenset) -> bool:
    return all(f in cubes for q in cubes for f in cube_faces(q))


def _cube_set(x) -> frozenset:
    # accepts raw cube collections or anything exposing ``.cubes``
    cubes = getattr(x, "cubes", x)
    return cubes if isinstance(cubes, frozenset) else frozenset(cubes)


def relative_pair_complex(X, A=()) -> ChainComplexZ2:
    """Chain complex of cubes of ``X`` not in ``A``; faces landing in ``A`` are dropped."""
    xs, as_ = _cube_set(X), _cube_set(A)
    if not as_ <= xs:
        raise ChainComplexError("A is not contained in X")
    for s, name in ((xs, "X"), (as_, "A")):
        if not is_face_closed(s):
            raise ChainComplexError(f"{name} is not face-closed")
    by_dim: Dict[int, List[Cube]] = {}
    for q in xs - as_:
        by_dim.setdefault(cube_dim(q), []).append(q)
    gens = {k: tuple(sorted(v)) for k, v in by_dim.items()}
    index = {k: {q: i for i, q in enumerate(v)} for k, v in gens.items()}
    bds = {}
    for k, qs in gens.items():
        if k == 0:
            continue
        lower = index.get(k - 1, {})
        cols = []
        for q in qs:
            col = 0
            for f in cube_faces(q):
                i = lower.get(f)
                if i is not None:
                    col ^= 1 << i
            cols.append(col)
        bds[k] = Z2Matrix.from_columns(len(lower), cols)
    return ChainComplexZ2(gens, bds)


def pair_homology(X, A=()) -> GradedDims:
    return homology_dims(relative_pair_complex(X, A))


# ---------------------------------------------------------------------------
# cochains and Mayer-Vietoris


@dataclass
class _Cochains:
    """Coboundary data of a face-closed cube set, degree by degree."""

    cubes: Dict[int, Tuple[Cube, ...]]
    index: Dict[int, Dict[Cube, int]]
    delta: Dict[int, Z2Matrix]  # delta[k]: C^k -> C^{k+1}

    @classmethod
    def of(cls, cubes: frozenset) -> "_Cochains":
        cx = relative_pair_complex(cubes)
        gens = {k: tuple(v) for k, v in cx.generators.items()}
        index = {k: {q: i for i, q in enumerate(v)} for k, v in gens.items()}
        delta = {k - 1: m.transpose() for k, m in cx.boundaries.items()}
        return cls(gens, index, delta)

    def n(self, k: int) -> int:
        return len(self.cubes.get(k, ()))

    def d(self, k: int) -> Z2Matrix:
        m = self.delta.get(k)
        if m is None:
            return Z2Matrix.zeros(self.n(k + 1), self.n(k))
        return m

    def coboundaries(self, k: int) -> List[int]:
        """Spanning set of B^k as bit vectors over the k-cubes."""
        return [c for c in self.d(k - 1).columns() if c]

    def cocycles(self, k: int) -> List[int]:
        return nullspace_z2(self.d(k))

    def apply_delta(self, k: int, v: int) -> int:
        out = 0
        for j, c in enumerate(self.d(k).columns()):
            if (v >> j) & 1:
                out ^= c
        return out

    def cohomology_basis(self, k: int) -> List[int]:
        """Cocycles completing a basis of B^k to one of Z^k."""
        span = _Span()
        for b in self.coboundaries(k):
            span.add(b)
        return [z for z in self.cocycles(k) if span.add(z)]

    def cohomology_coords(self, k: int, basis: List[int]) -> "_Span":
        span = _Span()
        for b in self.coboundaries(k):
            span.add(b)
        for z in basis:
            span.add(z, tagged=True)
        return span


def _transfer(v: int, src: Dict[Cube, int], dst: Dict[Cube, int]) -> int:
    """Re-index a cochain from one cube indexing to another, dropping absent cubes."""
    inv = {i: q for q, i in src.items()}
    out = 0
    while v:
        low = v & -v
        q = inv[low.bit_length() - 1]
        j = dst.get(q)
        if j is not None:
            out |= 1 << j
        v ^= low
    return out


@dataclass
class MVTriad:
    whole: frozenset
    plus: frozenset
    minus: frozenset
    middle: frozenset


def split_triad(XW, axis: int, value: float = 0.0, flip: bool = False) -> MVTriad:
    """Split a cube set by the hyperplane ``x[axis] = value``.

    ``flip`` swaps the roles of the half-spaces (orientation ``-u0``).
    """
    xs = _cube_set(XW)
    plus = frozenset(q for q in xs if q[axis][0] >= value)
    minus = frozenset(q for q in xs if q[axis][1] <= value)
    if plus | minus != xs:
        raise ChainComplexError("half-spaces do not cover the set")
    if flip:
        plus, minus = minus, plus
    return MVTriad(xs, plus, minus, plus & minus)


def mv_connecting(XW, axis: int, value: float = 0.0, flip: bool = False) -> Dict[int, Z2Matrix]:
    """Matrices of the connecting maps ``H^k(X_V) -> H^{k+1}(X_W)``.

    The zig-zag lifts a cocycle ``z`` on the middle to ``(z, 0)`` on the two
    halves, applies the coboundary on the plus side and reads the result as a
    cochain on the whole set.  Columns are indexed by the deterministic
    cohomology basis of the middle, rows by that of the whole set.
    """
    t = split_triad(XW, axis, value, flip)
    cw, cp, cm = _Cochains.of(t.whole), _Cochains.of(t.plus), _Cochains.of(t.middle)
    out = {}
    for k in sorted(cm.cubes):
        hv = cm.cohomology_basis(k)
        hw = cw.cohomology_basis(k + 1)
        span = cw.cohomology_coords(k + 1, hw)
        cols = []
        for z in hv:
            lifted = _transfer(z, cm.index.get(k, {}), cp.index.get(k, {}))
            w_plus = cp.apply_delta(k, lifted)
            w = _transfer(w_plus, cp.index.get(k + 1, {}), cw.index.get(k + 1, {}))
            coords = span.coordinates(w)
            if coords is None:
                raise ChainComplexError("connecting image is not a cocycle")
            cols.append(coords)
        out[k] = Z2Matrix.from_columns(len(hw), cols)
    return out


@dataclass
class ExactnessReport:
    degree: int
    dim_middle: int
    restriction_rank: int
    delta_rank: int

    @property
    def exact(self) -> bool:
        return self.dim_middle == self.restriction_rank + self.delta_rank


def mv_exactness(XW, axis: int, value: float = 0.0, flip: bool = False) -> List[ExactnessReport]:
    """Check ``dim H^k(X_V) = rank(res) + rank(Delta^k)`` degree by degree."""
    t = split_triad(XW, axis, value, flip)
    cp, cm, cv = _Cochains.of(t.plus), _Cochains.of(t.minus), _Cochains.of(t.middle)
    deltas = mv_connecting(XW, axis, value, flip)
    reports = []
    for k in sorted(cv.cubes):
        bv = cv.coboundaries(k)
        base = rank_of_vectors(bv)
        images = []
        for side in (cp, cm):
            for z in side.cohomology_basis(k):
                images.append(_transfer(z, side.index.get(k, {}), cv.index.get(k, {})))
        res_rank = rank_of_vectors(bv + images) - base
        dim_v = len(cv.cohomology_basis(k))
        reports.append(ExactnessReport(k, dim_v, res_rank, rank_z2(deltas[k])))
    return reports


# ---------------------------------------------------------------------------
# serialization


def format_cubes(cubes: Iterable[Cube]) -> str:
    """One cube per line, coordinates ``lo,hi`` per axis; sorted."""
    lines = [",".join(str(v) for pair in q for v in pair) for q in sorted(cubes)]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_cubes(text: str) -> frozenset:
    out = set()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vals = [int(v) for v in line.split(",")]
        if len(vals) % 2:
            raise ValueError(f"odd coordinate count in {line!r}")
        out.add(tuple(zip(vals[0::2], vals[1::2])))
    return frozenset(out)


# ---------------------------------------------------------------------------
# standard shapes


def box_cubes(lower: Sequence[int], upper: Sequence[int]) -> frozenset:
    """Face-closed filling of the integer box ``[lower, upper]`` (axes may be degenerate)."""
    axes = [[(v, v)] if a == b else [(v, v + 1) for v in range(a, b)] for a, b in zip(lower, upper)]
    return closure(_product(axes))


def _product(axes):
    if not axes:
        yield ()
        return
    for head in axes[0]:
        for tail in _product(axes[1:]):
            yield (head,) + tail


def cubical_sphere(m: int, ambient: Optional[int] = None) -> frozenset:
    """Boundary of ``[-1, 1]^{m+1}``, a cubical ``m``-sphere, padded with zero axes."""
    ambient = m + 1 if ambient is None else ambient
    if m < 0:
        return frozenset()
    solid = box_cubes([-1] * (m + 1), [1] * (m + 1))
    shell = frozenset(q for q in solid if any(lo == hi and abs(lo) == 1 for lo, hi in q))
    pad = ((0, 0),) * (ambient - m - 1)
    return frozenset(q + pad for q in shell)
