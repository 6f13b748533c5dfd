"""Named systems used by the CLI and the acceptance battery."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .conley_e import LevelFamily, sphere_family, suspend_box, suspend_field
from .continuation import HomotopyFamily
from .isolation import GridBox
from .ls_system import (
    GradientSpec,
    LSField,
    SplitModel,
    negative_gradient_field,
    separable_polynomial_b,
)

CATALOG_VERSION = "1.0"


@dataclass(frozen=True)
class System:
    name: str
    field: LSField
    U: GridBox
    T: float
    gradient: Optional[GradientSpec] = None
    homotopy: Optional[HomotopyFamily] = None
    description: str = ""

    @property
    def model(self) -> SplitModel:
        return self.field.model


def expand1d() -> System:
    F = LSField(SplitModel((-1.0,)), linear=(1.0,), name="expand1d")
    return System("expand1d", F, GridBox((-1.0,), (1.0,), 64), 2.0, description="x' = x, one unstable direction")


def contract1d() -> System:
    F = LSField(SplitModel((1.0,)), linear=(-1.0,), name="contract1d")
    return System("contract1d", F, GridBox((-1.0,), (1.0,), 64), 2.0, description="x' = -x, an attractor")


def saddle2d(subdivisions: int = 64) -> System:
    F = LSField(SplitModel((1.0, -1.0)), name="saddle2d")
    return System("saddle2d", F, GridBox((-1.0, -1.0), (1.0, 1.0), subdivisions), 3.0, description="x' = diag(1,-1) x")


def doublewell_gradient() -> GradientSpec:
    b, gb, hb = separable_polynomial_b([[0.0, 0.0, -1.0, 0.0, 0.25], []])
    return GradientSpec(SplitModel((1.0, -1.0)), b, gb, hb, support_level=2, name="doublewell")


def doublewell(subdivisions: int = 32) -> System:
    g = doublewell_gradient()
    F = negative_gradient_field(g)
    U = GridBox((-1.5, -1.5), (1.5, 1.5), subdivisions)
    return System("doublewell", F, U, 2.0, gradient=g, description="-grad of x1^4/4 - x1^2/2 - x2^2/2")


def doublewell_suspended() -> System:
    base = doublewell()
    rate = 0.5 / base.T
    F = suspend_field(base.field, rate)
    return System(
        "doublewell-suspended", F, suspend_box(base.U, 16), base.T,
        description="double well with one extra expanding coordinate",
    )


def rotation(deg: float) -> np.ndarray:
    t = np.deg2rad(deg)
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def matrix_field(model: SplitModel, A: np.ndarray, name: str = "") -> LSField:
    """``x' = A x`` written as diagonal linear part plus the off-diagonal remainder."""
    A = np.asarray(A, dtype=float)
    lin = np.diag(A).copy()
    R = A - np.diag(lin)
    return LSField(model, lambda x: np.asarray(x, dtype=float) @ R.T, linear=tuple(lin), name=name)


def rotated_saddle_homotopy(deg: float = 10.0) -> System:
    model = SplitModel((1.0, -1.0))
    A0 = np.diag([1.0, -1.0])
    Q = rotation(deg)
    A1 = Q @ A0 @ Q.T
    F0 = matrix_field(model, A0, "saddle")
    F1 = matrix_field(model, A1, f"saddle rotated {deg:g}")
    H = HomotopyFamily(
        lambda s, x: np.asarray(x, dtype=float) @ ((1 - s) * A0 + s * A1).T, F0, F1, name="rotated-saddle"
    )
    U = GridBox((-1.0, -1.0), (1.0, 1.0), 32)
    return System("rotated-saddle-homotopy", F0, U, 2.0, homotopy=H, description="saddle interpolated to a 10 degree rotation")


def isolation_breaker() -> System:
    """The saddle's rest point slides to ``(2s, 0)`` and leaves ``U`` at ``s = 1/2``."""
    model = SplitModel((1.0, -1.0))
    L = np.array(model.L)

    def ev(s, x):
        c = np.array([2.0 * s, 0.0])
        return L * (np.asarray(x, dtype=float) - c)

    def endpoint(s):
        c = np.array([2.0 * s, 0.0])
        return LSField(model, lambda x: np.broadcast_to(-L * c, np.shape(x)).copy(), name=f"saddle at {2 * s:g}")

    H = HomotopyFamily(ev, endpoint(0.0), endpoint(1.0), name="isolation-breaker")
    U = GridBox((-1.0, -1.0), (1.0, 1.0), 32)
    return System("isolation-breaker", H.F0, U, 2.0, homotopy=H, description="rest point pushed through the boundary")


def offcenter_saddle() -> System:
    """Saddle field on a box that misses the rest point; the invariant set is empty."""
    F = LSField(SplitModel((1.0, -1.0)), name="saddle2d")
    U = GridBox((0.25, -0.5), (1.25, 0.5), 32)
    return System("saddle2d-offcenter", F, U, 3.0, description="saddle on a box without invariant points")


def sphere_families(count: int = 3) -> Dict[int, LevelFamily]:
    return {p: sphere_family(p, count) for p in (0, 1, 2)}


def bump_perturbation(
    F: LSField, amplitude: float = 1e-3, center: Optional[Sequence[float]] = None, width: float = 0.5,
    direction: Optional[Sequence[float]] = None,
) -> LSField:
    """``F + amplitude * exp(-|x - c|^2 / (2 width^2)) * direction``."""
    d = F.dim
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    v = np.ones(d) / np.sqrt(d) if direction is None else np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    K = F.K

    def K2(x):
        x = np.asarray(x, dtype=float)
        w = np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * width**2))
        return K(x) + amplitude * w[..., None] * v

    return LSField(F.model, K2, F.support_level, F.lipschitz_hint, F.linear, f"{F.name}+bump")


def tilt_gradient(g: GradientSpec, eps: float, seed: int = 0) -> GradientSpec:
    """Add a small linear tilt ``eps <a, x>`` to break degenerate critical points."""
    a = np.random.default_rng(seed).normal(size=g.dim)
    a /= np.linalg.norm(a)
    b0, gb0 = g.b, g.grad_b
    b = lambda x: b0(x) + eps * np.asarray(x, dtype=float) @ a
    gb = None if gb0 is None else (lambda x: gb0(x) + eps * a)
    return GradientSpec(g.model, b, gb, g.hess_b, g.support_level, g.metric, f"{g.name}+tilt")


BUILDERS: Dict[str, Callable[[], object]] = {
    "expand1d": expand1d,
    "contract1d": contract1d,
    "saddle2d": saddle2d,
    "saddle2d-offcenter": offcenter_saddle,
    "doublewell": doublewell,
    "doublewell-suspended": doublewell_suspended,
    "rotated-saddle-homotopy": rotated_saddle_homotopy,
    "isolation-breaker": isolation_breaker,
    "sphere-families": sphere_families,
}


def names():
    return sorted(BUILDERS)


def get(name: str):
    try:
        return BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown catalog system {name!r}; known: {', '.join(names())}") from None
