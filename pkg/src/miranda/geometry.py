"""Cuboid domains, their faces, and the opposite-face sign condition."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from miranda.errors import BoundaryConditionError, DimensionError, EvaluationError

DEFAULT_SAMPLES = 33
MARGIN_SAFETY = 0.9
MARGIN_FLOOR = 1e-12


class Side(str, enum.Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class Cuboid:
    """Axis-aligned box ``prod [lower[i], upper[i]]``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) == 0 or len(lo) != len(hi):
            raise DimensionError("cuboid needs matching, non-empty bound vectors")
        if not all(np.isfinite(lo + hi)):
            raise ValueError("cuboid bounds must be finite")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"need lower < upper on every axis, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, dim: int, half_width: float = 1.0) -> "Cuboid":
        return cls((-half_width,) * dim, (half_width,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def bound(self, axis: int, side: Side) -> float:
        return self.lower[axis] if side == Side.LOWER else self.upper[axis]

    def drop_axis(self, axis: int) -> "Cuboid":
        keep = [i for i in range(self.dim) if i != axis]
        return Cuboid([self.lower[i] for i in keep], [self.upper[i] for i in keep])

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def distance_to_boundary(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(min(np.min(x - self.lo), np.min(self.hi - x)))

    def grid(self, per_axis: int) -> np.ndarray:
        """Uniform tensor grid including the faces, shape (per_axis**n, n)."""
        axes = [np.linspace(a, b, per_axis) for a, b in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, self.dim)

    def interior_grid(self, per_axis: int) -> np.ndarray:
        """Cell-centred grid strictly inside the box."""
        axes = [a + (b - a) * (np.arange(per_axis) + 0.5) / per_axis
                for a, b in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, self.dim)


@dataclass(frozen=True)
class Face:
    """The slice ``x[axis] = bound`` of a cuboid (axis is 0-based)."""

    cuboid: Cuboid
    axis: int
    side: Side

    @property
    def value(self) -> float:
        return self.cuboid.bound(self.axis, self.side)

    def as_cuboid(self) -> Cuboid | None:
        """The face as an (n-1)-dimensional cuboid; ``None`` when n = 1."""
        if self.cuboid.dim == 1:
            return None
        return self.cuboid.drop_axis(self.axis)

    def points(self, samples_per_axis: int) -> np.ndarray:
        """Sample grid on the face, in full n-dimensional coordinates."""
        sub = self.as_cuboid()
        if sub is None:
            return np.array([[self.value]])
        pts = sub.grid(samples_per_axis)
        return np.insert(pts, self.axis, self.value, axis=1)

    def embed(self, y) -> np.ndarray:
        """Lift face coordinates back into the full cuboid."""
        return np.insert(np.asarray(y, dtype=float), self.axis, self.value)


def faces(cuboid: Cuboid) -> list[Face]:
    return [Face(cuboid, i, s) for i in range(cuboid.dim) for s in (Side.LOWER, Side.UPPER)]


@dataclass(frozen=True)
class Witness:
    lower_point: tuple
    upper_point: tuple
    lower_value: float
    upper_value: float


@dataclass(frozen=True)
class AxisVerdict:
    axis: int
    passed: bool
    orientation: int  # +1: negative on lower face, -1: positive on lower face, 0: failed
    min_abs_lower: float
    min_abs_upper: float
    witness: Witness | None = None


@dataclass(frozen=True)
class BoundaryReport:
    axes: tuple
    samples_per_axis: int
    scale: float = field(default=1.0)  # largest |f_i| seen on any face sample

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.axes)

    def failing_axes(self) -> list[int]:
        return [v.axis for v in self.axes if not v.passed]


def _face_values(map_, face: Face, component: int, samples: int):
    pts = face.points(samples)
    vals = map_.evaluate_many(pts)[:, component]
    if not np.all(np.isfinite(vals)):
        bad = pts[~np.isfinite(vals)][0]
        raise EvaluationError(f"non-finite value of component {component + 1} at {bad.tolist()}")
    return pts, vals


def check_miranda(map_, cuboid: Cuboid, samples_per_axis: int = DEFAULT_SAMPLES) -> BoundaryReport:
    """Sampled check that each f_i has uniform, opposite strict signs on the two faces of axis i."""
    if map_.n_in != cuboid.dim or map_.n_out != cuboid.dim:
        raise DimensionError(
            f"map is R^{map_.n_in} -> R^{map_.n_out} but the cuboid has dimension {cuboid.dim}")
    if samples_per_axis < 1:
        raise ValueError("samples_per_axis must be positive")
    verdicts = []
    scale = 0.0
    for i in range(cuboid.dim):
        p_lo, v_lo = _face_values(map_, Face(cuboid, i, Side.LOWER), i, samples_per_axis)
        p_hi, v_hi = _face_values(map_, Face(cuboid, i, Side.UPPER), i, samples_per_axis)
        scale = max(scale, float(np.max(np.abs(v_lo))), float(np.max(np.abs(v_hi))))
        m_lo, m_hi = float(np.min(np.abs(v_lo))), float(np.min(np.abs(v_hi)))
        if np.all(v_lo < 0) and np.all(v_hi > 0):
            verdicts.append(AxisVerdict(i, True, +1, m_lo, m_hi))
            continue
        if np.all(v_lo > 0) and np.all(v_hi < 0):
            verdicts.append(AxisVerdict(i, True, -1, m_lo, m_hi))
            continue
        # orientation suggested by the first lower-face sample; report the first pair breaking it
        s = -1.0 if v_lo[0] < 0 else 1.0
        bad = np.nonzero(~((s * v_lo > 0) & (s * v_hi < 0)))[0]
        j = int(bad[0]) if bad.size else 0
        w = Witness(tuple(p_lo[j].tolist()), tuple(p_hi[j].tolist()), float(v_lo[j]), float(v_hi[j]))
        verdicts.append(AxisVerdict(i, False, 0, m_lo, m_hi, w))
    return BoundaryReport(tuple(verdicts), samples_per_axis, scale)


def face_margins(map_, cuboid: Cuboid, samples_per_axis: int = DEFAULT_SAMPLES,
                 report: BoundaryReport | None = None) -> list[tuple[float, float]]:
    """Sampled minima of |f_i| on the lower and upper face of each axis i."""
    if report is None:
        report = check_miranda(map_, cuboid, samples_per_axis)
    if not report.passed:
        axes = ", ".join(str(a + 1) for a in report.failing_axes())
        raise BoundaryConditionError(f"boundary sign condition fails on axis {axes}", report)
    floor = MARGIN_FLOOR * max(1.0, report.scale)
    margins = []
    for v in report.axes:
        if min(v.min_abs_lower, v.min_abs_upper) <= floor:
            raise BoundaryConditionError(
                f"component {v.axis + 1} nearly vanishes on a face of axis {v.axis + 1}", report)
        margins.append((v.min_abs_lower, v.min_abs_upper))
    return margins
