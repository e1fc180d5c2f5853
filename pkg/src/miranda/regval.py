"""Seeded proposal of small regular values and a-posteriori regularity audits.

Almost every small ``q`` is a regular value, so instead of constructing one
we draw ``q`` from a seeded generator, keep it inside the face margins, and
audit the Jacobians at every point where a system was solved. A suspect
audit is answered by drawing again with the next attempt number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from miranda.errors import BoundaryConditionError
from miranda.geometry import DEFAULT_SAMPLES, MARGIN_FLOOR, MARGIN_SAFETY, face_margins

DEFAULT_SIGMA_MIN = 1e-8
DEFAULT_RETRY_CAP = 16

REGULAR = "regular"
SUSPECT = "suspect"


@dataclass(frozen=True)
class RegularValueProposal:
    q: tuple
    epsilon: float
    margins: tuple
    seed: int
    attempt: int

    @property
    def radii(self) -> np.ndarray:
        return MARGIN_SAFETY * np.array([min(m) for m in self.margins])


def propose(map_, cuboid, epsilon: float, seed: int = 0, attempt: int = 0,
            samples_per_axis: int = DEFAULT_SAMPLES, margins=None) -> RegularValueProposal:
    """Draw q uniformly from prod [-r_i, r_i], r_i = 0.9 * min face margin, then shrink into the eps-ball."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if margins is None:
        margins = face_margins(map_, cuboid, samples_per_axis)
    margins = tuple((float(a), float(b)) for a, b in margins)
    if len(margins) != cuboid.dim:
        raise ValueError(f"need {cuboid.dim} margin pairs, got {len(margins)}")
    if min(min(m) for m in margins) <= MARGIN_FLOOR:
        raise BoundaryConditionError("a face margin is at the numeric floor; no admissible q")
    r = MARGIN_SAFETY * np.array([min(m) for m in margins])
    rng = np.random.default_rng([int(seed), int(attempt)])
    u = rng.uniform(-1.0, 1.0, size=cuboid.dim)
    q = np.clip(u * r, -np.nextafter(r, 0), np.nextafter(r, 0))
    norm = float(np.linalg.norm(q))
    if norm >= epsilon:
        q = q * (epsilon * rng.uniform(0.25, 0.75) / norm)
    return RegularValueProposal(tuple(q.tolist()), float(epsilon), margins, int(seed), int(attempt))


@dataclass(frozen=True)
class AuditPoint:
    label: str
    x: tuple
    sigma: float  # smallest singular value of the Jacobian
    jac_norm: float  # Frobenius norm of the Jacobian

    def passes(self, sigma_min: float) -> bool:
        return self.sigma > sigma_min * self.jac_norm


@dataclass(frozen=True)
class RegularityAudit:
    points: tuple
    sigma_min: float
    verdict: str
    worst: AuditPoint | None

    @property
    def regular(self) -> bool:
        return self.verdict == REGULAR


def audit(targets: Iterable, sigma_min: float = DEFAULT_SIGMA_MIN) -> RegularityAudit:
    """Check full rank of the Jacobian at every solved point.

    ``targets`` yields ``(label, map, points)``. For square maps this is
    nonsingularity; for the m x (m+1) reduced maps along curves it is
    surjectivity (the curve is a regular level set there).
    """
    pts = []
    for label, map_, points in targets:
        for x in np.atleast_2d(np.asarray(points, dtype=float)) if len(points) else []:
            _, J = map_.value_and_jacobian(x)
            s = np.linalg.svd(J, compute_uv=False)
            pts.append(AuditPoint(label, tuple(x.tolist()), float(s[-1]), float(np.linalg.norm(J))))
    worst = None
    if pts:
        worst = min(pts, key=lambda p: p.sigma / p.jac_norm if p.jac_norm > 0 else -1.0)
    ok = all(p.passes(sigma_min) for p in pts)
    return RegularityAudit(tuple(pts), float(sigma_min), REGULAR if ok else SUSPECT, worst)
