"""Scale-aware numerical tolerances shared by the tracer, solver and oracle."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class Tolerances:
    diameter: float
    q_norm: float = 0.0
    scale: float = 1.0  # magnitude of f on the boundary samples
    sigma_min: float = 1e-8

    @property
    def curve_tol(self) -> float:
        return 1e-9 * (1.0 + self.q_norm)

    @property
    def boundary_tol(self) -> float:
        return 1e-8 * self.diameter

    @property
    def dedup_tol(self) -> float:
        return 1e-6 * self.diameter

    @property
    def root_tol(self) -> float:
        return 1e-10 * self.diameter

    @property
    def closure_tol(self) -> float:
        return 1e-6 * self.diameter

    @property
    def zero_tol(self) -> float:
        return 1e-9 * (1.0 + self.scale)

    def snapshot(self) -> dict:
        out = asdict(self)
        for name in ("curve_tol", "boundary_tol", "dedup_tol", "root_tol", "closure_tol", "zero_tol"):
            out[name] = getattr(self, name)
        return out
