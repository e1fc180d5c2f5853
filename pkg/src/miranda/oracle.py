"""Brute-force zero counting used to cross-check the solver.

Shares nothing with the solver beyond map evaluation: damped Newton is
started from every node of a tensor grid and the converged points are
deduplicated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from miranda.errors import DimensionError
from miranda.geometry import Cuboid
from miranda.tolerances import Tolerances

MAX_DIM = 4
MIN_GRID = 8


@dataclass(frozen=True)
class OracleResult:
    zeros: np.ndarray  # (k, n), lexicographically sorted
    residuals: np.ndarray
    grid_per_axis: int
    basins: int  # Newton runs started
    converged: int
    dedup_radius: float

    @property
    def count(self) -> int:
        return len(self.zeros)


def _newton_batch(map_, q, X, max_iter):
    X = np.array(X, dtype=float)
    F = map_.evaluate_many(X) - q
    res = np.linalg.norm(F, axis=1)
    # iterate until the residual stops falling; zero_tol only decides acceptance
    active = np.isfinite(res) & (res > 0)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Fa, J = map_.value_and_jacobian_many(X[idx])
        r = Fa - q
        try:
            step = np.linalg.solve(J, r[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.einsum("nij,nj->ni", np.linalg.pinv(J), r)
        bad = ~np.all(np.isfinite(step), axis=1)
        if bad.any():
            step[bad] = np.einsum("nij,nj->ni", np.linalg.pinv(J[bad]), r[bad])
        lam = np.ones(idx.size)
        best = res[idx].copy()
        newX = X[idx].copy()
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(20):
            if not pending.any():
                break
            k = np.nonzero(pending)[0]
            trial = X[idx[k]] - lam[k, None] * step[k]
            rt = np.linalg.norm(map_.evaluate_many(trial) - q, axis=1)
            ok = np.isfinite(rt) & (rt < best[k])
            newX[k[ok]] = trial[ok]
            best[k[ok]] = rt[ok]
            pending[k[ok]] = False
            lam[k[~ok]] *= 0.5
        stalled = pending
        X[idx] = newX
        res[idx] = best
        active[idx[stalled]] = False
    return X, res


def count_zeros_grid(map_, cuboid: Cuboid, q=None, grid_per_axis: int = 32,
                     zero_tol: float | None = None, max_iter: int = 60) -> OracleResult:
    """Zeros of ``map_ - q`` in the cuboid found by Newton from every grid node."""
    n = cuboid.dim
    if n > MAX_DIM:
        raise DimensionError(f"oracle is limited to n <= {MAX_DIM}")
    if grid_per_axis < MIN_GRID:
        raise ValueError(f"oracle grid needs at least {MIN_GRID} nodes per axis")
    if map_.n_in != n or map_.n_out != n:
        raise DimensionError("map and cuboid dimensions differ")
    q = np.zeros(n) if q is None else np.asarray(q, dtype=float)
    scale = float(np.nanmax(np.abs(map_.evaluate_many(cuboid.grid(9)))))
    tol = Tolerances(cuboid.diameter, 0.0, scale)
    zero_tol = tol.zero_tol if zero_tol is None else zero_tol
    nodes = cuboid.grid(grid_per_axis)
    X, res = _newton_batch(map_, q, nodes, max_iter)
    ok = np.isfinite(res) & (res <= zero_tol)
    ok &= np.all((X > cuboid.lo) & (X < cuboid.hi), axis=1)
    Z, R = X[ok], res[ok]
    order = np.lexsort(Z.T[::-1]) if len(Z) else np.array([], dtype=int)
    kept, kept_res = [], []
    for k in order:
        if all(np.linalg.norm(Z[k] - z) > tol.dedup_tol for z in kept):
            kept.append(Z[k])
            kept_res.append(R[k])
    zeros = np.array(kept).reshape(-1, n)
    return OracleResult(zeros, np.array(kept_res), grid_per_axis, len(nodes), int(ok.sum()), tol.dedup_tol)


def scan_1d(map_, interval: Cuboid, q: float = 0.0, cells: int = 1024) -> list:
    """Sign-change cells of f - q on a uniform partition of the interval.

    Returns a list of (left, right) brackets. A node where f equals q exactly
    triggers one deterministic jitter of the interior nodes.
    """
    if cells < 2:
        raise ValueError("need at least 2 cells")
    if interval.dim != 1:
        raise DimensionError("scan_1d works on intervals")
    a, b = interval.lower[0], interval.upper[0]
    xs = np.linspace(a, b, cells + 1)
    g = map_.evaluate_many(xs[:, None])[:, 0] - q
    if np.any(g == 0):
        k = np.arange(1, cells)
        jitter = np.sin(12.9898 * k) * 0.5 % 0.5 - 0.25  # fixed pattern from the cell index
        xs[1:-1] += jitter * (b - a) / cells
        g = map_.evaluate_many(xs[:, None])[:, 0] - q
    pos = g > 0
    return [(float(xs[k]), float(xs[k + 1])) for k in range(cells) if pos[k] != pos[k + 1]]
