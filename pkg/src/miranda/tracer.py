"""Pseudo-arclength continuation of 1-dimensional level sets ``F(x) = qbar``.

``F`` maps an n-dimensional cuboid to R^(n-1). Its regular level sets are
disjoint unions of closed arcs, with endpoints on the two faces of the last
axis, and closed loops. Components are traced with a tangent predictor and a
Newton corrector constrained to the hyperplane orthogonal to the tangent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from miranda.errors import EvaluationError, ParityViolation, TraceError
from miranda.geometry import Cuboid, Face, Side
from miranda.tolerances import Tolerances

CONNECTING = "connecting"
SAME_FACE = "same_face"
LOOP = "loop"

ODD = "odd"
EVEN = "even"


@dataclass(frozen=True)
class TraceControls:
    initial_step: float = 1e-2  # fraction of the box diameter; also the largest step
    min_step: float = 1e-8  # fraction of the box diameter
    grow_after: int = 4
    max_steps: int = 1_000_000
    max_turn: float = 0.2  # radians between consecutive tangents
    corrector_iters: int = 8
    closure_min_steps: int = 10

    def halved(self) -> "TraceControls":
        return replace(self, initial_step=self.initial_step / 2)


@dataclass(frozen=True, eq=False)
class CurveComponent:
    polyline: np.ndarray  # (K, n) vertices on the level set
    tangents: np.ndarray  # (K, n) unit tangents, consistently oriented
    classification: str
    endpoints: tuple  # () for loops, else (first, last) vertex
    endpoint_sides: tuple  # Side of each endpoint
    arc_length: float
    reduced_map: object = field(repr=False)
    qbar: np.ndarray = field(repr=False)
    cuboid: Cuboid = field(repr=False)
    steps: int = 0

    @property
    def closed(self) -> bool:
        return self.classification == LOOP

    def sort_key(self) -> tuple:
        """Lexicographically smallest vertex; orders components deterministically."""
        idx = np.lexsort(self.polyline.T[::-1])
        return tuple(self.polyline[idx[0]].tolist())

    def reversed(self) -> "CurveComponent":
        return replace(self, polyline=self.polyline[::-1].copy(), tangents=-self.tangents[::-1],
                       endpoints=self.endpoints[::-1], endpoint_sides=self.endpoint_sides[::-1])

    def max_residual(self) -> float:
        F = self.reduced_map.evaluate_many(self.polyline)
        return float(np.max(np.linalg.norm(F - self.qbar, axis=1)))


@dataclass(frozen=True, eq=False)
class SignChangeLedger:
    component: CurveComponent
    roots: np.ndarray  # (k, n)
    parity: str

    @property
    def count(self) -> int:
        return len(self.roots)


# --------------------------------------------------------------------------
# small numerical kernels


def tangent(J: np.ndarray) -> np.ndarray:
    """Unit vector spanning the kernel of an m x (m+1) Jacobian."""
    return np.linalg.svd(J)[2][-1]


def _oriented(t: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return -t if float(t @ ref) < 0 else t


def _canonical(t: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(t) > 1e-12))
    return -t if t[k] < 0 else t


def _correct(rm, qbar, y, normal, tol, iters, max_move=np.inf):
    """Newton on (F(z) = qbar, normal . (z - y) = 0) starting at y.

    Returns (z, F, J) or None when it fails to converge.
    """
    z = y.copy()
    for it in range(iters + 1):
        try:
            F, J = rm.value_and_jacobian(z)
        except EvaluationError:
            return None
        r = F - qbar
        if np.linalg.norm(r) <= tol:
            return z, F, J
        if it == iters:
            return None
        A = np.vstack([J, normal])
        b = np.append(r, normal @ (z - y))
        try:
            dz = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            return None
        z = z - dz
        if not np.all(np.isfinite(z)) or np.linalg.norm(z - y) > max_move:
            return None
    return None


def _land(rm, qbar, x, z, axis, value, tol, iters=12):
    """Point of the level set on the face ``x[axis] = value`` between x and z."""
    denom = z[axis] - x[axis]
    s = 0.5 if denom == 0 else min(max((value - x[axis]) / denom, 0.0), 1.0)
    w = x + s * (z - x)
    w[axis] = value
    e = np.zeros_like(x)
    e[axis] = 1.0
    chord = float(np.linalg.norm(z - x))
    for _ in range(iters):
        try:
            F, J = rm.value_and_jacobian(w)
        except EvaluationError:
            return None
        r = F - qbar
        if np.linalg.norm(r) <= tol:
            break
        try:
            dw = np.linalg.solve(np.vstack([J, e]), np.append(r, 0.0))
        except np.linalg.LinAlgError:
            return None
        w = w - dw
        w[axis] = value
    else:
        return None
    if np.linalg.norm(w - x) > 2.0 * chord + tol:
        return None
    return w, J


def _step_arc(x, z, t0, t1) -> float:
    # chord corrected by the tangent turn: arc/chord = (th/2)/sin(th/2) ~ 1 + th^2/24
    c = float(np.linalg.norm(z - x))
    th = math.acos(min(1.0, max(-1.0, float(t0 @ t1))))
    return c * (1.0 + th * th / 24.0)


def _side_of(x, cuboid: Cuboid, axis: int, tol: float):
    if abs(x[axis] - cuboid.lower[axis]) <= tol:
        return Side.LOWER
    if abs(x[axis] - cuboid.upper[axis]) <= tol:
        return Side.UPPER
    return None


@dataclass
class _March:
    pts: list
    tans: list
    arc: float
    end: str  # "face" | "closed"
    side: Side | None
    steps: int


def _march(rm, qbar, cuboid, x, t, controls, tol, allow_closure) -> _March:
    n = cuboid.dim
    axis = n - 1
    lo, hi = cuboid.lo, cuboid.hi
    diam = cuboid.diameter
    h0 = controls.initial_step * diam
    hmin = controls.min_step * diam
    cos_turn = math.cos(controls.max_turn)
    btol = tol.boundary_tol
    ctol = tol.curve_tol
    x0, t0 = x.copy(), t.copy()
    pts, tans = [x.copy()], [t.copy()]
    arc = 0.0
    h = h0
    streak = 0
    accepted = 0
    steps = 0
    others = [i for i in range(n) if i != axis]
    while True:
        steps += 1
        if steps > controls.max_steps:
            raise TraceError(f"step cap {controls.max_steps} exceeded")
        y = x + h * t
        res = _correct(rm, qbar, y, t, ctol, controls.corrector_iters, max_move=0.5 * h)
        ok = res is not None
        if ok:
            z, _, Jz = res
            tz = _oriented(tangent(Jz), t)
            ok = float(tz @ t) >= cos_turn
        if not ok:
            h *= 0.5
            streak = 0
            if h < hmin:
                raise TraceError(f"corrector failed at the minimum step near {x.tolist()}")
            continue
        for i in others:
            if z[i] < lo[i] - btol or z[i] > hi[i] + btol:
                raise TraceError(
                    f"level set leaves through a face of axis {i + 1} near {z.tolist()}")
        if z[axis] <= lo[axis] + btol or z[axis] >= hi[axis] - btol:
            side = Side.LOWER if z[axis] <= lo[axis] + btol else Side.UPPER
            landed = _land(rm, qbar, x, z, axis, cuboid.bound(axis, side), ctol)
            if landed is None:
                h *= 0.5
                streak = 0
                if h < hmin:
                    raise TraceError(f"could not land on the face near {z.tolist()}")
                continue
            w, Jw = landed
            tw = _oriented(tangent(Jw), t)
            arc += _step_arc(x, w, t, tw)
            pts.append(w)
            tans.append(tw)
            return _March(pts, tans, arc, "face", side, steps)
        if allow_closure and accepted >= controls.closure_min_steps and float(t @ t0) > 0:
            d = x0 - x
            s = float(t @ d)
            chord = float(np.linalg.norm(z - x))
            perp = float(np.linalg.norm(d - s * t))
            if 0.0 < s <= chord and perp <= 0.1 * chord:
                closing = _correct(rm, qbar, x + s * t, t, ctol, controls.corrector_iters)
                if closing is not None and np.linalg.norm(closing[0] - x0) < tol.closure_tol:
                    w = closing[0]
                    tw = _oriented(tangent(closing[2]), t)
                    arc += _step_arc(x, w, t, tw)
                    pts.append(w)
                    tans.append(tw)
                    return _March(pts, tans, arc, "closed", None, steps)
        arc += _step_arc(x, z, t, tz)
        pts.append(z)
        tans.append(tz)
        x, t = z, tz
        accepted += 1
        streak += 1
        if streak >= controls.grow_after:
            h = min(2.0 * h, h0)
            streak = 0


def _project_point(rm, qbar, x, tol, iters=30):
    """Minimum-norm Gauss-Newton projection of a single point onto F = qbar."""
    for _ in range(iters):
        F, J = rm.value_and_jacobian(x)
        r = F - qbar
        if np.linalg.norm(r) <= tol:
            return x
        x = x - np.linalg.pinv(J) @ r
    return None


def trace(start, reduced_map, qbar, cuboid: Cuboid, controls: TraceControls | None = None,
          tol: Tolerances | None = None) -> CurveComponent:
    """Trace the component of ``reduced_map = qbar`` through ``start``.

    A start on a face of the last axis is followed into the box until the
    curve reaches that axis' faces again. An interior start is followed until
    the curve closes up (loop) or, failing that, in both directions to the faces.
    """
    controls = controls or TraceControls()
    qbar = np.atleast_1d(np.asarray(qbar, dtype=float))
    n = cuboid.dim
    if reduced_map.n_in != n or reduced_map.n_out != n - 1 or qbar.shape != (n - 1,):
        raise ValueError("trace needs F: R^n -> R^(n-1) and qbar in R^(n-1)")
    tol = tol or Tolerances(cuboid.diameter, float(np.linalg.norm(qbar)))
    axis = n - 1
    x = np.asarray(start, dtype=float).copy()
    F, J = reduced_map.value_and_jacobian(x)
    if np.linalg.norm(F - qbar) > tol.curve_tol:
        side = _side_of(x, cuboid, axis, tol.boundary_tol)
        x = _project_point(reduced_map, qbar, x, tol.curve_tol)
        if x is None:
            raise TraceError("start point is not on the level set and could not be projected")
        if side is not None:
            x[axis] = cuboid.bound(axis, side)
        F, J = reduced_map.value_and_jacobian(x)
    t = tangent(J)
    side0 = _side_of(x, cuboid, axis, tol.boundary_tol)
    if side0 is not None:
        x[axis] = cuboid.bound(axis, side0)
        if abs(t[axis]) < 1e-10:
            raise TraceError(f"level set is tangent to the face at {x.tolist()}")
        inward = 1.0 if side0 == Side.LOWER else -1.0
        t = t if t[axis] * inward > 0 else -t
        m = _march(reduced_map, qbar, cuboid, x, t, controls, tol, allow_closure=False)
        cls = CONNECTING if m.side != side0 else SAME_FACE
        return CurveComponent(np.array(m.pts), np.array(m.tans), cls, (m.pts[0], m.pts[-1]),
                              (side0, m.side), m.arc, reduced_map, qbar, cuboid, m.steps)
    t = _canonical(t)
    fwd = _march(reduced_map, qbar, cuboid, x, t, controls, tol, allow_closure=True)
    if fwd.end == "closed":
        return CurveComponent(np.array(fwd.pts), np.array(fwd.tans), LOOP, (), (), fwd.arc,
                              reduced_map, qbar, cuboid, fwd.steps)
    back = _march(reduced_map, qbar, cuboid, x, -t, controls, tol, allow_closure=False)
    pts = back.pts[::-1] + fwd.pts[1:]
    tans = [-v for v in back.tans[::-1]] + fwd.tans[1:]
    cls = CONNECTING if back.side != fwd.side else SAME_FACE
    return CurveComponent(np.array(pts), np.array(tans), cls, (pts[0], pts[-1]),
                          (back.side, fwd.side), back.arc + fwd.arc, reduced_map, qbar, cuboid,
                          back.steps + fwd.steps)


# --------------------------------------------------------------------------
# boundary starts


def batch_project(map_, q, P, tol, iters=40, max_move=None):
    """Vectorized minimum-norm Newton projection of the rows of P onto map_ = q.

    Returns (points, converged mask). Works for square and underdetermined maps.
    """
    P = np.array(P, dtype=float)
    done = np.zeros(len(P), dtype=bool)
    alive = np.ones(len(P), dtype=bool)
    for _ in range(iters):
        idx = np.nonzero(alive & ~done)[0]
        if idx.size == 0:
            break
        F, J = map_.value_and_jacobian_many(P[idx])
        finite = np.all(np.isfinite(F), axis=1)
        alive[idx[~finite]] = False
        idx, F, J = idx[finite], F[finite], J[finite]
        r = F - q
        conv = np.linalg.norm(r, axis=1) <= tol
        done[idx[conv]] = True
        idx, r, J = idx[~conv], r[~conv], J[~conv]
        if idx.size == 0:
            break
        step = np.einsum("nij,nj->ni", np.linalg.pinv(J), r)
        if max_move is not None:
            norms = np.linalg.norm(step, axis=1, keepdims=True)
            step = step * np.minimum(1.0, max_move / np.maximum(norms, 1e-300))
        P[idx] -= step
    return P, done & alive


def _dedup(points: np.ndarray, radius: float) -> np.ndarray:
    if len(points) == 0:
        return points
    order = np.lexsort(points.T[::-1])
    kept = []
    for k in order:
        p = points[k]
        if all(np.linalg.norm(p - q) > radius for q in kept):
            kept.append(p)
    return np.array(kept).reshape(-1, points.shape[1])


@dataclass(eq=False)
class BoundaryStarts:
    lower: np.ndarray  # (k, n) full coordinates on x_n = a_n
    upper: np.ndarray  # (k, n) full coordinates on x_n = b_n
    face_results: tuple = (None, None)
    discovered: int = 0  # starts found only by landing traces / multistart

    @property
    def counts(self) -> tuple:
        return len(self.lower), len(self.upper)

    def all(self):
        return [(Side.LOWER, p) for p in self.lower] + [(Side.UPPER, p) for p in self.upper]

    def add(self, side: Side, point) -> None:
        point = np.asarray(point, dtype=float)[None, :]
        if side == Side.LOWER:
            self.lower = np.vstack([self.lower, point])
        else:
            self.upper = np.vstack([self.upper, point])
        self.discovered += 1

    def match(self, side: Side, point, radius: float) -> int | None:
        pts = self.lower if side == Side.LOWER else self.upper
        if len(pts) == 0:
            return None
        d = np.linalg.norm(pts - point, axis=1)
        k = int(np.argmin(d))
        return k if d[k] <= radius else None


def find_boundary_starts(reduced_map, qbar, cuboid: Cuboid, face_solver=None,
                         tol: Tolerances | None = None, multistart_per_axis: int = 9,
                         require_odd: bool = True) -> BoundaryStarts:
    """Solutions of ``reduced_map = qbar`` on the two faces of the last axis.

    ``face_solver(g, face_cuboid, qbar)`` solves the square restricted system
    on a face and returns ``(points, result)``; by default the recursive
    solver is used. Its output is merged with a multi-start Newton pass from
    a grid on the face.
    """
    if face_solver is None:
        from miranda.solver import solve_face
        face_solver = solve_face
    qbar = np.atleast_1d(np.asarray(qbar, dtype=float))
    n = cuboid.dim
    axis = n - 1
    tol = tol or Tolerances(cuboid.diameter, float(np.linalg.norm(qbar)))
    found = {}
    results = []
    discovered = 0
    for side in (Side.LOWER, Side.UPPER):
        face = Face(cuboid, axis, side)
        box = face.as_cuboid()
        g = reduced_map.restrict(axis, face.value)
        pts, result = face_solver(g, box, qbar)
        results.append(result)
        pts = np.asarray(pts, dtype=float).reshape(-1, n - 1)
        seeds = box.interior_grid(multistart_per_axis)
        P, ok = batch_project(g, qbar, seeds, tol.curve_tol, max_move=0.25 * box.diameter)
        extra = P[ok]
        inside = np.all((extra > box.lo + tol.boundary_tol) & (extra < box.hi - tol.boundary_tol), axis=1)
        merged = _dedup(np.vstack([pts, extra[inside]]), tol.dedup_tol)
        discovered += len(merged) - len(_dedup(pts, tol.dedup_tol))
        found[side] = np.array([face.embed(p) for p in merged]).reshape(-1, n)
        if require_odd and len(merged) % 2 == 0:
            raise ParityViolation(
                f"{len(merged)} solutions on the {side.value} face of axis {n}; expected an odd count")
    return BoundaryStarts(found[Side.LOWER], found[Side.UPPER], tuple(results), discovered)


# --------------------------------------------------------------------------
# interior components


def _dist_to_polyline(P: np.ndarray, poly: np.ndarray, chunk: int = 512) -> np.ndarray:
    A, B = poly[:-1], poly[1:]
    if len(A) == 0:
        return np.linalg.norm(P - poly[0], axis=1)
    D = B - A
    L2 = np.maximum(np.einsum("ij,ij->i", D, D), 1e-300)
    out = np.empty(len(P))
    for s in range(0, len(P), chunk):
        Q = P[s:s + chunk, None, :] - A[None, :, :]
        tpar = np.clip(np.einsum("pij,ij->pi", Q, D) / L2, 0.0, 1.0)
        R = Q - tpar[..., None] * D[None, :, :]
        out[s:s + chunk] = np.min(np.linalg.norm(R, axis=2), axis=1)
    return out


def find_interior_components(reduced_map, qbar, cuboid: Cuboid, known, per_axis: int,
                             controls: TraceControls | None = None, tol: Tolerances | None = None,
                             max_new: int = 256) -> list:
    """Components not reachable from boundary starts, seeded from an interior grid.

    Grid nodes are projected onto the level set; every projected point not
    lying on an already traced component seeds a new trace.
    """
    controls = controls or TraceControls()
    qbar = np.atleast_1d(np.asarray(qbar, dtype=float))
    tol = tol or Tolerances(cuboid.diameter, float(np.linalg.norm(qbar)))
    P, ok = batch_project(reduced_map, qbar, cuboid.interior_grid(per_axis), tol.curve_tol,
                          max_move=0.1 * cuboid.diameter)
    P = P[ok]
    inside = np.all((P > cuboid.lo + 1e3 * tol.boundary_tol) & (P < cuboid.hi - 1e3 * tol.boundary_tol), axis=1)
    P = P[inside]
    cover = 0.05 * controls.initial_step * cuboid.diameter
    covered = np.zeros(len(P), dtype=bool)
    for comp in known:
        if len(P):
            covered |= _dist_to_polyline(P, comp.polyline) <= cover
    new = []
    for k in range(len(P)):
        if covered[k]:
            continue
        comp = trace(P[k], reduced_map, qbar, cuboid, controls, tol)
        rest = ~covered
        covered[rest] |= _dist_to_polyline(P[rest], comp.polyline) <= cover
        covered[k] = True
        if comp.classification != LOOP and any(
                _same_segment(comp, other, tol.dedup_tol) for other in list(known) + new):
            continue
        new.append(comp)
        if len(new) >= max_new:
            raise TraceError(f"more than {max_new} interior components; refine or disable the grid pass")
    return new


def _same_segment(a: CurveComponent, b: CurveComponent, radius: float) -> bool:
    if b.classification == LOOP or len(a.endpoints) != 2 or len(b.endpoints) != 2:
        return False
    a0, a1 = a.endpoints
    b0, b1 = b.endpoints
    d = lambda p, q: float(np.linalg.norm(np.asarray(p) - np.asarray(q)))  # noqa: E731
    return (d(a0, b0) <= radius and d(a1, b1) <= radius) or (d(a0, b1) <= radius and d(a1, b0) <= radius)


# --------------------------------------------------------------------------
# sign changes of the last coordinate along a component


def _chord_point(comp, a, b, tau, tol):
    va, vb = comp.polyline[a], comp.polyline[b]
    d = vb - va
    L = float(np.linalg.norm(d))
    y = va + tau * d
    if L == 0:
        return y, comp.tangents[a]
    u = d / L
    res = _correct(comp.reduced_map, comp.qbar, y, u, tol.curve_tol, 12)
    if res is None:
        return y, u
    z, _, J = res
    return z, _oriented(tangent(J), u)


def _bisect(fun, lo, hi, width, tol_len):
    """Bisection on [lo, hi] in the chord parameter; fun returns a bool side flag."""
    side_lo = fun(lo)
    while (hi - lo) * width > tol_len:
        mid = 0.5 * (lo + hi)
        if fun(mid) == side_lo:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16:
            break
    return 0.5 * (lo + hi)


def sign_changes(component: CurveComponent, scalar_map, q_last: float,
                 tol: Tolerances | None = None, check_parity: bool = True) -> SignChangeLedger:
    """Roots of ``scalar_map - q_last`` along the component.

    Sign scan over polyline vertices; a sign-free chord whose end slopes
    disagree is probed at its extremum so close root pairs are not lost.
    Each root is refined by bisection on the curve (chord points projected
    back onto the level set).
    """
    comp = component
    tol = tol or Tolerances(comp.cuboid.diameter, float(np.linalg.norm(comp.qbar)))
    V, T = comp.polyline, comp.tangents
    K = len(V) - 1 if comp.closed else len(V)
    pairs = [(k, k + 1) for k in range(len(V) - 1)]
    if comp.closed:
        pairs = [(k, (k + 1) % K) for k in range(K)]

    def g_and_slope(x, t):
        F, J = scalar_map.value_and_jacobian(x)
        return float(F[0] - q_last), float(J[0] @ t)

    vals = [g_and_slope(V[k], T[k]) for k in range(K)]
    roots = []
    for a, b in pairs:
        (ga, da), (gb, db) = vals[a], vals[b]
        width = float(np.linalg.norm(V[b] - V[a]))

        def positive(tau, a=a, b=b):
            x, _ = _chord_point(comp, a, b, tau, tol)
            return scalar_map.evaluate(x)[0] - q_last >= 0

        def rising(tau, a=a, b=b):
            x, t = _chord_point(comp, a, b, tau, tol)
            return float(scalar_map.value_and_jacobian(x)[1][0] @ t) >= 0

        if (ga >= 0) != (gb >= 0):
            tau = _bisect(positive, 0.0, 1.0, width, tol.root_tol)
            roots.append(_chord_point(comp, a, b, tau, tol)[0])
        elif da * db < 0 and min(abs(ga), abs(gb)) <= 2.0 * width * max(abs(da), abs(db)):
            ext = _bisect(rising, 0.0, 1.0, width, tol.root_tol)
            xe, _ = _chord_point(comp, a, b, ext, tol)
            if (scalar_map.evaluate(xe)[0] - q_last >= 0) != (ga >= 0):
                t1 = _bisect(positive, 0.0, ext, width, tol.root_tol)
                t2 = _bisect(positive, ext, 1.0, width, tol.root_tol)
                roots.append(_chord_point(comp, a, b, t1, tol)[0])
                roots.append(_chord_point(comp, a, b, t2, tol)[0])
    n = comp.cuboid.dim
    roots = np.array(roots).reshape(-1, n)
    parity = ODD if len(roots) % 2 else EVEN
    if check_parity:
        expected = ODD if comp.classification == CONNECTING else EVEN
        if parity != expected:
            raise ParityViolation(
                f"{len(roots)} sign changes on a {comp.classification} component; expected {expected}")
    return SignChangeLedger(comp, roots, parity)
