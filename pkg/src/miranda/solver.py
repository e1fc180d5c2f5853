"""Recursive zero finding with odd-parity certificates.

Dimension 1 is a sign scan. In dimension n the first n-1 components define
a curve family ``fbar = qbar``; its endpoints on the two faces of axis n are
the zeros of the restricted (n-1)-dimensional problems, found recursively.
Every component is traced and the zeros of ``f_n - q_n`` along it are
collected: odd on each arc joining the two faces, even on every other
component, so the total is odd.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from miranda.errors import (
    BoundaryConditionError,
    DimensionError,
    EvaluationError,
    NonSmoothMapError,
    NotOutwardError,
    ParityViolation,
    RetryCapExceeded,
    SmoothingError,
    TraceError,
)
from miranda.funcmodel.bernstein import SmoothingRequest, bernstein_smooth, dense_samples_per_axis
from miranda.geometry import (
    DEFAULT_SAMPLES,
    BoundaryReport,
    Cuboid,
    Face,
    Side,
    check_miranda,
    face_margins,
    faces,
)
from miranda.regval import (
    DEFAULT_RETRY_CAP,
    DEFAULT_SIGMA_MIN,
    RegularityAudit,
    audit,
    propose,
)
from miranda.tolerances import Tolerances
from miranda.tracer import (
    CONNECTING,
    EVEN,
    LOOP,
    ODD,
    BoundaryStarts,
    TraceControls,
    _dedup,
    find_boundary_starts,
    find_interior_components,
    sign_changes,
    trace,
)

DEFAULT_EPSILON = 1e-6
BOUNDARY_TRACED_ONLY = "boundary_traced_only"
GRID_SUPPLEMENTED = "grid_supplemented"
_SUPPLEMENT_GRID = {2: 33, 3: 13}


@dataclass(frozen=True)
class SolveOptions:
    samples_per_axis: int = DEFAULT_SAMPLES
    retry_cap: int = DEFAULT_RETRY_CAP
    sigma_min: float = DEFAULT_SIGMA_MIN
    grid_supplement: bool | None = None  # None: on for n <= 3
    supplement_per_axis: int | None = None
    face_multistart_per_axis: int = 9
    axis_order: tuple | None = None
    controls: TraceControls = field(default_factory=TraceControls)
    scan_cells: int = 1024
    newton_max_iter: int = 50

    def supplement_enabled(self, n: int) -> bool:
        return n <= 3 if self.grid_supplement is None else bool(self.grid_supplement)

    def supplement_grid(self, n: int) -> int:
        if self.supplement_per_axis is not None:
            return self.supplement_per_axis
        return _SUPPLEMENT_GRID.get(n, 7)


# --------------------------------------------------------------------------
# Newton polish


def newton_polish(f, x0, q, tol: float, max_iter: int = 50):
    """Damped Newton on f(x) = q; step halving whenever the residual fails to drop.

    Returns (x, residual norm, converged).
    """
    x = np.asarray(x0, dtype=float).copy()
    try:
        F, J = f.value_and_jacobian(x)
    except EvaluationError:
        return x, math.inf, False
    r = F - q
    res = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if res <= tol:
            # one more full step is nearly free at quadratic convergence
            try:
                xn = x - np.linalg.solve(J, r)
                resn = float(np.linalg.norm(f.evaluate(xn) - q))
                if resn < res:
                    x, res = xn, resn
            except (np.linalg.LinAlgError, EvaluationError):
                pass
            return x, res, True
        try:
            dx = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam >= 1e-4:
            xn = x - lam * dx
            try:
                Fn, Jn = f.value_and_jacobian(xn)
            except EvaluationError:
                lam *= 0.5
                continue
            rn = Fn - q
            resn = float(np.linalg.norm(rn))
            if resn < res:
                break
            lam *= 0.5
        else:
            break
        x, J, r, res = xn, Jn, rn, resn
    return x, res, res <= tol


# --------------------------------------------------------------------------
# dimension one


def _sign(v):
    return np.where(v >= 0, 1, -1)


def solve_1d(map_, interval: Cuboid, q: float = 0.0, cells: int = 1024,
             tol: Tolerances | None = None, check_parity: bool = True) -> np.ndarray:
    """All roots of f(x) = q on an interval: sign scan, bisection, Newton polish.

    Cells whose end slopes disagree without a sign change are probed at the
    slope root so that close root pairs are not lost.
    """
    if interval.dim != 1 or map_.n_in != 1 or map_.n_out != 1:
        raise DimensionError("solve_1d needs a scalar map on an interval")
    a, b = interval.lower[0], interval.upper[0]
    tol = tol or Tolerances(interval.diameter)
    ga = float(map_.evaluate([a])[0]) - q
    gb = float(map_.evaluate([b])[0]) - q
    xs = np.linspace(a, b, cells + 1)
    F, J = map_.value_and_jacobian_many(xs[:, None])
    g = F[:, 0] - q
    if np.any(g[1:-1] == 0):
        # one deterministic shift of the interior nodes, away from exact hits
        k = np.arange(1, cells)
        xs[1:-1] += (b - a) / cells * 0.25 * (((k * 0.6180339887498949) % 1.0) - 0.5)
        F, J = map_.value_and_jacobian_many(xs[:, None])
        g = F[:, 0] - q
    if not np.all(np.isfinite(g)):
        raise EvaluationError("non-finite value during the sign scan")
    d = J[:, 0, 0]
    s = _sign(g)

    def scalar(x):
        return float(map_.evaluate([x])[0]) - q

    def slope(x):
        return float(map_.value_and_jacobian([x])[1][0, 0])

    def bisect(fun, lo, hi):
        flo = fun(lo) >= 0
        while hi - lo > tol.root_tol:
            mid = 0.5 * (lo + hi)
            if (fun(mid) >= 0) == flo:
                lo = mid
            else:
                hi = mid
        return lo, hi

    brackets = []
    for k in range(cells):
        lo, hi = xs[k], xs[k + 1]
        if s[k] != s[k + 1]:
            brackets.append((lo, hi))
        elif d[k] * d[k + 1] < 0 and min(abs(g[k]), abs(g[k + 1])) <= 2 * (hi - lo) * max(abs(d[k]), abs(d[k + 1])):
            e_lo, e_hi = bisect(slope, lo, hi)
            xe = 0.5 * (e_lo + e_hi)
            if _sign(scalar(xe)) != s[k]:
                brackets.append((lo, xe))
                brackets.append((xe, hi))
    roots = []
    for lo, hi in brackets:
        blo, bhi = bisect(scalar, lo, hi)
        x = 0.5 * (blo + bhi)
        # Newton polish kept only while it stays in the bracket and improves
        for _ in range(4):
            v, dv = scalar(x), slope(x)
            if v == 0 or dv == 0:
                break
            xn = x - v / dv
            if not (lo <= xn <= hi) or abs(scalar(xn)) >= abs(v):
                break
            x = xn
        roots.append(x)
    roots = np.array(sorted(roots))
    if check_parity:
        expect_odd = ga * gb < 0
        if (len(roots) % 2 == 1) != expect_odd:
            raise ParityViolation(
                f"{len(roots)} roots on [{a}, {b}] but endpoint values {ga:.3g}, {gb:.3g}")
    return roots


# --------------------------------------------------------------------------
# one level of the recursion


@dataclass(eq=False)
class LevelResult:
    dim: int
    q: np.ndarray
    zeros: np.ndarray
    residuals: np.ndarray
    components: list = field(default_factory=list)
    ledgers: list = field(default_factory=list)
    starts: BoundaryStarts | None = None
    audit_targets: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def _merge_stats(into: dict, other: dict) -> None:
    for k, v in other.items():
        into[k] = into.get(k, 0) + v


def _scale_of(map_, cuboid, samples=9) -> float:
    F = map_.evaluate_many(cuboid.grid(samples))
    F = F[np.all(np.isfinite(F), axis=1)]
    return float(np.max(np.abs(F))) if F.size else 1.0


def solve_level(f, cuboid: Cuboid, q, options: SolveOptions, scale: float | None = None) -> LevelResult:
    """Zeros of ``f - q`` for a fixed q (no proposal, no audit verdict)."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = cuboid.dim
    if scale is None:
        scale = _scale_of(f, cuboid)
    tol = Tolerances(cuboid.diameter, float(np.linalg.norm(q[:-1])), scale, options.sigma_min)
    stats = {"levels": 1}
    if n == 1:
        roots = solve_1d(f, cuboid, float(q[0]), options.scan_cells, tol)
        Z = roots.reshape(-1, 1)
        res = np.abs(f.evaluate_many(Z)[:, 0] - q[0]) if len(Z) else np.empty(0)
        return LevelResult(1, q, Z, res, audit_targets=[("zeros/dim1", f, Z)], stats=stats)

    rm = f.select(range(n - 1))
    last = f.select([n - 1])
    qbar = q[:-1]

    def face_solver(g, box, qq):
        sub = solve_level(g, box, qq, options, scale)
        return sub.zeros, sub

    starts = find_boundary_starts(rm, qbar, cuboid, face_solver, tol, options.face_multistart_per_axis)
    for r in starts.face_results:
        if r is not None:
            _merge_stats(stats, r.stats)
    match_radius = tol.dedup_tol
    consumed = {Side.LOWER: set(), Side.UPPER: set()}
    components = []
    for side, p in starts.all():
        k = starts.match(side, p, match_radius)
        if k in consumed[side]:
            continue
        consumed[side].add(k)
        comp = trace(p, rm, qbar, cuboid, options.controls, tol)
        end_side = comp.endpoint_sides[1]
        j = starts.match(end_side, comp.endpoints[1], match_radius)
        if j is None:
            starts.add(end_side, comp.endpoints[1])
            j = starts.match(end_side, comp.endpoints[1], match_radius)
        elif j in consumed[end_side]:
            raise ParityViolation("two traced components end at the same boundary start")
        consumed[end_side].add(j)
        components.append(comp)
    if options.supplement_enabled(n):
        extra = find_interior_components(rm, qbar, cuboid, components,
                                         options.supplement_grid(n), options.controls, tol)
        for comp in extra:
            for side, p in zip(comp.endpoint_sides, comp.endpoints):
                if starts.match(side, p, match_radius) is None:
                    starts.add(side, p)
        components.extend(extra)
    lo_count, hi_count = starts.counts
    if lo_count % 2 == 0 or hi_count % 2 == 0:
        raise ParityViolation(f"boundary start counts {lo_count}/{hi_count} on axis {n}; both must be odd")
    components.sort(key=lambda c: c.sort_key())
    ledgers = []
    for i, comp in enumerate(components):
        try:
            led = sign_changes(comp, last, float(q[-1]), tol)
        except ParityViolation:
            # under-resolved polyline: retrace once at half the step
            start = comp.polyline[0] if comp.classification != LOOP else comp.polyline[0]
            comp = trace(start, rm, qbar, cuboid, options.controls.halved(), tol)
            components[i] = comp
            led = sign_changes(comp, last, float(q[-1]), tol)
        ledgers.append(led)
    connecting = sum(1 for c in components if c.classification == CONNECTING)
    if connecting % 2 == 0:
        raise ParityViolation(f"{connecting} connecting components on axis {n}; expected an odd number")

    zeros, residuals = [], []
    curve_roots = []
    for led in ledgers:
        for r in led.roots:
            curve_roots.append(r)
            x, res, ok = newton_polish(f, r, q, tol.zero_tol, options.newton_max_iter)
            if not ok or np.linalg.norm(x - r) > tol.dedup_tol:
                raise TraceError(f"Newton polish failed from curve root {r.tolist()}")
            if cuboid.distance_to_boundary(x) <= tol.boundary_tol:
                raise TraceError(f"zero {x.tolist()} lies on the boundary")
            zeros.append(x)
            residuals.append(res)
    Z = np.array(zeros).reshape(-1, n)
    R = np.array(residuals)
    if len(Z):
        kept = _dedup(Z, tol.dedup_tol)
        if len(kept) != len(Z):
            raise ParityViolation("distinct curve roots polished to the same zero")
        order = np.lexsort(Z.T[::-1])
        Z, R = Z[order], R[order]
    if len(Z) % 2 == 0:
        raise ParityViolation(f"{len(Z)} zeros in dimension {n}; expected an odd count")

    _merge_stats(stats, {
        "components": len(components),
        "trace_steps": sum(c.steps for c in components),
        "discovered_starts": starts.discovered,
    })
    targets = [(f"zeros/dim{n}", f, Z), (f"curve_roots/dim{n}", rm, np.array(curve_roots).reshape(-1, n))]
    for side in (Side.LOWER, Side.UPPER):
        face = Face(cuboid, n - 1, side)
        pts = starts.lower if side == Side.LOWER else starts.upper
        targets.append((f"face_starts/dim{n}/{side.value}", rm.restrict(n - 1, face.value),
                        np.delete(pts, n - 1, axis=1)))
    for r in starts.face_results:
        if r is not None:
            targets.extend(r.audit_targets)
    return LevelResult(n, q, Z, R, components, ledgers, starts, targets, stats)


def solve_face(g, box, qbar, options: SolveOptions | None = None):
    """Default face solver for :func:`miranda.tracer.find_boundary_starts`."""
    sub = solve_level(g, box, qbar, options or SolveOptions())
    return sub.zeros, sub


# --------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class ZeroRecord:
    x: tuple
    residual: float


@dataclass(frozen=True)
class ComponentRecord:
    index: int
    classification: str
    endpoints: tuple
    arc_length: float
    vertices: int
    roots: int
    parity: str


@dataclass(frozen=True, eq=False)
class ParityCertificate:
    q: tuple
    epsilon: float
    seed: int
    attempt: int
    zeros: tuple
    components: tuple
    face_counts: tuple
    parity: str
    audit: RegularityAudit
    tolerances: dict
    completeness: str
    boundary: BoundaryReport
    stats: dict
    axis_order: tuple | None = None
    level: LevelResult | None = field(default=None, repr=False)

    @property
    def zero_points(self) -> np.ndarray:
        return np.array([z.x for z in self.zeros]).reshape(-1, len(self.q))

    @property
    def count(self) -> int:
        return len(self.zeros)


def _unpermute_points(P: np.ndarray, order) -> np.ndarray:
    if order is None or len(P) == 0:
        return P
    out = np.empty_like(P)
    out[:, list(order)] = P
    return out


def _certificate(level: LevelResult, prop, aud, tol: Tolerances, report, completeness, order):
    q = np.array(prop.q)
    if order is not None:
        q_orig = np.empty_like(q)
        q_orig[list(order)] = q
        q = q_orig
    Z = _unpermute_points(level.zeros, order)
    zeros = tuple(ZeroRecord(tuple(z.tolist()), float(r)) for z, r in zip(Z, level.residuals))
    comps = []
    for i, led in enumerate(level.ledgers):
        c = led.component
        ends = tuple(tuple(_unpermute_points(np.atleast_2d(e), order)[0].tolist()) for e in c.endpoints)
        comps.append(ComponentRecord(i, c.classification, ends, float(c.arc_length),
                                     len(c.polyline), led.count, led.parity))
    counts = level.starts.counts if level.starts is not None else (1, 1)
    parity = ODD if len(zeros) % 2 else EVEN
    return ParityCertificate(tuple(q.tolist()), prop.epsilon, prop.seed, prop.attempt, zeros,
                             tuple(comps), counts, parity, aud, tol.snapshot(), completeness,
                             report, dict(sorted(level.stats.items())),
                             None if order is None else tuple(order), level)


def solve(map_, cuboid: Cuboid, epsilon: float = DEFAULT_EPSILON, seed: int = 0,
          options: SolveOptions | None = None) -> ParityCertificate:
    """Locate f^{-1}(q) for a small audited-regular q and certify its odd cardinality."""
    options = options or SolveOptions()
    n = cuboid.dim
    if map_.n_in != n or map_.n_out != n:
        raise DimensionError(f"map is R^{map_.n_in} -> R^{map_.n_out}, cuboid has dimension {n}")
    if not map_.smooth:
        raise NonSmoothMapError("map contains abs(); route it through solve_continuous")
    order = options.axis_order
    f, box = map_, cuboid
    if order is not None:
        order = tuple(int(i) for i in order)
        f = map_.permute(order)
        box = Cuboid([cuboid.lower[i] for i in order], [cuboid.upper[i] for i in order])
    report = check_miranda(f, box, options.samples_per_axis)
    if not report.passed:
        axes = ", ".join(str(a + 1) for a in report.failing_axes())
        raise BoundaryConditionError(f"boundary sign condition fails on axis {axes}", report)
    margins = face_margins(f, box, report=report)
    completeness = GRID_SUPPLEMENTED if options.supplement_enabled(n) and n >= 2 else BOUNDARY_TRACED_ONLY
    last_error = None
    last_cert = None
    for attempt in range(options.retry_cap):
        prop = propose(f, box, epsilon, seed, attempt, margins=margins)
        try:
            level = solve_level(f, box, prop.q, options, report.scale)
        except (ParityViolation, TraceError) as err:
            last_error = err
            continue
        aud = audit(level.audit_targets, options.sigma_min)
        tol = Tolerances(box.diameter, float(np.linalg.norm(prop.q[:-1])), report.scale, options.sigma_min)
        cert = _certificate(level, prop, aud, tol, report, completeness, order)
        if aud.regular:
            if cert.parity != ODD:
                raise ParityViolation("even zero count under a regular audit")
            return cert
        last_cert = cert
        last_error = None
    if isinstance(last_error, ParityViolation):
        raise ParityViolation(f"parity violation persisted over {options.retry_cap} attempts: {last_error}")
    reason = "regularity audit stayed suspect" if last_error is None else f"last failure: {last_error}"
    raise RetryCapExceeded(f"no certified q after {options.retry_cap} attempts ({reason})", last_cert)


# --------------------------------------------------------------------------
# vector fields


@dataclass(frozen=True)
class FaceOutwardness:
    axis: int
    side: Side
    outward: bool
    witness: tuple | None = None  # (point, value of v_axis)


@dataclass(frozen=True, eq=False)
class FieldReport:
    faces: tuple
    boundary: BoundaryReport | None
    certificate: ParityCertificate | None

    @property
    def outward(self) -> bool:
        return all(f.outward for f in self.faces)


def check_outward(field_, cuboid: Cuboid, samples_per_axis: int = DEFAULT_SAMPLES) -> tuple:
    """Per-face check of v_i < 0 on x_i = a_i and v_i > 0 on x_i = b_i."""
    verdicts = []
    for face in faces(cuboid):
        pts = face.points(samples_per_axis)
        v = field_.evaluate_many(pts)[:, face.axis]
        if not np.all(np.isfinite(v)):
            raise EvaluationError(f"non-finite field value on the {face.side.value} face of axis {face.axis + 1}")
        sign = -1.0 if face.side == Side.LOWER else 1.0
        bad = np.nonzero(~(sign * v > 0))[0]
        if bad.size:
            k = int(bad[0])
            verdicts.append(FaceOutwardness(face.axis, face.side, False, (tuple(pts[k].tolist()), float(v[k]))))
        else:
            verdicts.append(FaceOutwardness(face.axis, face.side, True))
    return tuple(verdicts)


def solve_field(field_, cuboid: Cuboid | None = None, epsilon: float = DEFAULT_EPSILON,
                seed: int = 0, options: SolveOptions | None = None) -> FieldReport:
    """Zeros of a vector field that points outwards on the box boundary."""
    options = options or SolveOptions()
    cuboid = cuboid or Cuboid.symmetric(field_.n_in)
    if field_.n_in != cuboid.dim or field_.n_out != cuboid.dim:
        raise DimensionError("field dimension must equal the cuboid dimension")
    verdicts = check_outward(field_, cuboid, options.samples_per_axis)
    if not all(v.outward for v in verdicts):
        first = next(v for v in verdicts if not v.outward)
        report = FieldReport(verdicts, None, None)
        raise NotOutwardError(
            f"field is not outward on the {first.side.value} face of axis {first.axis + 1}: "
            f"v_{first.axis + 1}{first.witness[0]} = {first.witness[1]:.6g}",
            first.witness, report)
    boundary = check_miranda(field_, cuboid, options.samples_per_axis)
    cert = solve(field_, cuboid, epsilon, seed, options)
    return FieldReport(verdicts, boundary, cert)


# --------------------------------------------------------------------------
# continuous maps


@dataclass(frozen=True, eq=False)
class ContinuousSolveResult:
    eta_estimate: float  # min ||f|| over the dense scan grid
    degree: tuple
    x_star: tuple
    residual: float  # ||f(x*)||
    approximation_gap: float  # ||g(x*) - f(x*)||
    level_gap: float  # ||g(x*) - c||
    c_norm: float  # ||c||
    sup_error: float
    zeros: tuple  # refined zeros of f, one per approximant zero that refined successfully
    certificate: ParityCertificate

    @property
    def bound(self) -> float:
        return self.approximation_gap + self.level_gap + self.c_norm

    @property
    def decomposition_consistent(self) -> bool:
        return self.residual <= self.bound


DEFAULT_DEGREES = (8, 16, 32, 64)


def solve_continuous(map_, cuboid: Cuboid, degrees=DEFAULT_DEGREES, epsilon: float = DEFAULT_EPSILON,
                     seed: int = 0, options: SolveOptions | None = None, eta: float = math.inf,
                     residual_target: float = 1e-3) -> ContinuousSolveResult:
    """Approximate zero of a continuous map via smooth Bernstein approximants.

    For each degree in the schedule the approximant g is built; if it keeps
    the face sign condition, ``solve`` certifies zeros of g - c, which are
    then refined by damped Newton directly on f (one-sided slopes at kinks).
    Stops once ||f(x*)|| <= residual_target; otherwise returns the best seen.
    """
    options = options or SolveOptions()
    report = check_miranda(map_, cuboid, options.samples_per_axis)
    if not report.passed:
        axes = ", ".join(str(a + 1) for a in report.failing_axes())
        raise BoundaryConditionError(f"boundary sign condition fails on axis {axes}", report)
    grid = cuboid.grid(dense_samples_per_axis(cuboid.dim))
    Fgrid = map_.evaluate_many(grid)
    eta_est = float(np.nanmin(np.linalg.norm(Fgrid, axis=1)))
    zero = np.zeros(map_.n_out)
    tol = Tolerances(cuboid.diameter, 0.0, report.scale)
    best = None
    failures = []
    for deg in degrees:
        try:
            g = bernstein_smooth(SmoothingRequest(map_, deg, eta), cuboid, check_samples=options.samples_per_axis)
            cert = solve(g, cuboid, epsilon, seed, options)
        except (SmoothingError, BoundaryConditionError, ParityViolation, RetryCapExceeded, TraceError) as err:
            failures.append(f"degree {deg}: {err}")
            continue
        c = np.array(cert.q)
        refined = []
        cands = []
        for z in cert.zero_points:
            cands.append(z)
            x, _, ok = newton_polish(map_, z, zero, tol.zero_tol, options.newton_max_iter)
            if ok and cuboid.contains(x):
                refined.append(x)
                cands.append(x)
        res = [float(np.linalg.norm(map_.evaluate(x))) for x in cands]
        k = int(np.argmin(res))
        xs = cands[k]
        gx, fx = g.evaluate(xs), map_.evaluate(xs)
        refined = _dedup(np.array(refined).reshape(-1, cuboid.dim), tol.dedup_tol)
        result = ContinuousSolveResult(
            eta_est, tuple(g.degrees), tuple(xs.tolist()), res[k],
            float(np.linalg.norm(gx - fx)), float(np.linalg.norm(gx - c)), float(np.linalg.norm(c)),
            float(g.sup_error), tuple(tuple(r.tolist()) for r in refined), cert)
        if best is None or result.residual < best.residual:
            best = result
        if best.residual <= residual_target:
            break
    if best is None:
        raise SmoothingError("degree schedule exhausted: " + "; ".join(failures))
    return best
