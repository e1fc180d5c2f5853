import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from miranda.errors import ParityViolation, TraceError
from miranda.funcmodel import builtin, parse_map, random_folded_map
from miranda.geometry import Cuboid
from miranda.tolerances import Tolerances
from miranda.tracer import (
    CONNECTING,
    EVEN,
    LOOP,
    ODD,
    SAME_FACE,
    TraceControls,
    find_boundary_starts,
    sign_changes,
    trace,
)

BOX = Cuboid.symmetric(2)
TOL = Tolerances(BOX.diameter)
CIRCLE = parse_map("x1^2 + x2^2 - 0.25 ; x2")


def _real_roots(coeffs):
    r = np.roots(coeffs)
    return sorted(float(v.real) for v in r if abs(v.imag) < 1e-12 and -1 <= v.real <= 1)


def test_identity_segment():
    f = builtin("identity", 2)
    c = trace([0.0, -1.0], f.select([0]), [0.0], BOX)
    assert c.classification == CONNECTING
    assert c.arc_length == pytest.approx(2.0, abs=1e-6)
    assert np.allclose(c.endpoints[1], [0.0, 1.0], atol=TOL.boundary_tol)
    assert [s.value for s in c.endpoint_sides] == ["lower", "upper"]


def test_circle_loop():
    c = trace([0.5, 0.0], CIRCLE.select([0]), [0.0], BOX)
    assert c.classification == LOOP
    assert c.arc_length == pytest.approx(math.pi, abs=1e-4)
    assert np.linalg.norm(c.polyline[0] - c.polyline[-1]) <= TOL.closure_tol
    assert c.max_residual() <= TOL.curve_tol


def test_small_loop_still_closes():
    g = parse_map("x1^2 + x2^2 - 0.0004 ; x2")
    c = trace([0.02, 0.0], g.select([0]), [0.0], BOX)
    assert c.classification == LOOP
    assert c.arc_length == pytest.approx(2 * math.pi * 0.02, rel=1e-4)


def test_cubic2d_boundary_starts():
    fbar = builtin("cubic2d").select([0])
    starts = find_boundary_starts(fbar, [0.0], BOX)
    assert starts.counts == (1, 1)
    # bottom edge: x^3 - 0.25x - 0.1 = 0, top edge: x^3 - 0.25x + 0.1 = 0
    lo, = _real_roots([1, 0, -0.25, -0.1])
    hi, = _real_roots([1, 0, -0.25, 0.1])
    assert starts.lower[0] == pytest.approx([lo, -1.0], abs=1e-9)
    assert starts.upper[0] == pytest.approx([hi, 1.0], abs=1e-9)
    assert lo == pytest.approx(0.637, abs=1e-3) and hi == pytest.approx(-0.637, abs=1e-3)


def test_identity_boundary_starts():
    starts = find_boundary_starts(builtin("identity", 2).select([0]), [0.0], BOX)
    assert starts.lower.tolist() == [[0.0, -1.0]] and starts.upper.tolist() == [[0.0, 1.0]]


def test_cubic2d_trace_reaches_top_start():
    fbar = builtin("cubic2d").select([0])
    starts = find_boundary_starts(fbar, [0.0], BOX)
    c = trace(starts.lower[0], fbar, [0.0], BOX)
    assert c.classification == CONNECTING
    assert np.linalg.norm(c.endpoints[1] - starts.upper[0]) <= TOL.boundary_tol
    # the curve is the graph x2 = (0.25 x1 - x1^3) / 0.1
    x1 = c.polyline[:, 0]
    assert np.allclose(c.polyline[:, 1], (0.25 * x1 - x1 ** 3) / 0.1, atol=1e-8)
    assert c.max_residual() <= TOL.curve_tol


def test_same_face_segment():
    # parabola x2 = -0.8 - x1^2 meets the lower face at x1 = +-sqrt(0.2)
    g = parse_map("x1^2 + x2 + 0.8 ; x2")
    fbar = g.select([0])
    starts = find_boundary_starts(fbar, [0.0], BOX, require_odd=False)
    assert starts.counts == (2, 0)
    c = trace(starts.lower[0], fbar, [0.0], BOX)
    assert c.classification == SAME_FACE
    assert np.allclose(sorted(e[0] for e in c.endpoints), [-math.sqrt(0.2), math.sqrt(0.2)], atol=1e-9)


def test_exit_through_wrong_face_is_an_error():
    g = parse_map("x1 - x2 ; x2")
    with pytest.raises(TraceError):
        trace([-0.5, -0.5], g.select([0]), [0.0], Cuboid([-1.0, -2.0], [1.0, 2.0]))


def test_sign_change_examples():
    f = builtin("identity", 2)
    seg = trace([0.0, -1.0], f.select([0]), [0.0], BOX)
    led = sign_changes(seg, f.select([1]), 0.0)
    assert led.parity == ODD and led.count == 1
    assert np.allclose(led.roots[0], [0.0, 0.0], atol=1e-9)

    loop = trace([0.5, 0.0], CIRCLE.select([0]), [0.0], BOX)
    led = sign_changes(loop, parse_map("x2 - 2", 2), 0.0)
    assert led.count == 0 and led.parity == EVEN
    led = sign_changes(loop, parse_map("x2", 2), 0.0)
    assert led.count == 2 and led.parity == EVEN
    xs = sorted(r[0] for r in led.roots)
    assert np.allclose(xs, [-0.5, 0.5], atol=1e-9)


def test_tangential_root_pair_is_found():
    # scalar x2 - 0.499 touches the circle top in two nearby points
    loop = trace([0.5, 0.0], CIRCLE.select([0]), [0.0], BOX)
    led = sign_changes(loop, parse_map("x2", 2), 0.4999)
    assert led.count == 2
    assert all(abs(r[1] - 0.4999) < 1e-9 for r in led.roots)


def test_parity_violation_is_raised():
    f = builtin("identity", 2)
    seg = trace([0.0, -1.0], f.select([0]), [0.0], BOX)
    with pytest.raises(ParityViolation):
        sign_changes(seg, parse_map("x2 - 2", 2), 0.0)


def test_reversal_invariance():
    fbar = builtin("cubic2d").select([0])
    last = builtin("cubic2d").select([1])
    starts = find_boundary_starts(fbar, [0.0], BOX)
    a = sign_changes(trace(starts.lower[0], fbar, [0.0], BOX), last, 0.0)
    b = sign_changes(trace(starts.upper[0], fbar, [0.0], BOX), last, 0.0)
    ra = a.roots[np.lexsort(a.roots.T[::-1])]
    rb = b.roots[np.lexsort(b.roots.T[::-1])]
    assert len(ra) == len(rb) == 3
    assert np.max(np.linalg.norm(ra - rb, axis=1)) <= TOL.dedup_tol


def test_halved_controls():
    c = TraceControls()
    assert c.halved().initial_step == c.initial_step / 2
    f = builtin("identity", 2)
    seg = trace([0.0, -1.0], f.select([0]), [0.0], BOX, c.halved())
    assert len(seg.polyline) > len(trace([0.0, -1.0], f.select([0]), [0.0], BOX).polyline)


def test_residual_and_endpoint_invariants_on_loop_map():
    f = builtin("loop2d")
    fbar = f.select([0])
    starts = find_boundary_starts(fbar, [0.0], BOX)
    c = trace(starts.lower[0], fbar, [0.0], BOX)
    assert c.max_residual() <= TOL.curve_tol
    for e in c.endpoints:
        assert min(abs(e[1] + 1), abs(e[1] - 1)) <= TOL.boundary_tol


@given(st.integers(0, 10_000), st.integers(2, 3))
def test_start_counts_are_odd(seed, n):
    f = random_folded_map(n, seed)
    box = Cuboid.symmetric(n)
    starts = find_boundary_starts(f.select(range(n - 1)), np.zeros(n - 1), box)
    lo, hi = starts.counts
    assert lo % 2 == 1 and hi % 2 == 1


def _ellipse(rng):
    c = [float(v) for v in rng.uniform(-0.3, 0.3, size=2)]
    a, b = (float(v) for v in rng.uniform(0.1, 0.5, size=2))
    text = f"((x1 - {c[0]!r})/{a!r})^2 + ((x2 - {c[1]!r})/{b!r})^2 - 1 ; x2"
    return parse_map(text.replace("- -", "+ "), 2), c, a


def test_synthetic_loops_have_even_counts():
    rng = np.random.default_rng(5)
    for _ in range(10):
        g, c, a = _ellipse(rng)
        loop = trace([c[0] + a, c[1]], g.select([0]), [0.0], BOX)
        assert loop.classification == LOOP
        w = [float(v) for v in rng.normal(size=2)]
        scalar = parse_map(f"{w[0]!r}*x1 + {w[1]!r}*x2".replace("+ -", "- "), 2)
        led = sign_changes(loop, scalar, float(rng.uniform(-0.3, 0.3)))
        assert led.parity == EVEN
