"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import itertools
import math
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from miranda.cli import main
from miranda.errors import NotOutwardError, ParityViolation, RetryCapExceeded
from miranda.funcmodel import builtin, parse_map, random_polynomial_map
from miranda.geometry import Cuboid
from miranda.oracle import count_zeros_grid
from miranda.solver import solve, solve_1d, solve_continuous, solve_field
from miranda.tolerances import Tolerances
from miranda.tracer import CONNECTING, EVEN, LOOP, sign_changes, trace

I2 = Cuboid.symmetric(2)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number}] {title}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return emit


def _pair(A, B):
    if len(A) == 0:
        return 0.0
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    r, c = linear_sum_assignment(D)
    return float(D[r, c].max())


def test_1_parity_suite(verdict):
    t0 = time.perf_counter()
    regular = odd = 0
    failures = []
    for n in (1, 2, 3):
        box = Cuboid.symmetric(n)
        for seed in range(100):
            f = random_polynomial_map(n, seed)
            try:
                cert = solve(f, box, 1e-6, seed)
            except RetryCapExceeded:
                continue  # no regular certificate: outside the criterion
            except ParityViolation as err:
                failures.append((n, seed, str(err)))
                continue
            regular += 1
            if cert.parity == "odd":
                odd += 1
            else:
                failures.append((n, seed, f"{cert.count} zeros"))
    elapsed = time.perf_counter() - t0
    ok = not failures and regular == odd and elapsed < 300
    verdict(1, "parity suite", ok,
            f"{odd}/{regular} regular certificates odd over 300 maps, {elapsed:.1f}s, failures={failures[:3]}")
    assert ok


def test_2_oracle_equivalence(verdict):
    cases = [(f"identity/{n}", builtin("identity", n)) for n in (1, 2, 3, 4)]
    cases += [("cubic2d", builtin("cubic2d")), ("separable_cubic/2", builtin("separable_cubic", 2)),
              ("separable_cubic/3", builtin("separable_cubic", 3)), ("cubic_field", builtin("cubic_field"))]
    cases += [(f"random/{n}/{s}", random_polynomial_map(n, s)) for n in (1, 2, 3) for s in range(1000, 1010)]
    bad = []
    worst = 0.0
    for name, f in cases:
        n = f.n_in
        box = Cuboid.symmetric(n)
        cert = solve(f, box, 1e-6, 0)
        orc = count_zeros_grid(f, box, cert.q, {1: 32, 2: 32, 3: 16, 4: 8}[n])
        if orc.count != cert.count:
            bad.append(f"{name}: {cert.count} vs {orc.count}")
            continue
        d = _pair(cert.zero_points, orc.zeros)
        worst = max(worst, d)
        if d > 1e-6:
            bad.append(f"{name}: distance {d:.2e}")
    ok = not bad
    verdict(2, "oracle equivalence", ok, f"{len(cases)} maps, max pairing distance {worst:.2e}, mismatches={bad}")
    assert ok


def _random_poly(rng):
    deg = int(rng.integers(2, 6))
    c = [float(v) for v in rng.uniform(-1, 1, size=deg + 1)]
    text = " + ".join(f"{v!r}*x1^{k}" for k, v in enumerate(c)).replace("+ -", "- ")
    return parse_map(text, 1), c


def test_3_sign_count_parity(verdict):
    rng = np.random.default_rng(314)
    box = Cuboid.symmetric(1)
    tally = {"odd": [0, 0], "even": [0, 0]}  # [correct, total]
    disagreements = []
    while tally["odd"][1] < 50 or tally["even"][1] < 50:
        f, coeffs = _random_poly(rng)
        ends = f.evaluate_many([[-1.0], [1.0]])[:, 0]
        key = "odd" if ends[0] * ends[1] < 0 else "even"
        if tally[key][1] >= 50:
            continue
        roots = solve_1d(f, box, 0.0, check_parity=False)
        tally[key][1] += 1
        tally[key][0] += (len(roots) % 2 == 1) == (key == "odd")
        # companion-matrix reference count of simple real roots in (-1, 1)
        ref = [r.real for r in np.roots(coeffs[::-1]) if abs(r.imag) < 1e-9 and -1 < r.real < 1]
        if len(ref) != len(roots):
            disagreements.append(coeffs)
    loops_even = 0
    for _ in range(20):
        c = [float(v) for v in rng.uniform(-0.3, 0.3, size=2)]
        a, b = (float(v) for v in rng.uniform(0.1, 0.5, size=2))
        g = parse_map(f"((x1 - {c[0]!r})/{a!r})^2 + ((x2 - {c[1]!r})/{b!r})^2 - 1 ; x2".replace("- -", "+ "), 2)
        loop = trace([c[0] + a, c[1]], g.select([0]), [0.0], Cuboid.symmetric(2))
        w = [float(v) for v in rng.normal(size=2)]
        scalar = parse_map(f"{w[0]!r}*x1 + {w[1]!r}*x2".replace("+ -", "- "), 2)
        led = sign_changes(loop, scalar, float(rng.uniform(-0.3, 0.3)), check_parity=False)
        loops_even += loop.classification == LOOP and led.parity == EVEN
    ok = tally["odd"] == [50, 50] and tally["even"] == [50, 50] and loops_even == 20 and not disagreements
    verdict(3, "sign-count parity", ok,
            f"odd endpoints {tally['odd'][0]}/50, even endpoints {tally['even'][0]}/50, loops even {loops_even}/20, "
            f"root-count disagreements with companion matrix {len(disagreements)}")
    assert ok


def test_4_tracer_analytics(verdict):
    circle = parse_map("x1^2 + x2^2 - 0.25 ; x2").select([0])
    loop = trace([0.5, 0.0], circle, [0.0], I2)
    seg = trace([0.0, -1.0], builtin("identity", 2).select([0]), [0.0], I2)
    e_loop = abs(loop.arc_length - math.pi)
    e_seg = abs(seg.arc_length - 2.0)
    ok = loop.classification == LOOP and e_loop <= 1e-3 and seg.classification == CONNECTING and e_seg <= 1e-6
    verdict(4, "tracer analytics", ok,
            f"circle {loop.classification} |L-pi|={e_loop:.2e}; identity {seg.classification} |L-2|={e_seg:.2e}")
    assert ok


def test_5_known_counts(verdict):
    # zeros are preimages of a small regular value q; a tiny epsilon keeps them within 1e-6 of f^{-1}(0)
    c = solve(builtin("cubic2d"), I2, 1e-9)
    s = solve(builtin("separable_cubic", 2), I2, 1e-9)
    ref_c = np.array([[-0.5, 0.0], [0.0, 0.0], [0.5, 0.0]])
    ref_s = np.array(sorted(itertools.product([-0.5, 0.0, 0.5], repeat=2)))
    dc = _pair(c.zero_points, ref_c) if c.count == 3 else math.inf
    ds = _pair(s.zero_points, ref_s) if s.count == 9 else math.inf
    ok = dc <= 1e-6 and ds <= 1e-6
    verdict(5, "known counts", ok, f"cubic2d {c.count} zeros max err {dc:.2e}; separable_cubic {s.count} zeros "
                                   f"max err {ds:.2e}")
    assert ok


def test_6_vector_fields(verdict):
    ident = solve_field(builtin("identity", 2))
    cubic = solve_field(builtin("cubic_field"))
    witness = None
    try:
        solve_field(parse_map("-x1 ; -x2"))
    except NotOutwardError as err:
        witness = err.witness
    ok = ident.certificate.count == 1 and cubic.certificate.count == 3 and witness is not None
    verdict(6, "vector fields", ok, f"identity {ident.certificate.count} zero, cubic field "
                                    f"{cubic.certificate.count} zeros, -identity witness {witness}")
    assert ok


def test_7_continuous_pipeline(verdict):
    res = solve_continuous(builtin("nonsmooth_abs"), I2)
    bound = res.approximation_gap + res.level_gap + res.c_norm
    ok = res.residual <= 1e-3 and max(res.degree) <= 64 and res.residual <= bound and res.decomposition_consistent
    verdict(7, "continuous pipeline", ok,
            f"x*={tuple(round(v, 9) for v in res.x_star)} ||f(x*)||={res.residual:.2e} at degree {res.degree}; "
            f"{res.residual:.2e} <= {res.approximation_gap:.2e} + {res.level_gap:.2e} + {res.c_norm:.2e}")
    assert ok


def test_8_determinism(verdict, tmp_path, capsys):
    commands = [
        ["check", "--map", "cubic2d"],
        ["solve", "--map", "cubic2d", "--epsilon", "0.05", "--seed", "7"],
        ["solve", "--map", "separable_cubic", "--dim", "3"],
        ["solve", "--map", "loop2d"],
        ["trace", "--map", "loop2d", "--out-dir", str(tmp_path / "tr")],
        ["compare", "--map", "cubic2d"],
        ["field", "--map", "cubic_field"],
        ["continuous", "--map", "nonsmooth_abs"],
        ["continuous", "--map", "tanh_step"],
    ]
    differing = []
    for k, args in enumerate(commands):
        outs = []
        path = tmp_path / f"{k}.json"  # the output path is part of the config, so it is reused
        for _ in range(2):
            main(args + ["-o", str(path)])
            outs.append(path.read_bytes())
        svg = (tmp_path / "tr" / "level_set.svg").read_bytes() if args[0] == "trace" else b""
        if outs[0] != outs[1] or not outs[0]:
            differing.append(" ".join(args[:3]))
        if args[0] == "trace":
            main(args + ["-o", str(path)])
            if (tmp_path / "tr" / "level_set.svg").read_bytes() != svg:
                differing.append("trace svg")
    capsys.readouterr()
    ok = not differing
    verdict(8, "determinism", ok, f"{len(commands)} commands run twice, differing={differing}")
    assert ok


def test_9_level_set_svg(verdict, tmp_path, capsys):
    code = main(["trace", "--map", "cubic2d", "--out-dir", str(tmp_path), "-o", str(tmp_path / "r.json")])
    capsys.readouterr()
    ns = {"s": "http://www.w3.org/2000/svg"}
    root = ET.parse(tmp_path / "level_set.svg").getroot()
    comps = [e for e in root.iter() if "component" in e.get("class", "")]
    connecting = [e for e in comps if "connecting" in e.get("class")]
    starts = [(float(e.get("cx")), float(e.get("cy"))) for e in root.findall(".//s:circle", ns)]
    tol = Tolerances(I2.diameter).boundary_tol
    gaps = []
    if len(connecting) == 1:
        pts = [tuple(map(float, p.split(","))) for p in connecting[0].get("points").split()]
        for end in (pts[0], pts[-1]):
            gaps.append(min(math.dist(end, s) for s in starts))
    ok = (code == 0 and root.get("viewBox") == "-1.0 -1.0 2.0 2.0" and len(comps) == 1
          and len(connecting) == 1 and len(starts) == 2 and all(g <= tol for g in gaps))
    verdict(9, "level-set svg", ok,
            f"{len(connecting)} connecting component, {len(starts)} starts, endpoint gaps {gaps} "
            f"(boundary_tol {tol:.1e})")
    assert ok
