import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from miranda.errors import BoundaryConditionError
from miranda.funcmodel import builtin, parse_map
from miranda.geometry import Cuboid
from miranda.regval import REGULAR, SUSPECT, audit, propose


@given(st.integers(0, 2**32 - 1), st.integers(0, 20), st.floats(1e-9, 10.0))
def test_proposal_invariants(seed, attempt, eps):
    f = builtin("cubic2d")
    p = propose(f, Cuboid.symmetric(2), eps, seed, attempt)
    q = np.array(p.q)
    assert np.linalg.norm(q) < eps
    assert np.all(np.abs(q) < p.radii)
    assert np.allclose(p.radii, 0.9 * np.array([0.65, 1.0]))


def test_identity_example():
    for seed in range(50):
        p = propose(builtin("identity", 2), Cuboid.symmetric(2), 0.1, seed)
        assert np.linalg.norm(p.q) < 0.1
        assert max(abs(v) for v in p.q) < 0.9


def test_large_epsilon_keeps_the_margin_box():
    p = propose(builtin("identity", 3), Cuboid.symmetric(3), 100.0, seed=3)
    assert np.all(np.abs(p.q) < 0.9)


def test_determinism():
    box = Cuboid.symmetric(2)
    a = propose(builtin("cubic2d"), box, 1e-3, 11, 2)
    b = propose(builtin("cubic2d"), box, 1e-3, 11, 2)
    c = propose(builtin("cubic2d"), box, 1e-3, 11, 3)
    assert a.q == b.q
    assert a.q != c.q


def test_zero_margin_is_rejected():
    with pytest.raises(BoundaryConditionError):
        propose(builtin("identity", 2), Cuboid.symmetric(2), 0.1, margins=[(0.0, 1.0), (1.0, 1.0)])
    with pytest.raises(ValueError):
        propose(builtin("identity", 2), Cuboid.symmetric(2), 0.0)


def test_audit_verdicts():
    f = parse_map("x1^2 ; x2")
    good = audit([("a", f, [[0.5, 0.0]])])
    assert good.verdict == REGULAR and good.regular
    bad = audit([("a", f, [[0.5, 0.0], [0.0, 0.0]])])
    assert bad.verdict == SUSPECT
    assert bad.worst.x == (0.0, 0.0)


def test_audit_is_scale_invariant():
    f = parse_map("x1 ; 1e-9*x2")
    assert audit([("f", f, [[0.1, 0.1]])], 1e-8).verdict == SUSPECT
    assert audit([("f", f.scaled(1e6), [[0.1, 0.1]])], 1e-8).verdict == SUSPECT
    assert audit([("f", f, [[0.1, 0.1]])], 1e-10).verdict == REGULAR


def test_audit_handles_reduced_maps_and_empty_targets():
    fbar = builtin("cubic2d").select([0])
    aud = audit([("curve", fbar, np.array([[0.3, 0.0], [0.0, 0.0]])), ("none", fbar, np.empty((0, 2)))])
    assert aud.regular and len(aud.points) == 2
    assert audit([]).regular


@given(st.permutations([0, 1, 2]))
def test_audit_is_order_independent(perm):
    f = builtin("separable_cubic", 3)
    pts = [[0.5, 0.0, -0.5], [0.1, 0.2, 0.3], [0.0, 0.0, 0.0]]
    targets = [("t", f, [pts[i]]) for i in range(3)]
    a = audit(targets)
    b = audit([targets[i] for i in perm])
    assert a.verdict == b.verdict
    assert a.worst == b.worst
