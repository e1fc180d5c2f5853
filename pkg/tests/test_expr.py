import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from miranda.errors import EvaluationError, ParseError
from miranda.funcmodel import CENTRAL, FORWARD, BUILTIN_NAMES, builtin, evaluate, jacobian, parse_map
from miranda.funcmodel import expr as ex


def test_cubic2d_text_at_one_one():
    f = parse_map("x1^3 - 0.25*x1 + 0.1*x2 ; x2")
    assert f.evaluate([1.0, 1.0]) == pytest.approx([0.85, 1.0], abs=1e-15)


def test_three_component_identity():
    f = parse_map("x1 ; x2 ; x3")
    assert (f.n_in, f.n_out) == (3, 3)
    assert f.evaluate([0.1, -2.0, 5.0]).tolist() == [0.1, -2.0, 5.0]


def test_unknown_identifier_reports_position():
    with pytest.raises(ParseError) as info:
        parse_map("x1 + y")
    assert info.value.position == 5


@pytest.mark.parametrize("text", ["x1 +", "(x1", "x1 ^ 1.5", "x0", "sinh(x1)", "x1 ** 2", "", "x1;;x2"])
def test_syntax_errors(text):
    with pytest.raises(ParseError):
        parse_map(text)


def test_variable_beyond_declared_dimension():
    with pytest.raises(ParseError) as info:
        parse_map("x1 ; x3", dim=2)
    assert info.value.position == 5


def test_power_binds_tighter_than_unary_minus():
    f = parse_map("-x1^2")
    assert f.evaluate([3.0])[0] == -9.0
    assert parse_map("(-x1)^2").evaluate([3.0])[0] == 9.0
    with pytest.raises(ParseError):
        parse_map("x1^2^3")


def test_precedence_and_associativity():
    f = parse_map("x1 - x2 - 1 ; x1 / x2 / 2 ; 2 + 3*x1^2", dim=2)
    assert f.evaluate([8.0, 2.0]).tolist() == [5.0, 2.0, 194.0]


def test_functions():
    f = parse_map("sin(x1) ; cos(x1) ; exp(x1) ; tanh(x1) ; abs(x1)", dim=1)
    x = -0.7
    assert f.evaluate([x]).tolist() == [math.sin(x), math.cos(x), math.exp(x), math.tanh(x), abs(x)]
    assert not f.smooth
    assert parse_map("sin(x1)").smooth


def test_exponent_notation_numbers():
    assert parse_map("1.5e-3*x1 + .5").evaluate([2.0])[0] == pytest.approx(0.503)


def test_evaluate_examples():
    assert evaluate(builtin("identity", 2), [0.3, -0.7]).tolist() == [0.3, -0.7]
    assert evaluate(parse_map("x1*x2"), [2.0, 3.0]).tolist() == [6.0]


def test_division_by_zero_is_an_evaluation_error():
    f = parse_map("1/x1")
    with pytest.raises(EvaluationError):
        f.evaluate([0.0])
    with pytest.raises(EvaluationError):
        f.value_and_jacobian([0.0])
    assert np.isnan(f.evaluate_many([[0.0], [1.0]])[0, 0])
    assert f.evaluate_many([[0.0], [2.0]])[1, 0] == 0.5


def test_overflow_is_an_evaluation_error():
    with pytest.raises(EvaluationError):
        parse_map("exp(exp(x1))").evaluate([10.0])


def test_jacobian_examples():
    J = jacobian(builtin("identity", 3), [0.2, 0.4, -0.1])
    assert J.method == FORWARD
    assert np.array_equal(J.matrix, np.eye(3))
    J = jacobian(parse_map("x1^2 ; x1*x2"), [1.0, 2.0]).matrix
    assert J.tolist() == [[2.0, 0.0], [2.0, 1.0]]


@pytest.mark.parametrize("name", [n for n in BUILTIN_NAMES if n != "nonsmooth_abs"])
def test_forward_matches_central_differences_on_corpus(name, rng):
    f = builtin(name, 3) if name in ("identity", "scaled_identity", "separable_cubic") else builtin(name)
    for x in rng.uniform(-1, 1, size=(10, f.n_in)):
        jf = jacobian(f, x, FORWARD).matrix
        jc = jacobian(f, x, CENTRAL, 1e-5).matrix
        assert np.allclose(jf, jc, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(jf).max()))


def test_nonsmooth_abs_one_sided_derivative():
    f = builtin("nonsmooth_abs")
    assert f.jacobian([0.2, 0.5]).matrix.tolist() == [[1.0, 0.3], [0.0, 1.0]]
    assert f.jacobian([0.2, -0.5]).matrix.tolist() == [[1.0, -0.3], [0.0, 1.0]]


def test_vectorized_matches_scalar(rng):
    f = builtin("loop2d")
    X = rng.uniform(-1, 1, size=(50, 2))
    F, J = f.value_and_jacobian_many(X)
    for k, x in enumerate(X):
        Fx, Jx = f.value_and_jacobian(x)
        # numpy and math exp may differ in the last ulp
        assert np.allclose(F[k], Fx, rtol=1e-14, atol=1e-15)
        assert np.allclose(J[k], Jx, rtol=1e-14, atol=1e-14)


def test_select_restrict_permute_are_consistent(rng):
    f = builtin("loop2d")
    for x in rng.uniform(-1, 1, size=(10, 2)):
        assert f.select([1]).evaluate(x)[0] == f.evaluate(x)[1]
        assert f.restrict(1, 0.25).evaluate([x[0]]).tolist() == f.evaluate([x[0], 0.25]).tolist()
        p = f.permute([1, 0]).evaluate(x[::-1])
        assert p.tolist() == f.evaluate(x)[::-1].tolist()
        assert f.scaled(2.0).evaluate(x).tolist() == (2.0 * f.evaluate(x)).tolist()


# random expression trees for the round-trip property

_leaf = st.one_of(
    st.integers(1, 3).map(ex.Var),
    st.floats(-5, 5, allow_nan=False, allow_infinity=False).map(ex.Num),
)


def _extend(children):
    return st.one_of(
        children.map(ex.Neg),
        st.tuples(st.sampled_from("+-*"), children, children).map(lambda t: ex.Bin(*t)),
        st.tuples(children, st.integers(0, 3)).map(lambda t: ex.Pow(*t)),
        st.tuples(st.sampled_from(["sin", "cos", "tanh", "abs"]), children).map(lambda t: ex.Call(*t)),
    )


_trees = st.recursive(_leaf, _extend, max_leaves=12)


@given(st.lists(_trees, min_size=1, max_size=3))
def test_print_parse_round_trip_is_bit_identical(trees):
    text = " ; ".join(ex.to_text(t) for t in trees)
    f = parse_map(text, dim=3)
    g = parse_map(f.text(), dim=3)
    X = np.random.default_rng(len(text)).uniform(-1, 1, size=(100, 3))
    a, b = f.evaluate_many(X), g.evaluate_many(X)
    assert np.array_equal(a, b, equal_nan=True)


def test_round_trip_on_corpus():
    for name in BUILTIN_NAMES:
        f = builtin(name, 2) if name in ("identity", "scaled_identity", "separable_cubic") else builtin(name)
        g = parse_map(f.text(), f.n_in)
        X = np.random.default_rng(1).uniform(-1, 1, size=(100, f.n_in))
        assert np.array_equal(f.evaluate_many(X), g.evaluate_many(X))
