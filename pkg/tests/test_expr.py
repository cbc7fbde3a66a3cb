import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weightsl.expr import (EvaluationError, ExpressionSyntaxError, parse_expression, unparse,
                           BinOp, Neg, Num, Var)


def ev(src, **kw):
    return float(parse_expression(src).evaluate(**kw))


def test_sin_pi_x():
    assert ev("sin(pi*x)", x=0.5) == pytest.approx(1.0, abs=1e-15)


def test_fractional_power():
    assert ev("x^0.4", x=0.0016) == pytest.approx(0.0016 ** 0.4, rel=1e-15)
    assert ev("x^0.4", x=0.0016) == pytest.approx(0.07615, abs=1e-4)


def test_commutativity_on_random_points():
    rng = np.random.default_rng(1)
    x = rng.uniform(-5, 5, 100)
    a = parse_expression("2*x+1")(x[:, None])
    b = parse_expression("1+x*2")(x[:, None])
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("src, value", [
    ("2^3^2", 2.0 ** 9),
    ("-2^2", -4.0),
    ("2^-1", 0.5),
    ("8/4/2", 1.0),
    ("10-4-3", 3.0),
    ("2*3+4*5", 26.0),
    ("(1+2)*3", 9.0),
    ("pow(2, 10)", 1024.0),
    ("abs(-3)+sqrt(16)+exp(0)+log(1)+cos(0)", 9.0),
    ("1.5e2", 150.0),
    ("--3", 3.0),
    ("+x", 7.0),
])
def test_precedence_and_associativity(src, value):
    assert ev(src, x=7.0) == pytest.approx(value, rel=1e-15)


def test_tree_shape():
    t = parse_expression("-x^2").tree
    assert t == Neg(BinOp("^", Var("x"), Num(2.0)))
    t = parse_expression("a" if False else "x-y-t").tree
    assert t == BinOp("-", BinOp("-", Var("x"), Var("y")), Var("t"))


@pytest.mark.parametrize("src, pos", [("1+", 2), ("sin(x", 5), ("2*)", 2), ("x $ 2", 2), ("(1", 2)])
def test_syntax_errors_report_position(src, pos):
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression(src)
    assert err.value.position == pos


@pytest.mark.parametrize("src", ["z+1", "foo(x)", "sin(x, y)", "pow(x)"])
def test_unknown_identifiers_and_arity(src):
    with pytest.raises(ExpressionSyntaxError):
        parse_expression(src)


@pytest.mark.parametrize("src, x", [("log(x)", -1.0), ("sqrt(x)", -0.5), ("1/(x-2)", 2.0)])
def test_evaluation_errors_name_the_point(src, x):
    with pytest.raises(EvaluationError) as err:
        parse_expression(src)(np.array([[0.0], [x]]))
    assert err.value.point["x"] == x


def test_variables_and_time():
    e = parse_expression("x + 10*y + 100*t")
    pts = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(e(pts, t=0.5), [71.0, 93.0])


def test_forward_gradient_matches_finite_differences():
    e = parse_expression("exp(-x)*sin(pi*x*y) + sqrt(1+x^2) + pow(y, 3)/(2+x)")
    pts = np.array([[0.3, 0.7], [0.9, 0.1]])
    _, g = e.value_and_gradient(pts)
    h = 1e-6
    for d in range(2):
        dp = np.zeros(2)
        dp[d] = h
        fd = (e(pts + dp) - e(pts - dp)) / (2 * h)
        np.testing.assert_allclose(g[:, d], fd, rtol=1e-8)


def test_gradient_of_power_with_variable_exponent():
    e = parse_expression("x^x")
    _, g = e.value_and_gradient(np.array([[1.5]]))
    assert g[0, 0] == pytest.approx(1.5 ** 1.5 * (math.log(1.5) + 1), rel=1e-14)


# -- round trip ---------------------------------------------------------------

_leaf = st.one_of(
    st.sampled_from(["x", "y", "t", "pi"]),
    st.floats(min_value=0, max_value=1e6, allow_nan=False).map(repr),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*/^"), children).map(lambda t: f"({t[0]}{t[1]}{t[2]})"),
        children.map(lambda c: f"-{c}"),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "abs"]), children).map(
            lambda t: f"{t[0]}({t[1]})"),
        st.tuples(children, children).map(lambda t: f"pow({t[0]}, {t[1]})"),
    )


@settings(max_examples=200, deadline=None)
@given(st.recursive(_leaf, _combine, max_leaves=12))
def test_unparse_round_trip(src):
    tree = parse_expression(src).tree
    assert parse_expression(unparse(tree)).tree == tree
