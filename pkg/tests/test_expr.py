import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aeds.errors import (
    EvalError,
    ExprSyntaxError,
    MissingCoordinate,
    NameCollision,
    NonIntegerExponent,
    UnknownVariable,
)
from aeds.expr import (
    Add,
    Chart,
    Const,
    Mul,
    Var,
    differentiate,
    evaluate,
    parse,
    simplify,
    to_str,
)
from aeds.sampling import SampleSpec, is_zero, sample_points

XY = ("x", "y")


def test_parse_variable():
    assert parse("r", ("t", "r")) is Var("r")


def test_parse_radial_rhs_structure():
    e = parse("x + y*(x^2+y^2)", XY)
    assert isinstance(e, Add)
    assert e.args[0] is Var("x")
    assert isinstance(e.args[1], Mul)
    assert evaluate(e, {"x": 1.0, "y": 2.0}) == 1 + 2 * 5


def test_syntax_error_position():
    with pytest.raises(ExprSyntaxError) as err:
        parse("2*", ("x",))
    assert err.value.position == 2


@pytest.mark.parametrize("src", ["", "(x", "x)", "x +* y", "sin x", "x^", "3 4"])
def test_malformed(src):
    with pytest.raises(ExprSyntaxError):
        parse(src, XY)


def test_unknown_variable():
    with pytest.raises(UnknownVariable):
        parse("x + z", XY)


@pytest.mark.parametrize("src", ["x^1.5", "x^y"])
def test_non_integer_exponent(src):
    with pytest.raises((NonIntegerExponent, ExprSyntaxError)):
        parse(src, XY)


def test_negative_integer_exponent():
    e = parse("x^-2", XY)
    assert evaluate(e, {"x": 2.0, "y": 0.0}) == 0.25


def test_precedence():
    assert evaluate(parse("-2^2", XY), {}) == -4
    assert evaluate(parse("(2^3)^2", XY), {}) == 64
    with pytest.raises(ExprSyntaxError):
        parse("2^3^2", XY)
    assert evaluate(parse("1 - 2 - 3", XY), {}) == -4
    assert evaluate(parse("8 / 2 / 2", XY), {}) == 2
    assert evaluate(parse("2 * 3 + 4", XY), {}) == 10


def test_differentiate_examples():
    d = differentiate(parse("x^2*y", XY), "x")
    assert is_zero(d - parse("2*x*y", XY))[0]
    assert differentiate(parse("u", ("x", "y", "u")), "u") is Const(1.0)
    d = differentiate(parse("0.5*w1^2", ("w1",)), "w1")
    assert d is Var("w1")


def test_differentiate_unknown():
    with pytest.raises(UnknownVariable):
        differentiate(Var("x"), "z", XY)
    with pytest.raises(UnknownVariable):
        Chart(XY).differentiate(Var("x"), "t")
    assert Chart(XY).differentiate(Var("x"), "y") is Const(0.0)


def test_evaluate_examples():
    assert evaluate(parse("x+y", XY), {"x": 1, "y": 2}) == 3
    assert evaluate(parse("2*exp(t)", ("t",)), {"t": 0}) == 2
    assert evaluate(parse("0.5*2^2*(1-exp(2*t))", ("t",)), {"t": 0}) == 0


@pytest.mark.parametrize("src,pt", [
    ("1/x", {"x": 0.0}),
    ("log(x)", {"x": 0.0}),
    ("log(x)", {"x": -1.0}),
    ("sqrt(x)", {"x": -1.0}),
    ("x^-1", {"x": 0.0}),
])
def test_evaluate_domain_errors(src, pt):
    with pytest.raises(EvalError) as err:
        evaluate(parse(src, ("x",)), pt)
    assert err.value.node is not None


def test_missing_coordinate():
    with pytest.raises(MissingCoordinate):
        evaluate(parse("x+y", XY), {"x": 1.0})


def test_simplify_examples():
    x, w = Var("x"), Var("w")
    assert simplify(x - x) is Const(0.0)
    assert simplify(parse("0*exp(t) + 1*w", ("t", "w"))) is w
    assert simplify(parse("(x+y)*1 + 0", XY)) is simplify(parse("x+y", XY))
    assert simplify(-(-x)) is x
    assert simplify(parse("0/x", XY)) is Const(0.0)
    assert simplify(parse("(x^2)^3", XY)) is simplify(parse("x^6", XY))


def test_is_zero_examples():
    assert is_zero(Const(0.0)) == (True, 0.0)
    ok, res = is_zero(parse("sin(x)^2 + cos(x)^2 - 1", ("x",)))
    assert ok and res < 1e-15
    chart = Chart(XY)
    spec = SampleSpec()
    ok, res = is_zero(parse("x*y", XY), spec, chart)
    pts = sample_points(chart, spec)
    assert not ok
    assert res == pytest.approx(max(abs(p[0] * p[1]) for p in pts))


def test_is_zero_relative_scale():
    # cancellation of large terms passes under the term-scaled tolerance
    e = parse("(1e8 + x) - 1e8 - x", ("x",))
    assert is_zero(e)[0]


def test_chart_rules():
    with pytest.raises(ValueError):
        Chart(("x", "x"))
    with pytest.raises(ValueError):
        Chart(("x",), {"x": (1.0, 1.0)})
    c = Chart(("x",))
    with pytest.raises(NameCollision):
        c.extend(("x",))
    assert c.extend(("u",)).coordinates == ("x", "u")


# ---------------------------------------------------------------- properties

NAMES = ("x", "y", "z")
leaf = st.one_of(
    st.sampled_from([Var(n) for n in NAMES]),
    st.integers(-3, 3).map(lambda k: Const(float(k))),
    st.sampled_from([Const(0.5), Const(1.25)]),
)


def _combine(children):
    unary = st.tuples(st.sampled_from(["neg", "sin", "cos", "exp"]), children)
    binary = st.tuples(st.sampled_from(["+", "-", "*"]), children, children)
    powered = st.tuples(st.just("^"), children, st.integers(0, 3))
    return st.one_of(unary, binary, powered).map(_build)


def _build(t):
    op = t[0]
    if op == "neg":
        return -t[1]
    if op in ("sin", "cos", "exp"):
        return parse(f"{op}({to_str(t[1])})", NAMES)
    if op == "+":
        return t[1] + t[2]
    if op == "-":
        return t[1] - t[2]
    if op == "*":
        return t[1] * t[2]
    return t[1] ** t[2]


exprs = st.recursive(leaf, _combine, max_leaves=8)
points = st.fixed_dictionaries({n: st.floats(-1, 1) for n in NAMES})


def _safe_eval(e, p):
    try:
        return evaluate(e, p)
    except EvalError:
        return None


@given(exprs)
def test_simplify_idempotent(e):
    s = simplify(e)
    assert simplify(s) is s


@given(exprs)
def test_print_parse_round_trip(e):
    assert simplify(parse(to_str(e), NAMES)) is simplify(e)


@given(exprs, points)
def test_simplify_preserves_value(e, p):
    a, b = _safe_eval(e, p), _safe_eval(simplify(e), p)
    if a is None or b is None:
        return
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9 * (1 + abs(a)))


@given(exprs, st.sampled_from(NAMES))
def test_derivative_matches_central_difference(e, v):
    d = differentiate(e, v)
    pts = sample_points(Chart(NAMES), SampleSpec(seed=11, count=64))
    h = 1e-5
    for row in pts:
        p = dict(zip(NAMES, row))
        hi, lo = dict(p), dict(p)
        hi[v] += h
        lo[v] -= h
        fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
        exact = evaluate(d, p)
        assert abs(fd - exact) <= 1e-5 * (1 + abs(exact))


@given(exprs)
def test_derivative_is_simplified(e):
    d = differentiate(e, "x")
    assert simplify(d) is d


def test_hash_consing_gives_structural_equality():
    assert parse("x*y + 1", XY) is parse("x*y+1", XY)
    assert math.isclose(evaluate(parse("sqrt(4)", XY), {}), 2.0)
