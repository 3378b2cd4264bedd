import pytest

from aeds.algebroid import (
    Algebroid,
    bracket,
    exterior_derivative,
    probe_form,
    tangent_algebroid,
    validate,
    wedge,
)
from aeds.errors import AlgebroidMismatch, NameCollision, ShapeMismatch
from aeds.expr import Chart, Const, Var, simplify
from aeds.prolong import connection_curvature, ConnectionData, prolong_connection, prolong_trivial, pullback
from aeds.sampling import SampleSpec, zero_family

from helpers import action_algebroid, forms_equal, load

SPEC = SampleSpec()


def semilinear_base():
    chart = Chart(("x", "y"))
    return Algebroid(chart, [[Const(1.0), Const(2.0)]], [[[Const(0.0)]]], ("w",))


def test_semilinear_prolongation_shape():
    P = prolong_trivial(semilinear_base(), ("u",), ("U",))
    assert P.rank == 2
    assert P.chart.coordinates == ("x", "y", "u")
    assert P.anchor[0] == [Const(1.0), Const(2.0), Const(0.0)]
    assert P.anchor[1] == [Const(0.0), Const(0.0), Const(1.0)]
    assert validate(P, SPEC).passed


def test_trivial_bracket_table():
    P = prolong_trivial(action_algebroid(), ("u", "v"))
    r = P.base_rank
    for a in range(r):
        for mu in range(2):
            br = bracket(P.basis_section(a), P.basis_section(r + mu))
            assert all(c is Const(0.0) for c in br.components)
    br = bracket(P.basis_section(r), P.basis_section(r + 1))
    assert all(c is Const(0.0) for c in br.components)
    assert bracket(P.basis_section(0), P.basis_section(1)).components[2] is Const(1.0)


def test_delta_fiber_coordinate():
    P = prolong_trivial(semilinear_base(), ("u",), ("U",))
    du = exterior_derivative(P.function(Var("u")))
    assert du.coeffs == {(1,): Const(1.0)}
    dx = exterior_derivative(P.function(Var("y")))
    assert dx.coeffs == {(0,): Const(2.0)}


def test_fiber_name_collision():
    with pytest.raises(NameCollision):
        prolong_trivial(semilinear_base(), ("x",))


def test_zero_connection_equals_trivial():
    A = action_algebroid()
    P0 = prolong_trivial(A, ("u",))
    P1 = prolong_connection(A, ("u",), [[Const(0.0), Const(0.0)]])
    assert P0.anchor == P1.anchor
    assert P0.structure == P1.structure


def test_connection_curvature_example():
    A = tangent_algebroid(Chart(("x", "y")))
    conn = ConnectionData([[Var("y") * Var("u"), Const(0.0)]])
    chart = A.chart.extend(("u",))
    K = connection_curvature(A, ("u",), conn, chart)
    # h_x(0) - h_y(y u) = -u
    assert is_same(K[0][0][1], -Var("u"))
    assert is_same(K[0][1][0], Var("u"))
    assert K[0][0][0] is Const(0.0)


def is_same(a, b):
    return zero_family("k", [simplify(a - b)], Chart(("x", "y", "u")), SPEC).passed


def test_connection_prolongation_valid():
    A = action_algebroid()
    P = prolong_connection(A, ("u",), [[Var("y") * Var("u"), Var("x") ** 2]])
    rep = validate(P, SPEC)
    assert rep.passed, rep.render()


def test_connection_shape_checked():
    with pytest.raises(ShapeMismatch):
        prolong_connection(action_algebroid(), ("u",), [[Const(0.0)]])


def _prolongations():
    A = action_algebroid()
    yield prolong_trivial(A, ("u",)), {"u": Var("x") * Var("y") + 1}
    yield prolong_connection(A, ("u",), [[Var("y") * Var("u"), Var("x")]]), {"u": Var("x") - Var("y") ** 2}
    yield load("semilinear").carrier(), {"u": load("semilinear").section()["u"]}
    yield load("radial-manifold").carrier(), load("radial-manifold").section()


def test_pullback_local_formulas():
    A = semilinear_base()
    P = prolong_trivial(A, ("u",), ("U",))
    ybar = {"u": Var("x") ** 2 * Var("y")}
    assert pullback(P, ybar, P.basis_form(0)).coeffs == {(0,): Const(1.0)}
    got = pullback(P, ybar, P.basis_form(1)).coeffs[(0,)]
    want = Const(2.0) * Var("x") * Var("y") + Const(2.0) * Var("x") ** 2
    assert is_same(got, want)


@pytest.mark.parametrize("case", range(4))
def test_pullback_commutes_with_delta(case):
    P, sec = list(_prolongations())[case]
    for q in range(min(3, P.rank)):
        w = probe_form(P, q, seed=3 + q)
        lhs = exterior_derivative(pullback(P, sec, w))
        rhs = pullback(P, sec, exterior_derivative(w))
        fam = forms_equal(lhs, rhs)
        assert fam.passed, (q, fam.max_residual)


@pytest.mark.parametrize("case", range(4))
def test_pullback_multiplicative(case):
    P, sec = list(_prolongations())[case]
    a, b = probe_form(P, 1, 1), probe_form(P, 1, 6)
    lhs = pullback(P, sec, wedge(a, b))
    rhs = wedge(pullback(P, sec, a), pullback(P, sec, b))
    assert forms_equal(lhs, rhs).passed


def test_pullback_rejects_foreign_form():
    P = prolong_trivial(semilinear_base(), ("u",))
    with pytest.raises(AlgebroidMismatch):
        pullback(P, {"u": Var("x")}, semilinear_base().basis_form(0))
