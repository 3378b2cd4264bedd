from itertools import combinations

import pytest

from aeds.algebroid import (
    Form,
    bracket,
    calculus_check,
    contract,
    eval_form,
    exterior_derivative,
    interior_product,
    intrinsic_differential,
    lie_derivative,
    probe_form,
    probe_section,
    tangent_algebroid,
    validate,
    wedge,
    Algebroid,
)
from aeds.errors import AlgebroidMismatch, ArityMismatch, DegreeZero
from aeds.expr import Chart, Const, Var, simplify
from aeds.sampling import SampleSpec, is_zero, sample_points, zero_family

from helpers import BUNDLED, action_algebroid, carrier, forms_equal, intrinsic_lie, so3

SPEC = SampleSpec()


def plane():
    return tangent_algebroid(Chart(("x", "y")))


def test_tangent_plane_valid():
    rep = validate(plane(), SPEC)
    assert rep.passed
    assert all(f.max_residual == 0 for f in rep.families)


def test_semilinear_algebroid_valid():
    chart = Chart(("x", "y"))
    A = Algebroid(chart, [[Const(1.0), Const(2.0)]], [[[Const(0.0)]]], ("w",))
    assert validate(A, SPEC).passed


def test_antisymmetry_failure_flagged():
    chart = Chart(("x",))
    zero = [[["0"] * 2 for _ in range(2)] for _ in range(2)]
    zero[0][1][0] = "1"
    zero[1][0][0] = "1"
    L = [[[chart.parse(v) for v in t] for t in s] for s in zero]
    A = Algebroid(chart, [[Const(0.0)], [Const(0.0)]], L)
    rep = validate(A, SPEC)
    assert not rep.passed
    assert not rep.family("antisymmetry").passed
    assert rep.family("antisymmetry").max_residual == 2.0


def test_anchor_compatibility_failure_flagged():
    A = action_algebroid()
    L = [[list(t) for t in s] for s in A.structure]
    L[0][1][2] = Const(0.0)
    L[1][0][2] = Const(0.0)
    B = Algebroid(A.chart, A.anchor, L)
    rep = validate(B, SPEC)
    assert not rep.family("anchor_compatibility").passed
    assert rep.family("antisymmetry").passed


def test_action_and_ip_algebroids_valid():
    assert validate(action_algebroid(), SPEC).passed
    ip = so3(("w1*w2", "w3^2 - t", "w1*w3"))
    assert validate(ip.algebroid, SPEC).passed


def test_wedge_examples():
    A = plane()
    e1, e2 = A.basis_form(0), A.basis_form(1)
    w = wedge(e1, e2)
    assert w.coeffs == {(0, 1): Const(1.0)}
    assert wedge(e2, e1).coeffs == {(0, 1): Const(-1.0)}
    om = Form(A, 1, {(0,): Var("x"), (1,): Var("y") ** 2})
    assert wedge(om, om).coeffs == {}


def test_wedge_semilinear_generator():
    chart = Chart(("x", "y", "u"))
    A = tangent_algebroid(chart, ("w", "v", "U"))  # stand-in rank-3 frame
    ew = A.basis_form(0)
    theta = Form(A, 1, {(2,): Const(1.0), (0,): -Var("u")})
    assert wedge(ew, theta).coeffs == {(0, 2): Const(1.0)}


def test_graded_commutativity():
    A = action_algebroid()
    a, b = probe_form(A, 1, 1), probe_form(A, 2, 4)
    assert forms_equal(wedge(a, b), wedge(b, a)).passed
    c = probe_form(A, 1, 7)
    assert forms_equal(wedge(a, c), -wedge(c, a)).passed


def test_bracket_basis_and_antisymmetry():
    A = action_algebroid()
    e = [A.basis_section(i) for i in range(3)]
    assert bracket(e[0], e[1]).components == [Const(0.0), Const(0.0), Const(1.0)]
    s = probe_section(A, 1, 2) + probe_section(A, 0, 1)
    assert all(c is Const(0.0) for c in bracket(s, s).components)


def test_bracket_anchor_is_commutator():
    A = action_algebroid()
    s1 = probe_section(A, 0, 2) + probe_section(A, 1, 1)
    s2 = probe_section(A, 2, 3) + probe_section(A, 1, 5)
    br = bracket(s1, s2)
    res = []
    for c in A.chart.coordinates:
        x = Var(c)
        lhs = A.apply_anchor(br, x)
        rhs = A.apply_anchor(s1, A.apply_anchor(s2, x)) - A.apply_anchor(s2, A.apply_anchor(s1, x))
        res.append(simplify(lhs - rhs))
    assert zero_family("commutator", res, A.chart, SPEC).passed


def test_bracket_leibniz():
    A = action_algebroid()
    s1, s2 = probe_section(A, 0, 1), probe_section(A, 1, 2)
    f = Var("x") * Var("y") + 1
    lhs = bracket(s1, s2.scale(f))
    rhs = s2.scale(A.apply_anchor(s1, f)) + bracket(s1, s2).scale(f)
    res = [a - b for a, b in zip(lhs.components, rhs.components)]
    assert zero_family("leibniz", res, A.chart, SPEC).passed


def test_delta_of_abelian_basis_is_zero():
    A = plane()
    assert exterior_derivative(A.basis_form(0)).coeffs == {}


def test_delta_t_on_ip():
    ip = so3(("w1*w2", "w3^2", "t"))
    A = ip.algebroid
    dt = exterior_derivative(A.function(Var("t")))
    assert dt.coeffs == {(0,): Const(1.0)}


@pytest.mark.parametrize("name", BUNDLED + ["action"])
def test_calculus_on_algebroids(name):
    A = action_algebroid() if name == "action" else carrier(name)
    rep = calculus_check(A, SPEC)
    assert rep.passed, rep.render()
    assert rep.max_residual < 1e-9


def test_delta_squared_generic():
    A = so3(("w1*w2", "w3^2 - t", "w1*w3")).algebroid
    for p in range(3):
        w = probe_form(A, p, seed=11 + p)
        dd = exterior_derivative(exterior_derivative(w))
        assert zero_family("dd", list(dd.coeffs.values()), A.chart, SPEC).passed


def test_eval_form_matches_contract():
    A = action_algebroid()
    w = probe_form(A, 2, 3)
    secs = [probe_section(A, 0, 1) + probe_section(A, 2, 2), probe_section(A, 1, 4)]
    expr = contract(w, secs)
    for row in sample_points(A.chart, SampleSpec(count=8)):
        p = dict(zip(A.chart.coordinates, row))
        from aeds.expr import evaluate
        assert eval_form(w, secs, p) == pytest.approx(evaluate(expr, p), abs=1e-12)


def test_eval_form_examples():
    A = plane()
    w = wedge(A.basis_form(0), A.basis_form(1))
    p = {"x": 0.3, "y": -0.2}
    assert eval_form(w, [A.basis_section(0), A.basis_section(1)], p) == 1.0
    B = action_algebroid()
    t = probe_form(B, 3, 1)
    s, u = probe_section(B, 0, 1), probe_section(B, 2, 3)
    assert eval_form(t, [s, s, u], p) == 0.0


def test_intrinsic_formula_matches_on_generic_sections():
    A = action_algebroid()
    w = probe_form(A, 1, 2)
    secs = [probe_section(A, 0, 1) + probe_section(A, 1, 3), probe_section(A, 2, 2) + probe_section(A, 1, 1)]
    d = contract(exterior_derivative(w), secs) - intrinsic_differential(w, secs)
    assert is_zero(d, SPEC, A.chart)[0]


def test_cartan_formula_matches_intrinsic_lie():
    A = action_algebroid()
    s = probe_section(A, 0, 2) + probe_section(A, 1, 1)
    for q in (1, 2):
        w = probe_form(A, q, 5)
        lw = lie_derivative(s, w)
        for idx in combinations(range(3), q):
            secs = [probe_section(A, a, i) for i, a in enumerate(idx)]
            d = contract(lw, secs) - intrinsic_lie(s, w, secs)
            assert is_zero(d, SPEC, A.chart)[0]


def test_lie_derivative_of_function():
    A = plane()
    s = A.section([Const(2.0), Const(-1.0)])
    assert lie_derivative(s, A.function(Const(3.0))).coeffs == {}
    assert lie_derivative(s, A.function(Var("x"))).coeffs == {(): Const(2.0)}


def test_interior_product():
    A = action_algebroid()
    w = wedge(A.basis_form(1), A.basis_form(2))
    assert interior_product(A.basis_section(1), w).coeffs == {(2,): Const(1.0)}
    assert interior_product(A.basis_section(0), w).coeffs == {}
    with pytest.raises(DegreeZero):
        interior_product(A.basis_section(0), A.function(Var("x")))


def test_errors():
    A, B = plane(), action_algebroid()
    with pytest.raises(AlgebroidMismatch):
        wedge(A.basis_form(0), B.basis_form(0))
    with pytest.raises(AlgebroidMismatch):
        bracket(A.basis_section(0), B.basis_section(0))
    with pytest.raises(ArityMismatch):
        eval_form(A.basis_form(0), [], {"x": 0, "y": 0})
