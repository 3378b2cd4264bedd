import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeds.algebroid import bracket, eval_form, exterior_derivative, interior_product, lie_derivative
from aeds.errors import InvalidStructureConstants, NotAffine, PreconditionFailed, ShapeMismatch
from aeds.expr import Chart, Const, Var, evaluate, simplify
from aeds.ip import (
    CohomologyProblem,
    ExtendedSection,
    build_ip,
    check_structure_constants,
    coboundary_matrix,
    cohomology_obstruction,
    euler_poincare_residual,
    exact_rank,
    extended_from_multiplier,
    extract_mu_nu,
    helmholtz_residuals,
    hessian_multiplier,
    ip_report,
    omega_form,
    sigma_pullback_check,
    sigma_residual,
    structure_constants_from_entries,
    two_form_checks,
    TWO_FORM_TO_HELMHOLTZ,
)
from aeds.sampling import SampleSpec, is_zero, sample_points, zero_family

from helpers import HEIS, SO3, heisenberg, r1, so3

SPEC = SampleSpec()
QUAD = ("w1*w2 - t*w3", "w3^2 + w1", "t*w1*w2 + 1")


# ---------------------------------------------------------------- structure constants


def test_structure_constants_checks():
    C = structure_constants_from_entries(3, SO3)
    assert C[1, 0, 2] == -1.0
    bad = np.zeros((2, 2, 2))
    bad[0, 1, 0] = 1.0
    with pytest.raises(InvalidStructureConstants):
        check_structure_constants(bad)
    # antisymmetric but violating Jacobi
    J = np.zeros((3, 3, 3))
    J[0, 1, 0], J[1, 0, 0] = 1.0, -1.0
    J[1, 2, 1], J[2, 1, 1] = 1.0, -1.0
    J[0, 2, 0], J[2, 0, 0] = 1.0, -1.0
    J[0, 2, 2], J[2, 0, 2] = 0.0, 0.0
    J[1, 2, 2], J[2, 1, 2] = 5.0, -5.0
    with pytest.raises(InvalidStructureConstants):
        check_structure_constants(J)
    with pytest.raises(InvalidStructureConstants):
        structure_constants_from_entries(2, [(1, 1, 2, 1.0)])
    with pytest.raises(ShapeMismatch):
        build_ip(2, np.zeros((2, 2, 2)), ["0"])


# ---------------------------------------------------------------- independent oracle for lambda and phi


def _num_fields(ip, p, h=1e-5):
    """lambda, phi at a point from central differences of gamma and the defining formulas."""
    n = ip.n
    C = ip.C
    names = ip.chart.coordinates

    def g(q):
        return np.array([evaluate(x, dict(zip(names, q))) for x in ip.gamma])

    def jac(q):
        J = np.empty((n, n))  # J[i, j] = d gamma^j / d w^i
        for i in range(n):
            a, b = np.array(q, float), np.array(q, float)
            a[1 + i] += h
            b[1 + i] -= h
            J[i] = (g(a) - g(b)) / (2 * h)
        return J

    def lam(q):
        w = np.asarray(q[1:])
        return 0.5 * (np.einsum("k,kij->ij", w, C) - jac(q))

    w = np.asarray(p[1:])
    L = lam(p)
    gam = g(p)
    # gamma(lambda) along d/dt + gamma^i d/dw^i
    direction = np.concatenate(([1.0], gam))
    glam = (lam(np.asarray(p) + h * direction) - lam(np.asarray(p) - h * direction)) / (2 * h)
    J = jac(p)
    phi = -np.einsum("k,kil,lj->ij", w, C, J) - np.einsum("k,ikj->ij", gam, C) - glam - L @ L
    return L, phi


@pytest.mark.parametrize("make,gamma", [(so3, QUAD), (heisenberg, QUAD), (so3, ("0", "0", "0"))])
def test_lambda_phi_against_oracle(make, gamma):
    ip = make(gamma)
    pts = sample_points(ip.chart, SampleSpec(seed=5, count=8))
    for row in pts:
        p = dict(zip(ip.chart.coordinates, row))
        L, phi = _num_fields(ip, row)
        for i in range(3):
            for j in range(3):
                assert evaluate(ip.lam[i][j], p) == pytest.approx(L[i, j], abs=1e-8)
                assert evaluate(ip.phi[i][j], p) == pytest.approx(phi[i, j], abs=1e-6)


def test_canonical_phi_is_minus_lambda_squared():
    ip = so3()
    for i in range(3):
        for j in range(3):
            want = -sum(ip.lam[i][k] * ip.lam[k][j] for k in range(3))
            assert is_zero(ip.phi[i][j] - want, SPEC, ip.chart)[0]


def test_generic_bracket_reproduces_closed_forms():
    ip = so3(QUAD)
    G0, W, H = ip.frame()
    pts = sample_points(ip.chart, SampleSpec(count=8))
    for row in pts:
        p = dict(zip(ip.chart.coordinates, row))
        L, phi = _num_fields(ip, row)
        for i in range(3):
            gw = ip.adapted().section_to_new(bracket(G0, W[i]))
            gh = ip.adapted().section_to_new(bracket(G0, H[i]))
            got_w = np.array([evaluate(x, p) for x in gw])
            got_h = np.array([evaluate(x, p) for x in gh])
            want_w = np.zeros(7)
            want_w[1:4] = L[i]
            want_w[4 + i] = -1.0
            want_h = np.zeros(7)
            want_h[1:4] = phi[i]
            want_h[4:7] = L[i]
            assert np.allclose(got_w, want_w, atol=1e-8)
            assert np.allclose(got_h, want_h, atol=1e-6)


@pytest.mark.parametrize("make,gamma", [(so3, QUAD), (heisenberg, QUAD), (so3, ("0", "0", "0")),
                                        (heisenberg, ("0", "0", "0"))])
def test_ip_report_passes(make, gamma):
    rep = ip_report(make(gamma), SPEC)
    assert rep.passed, rep.render()
    for name in ("bracket [G0,W]", "bracket [G0,H]", "bracket [H,W]", "bracket [H,H]", "dPsi", "dTheta"):
        assert rep.family(name).max_residual < 1e-9
    assert rep.family("curvature antisymmetry").max_residual < 1e-12


def test_heisenberg_phi_and_curvature_vanish():
    ip = heisenberg()
    fam_phi = zero_family("phi", [x for row in ip.phi for x in row], ip.chart, SPEC)
    fam_r = zero_family("r", [x for pl in ip.curv for row in pl for x in row], ip.chart, SPEC)
    assert fam_phi.max_residual < 1e-12 and fam_r.max_residual < 1e-12


def test_interior_products_on_adapted_coframe():
    ip = so3(QUAD)
    G0, W, H = ip.frame()
    G, Psi, Theta = ip.coframe()
    from aeds.algebroid import wedge

    form = wedge(Psi[0], Theta[1])
    got = interior_product(W[0], form) - Theta[1]
    assert zero_family("i", list(got.coeffs.values()), ip.chart, SPEC).passed
    assert zero_family("i", list(interior_product(W[1], form).coeffs.values()), ip.chart, SPEC).passed
    omega = omega_form(ip, [["1", "0", "0"], ["0", "2", "w1"], ["0", "w1", "3"]])
    assert zero_family("i", list(interior_product(G0, omega).coeffs.values()), ip.chart, SPEC).passed


def test_lie_derivatives_of_coframe():
    ip = heisenberg(QUAD)
    G0, _, _ = ip.frame()
    _, Psi, Theta = ip.coframe()
    for i in range(3):
        want = Psi[i]
        for j in range(3):
            want = want - Theta[j].scale(ip.lam[j][i])
        d = lie_derivative(G0, Theta[i]) - want
        assert zero_family("L", list(d.coeffs.values()), ip.chart, SPEC).passed
        want = ip.algebroid.zero_form(1)
        for j in range(3):
            want = want - Theta[j].scale(ip.phi[j][i]) - Psi[j].scale(ip.lam[j][i])
        d = lie_derivative(G0, Psi[i]) - want
        assert zero_family("L", list(d.coeffs.values()), ip.chart, SPEC).passed


def test_domega_on_g0_w_h():
    ip = so3(QUAD)
    k = [["1 + w1^2", "t", "0"], ["t", "2", "w3"], ["0", "w3", "1"]]
    K = [[ip.chart.parse(x) for x in row] for row in k]
    G0, W, H = ip.frame()
    dO = exterior_derivative(omega_form(ip, k))
    pts = sample_points(ip.chart, SampleSpec(count=4))
    for row in pts:
        p = dict(zip(ip.chart.coordinates, row))
        for i in range(3):
            for j in range(3):
                want = ip.gamma_op(K[i][j]) - sum(K[m][j] * ip.lam[i][m] + K[i][m] * ip.lam[j][m] for m in range(3))
                assert eval_form(dO, [G0, W[i], H[j]], p) == pytest.approx(evaluate(want, p), abs=1e-10)


# ---------------------------------------------------------------- Helmholtz and the two-form


def test_r1_multiplier_passes_both_routes():
    ip = r1()
    h = helmholtz_residuals(ip, [["1 + w1^2"]], SPEC)
    t = two_form_checks(ip, [["1 + w1^2"]], SPEC)
    assert h.passed and t.passed
    assert h.max_residual < 1e-9 and t.max_residual < 1e-9


def test_r1_perturbation_breaks_gamma_family_only():
    ip = r1()
    k = [["1 + w1^2 + 0.1*t"]]
    h = helmholtz_residuals(ip, k, SPEC)
    t = two_form_checks(ip, k, SPEC)
    failed_h = {f.name for f in h.families if f.required and not f.passed}
    failed_t = {f.name for f in t.families if f.required and not f.passed}
    assert failed_h == {"gamma_k"}
    assert failed_t == {"dOmega"}
    assert t.family("closed form (G0,W,H)").passed
    assert not t.family("dOmega(G0,W,H)").passed
    assert all(t.family(f"dOmega({k})").passed for k in ("G0,W,W", "G0,H,H", "W,W,H"))


def test_so3_identity_multiplier():
    ip = so3()
    assert helmholtz_residuals(ip, [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]], SPEC).passed
    assert two_form_checks(ip, [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]], SPEC).passed


def test_singular_multiplier_fails_nondegeneracy():
    ip = r1()
    h = helmholtz_residuals(ip, [["0"]], SPEC)
    t = two_form_checks(ip, [["0"]], SPEC)
    assert not h.family("nondegeneracy").passed
    assert not t.family("top power").passed


K2 = st.sampled_from(["1", "w1", "w2", "t", "w1^2", "w1*w2", "1 + w2^2", "t*w1", "0"])


@given(st.tuples(K2, K2, K2, K2), st.sampled_from([("0", "0"), ("w2", "-w1"), ("t", "w1*w2")]))
def test_helmholtz_two_form_equivalence(entries, gamma):
    a, b, c, d = entries
    ip = build_ip(2, np.zeros((2, 2, 2)), list(gamma))
    k = [[a, b], [c, d]]
    h = helmholtz_residuals(ip, k, SPEC)
    t = two_form_checks(ip, k, SPEC)
    for two, hel in TWO_FORM_TO_HELMHOLTZ.items():
        assert t.family(two).passed == h.family(hel).passed, (two, hel)
    assert t.family("dOmega").passed == all(h.family(x).passed for x in ("symmetry", "gamma_k", "phi", "dk_dw"))
    assert t.family("top power = signed n! det k").passed


@settings(max_examples=12)
@given(st.tuples(K2, K2, K2), st.sampled_from(["0", "w1", "t*w1"]))
def test_helmholtz_two_form_equivalence_nonabelian(entries, g3):
    a, b, d = entries
    ip = build_ip(3, structure_constants_from_entries(3, HEIS), ["0", "0", g3])
    k = [[a, b, "0"], [b, d, "0"], ["0", "0", "1"]]
    h = helmholtz_residuals(ip, k, SPEC)
    t = two_form_checks(ip, k, SPEC)
    for two, hel in TWO_FORM_TO_HELMHOLTZ.items():
        assert t.family(two).passed == h.family(hel).passed, (two, hel)


def test_redundant_families_follow():
    for ip, k in ((r1(), [["1 + w1^2"]]), (so3(), [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]),
                  (build_ip(2, np.zeros((2, 2, 2)), ["0", "0"]), [["1", "0"], ["0", "w2^2 + 1"]])):
        rep = helmholtz_residuals(ip, k, SPEC)
        assert rep.passed
        assert rep.family("redundant_1").passed and rep.family("redundant_2").passed


def test_shape_checked():
    with pytest.raises(ShapeMismatch):
        helmholtz_residuals(r1(), [["1", "0"]], SPEC)


# ---------------------------------------------------------------- sigma system


def test_r1_sigma_round_trip():
    ip = r1()
    ext = extended_from_multiplier(ip, [["1 + w1^2"]])
    rep = sigma_residual(ip, ext, SPEC)
    assert rep.passed and rep.max_residual < 1e-9


def test_sigma_pullback_matches_families():
    ip = r1(("w1^2 - t",))
    ext = ExtendedSection([["1 + t*w1"]], [[["w1"]]], [[["t^2"]]])
    rep = sigma_pullback_check(ip, ext, SPEC)
    assert rep.passed, rep.render()


def test_sigma_wrong_section_fails():
    ip = r1()
    ext = ExtendedSection([["1 + w1^2"]], [[["0"]]], [[["0"]]])
    rep = sigma_residual(ip, ext, SPEC)
    assert not rep.family("(b)").passed
    assert rep.family("(a)").passed


def test_sigma_p_symmetry_tracks_dk_dw():
    ip = build_ip(2, np.zeros((2, 2, 2)), ["0", "0"])
    good = extended_from_multiplier(ip, [["1", "0"], ["0", "1 + w2^2"]])
    assert sigma_residual(ip, good, SPEC).passed
    bad_k = [["1", "0"], ["0", "1 + w1*w2"]]
    assert not helmholtz_residuals(ip, bad_k, SPEC).family("dk_dw").passed
    rep = sigma_residual(ip, extended_from_multiplier(ip, bad_k), SPEC)
    assert not rep.family("P symmetric").passed


def test_so3_sigma_precondition_fails():
    ip = so3()
    ext = extended_from_multiplier(ip, [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]])
    with pytest.raises(PreconditionFailed) as err:
        sigma_residual(ip, ext, SPEC)
    rep = err.value.report
    assert not rep.family("precondition phi").passed


# ---------------------------------------------------------------- Euler-Poincare and cohomology


def test_heisenberg_kinetic_residual():
    ip = heisenberg()
    V = euler_poincare_residual(ip, "0.5*(w1^2 + w2^2 + w3^2)")
    want = [Var("w2") * Var("w3"), Const(0.0), -(Var("w1") * Var("w2"))]
    for v, w in zip(V, want):
        assert is_zero(v - w, SPEC, ip.chart)[0]
    with pytest.raises(NotAffine) as err:
        extract_mu_nu(ip, "0.5*(w1^2 + w2^2 + w3^2)", SPEC)
    assert not err.value.family.passed


def test_hessian_multiplier():
    ip = r1()
    k = hessian_multiplier(ip, "w1^4/12 + w1^2/2")
    assert is_zero(k[0][0] - (Var("w1") ** 2 + 1), SPEC, ip.chart)[0]


def test_gauge_terms_example():
    ip = heisenberg()
    mu, nu, fam = extract_mu_nu(ip, "sin(t)*w1 + t^2*w2 + exp(t)*w3", SPEC)
    assert fam.passed
    t = Var("t")
    assert is_zero(mu[0][2] + t ** 2, SPEC, ip.chart)[0]
    assert is_zero(mu[2][0] - t ** 2, SPEC, ip.chart)[0]
    assert is_zero(nu[0] - ip.chart.parse("cos(t)"), SPEC, ip.chart)[0]
    assert is_zero(nu[1] - 2 * t, SPEC, ip.chart)[0]
    assert is_zero(nu[2] - ip.chart.parse("exp(t)"), SPEC, ip.chart)[0]


THETA = st.sampled_from(["0", "t", "t^2", "sin(t)", "exp(t)", "1 - 3*t"])


@given(st.tuples(THETA, THETA, THETA), st.sampled_from(["w1 + t*w3", "0", "exp(t)*w2 + t"]))
def test_gauge_covariance(theta, base):
    """Adding theta_k(t) w^k shifts mu by -theta_k C^k and nu by theta'."""
    ip = heisenberg(("w2", "0", "t"))
    gauge = " + ".join(f"({th})*w{k + 1}" for k, th in enumerate(theta))
    mu0, nu0, _ = extract_mu_nu(ip, base, SPEC)
    mu1, nu1, _ = extract_mu_nu(ip, f"{base} + {gauge}", SPEC)
    th = [ip.chart.parse(x) for x in theta]
    res = []
    for i in range(3):
        for j in range(3):
            shift = sum((-Const(ip.C[i, j, k]) * th[k] for k in range(3)), Const(0.0))
            res.append(simplify(mu1[i][j] - mu0[i][j] - shift))
        res.append(simplify(nu1[i] - nu0[i] - ip.chart.differentiate(th[i], "t")))
    assert zero_family("gauge", res, ip.chart, SPEC).passed


def test_heisenberg_coboundary_rank():
    D = coboundary_matrix(structure_constants_from_entries(3, HEIS))
    assert exact_rank(D) == 1
    assert exact_rank(coboundary_matrix(structure_constants_from_entries(3, SO3))) == 3
    assert exact_rank(np.zeros((4, 2))) == 0


def test_heisenberg_mu13_is_coboundary():
    C = structure_constants_from_entries(3, HEIS)
    prob = CohomologyProblem(C, [["0", "0", "1"], ["0", "0", "0"], ["-1", "0", "0"]], ["0", "0", "0"])
    rep = cohomology_obstruction(prob, SampleSpec())
    assert rep.passed
    assert rep.family("coh: mu' + C nu").max_residual < 1e-12
    assert rep.family("coh: cyclic mu C").max_residual < 1e-12
    assert rep.details["d_rank"] == 1


def test_obstruction_detected():
    C = structure_constants_from_entries(3, HEIS)
    # mu_12 is not in the image of d for the Heisenberg algebra
    prob = CohomologyProblem(C, [["0", "1", "0"], ["-1", "0", "0"], ["0", "0", "0"]], ["0", "0", "0"])
    rep = cohomology_obstruction(prob, SampleSpec())
    assert not rep.passed
    assert not rep.family("H2: mu = d theta").passed
    # nu in the image of d is absorbed only by a time-dependent gauge term
    prob = CohomologyProblem(C, [["0", "0", "0"]] * 3, ["0", "1", "0"])
    rep = cohomology_obstruction(prob, SampleSpec())
    assert not rep.family("coh: mu' + C nu").passed or not rep.family("H1: nu + theta' in ker d").passed


def test_gauge_pair_is_unobstructed():
    ip = heisenberg()
    mu, nu, _ = extract_mu_nu(ip, "sin(t)*w1 + t^2*w2 + exp(t)*w3", SPEC)
    rep = cohomology_obstruction(CohomologyProblem(ip.C, mu, nu), SampleSpec())
    assert rep.passed, rep.render()
