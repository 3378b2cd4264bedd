"""The reduced inverse problem on the IP algebroid of a Lie algebra.

Chart ``(t, w1..wn)``; the algebroid has rank ``2n+1`` with basis
``T0, e1..en, W1..Wn``.  A reduced second-order field is given by the
components ``gamma[i](t, w)``.  Index conventions used throughout:

* ``C[i][j][k]`` is the structure constant with lower ``i, j`` and upper ``k``;
* ``lam[i][j]``, ``psi[i][j]``, ``phi[i][j]`` carry lower ``i`` and upper ``j``;
* ``lam2[i][j][k]`` is the ``w^j``-derivative of ``lam[i][k]``;
* ``curv[i][j][k]`` carries lower ``i, j`` and upper ``k``.

The adapted frame is ordered ``(G0, W1..Wn, H1..Hn)`` with dual frame
``(G^0, Psi^1..Psi^n, Theta^1..Theta^n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import factorial

import numpy as np

from .algebroid import (
    Algebroid,
    BasisChange,
    Form,
    bracket,
    contract,
    exterior_derivative,
    interior_product,
    lie_derivative,
    wedge,
    wedge_all,
)
from .errors import InvalidStructureConstants, NotAffine, PreconditionFailed, ShapeMismatch
from .expr import (
    ONE,
    ZERO,
    Chart,
    Const,
    Var,
    as_expr,
    differentiate,
    simplify,
    substitute,
    sum_exprs,
)
from .report import Report
from .sampling import Family, SampleSpec, evaluate_many, sample_points, zero_family


def check_structure_constants(C, tol=1e-12):
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n, n):
        raise InvalidStructureConstants(f"structure constants must have shape (n, n, n), got {C.shape}")
    anti = np.abs(C + C.transpose(1, 0, 2)).max() if n else 0.0
    if anti > tol:
        raise InvalidStructureConstants(f"structure constants are not antisymmetric (residual {anti:.3g})")
    # [[e_i, e_j], e_k] + cyclic
    jac = (
        np.einsum("ijm,mkl->ijkl", C, C)
        + np.einsum("jkm,mil->ijkl", C, C)
        + np.einsum("kim,mjl->ijkl", C, C)
    )
    res = np.abs(jac).max() if n else 0.0
    if res > tol:
        raise InvalidStructureConstants(f"structure constants violate the Jacobi identity (residual {res:.3g})")
    return C


class IpData:
    """IP algebroid of ``(n, C)`` together with a reduced field ``gamma``."""

    def __init__(self, n, C, gamma, domain=None, name=""):
        self.n = n
        self.C = check_structure_constants(C)
        if self.C.shape[0] != n:
            raise ShapeMismatch(f"structure constants describe dimension {self.C.shape[0]}, expected {n}")
        self.wnames = tuple(f"w{i + 1}" for i in range(n))
        self.chart = Chart(("t",) + self.wnames, domain or {})
        self.t = Var("t")
        self.w = [Var(x) for x in self.wnames]
        if len(gamma) != n:
            raise ShapeMismatch(f"gamma needs {n} components")
        self.gamma = [self.chart.parse(g) if isinstance(g, str) else as_expr(g) for g in gamma]
        self.name = name
        self.algebroid = self._build_algebroid()
        self._derive()
        self._adapted = None

    # ------------------------------------------------------------ structure

    def c(self, i, j, k):
        v = self.C[i, j, k]
        return ZERO if v == 0.0 else Const(v)

    def T0(self):
        return 0

    def e(self, i):
        return 1 + i

    def W(self, i):
        return 1 + self.n + i

    def _build_algebroid(self):
        n = self.n
        r = 2 * n + 1
        m = n + 1
        anchor = [[ZERO] * m for _ in range(r)]
        anchor[0][0] = ONE
        for i in range(n):
            for j in range(n):
                anchor[self.e(i)][1 + j] = simplify(sum_exprs(self.w[k] * self.c(k, i, j) for k in range(n)))
            anchor[self.W(i)][1 + i] = ONE
        L = [[[ZERO] * r for _ in range(r)] for _ in range(r)]
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    c = self.c(i, j, k)
                    if c is ZERO:
                        continue
                    L[self.e(i)][self.e(j)][self.e(k)] = c
                    L[self.e(i)][self.W(j)][self.W(k)] = c
                    L[self.W(j)][self.e(i)][self.W(k)] = -c
        basis = ("T0",) + tuple(f"e{i + 1}" for i in range(n)) + tuple(f"W{i + 1}" for i in range(n))
        return Algebroid(self.chart, anchor, L, basis, name=self.name or "IP algebroid")

    def gamma_op(self, f):
        """Derivative of ``f`` along ``d/dt + gamma^i d/dw^i``."""
        terms = [differentiate(f, "t")]
        for i in range(self.n):
            terms.append(self.gamma[i] * differentiate(f, self.wnames[i]))
        return simplify(sum_exprs(terms))

    def dw(self, f, i):
        return differentiate(f, self.wnames[i])

    def _derive(self):
        n, w = self.n, self.w
        rng = range(n)
        wc = [[simplify(sum_exprs(w[k] * self.c(k, i, j) for k in rng)) for j in rng] for i in rng]
        dg = [[self.dw(self.gamma[j], i) for j in rng] for i in rng]
        self.lam = [[simplify((wc[i][j] - dg[i][j]) * 0.5) for j in rng] for i in rng]
        self.psi = [[simplify((wc[i][j] + dg[i][j]) * 0.5) for j in rng] for i in rng]
        lam = self.lam
        phi = []
        for i in rng:
            row = []
            for j in rng:
                terms = []
                for k in rng:
                    for l in rng:
                        c = self.c(k, i, l)
                        if c is not ZERO:
                            terms.append(-(w[k] * c * dg[l][j]))
                    c = self.c(i, k, j)
                    if c is not ZERO:
                        terms.append(-(self.gamma[k] * c))
                    terms.append(-(lam[i][k] * lam[k][j]))
                terms.append(-self.gamma_op(lam[i][j]))
                row.append(simplify(sum_exprs(terms)))
            phi.append(row)
        self.phi = phi
        self.lam2 = [[[self.dw(lam[i][k], j) for k in rng] for j in rng] for i in rng]
        L2 = self.lam2
        curv = []
        for i in rng:
            plane = []
            for j in rng:
                row = []
                for k in rng:
                    terms = []
                    for l in rng:
                        for m in rng:
                            c = self.c(l, j, m)
                            if c is not ZERO:
                                terms.append(w[l] * c * L2[i][m][k])
                            c = self.c(l, i, m)
                            if c is not ZERO:
                                terms.append(-(w[l] * c * L2[j][m][k]))
                        terms.append(lam[i][l] * L2[j][l][k])
                        terms.append(-(lam[j][l] * L2[i][l][k]))
                        c = self.c(i, j, l)
                        if c is not ZERO:
                            terms.append(c * lam[l][k])
                        c = self.c(j, l, k)
                        if c is not ZERO:
                            terms.append(lam[i][l] * c)
                        c = self.c(i, l, k)
                        if c is not ZERO:
                            terms.append(-(lam[j][l] * c))
                    row.append(simplify(sum_exprs(terms)))
                plane.append(row)
            curv.append(plane)
        self.curv = curv
        self.d2gamma = [[[self.dw(dg[i][k], j) for k in rng] for j in rng] for i in rng]

    # ------------------------------------------------------------ adapted frame

    def adapted(self):
        """The :class:`BasisChange` to ``(G0, W1..Wn, H1..Hn)``."""
        if self._adapted is None:
            n, r = self.n, 2 * self.n + 1
            rows = []
            g0 = [ZERO] * r
            g0[0] = ONE
            for j in range(n):
                g0[self.e(j)] = self.w[j]
                g0[self.W(j)] = self.gamma[j]
            rows.append(g0)
            for i in range(n):
                row = [ZERO] * r
                row[self.W(i)] = ONE
                rows.append(row)
            for i in range(n):
                row = [ZERO] * r
                row[self.e(i)] = ONE
                for j in range(n):
                    row[self.W(j)] = simplify(-self.lam[i][j])
                rows.append(row)
            labels = ("G0",) + tuple(f"W{i + 1}" for i in range(n)) + tuple(f"H{i + 1}" for i in range(n))
            duals = ("G^0",) + tuple(f"Psi{i + 1}" for i in range(n)) + tuple(f"Theta{i + 1}" for i in range(n))
            self._adapted = BasisChange(self.algebroid, rows, labels, duals)
        return self._adapted

    def frame(self):
        secs = self.adapted().sections()
        n = self.n
        return secs[0], secs[1:1 + n], secs[1 + n:]

    def coframe(self):
        forms = self.adapted().dual_forms()
        n = self.n
        return forms[0], forms[1:1 + n], forms[1 + n:]

    def old_basis(self):
        A = self.algebroid
        n = self.n
        return (
            A.basis_section(0),
            [A.basis_section(self.e(i)) for i in range(n)],
            [A.basis_section(self.W(i)) for i in range(n)],
        )

    def old_coframe(self):
        A = self.algebroid
        n = self.n
        return (
            A.basis_form(0),
            [A.basis_form(self.e(i)) for i in range(n)],
            [A.basis_form(self.W(i)) for i in range(n)],
        )


def build_ip(n, C, gamma, domain=None, name=""):
    return IpData(n, C, gamma, domain, name)


def structure_constants_from_entries(n, entries):
    """Dense array from ``(i, j, k, value)`` entries (1-based), completed antisymmetrically."""
    C = np.zeros((n, n, n))
    for i, j, k, v in entries:
        if not (1 <= i <= n and 1 <= j <= n and 1 <= k <= n):
            raise InvalidStructureConstants(f"structure constant index ({i}, {j}, {k}) out of range")
        if i == j and v != 0:
            raise InvalidStructureConstants(f"C^{k}_{{{i}{i}}} must vanish")
        a, b, c = i - 1, j - 1, k - 1
        for (x, y, s) in ((a, b, 1.0), (b, a, -1.0)):
            prev = C[x, y, c]
            if prev != 0.0 and prev != s * v:
                raise InvalidStructureConstants(f"conflicting entries for C^{k}_{{{i}{j}}}")
            C[x, y, c] = s * v
    return C


# ---------------------------------------------------------------- closed forms


def _forms_residual(a, b):
    diff = a - b
    return list(diff.coeffs.values())


def _sections_residual(s, t):
    return [simplify(x - y) for x, y in zip(s.components, t.components)]


def _combo(sections, coeffs):
    """``sum coeffs[k] * sections[k]``."""
    A = sections[0].algebroid
    comps = [
        simplify(sum_exprs(coeffs[k] * sections[k].components[a] for k in range(len(sections))))
        for a in range(A.rank)
    ]
    from .algebroid import Section

    return Section(A, comps)


def bracket_table_residuals(ip):
    """Residual expressions of the adapted-frame bracket table, per family."""
    n = ip.n
    G0, W, H = ip.frame()
    lam, phi, L2, curv = ip.lam, ip.phi, ip.lam2, ip.curv
    out = {"[G0,W]": [], "[G0,H]": [], "[H,W]": [], "[H,H]": []}
    for i in range(n):
        expect = _combo(W, lam[i]) - H[i]
        out["[G0,W]"] += _sections_residual(bracket(G0, W[i]), expect)
        expect = _combo(H + W, list(lam[i]) + list(phi[i]))
        out["[G0,H]"] += _sections_residual(bracket(G0, H[i]), expect)
        for j in range(n):
            coeffs = [simplify(ip.c(i, j, k) + L2[i][j][k]) for k in range(n)]
            out["[H,W]"] += _sections_residual(bracket(H[i], W[j]), _combo(W, coeffs))
            if i < j:
                expect = _combo(H + W, [ip.c(i, j, k) for k in range(n)] + list(curv[i][j]))
                out["[H,H]"] += _sections_residual(bracket(H[i], H[j]), expect)
    return out


def closed_coframe(ip):
    """Dual frame written directly from its defining formulas."""
    n = ip.n
    T0f, ef, Wf = ip.old_coframe()
    theta = [ef[i] - T0f.scale(ip.w[i]) for i in range(n)]
    psi = []
    for i in range(n):
        f = Wf[i] - T0f.scale(ip.gamma[i])
        for j in range(n):
            f = f + theta[j].scale(ip.lam[j][i])
        psi.append(f)
    return T0f, psi, theta


def differential_residuals(ip):
    """Residuals of the closed forms for ``delta Psi``, ``delta Theta`` and ``L_G0``."""
    n = ip.n
    G0s, _, _ = ip.frame()
    G, Psi, Theta = ip.coframe()
    lam, phi, L2, curv = ip.lam, ip.phi, ip.lam2, ip.curv
    out = {"dPsi": [], "dTheta": [], "L_G0 Theta": [], "L_G0 Psi": []}
    for i in range(n):
        expect = ip.algebroid.zero_form(2)
        for k in range(n):
            expect = expect - wedge(G, Theta[k]).scale(phi[k][i]) - wedge(G, Psi[k]).scale(lam[k][i])
            for l in range(n):
                expect = expect - wedge(Theta[k], Theta[l]).scale(simplify(0.5 * curv[k][l][i]))
                expect = expect - wedge(Theta[k], Psi[l]).scale(simplify(ip.c(k, l, i) + L2[k][l][i]))
        out["dPsi"] += _forms_residual(exterior_derivative(Psi[i]), expect)
        expect = wedge(G, Psi[i])
        for k in range(n):
            expect = expect - wedge(G, Theta[k]).scale(lam[k][i])
            for l in range(n):
                expect = expect - wedge(Theta[k], Theta[l]).scale(simplify(0.5 * ip.c(k, l, i)))
        out["dTheta"] += _forms_residual(exterior_derivative(Theta[i]), expect)
        expect = Psi[i]
        for j in range(n):
            expect = expect - Theta[j].scale(lam[j][i])
        out["L_G0 Theta"] += _forms_residual(lie_derivative(G0s, Theta[i]), expect)
        expect = ip.algebroid.zero_form(1)
        for j in range(n):
            expect = expect - Theta[j].scale(phi[j][i]) - Psi[j].scale(lam[j][i])
        out["L_G0 Psi"] += _forms_residual(lie_derivative(G0s, Psi[i]), expect)
    return out


def ip_report(ip, spec=None):
    """Validation of the IP algebroid plus every closed-form identity of the adapted frame."""
    from .algebroid import validate

    spec = spec or SampleSpec()
    chart = ip.chart
    pts = sample_points(chart, spec)
    base = validate(ip.algebroid, spec)
    fams = list(base.families)
    n = ip.n
    G, Psi, Theta = ip.coframe()
    G_c, Psi_c, Theta_c = closed_coframe(ip)
    dual = []
    for a, b in zip([G] + Psi + Theta, [G_c] + Psi_c + Theta_c):
        dual += _forms_residual(a, b)
    fams.append(zero_family("dual frame", dual, chart, spec, pts))
    for name, exprs in bracket_table_residuals(ip).items():
        fams.append(zero_family(f"bracket {name}", exprs, chart, spec, pts))
    anti = [simplify(ip.curv[i][j][k] + ip.curv[j][i][k]) for i in range(n) for j in range(n) for k in range(n)]
    fams.append(zero_family("curvature antisymmetry", anti, chart, spec, pts))
    ident = [
        simplify(ip.c(k, l, i) + ip.lam2[k][l][i] - 0.5 * ip.c(k, l, i) + 0.5 * ip.d2gamma[k][l][i])
        for i in range(n) for k in range(n) for l in range(n)
    ]
    fams.append(zero_family("C + lambda2 identity", ident, chart, spec, pts))
    for name, exprs in differential_residuals(ip).items():
        fams.append(zero_family(name, exprs, chart, spec, pts))
    details = {
        "n": n,
        "rank": ip.algebroid.rank,
        "gamma": [str(g) for g in ip.gamma],
        "lambda": [[str(x) for x in row] for row in ip.lam],
        "psi": [[str(x) for x in row] for row in ip.psi],
        "phi": [[str(x) for x in row] for row in ip.phi],
        "curvature": [[[str(x) for x in row] for row in plane] for plane in ip.curv],
    }
    return Report("ip-report", fams, details=details, sampling=spec.describe(chart))


# ---------------------------------------------------------------- Helmholtz


def _matrix(ip, k):
    n = ip.n
    if len(k) != n or any(len(row) != n for row in k):
        raise ShapeMismatch(f"multiplier must be {n}x{n}")
    return [[ip.chart.parse(x) if isinstance(x, str) else as_expr(x) for x in row] for row in k]


def helmholtz_families(ip, k):
    """Residual expressions of every Helmholtz family for the multiplier ``k``."""
    n = ip.n
    k = _matrix(ip, k)
    lam, phi, psi = ip.lam, ip.phi, ip.psi
    rng = range(n)
    fam = {}
    fam["symmetry"] = [simplify(k[i][j] - k[j][i]) for i, j in combinations(rng, 2)]
    fam["gamma_k"] = [
        simplify(ip.gamma_op(k[i][j]) - sum_exprs(k[m][j] * lam[i][m] + k[i][m] * lam[j][m] for m in rng))
        for i in rng for j in rng
    ]
    fam["phi"] = [
        simplify(sum_exprs(k[m][i] * phi[j][m] - k[m][j] * phi[i][m] for m in rng))
        for i, j in combinations(rng, 2)
    ]
    fam["dk_dw"] = [
        simplify(ip.dw(k[j][m], i) - ip.dw(k[i][m], j))
        for i, j in combinations(rng, 2) for m in rng
    ]
    red1 = []
    for i in rng:
        for j in rng:
            for l in rng:
                lhs = sum_exprs(psi[l][m] * ip.dw(k[i][j], m) for m in rng) + 0.5 * sum_exprs(
                    k[m][i] * ip.c(j, l, m) + k[m][j] * ip.c(i, l, m) - k[m][l] * ip.d2gamma[i][j][m]
                    for m in rng
                )
                rhs = sum_exprs(psi[j][m] * ip.dw(k[i][l], m) for m in rng) + 0.5 * sum_exprs(
                    k[i][m] * ip.c(l, j, m) + k[m][l] * ip.c(i, j, m) - k[m][j] * ip.d2gamma[i][l][m]
                    for m in rng
                )
                red1.append(simplify(lhs - rhs))
    fam["redundant_1"] = red1
    fam["redundant_2"] = [
        simplify(sum_exprs(
            ip.curv[i][j][l] * k[l][m] + ip.curv[j][m][l] * k[l][i] + ip.curv[m][i][l] * k[l][j] for l in rng
        ))
        for i in rng for j in rng for m in rng
    ]
    return k, fam


def det_family(name, matrix, chart, spec, points, required=True):
    """Nonsingularity of a matrix of expressions on the sample grid."""
    n = len(matrix)
    flat = [x for row in matrix for x in row]
    vals = evaluate_many(flat, chart, points).reshape(len(points), n, n)
    dets = np.abs(np.linalg.det(vals)) if n else np.ones(len(points))
    p = int(np.argmin(dets))
    mind = float(dets.min())
    return Family(
        name,
        0.0 if mind > spec.tol_abs else mind,
        {c: float(points[p, i]) for i, c in enumerate(chart.coordinates)},
        mind > spec.tol_abs,
        1,
        required,
        extra={"min_abs_det": mind},
    )


HELMHOLTZ_REQUIRED = ("symmetry", "gamma_k", "phi", "dk_dw")


def helmholtz_residuals(ip, k, spec=None):
    spec = spec or SampleSpec()
    chart = ip.chart
    pts = sample_points(chart, spec)
    k, fam = helmholtz_families(ip, k)
    fams = []
    for name in HELMHOLTZ_REQUIRED:
        fams.append(zero_family(name, fam[name], chart, spec, pts))
    fams.append(det_family("nondegeneracy", k, chart, spec, pts))
    for name in ("redundant_1", "redundant_2"):
        fams.append(zero_family(name, fam[name], chart, spec, pts, required=False))
    return Report(
        "helmholtz",
        fams,
        details={"multiplier": [[str(x) for x in row] for row in k]},
        sampling=spec.describe(chart),
    )


# ---------------------------------------------------------------- two-form


def omega_form(ip, k):
    k = _matrix(ip, k)
    _, Psi, Theta = ip.coframe()
    total = ip.algebroid.zero_form(2)
    for i in range(ip.n):
        for j in range(ip.n):
            if k[i][j] is not ZERO:
                total = total + wedge(Psi[i], Theta[j]).scale(k[i][j])
    return total


TRIPLES = {
    "G0,W,W": ("symmetry", True),
    "G0,W,H": ("gamma_k", True),
    "G0,H,H": ("phi", True),
    "W,W,H": ("dk_dw", True),
    "W,H,H": (None, False),
    "H,H,H": ("redundant_2", False),
    "W,W,W": (None, False),
}

# Helmholtz family matched by each two-form family.
TWO_FORM_TO_HELMHOLTZ = {
    "dOmega(G0,W,W)": "symmetry",
    "dOmega(G0,W,H)": "gamma_k",
    "dOmega(G0,H,H)": "phi",
    "dOmega(W,W,H)": "dk_dw",
    "top power": "nondegeneracy",
}


def _triples(ip, kind):
    G0, W, H = ip.frame()
    n = ip.n
    pick = {"G0": None, "W": W, "H": H}
    parts = kind.split(",")
    if parts[0] == "G0":
        a, b = parts[1], parts[2]
        if a == b:
            for i, j in combinations(range(n), 2):
                yield (i, j), [G0, pick[a][i], pick[b][j]]
        else:
            for i in range(n):
                for j in range(n):
                    yield (i, j), [G0, pick[a][i], pick[b][j]]
    elif kind == "W,W,H":
        for i, j in combinations(range(n), 2):
            for m in range(n):
                yield (i, j, m), [W[i], W[j], H[m]]
    elif kind == "W,H,H":
        for i in range(n):
            for j, m in combinations(range(n), 2):
                yield (i, j, m), [W[i], H[j], H[m]]
    else:
        S = W if kind == "W,W,W" else H
        for i, j, m in combinations(range(n), 3):
            yield (i, j, m), [S[i], S[j], S[m]]


def two_form_checks(ip, k, spec=None):
    """Conditions on ``Omega = k_ij Psi^i ^ Theta^j`` plus closed-form cross-checks.

    The top-power coefficient is ``Omega^n(W1..Wn, H1..Hn)``, which equals
    ``(-1)^(n(n-1)/2) n! det k``.
    """
    spec = spec or SampleSpec()
    chart = ip.chart
    pts = sample_points(chart, spec)
    n = ip.n
    k = _matrix(ip, k)
    G0, W, H = ip.frame()
    omega = omega_form(ip, k)
    fams = []
    top_form = wedge_all([omega] * n)
    top = simplify(contract(top_form, W + H))
    det_vals = evaluate_many([x for row in k for x in row], chart, pts).reshape(len(pts), n, n)
    dets = np.linalg.det(det_vals)
    top_vals = evaluate_many([top], chart, pts)[:, 0]
    mins = np.abs(top_vals)
    p = int(np.argmin(mins))
    # |top| = n! |det k|, so the threshold scales with n! to match the determinant test
    floor = factorial(n) * spec.tol_abs
    fams.append(Family(
        "top power",
        0.0 if mins.min() > floor else float(mins.min()),
        {c: float(pts[p, i]) for i, c in enumerate(chart.coordinates)},
        bool(mins.min() > floor),
        1,
        extra={"min_abs_top_coefficient": float(mins.min())},
    ))
    expected = ((-1) ** (n * (n - 1) // 2)) * factorial(n) * dets
    diff = np.abs(top_vals - expected)
    q = int(np.argmax(diff))
    ok = diff <= spec.tol_abs + spec.tol_rel * np.abs(expected)
    fams.append(Family(
        "top power = signed n! det k",
        float(diff.max()),
        {c: float(pts[q, i]) for i, c in enumerate(chart.coordinates)},
        bool(ok.all()),
        1,
    ))
    ww = [simplify(contract(omega, [W[i], W[j]])) for i, j in combinations(range(n), 2)]
    fams.append(zero_family("Omega(W,W)", ww, chart, spec, pts))
    fams.append(zero_family("iota_G0 Omega", list(interior_product(G0, omega).coeffs.values()), chart, spec, pts))
    domega = exterior_derivative(omega)
    fams.append(zero_family("dOmega", list(domega.coeffs.values()), chart, spec, pts))
    wh = [simplify(contract(omega, [W[i], H[j]]) - k[i][j]) for i in range(n) for j in range(n)]
    fams.append(zero_family("Omega(W,H) = k", wh, chart, spec, pts))
    _, hfam = helmholtz_families(ip, k)
    for kind, (hname, required) in TRIPLES.items():
        vals = {}
        for idx, secs in _triples(ip, kind):
            vals[idx] = simplify(contract(domega, secs))
        fams.append(zero_family(f"dOmega({kind})", list(vals.values()), chart, spec, pts, required=False))
        if hname in ("symmetry", "gamma_k", "phi", "dk_dw"):
            closed = _closed_triple(ip, k, kind, hfam)
            diffs = [simplify(vals[idx] - closed[idx]) for idx in vals]
            fams.append(zero_family(f"closed form ({kind})", diffs, chart, spec, pts))
    return Report(
        "two-form",
        fams,
        details={"multiplier": [[str(x) for x in row] for row in k], "top_coefficient": str(top)},
        sampling=spec.describe(chart),
    )


def _closed_triple(ip, k, kind, hfam):
    n = ip.n
    lam, phi = ip.lam, ip.phi
    rng = range(n)
    out = {}
    if kind == "G0,W,W":
        for i, j in combinations(rng, 2):
            out[(i, j)] = simplify(k[i][j] - k[j][i])
    elif kind == "G0,W,H":
        for i in rng:
            for j in rng:
                out[(i, j)] = simplify(
                    ip.gamma_op(k[i][j]) - sum_exprs(k[m][j] * lam[i][m] + k[i][m] * lam[j][m] for m in rng)
                )
    elif kind == "G0,H,H":
        for i, j in combinations(rng, 2):
            out[(i, j)] = simplify(sum_exprs(k[m][i] * phi[j][m] - k[m][j] * phi[i][m] for m in rng))
    elif kind == "W,W,H":
        for i, j in combinations(rng, 2):
            for m in rng:
                out[(i, j, m)] = simplify(ip.dw(k[j][m], i) - ip.dw(k[i][m], j))
    return out


# ---------------------------------------------------------------- sigma system


@dataclass
class ExtendedSection:
    """Candidate integral section ``(s_ij, P_ijl, Q_ijl)`` over the IP chart."""

    s: list
    P: list
    Q: list


def extended_from_multiplier(ip, k):
    """Integral section built from a reduced multiplier."""
    n = ip.n
    k = _matrix(ip, k)
    rng = range(n)
    P = [[[simplify(-ip.dw(k[i][j], l)) for l in rng] for j in rng] for i in rng]
    Q = []
    for i in rng:
        plane = []
        for j in rng:
            row = []
            for l in rng:
                v = sum_exprs(ip.psi[l][m] * ip.dw(k[i][j], m) for m in rng) + 0.5 * sum_exprs(
                    k[m][i] * ip.c(j, l, m) + k[m][j] * ip.c(i, l, m) - k[m][l] * ip.d2gamma[i][j][m]
                    for m in rng
                )
                row.append(simplify(-v))
            plane.append(row)
        Q.append(plane)
    return ExtendedSection(k, P, Q)


def _sym_basis(n):
    for a in range(n):
        for b in range(a, n):
            yield [[ONE if (i, j) in ((a, b), (b, a)) else ZERO for j in range(n)] for i in range(n)]


def ideal_precondition(ip, spec=None):
    """The two families that make the span of the ``omega^ij`` a differential ideal."""
    spec = spec or SampleSpec()
    n = ip.n
    rng = range(n)
    phi_fam, curv_fam = [], []
    for s in _sym_basis(n):
        for i, j in combinations(rng, 2):
            phi_fam.append(simplify(sum_exprs(s[i][m] * ip.phi[j][m] - s[j][m] * ip.phi[i][m] for m in rng)))
        for i in rng:
            for j in rng:
                for m in rng:
                    curv_fam.append(simplify(sum_exprs(
                        s[i][l] * ip.curv[j][m][l] + s[j][l] * ip.curv[m][i][l] + s[m][l] * ip.curv[i][j][l]
                        for l in rng
                    )))
    pts = sample_points(ip.chart, spec)
    return [
        zero_family("precondition phi", phi_fam, ip.chart, spec, pts),
        zero_family("precondition curvature", curv_fam, ip.chart, spec, pts),
    ]


def _ext_parse(ip, ext):
    n = ip.n

    def conv(x):
        return ip.chart.parse(x) if isinstance(x, str) else as_expr(x)

    s = [[conv(x) for x in row] for row in ext.s]
    P = [[[conv(x) for x in row] for row in plane] for plane in ext.P]
    Q = [[[conv(x) for x in row] for row in plane] for plane in ext.Q]
    if len(s) != n or any(len(r) != n for r in s):
        raise ShapeMismatch(f"s must be {n}x{n}")
    for arr, nm in ((P, "P"), (Q, "Q")):
        if len(arr) != n or any(len(p) != n or any(len(r) != n for r in p) for p in arr):
            raise ShapeMismatch(f"{nm} must be {n}x{n}x{n}")
    return s, P, Q


def sigma_families(ip, ext):
    n = ip.n
    s, P, Q = _ext_parse(ip, ext)
    rng = range(n)
    lam, psi = ip.lam, ip.psi
    fam = {}
    fam["(a)"] = [
        simplify(ip.gamma_op(s[i][j]) - sum_exprs(s[m][i] * lam[j][m] + s[m][j] * lam[i][m] for m in rng))
        for i in rng for j in rng
    ]
    fam["(b)"] = [simplify(P[i][j][l] + ip.dw(s[i][j], l)) for i in rng for j in rng for l in rng]
    fam["(c)"] = [
        simplify(
            sum_exprs(psi[l][m] * ip.dw(s[i][j], m) for m in rng)
            + 0.5 * sum_exprs(
                s[m][i] * ip.c(j, l, m) + s[m][j] * ip.c(i, l, m) - s[m][l] * ip.d2gamma[i][j][m] for m in rng
            )
            + Q[i][j][l]
        )
        for i in rng for j in rng for l in rng
    ]
    fam["s symmetric"] = [simplify(s[i][j] - s[j][i]) for i, j in combinations(rng, 2)]
    for nm, T in (("P", P), ("Q", Q)):
        fam[f"{nm} symmetric"] = [
            simplify(T[i][j][l] - T[a][b][c])
            for i in rng for j in rng for l in rng
            for (a, b, c) in ((j, i, l), (i, l, j))
        ]
    return s, fam


def sigma_residual(ip, ext, spec=None):
    """Check an extended section against the pulled-back sigma system.

    Raises :class:`PreconditionFailed` (carrying the report) when the span of
    the ``omega^ij`` is not a differential ideal for generic symmetric ``s``.
    """
    spec = spec or SampleSpec()
    pre = ideal_precondition(ip, spec)
    if not all(f.passed for f in pre):
        rep = Report("sigma-check", pre, sampling=spec.describe(ip.chart), verdict="precondition failed")
        raise PreconditionFailed("the omega^ij do not generate a differential ideal for generic symmetric s", rep)
    chart = ip.chart
    pts = sample_points(chart, spec)
    s, fam = sigma_families(ip, ext)
    fams = list(pre)
    for name, exprs in fam.items():
        fams.append(zero_family(name, exprs, chart, spec, pts))
    fams.append(det_family("nondegeneracy", s, chart, spec, pts))
    return Report("sigma-check", fams, sampling=spec.describe(chart))


def sigma_fiber_names(n):
    sep = "_" if n > 9 else ""
    s = [f"s{i + 1}{sep}{j + 1}" for i in range(n) for j in range(n)]
    P = [f"P{i + 1}{sep}{j + 1}{sep}{l + 1}" for i in range(n) for j in range(n) for l in range(n)]
    Q = [f"Q{i + 1}{sep}{j + 1}{sep}{l + 1}" for i in range(n) for j in range(n) for l in range(n)]
    return s, P, Q


def sigma_system(ip):
    """The prolongation carrying the sigma forms and the forms themselves.

    Returns ``(prolongation, {(i, j): sigma_ij})``.  The fiber has ``n^2 + 2 n^3``
    coordinates, so this is meant for small ``n``.
    """
    from .prolong import prolong_trivial

    n = ip.n
    sn, Pn, Qn = sigma_fiber_names(n)
    Pr = prolong_trivial(ip.algebroid, sn + Pn + Qn)
    r = ip.algebroid.rank

    def lift(form):
        return Form(Pr, form.degree, form.coeffs)

    G, Psi, Theta = ip.coframe()
    G, Psi, Theta = lift(G), [lift(f) for f in Psi], [lift(f) for f in Theta]
    s = [[Var(sn[i * n + j]) for j in range(n)] for i in range(n)]
    P = [[[Var(Pn[(i * n + j) * n + l]) for l in range(n)] for j in range(n)] for i in range(n)]
    Q = [[[Var(Qn[(i * n + j) * n + l]) for l in range(n)] for j in range(n)] for i in range(n)]
    rng = range(n)
    forms = {}
    for i in rng:
        for j in rng:
            f = Form(Pr, 1, {(r + i * n + j,): ONE})
            f = f - G.scale(simplify(sum_exprs(s[m][i] * ip.lam[j][m] + s[m][j] * ip.lam[i][m] for m in rng)))
            for l in rng:
                f = f + Psi[l].scale(P[i][j][l])
                coef = 0.5 * sum_exprs(
                    s[m][i] * ip.c(j, l, m) + s[m][j] * ip.c(i, l, m) - s[m][l] * ip.d2gamma[i][j][m] for m in rng
                ) + Q[i][j][l]
                f = f + Theta[l].scale(simplify(coef))
            forms[(i, j)] = f
    return Pr, forms


def section_values(ip, ext):
    """Fiber values of an extended section keyed by fiber coordinate name."""
    n = ip.n
    s, P, Q = _ext_parse(ip, ext)
    sn, Pn, Qn = sigma_fiber_names(n)
    out = {}
    for i in range(n):
        for j in range(n):
            out[sn[i * n + j]] = s[i][j]
            for l in range(n):
                out[Pn[(i * n + j) * n + l]] = P[i][j][l]
                out[Qn[(i * n + j) * n + l]] = Q[i][j][l]
    return out


def sigma_pullback_check(ip, ext, spec=None):
    """Pull the sigma forms back through the full prolongation and compare with the families.

    On the adapted coframe the pulled-back ``sigma_ij`` has coefficient (a) on
    ``G^0``, (b) on ``Psi^l`` and (c) on ``Theta^l``.
    """
    from .prolong import pullback

    spec = spec or SampleSpec()
    n = ip.n
    Pr, forms = sigma_system(ip)
    section = section_values(ip, ext)
    _, fam = sigma_families(ip, ext)
    change = ip.adapted()
    diffs = []
    for i in range(n):
        for j in range(n):
            coeffs = change.form_to_new(pullback(Pr, section, forms[(i, j)]))
            get = lambda a: coeffs.get((a,), ZERO)  # noqa: E731
            diffs.append(simplify(get(0) - fam["(a)"][i * n + j]))
            for l in range(n):
                diffs.append(simplify(get(1 + l) - fam["(b)"][(i * n + j) * n + l]))
                diffs.append(simplify(get(1 + n + l) - fam["(c)"][(i * n + j) * n + l]))
    fams = [zero_family("pullback vs families", diffs, ip.chart, spec)]
    return Report("sigma-pullback", fams, sampling=spec.describe(ip.chart))


# ---------------------------------------------------------------- Euler-Poincare


def euler_poincare_residual(ip, lagrangian):
    """``V_j = gamma(dl/dw^j) - C^k_ij (dl/dw^k) w^i`` for a reduced Lagrangian."""
    l = ip.chart.parse(lagrangian) if isinstance(lagrangian, str) else as_expr(lagrangian)
    n = ip.n
    grad = [ip.dw(l, k) for k in range(n)]
    return [
        simplify(ip.gamma_op(grad[j]) - sum_exprs(
            ip.c(i, j, k) * grad[k] * ip.w[i] for i in range(n) for k in range(n)
        ))
        for j in range(n)
    ]


def hessian_multiplier(ip, lagrangian):
    l = ip.chart.parse(lagrangian) if isinstance(lagrangian, str) else as_expr(lagrangian)
    n = ip.n
    return [[ip.dw(ip.dw(l, i), j) for j in range(n)] for i in range(n)]


def extract_mu_nu(ip, lagrangian, spec=None):
    """Split the Euler-Poincare residuals as ``V_j = mu_ij w^i + nu_j``.

    Returns ``(mu, nu, affineness)``; raises :class:`NotAffine` when some
    second ``w``-derivative of ``V`` is nonzero on the samples.
    """
    spec = spec or SampleSpec()
    n = ip.n
    V = euler_poincare_residual(ip, lagrangian)
    second = [simplify(ip.dw(ip.dw(V[j], a), b)) for j in range(n) for a in range(n) for b in range(a, n)]
    fam = zero_family("affine in w", second, ip.chart, spec)
    if not fam.passed:
        err = NotAffine(f"Euler-Poincare residuals are not affine in w (worst second derivative {fam.max_residual:.3g})")
        err.family = fam
        raise err
    at0 = {x: ZERO for x in ip.wnames}
    mu = [[simplify(substitute(ip.dw(V[j], i), at0)) for j in range(n)] for i in range(n)]
    nu = [simplify(substitute(V[j], at0)) for j in range(n)]
    return mu, nu, fam


# ---------------------------------------------------------------- cohomology


@dataclass
class CohomologyProblem:
    C: object
    mu: list
    nu: list
    t_interval: tuple = (0.0, 1.0)


def coboundary_matrix(C):
    """Rows ``(i, j)`` (all ordered pairs), columns ``k``: ``C^k_ij``."""
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    return C.reshape(n * n, n)


def exact_rank(M):
    """Rank over the rationals of a float matrix (entries taken exactly)."""
    rows = [[Fraction(float(x)) for x in row] for row in np.asarray(M)]
    if not rows:
        return 0
    ncols = len(rows[0])
    rank = 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        pv = rows[rank][col]
        for r in range(len(rows)):
            if r != rank and rows[r][col] != 0:
                f = rows[r][col] / pv
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def _chop(v, eps=1e-13):
    return 0.0 if abs(v) < eps else float(v)


def cohomology_obstruction(prob, spec=None):
    """Decide whether a gauge term absorbs ``(mu, nu)``.

    Stage one fits ``mu = d theta`` by least squares (the H^2 class), stage two
    asks whether ``nu + d theta_p/dt`` lies in the constant kernel of ``d``
    (the H^1 class).
    """
    spec = spec or SampleSpec()
    C = check_structure_constants(prob.C)
    n = C.shape[0]
    chart = Chart(("t",), {"t": tuple(prob.t_interval)})

    def conv(x):
        return chart.parse(x) if isinstance(x, str) else as_expr(x)

    mu = [[conv(x) for x in row] for row in prob.mu]
    nu = [conv(x) for x in prob.nu]
    if len(mu) != n or any(len(r) != n for r in mu) or len(nu) != n:
        raise ShapeMismatch(f"mu must be {n}x{n} and nu must have {n} entries")
    pts = sample_points(chart, spec)
    c = lambda i, j, k: ZERO if C[i, j, k] == 0 else Const(C[i, j, k])  # noqa: E731
    rng = range(n)
    coh1 = [
        simplify(differentiate(mu[i][j], "t") + sum_exprs(c(i, j, l) * nu[l] for l in rng))
        for i in rng for j in rng
    ]
    coh2 = [
        simplify(sum_exprs(
            mu[i][l] * c(j, k, l) + mu[j][l] * c(k, i, l) + mu[k][l] * c(i, j, l) for l in rng
        ))
        for i, j, k in combinations(rng, 3)
    ]
    D = coboundary_matrix(C)
    pinv = np.linalg.pinv(D) if D.size else np.zeros((n, 0))
    flat_mu = [mu[i][j] for i in rng for j in rng]
    theta = [
        simplify(sum_exprs(Const(_chop(pinv[k, r])) * flat_mu[r] for r in range(n * n) if _chop(pinv[k, r])))
        for k in rng
    ]
    h2 = [
        simplify(mu[i][j] - sum_exprs(theta[k] * c(i, j, k) for k in rng)) for i in rng for j in rng
    ]
    xi = [simplify(nu[k] + differentiate(theta[k], "t")) for k in rng]
    proj = pinv @ D if D.size else np.zeros((n, n))
    h1 = [simplify(sum_exprs(Const(_chop(proj[a, b])) * xi[b] for b in rng if _chop(proj[a, b]))) for a in rng]
    anti = [simplify(mu[i][j] + mu[j][i]) for i in rng for j in range(i, n)]
    fams = [
        zero_family("mu antisymmetric", anti, chart, spec, pts),
        zero_family("coh: mu' + C nu", coh1, chart, spec, pts),
        zero_family("coh: cyclic mu C", coh2, chart, spec, pts),
        zero_family("H2: mu = d theta", h2, chart, spec, pts),
        zero_family("H1: nu + theta' in ker d", h1, chart, spec, pts),
    ]
    _, sv, vt = np.linalg.svd(D) if D.size else (None, np.zeros(0), np.eye(n))
    tol = max(D.shape) * (sv[0] if sv.size else 0.0) * 1e-10
    null = [list(map(_chop, vt[i])) for i in range(n) if i >= len(sv) or sv[i] <= tol]
    rep = Report(
        "cohomology",
        fams,
        details={
            "d_rank": exact_rank(D),
            "theta_particular": [str(x) for x in theta],
            "kernel_of_d": null,
        },
        sampling=spec.describe(chart),
    )
    rep.verdict = "invariant Lagrangian obstruction vanishes" if rep.passed else "obstruction present"
    return rep
