"""Exterior differential systems: ideals of forms, closure and integral sections."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .algebroid import Form, exterior_derivative, wedge
from .errors import DegreeError, ShapeMismatch
from .expr import ONE, ZERO, differentiate, simplify, substitute, sum_exprs
from .prolong import section_exprs
from .report import Report
from .sampling import Family, SampleSpec, evaluate_many, sample_points, zero_family


@dataclass
class IdealSpec:
    algebroid: object
    generators: list
    names: list = field(default_factory=list)
    closure: str = "differential"

    def __post_init__(self):
        for g in self.generators:
            if g.algebroid is not self.algebroid:
                raise ShapeMismatch("every generator must live on the ideal's algebroid")
        if not self.names:
            self.names = [f"g{k + 1}" for k in range(len(self.generators))]
        if len(self.names) != len(self.generators):
            raise ShapeMismatch("one name per generator")
        if self.closure not in ("algebraic", "differential"):
            raise ShapeMismatch(f"closure must be 'algebraic' or 'differential', got {self.closure!r}")


def _span_columns(generators, degree):
    """Forms ``e^J ^ g`` spanning the degree-``degree`` part of the algebraic ideal."""
    cols = []
    for g in generators:
        d = degree - g.degree
        if d < 0:
            continue
        A = g.algebroid
        for J in combinations(range(A.rank), d):
            mono = Form(A, d, {J: ONE})
            piece = wedge(mono, g) if d else g
            if piece.coeffs:
                cols.append(piece)
    return cols


def _span_residuals(columns, target, points, chart, spec):
    """Per-point distance from ``target`` to the span of ``columns``."""
    A = target.algebroid
    keys = list(combinations(range(A.rank), target.degree))
    row = {k: i for i, k in enumerate(keys)}
    exprs = []
    slots = []
    for form in columns + [target]:
        entries = []
        for k, v in form.coeffs.items():
            entries.append((row[k], len(exprs)))
            exprs.append(v)
        slots.append(entries)
    values = evaluate_many(exprs, chart, points)
    npts = len(points)
    M = np.zeros((npts, len(keys), len(columns)))
    for j, entries in enumerate(slots[:-1]):
        for r, e in entries:
            M[:, r, j] = values[:, e]
    v = np.zeros((npts, len(keys)))
    for r, e in slots[-1]:
        v[:, r] = values[:, e]
    norms = np.linalg.norm(v, axis=1)
    if not columns:
        return norms, norms
    U, S, _ = np.linalg.svd(M, full_matrices=False)
    smax = S[:, :1] if S.shape[1] else np.zeros((npts, 1))
    cutoff = np.maximum(max(M.shape[1], M.shape[2]) * smax * 1e-10, spec.tol_abs)
    keep = S > cutoff
    coords = np.einsum("pri,pr->pi", U, v) * keep
    proj = np.einsum("pri,pi->pr", U, coords)
    return np.linalg.norm(v - proj, axis=1), norms


def ideal_membership(generators, form, spec=None, chart=None, name="membership"):
    """Is ``form`` pointwise in the algebraic ideal generated by ``generators``?"""
    spec = spec or SampleSpec()
    A = form.algebroid
    chart = chart or A.chart
    points = sample_points(chart, spec)
    cols = _span_columns(generators, form.degree)
    resid, norms = _span_residuals(cols, form, points, chart, spec)
    ok = resid <= spec.tol_abs + spec.tol_rel * norms
    p = int(np.argmax(resid))
    return Family(
        name,
        float(resid.max()),
        {c: float(points[p, i]) for i, c in enumerate(chart.coordinates)},
        bool(ok.all()),
        len(cols),
    )


def is_differential_ideal(ideal, spec=None):
    """Membership of every ``delta g`` in the algebraic ideal of the generators."""
    spec = spec or SampleSpec()
    A = ideal.algebroid
    fams = []
    for name, g in zip(ideal.names, ideal.generators):
        dg = exterior_derivative(g)
        fams.append(ideal_membership(ideal.generators, dg, spec, A.chart, name=f"closure[{name}]"))
    return Report(
        "ideal-check",
        fams,
        details={"generators": {n: g.to_str() for n, g in zip(ideal.names, ideal.generators)}},
        sampling=spec.describe(A.chart),
    )


def _pfaffian(P, ideal):
    for name, g in zip(ideal.names, ideal.generators):
        if g.degree != 1:
            raise DegreeError(f"generator {name} has degree {g.degree}; integral checks need 1-forms")
    if ideal.algebroid is not P:
        raise ShapeMismatch("the ideal must live on the given prolongation")


def integral_residual(P, ideal, section, spec=None):
    """Residuals ``theta_a(x, y(x)) + rho_a(y^mu) varpi_mu(x, y(x))`` per generator and base index.

    The vertical part is corrected by the connection when the prolongation
    carries one.
    """
    spec = spec or SampleSpec()
    _pfaffian(P, ideal)
    A = P.base
    ybar = section_exprs(P, section)
    subs = dict(zip(P.fiber, ybar))
    fams = []
    for name, g in zip(ideal.names, ideal.generators):
        res = []
        for a in range(A.rank):
            terms = [g.coefficient((a,))]
            for mu, y in enumerate(P.fiber):
                vm = g.coefficient((A.rank + mu,))
                if vm is ZERO:
                    continue
                dy = A.apply_basis_anchor(a, ybar[mu])
                if P.connection is not None:
                    dy = dy - sum_exprs(A.anchor[a][i] * P.connection.coeffs[mu][i] for i in range(A.chart.dim))
                terms.append(dy * vm)
            res.append(simplify(substitute(sum_exprs(terms), subs)))
        fams.append(zero_family(f"integral[{name}]", res, A.chart, spec))
    return Report("integral-check", fams, sampling=spec.describe(A.chart))


def dependency_residual(P, ideal, section, spec=None):
    """Compatibility residuals of the first-order system defined by the generators."""
    spec = spec or SampleSpec()
    _pfaffian(P, ideal)
    if P.connection is not None:
        raise ShapeMismatch("dependency residuals are defined for trivial prolongations only")
    A = P.base
    ybar = section_exprs(P, section)
    subs = dict(zip(P.fiber, ybar))
    k = len(P.fiber)
    Xy = [[A.apply_basis_anchor(a, ybar[mu]) for mu in range(k)] for a in range(A.rank)]

    def Y(a, f):
        terms = [A.apply_basis_anchor(a, f)]
        for nu, y in enumerate(P.fiber):
            d = differentiate(f, y)
            if d is not ZERO:
                terms.append(Xy[a][nu] * d)
        return sum_exprs(terms)

    fams = []
    for name, g in zip(ideal.names, ideal.generators):
        theta = [g.coefficient((a,)) for a in range(A.rank)]
        varpi = [g.coefficient((A.rank + mu,)) for mu in range(k)]
        res = []
        for a, b in combinations(range(A.rank), 2):
            terms = [-Y(a, theta[b]), Y(b, theta[a])]
            for mu in range(k):
                terms.append(-Xy[b][mu] * Y(a, varpi[mu]))
                terms.append(Xy[a][mu] * Y(b, varpi[mu]))
            for c in range(A.rank):
                L = A.structure[a][b][c]
                if L is not ZERO:
                    terms.append(L * theta[c])
            res.append(simplify(substitute(sum_exprs(terms), subs)))
        fams.append(zero_family(f"dependency[{name}]", res, A.chart, spec))
    return Report("dependency", fams, sampling=spec.describe(A.chart))


def form_residual_family(name, form, spec, chart=None, required=True):
    """All coefficients of ``form`` vanish on the sample grid."""
    chart = chart or form.algebroid.chart
    return zero_family(name, list(form.coeffs.values()), chart, spec, required=required)
