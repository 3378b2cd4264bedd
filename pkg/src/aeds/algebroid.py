"""Lie algebroids in local coordinates and their exterior calculus.

An algebroid is given on a chart by anchor components ``anchor[a][i]``
(the ``i``-th coordinate component of the image of basis section ``a``) and
structure functions ``structure[a][b][c]``, the ``c``-component of the
bracket of basis sections ``a`` and ``b``.

Forms are stored by their coefficients on increasing index tuples of the dual
basis and evaluate with the determinant convention, so ``e^1^e^2`` takes the
value 1 on ``(e_1, e_2)``.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .errors import AlgebroidMismatch, ArityMismatch, DegreeZero, ShapeMismatch
from .expr import (
    ONE,
    ZERO,
    Chart,
    Const,
    Var,
    as_expr,
    differentiate,
    simplify,
    sum_exprs,
)
from .report import Report
from .sampling import SampleSpec, evaluate_many, sample_points, zero_family


class Algebroid:
    def __init__(self, chart, anchor, structure, basis=None, name=""):
        self.chart = chart
        self.rank = len(anchor)
        r, m = self.rank, chart.dim
        self.anchor = [[as_expr(x) for x in row] for row in anchor]
        if any(len(row) != m for row in self.anchor):
            raise ShapeMismatch(f"anchor rows must have {m} entries")
        if len(structure) != r or any(len(s) != r or any(len(t) != r for t in s) for s in structure):
            raise ShapeMismatch(f"structure functions must form a {r}x{r}x{r} array")
        self.structure = [[[as_expr(x) for x in t] for t in s] for s in structure]
        self.basis = tuple(basis) if basis is not None else tuple(f"e{a + 1}" for a in range(r))
        if len(self.basis) != r or len(set(self.basis)) != r:
            raise ShapeMismatch("basis labels must be distinct and match the rank")
        self.name = name
        self._dbasis = None

    def __repr__(self):
        return f"Algebroid({self.name or 'unnamed'}, rank={self.rank}, chart={self.chart.coordinates})"

    @property
    def coordinates(self):
        return self.chart.coordinates

    def index(self, label):
        return self.basis.index(label)

    def basis_section(self, a):
        comps = [ZERO] * self.rank
        comps[a] = ONE
        return Section(self, comps)

    def section(self, components):
        return Section(self, [as_expr(c) for c in components])

    def basis_form(self, a):
        return Form(self, 1, {(a,): ONE})

    def function(self, f):
        return Form(self, 0, {(): as_expr(f)})

    def form(self, degree, coeffs):
        return Form(self, degree, {tuple(k): as_expr(v) for k, v in coeffs.items()})

    def zero_form(self, degree):
        return Form(self, degree, {})

    def anchor_of(self, section):
        """Vector-field components of the anchor image of ``section``."""
        return [
            simplify(sum_exprs(section.components[a] * self.anchor[a][i] for a in range(self.rank)))
            for i in range(self.chart.dim)
        ]

    def apply_anchor(self, section, f):
        """``rho(section)(f)``."""
        f = as_expr(f)
        terms = []
        for i, c in enumerate(self.chart.coordinates):
            df = differentiate(f, c)
            if df is ZERO:
                continue
            for a in range(self.rank):
                if self.anchor[a][i] is not ZERO and section.components[a] is not ZERO:
                    terms.append(section.components[a] * self.anchor[a][i] * df)
        return simplify(sum_exprs(terms))

    def apply_basis_anchor(self, a, f):
        f = as_expr(f)
        terms = []
        for i, c in enumerate(self.chart.coordinates):
            if self.anchor[a][i] is ZERO:
                continue
            df = differentiate(f, c)
            if df is not ZERO:
                terms.append(self.anchor[a][i] * df)
        return simplify(sum_exprs(terms))

    def basis_differential(self, a):
        """``delta e^a`` as a 2-form."""
        if self._dbasis is None:
            self._dbasis = []
            for c in range(self.rank):
                coeffs = {}
                for a1, b1 in combinations(range(self.rank), 2):
                    L = self.structure[a1][b1][c]
                    if L is not ZERO:
                        coeffs[(a1, b1)] = simplify(-L)
                self._dbasis.append(Form(self, 2, coeffs))
        return self._dbasis[a]


def _same(a, b):
    if a is not b:
        raise AlgebroidMismatch(f"operands live on different algebroids: {a!r} vs {b!r}")


def sort_sign(seq):
    """Sign of the sorting permutation and the sorted tuple; ``(0, None)`` on repeats."""
    items = list(seq)
    sign = 1
    for i in range(1, len(items)):
        j = i
        while j > 0 and items[j - 1] > items[j]:
            items[j - 1], items[j] = items[j], items[j - 1]
            sign = -sign
            j -= 1
        if j > 0 and items[j - 1] == items[j]:
            return 0, None
    for i in range(1, len(items)):
        if items[i - 1] == items[i]:
            return 0, None
    return sign, tuple(items)


class Section:
    def __init__(self, algebroid, components):
        if len(components) != algebroid.rank:
            raise ShapeMismatch(f"section needs {algebroid.rank} components")
        self.algebroid = algebroid
        self.components = [as_expr(c) for c in components]

    def __repr__(self):
        labels = self.algebroid.basis
        parts = [f"({c})*{labels[a]}" for a, c in enumerate(self.components) if c is not ZERO]
        return "Section(" + (" + ".join(parts) or "0") + ")"

    def __add__(self, other):
        _same(self.algebroid, other.algebroid)
        return Section(self.algebroid, [simplify(x + y) for x, y in zip(self.components, other.components)])

    def __sub__(self, other):
        _same(self.algebroid, other.algebroid)
        return Section(self.algebroid, [simplify(x - y) for x, y in zip(self.components, other.components)])

    def __neg__(self):
        return Section(self.algebroid, [simplify(-x) for x in self.components])

    def scale(self, f):
        f = as_expr(f)
        return Section(self.algebroid, [simplify(f * x) for x in self.components])

    def __rmul__(self, f):
        return self.scale(f)

    def simplify(self):
        return Section(self.algebroid, [simplify(x) for x in self.components])


class Form:
    """Differential form on an algebroid, ``coeffs[(i1<...<iq)] = Expr``."""

    def __init__(self, algebroid, degree, coeffs):
        self.algebroid = algebroid
        self.degree = degree
        clean = {}
        for key, val in coeffs.items():
            key = tuple(key)
            if len(key) != degree:
                raise ShapeMismatch(f"index {key} does not match degree {degree}")
            sign, skey = sort_sign(key)
            if sign == 0:
                continue
            if any(k < 0 or k >= algebroid.rank for k in skey):
                raise ShapeMismatch(f"index {key} out of range for rank {algebroid.rank}")
            val = as_expr(val)
            if sign < 0:
                val = -val
            if skey in clean:
                val = clean[skey] + val
            clean[skey] = val
        self.coeffs = {k: v for k, v in clean.items() if v is not ZERO}

    def __repr__(self):
        return f"Form(degree={self.degree}, {self.to_str()})"

    def to_str(self):
        labels = self.algebroid.basis
        if not self.coeffs:
            return "0"
        parts = []
        for key in sorted(self.coeffs):
            mono = "^".join(labels[k] for k in key) if key else "1"
            parts.append(f"({self.coeffs[key]}) {mono}")
        return " + ".join(parts)

    def coefficient(self, key):
        sign, skey = sort_sign(key)
        if sign == 0:
            return ZERO
        c = self.coeffs.get(skey, ZERO)
        return c if sign > 0 else simplify(-c)

    def __add__(self, other):
        _same(self.algebroid, other.algebroid)
        if self.degree != other.degree:
            raise ShapeMismatch("cannot add forms of different degree")
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = simplify(out[k] + v) if k in out else v
        return Form(self.algebroid, self.degree, out)

    def __neg__(self):
        return Form(self.algebroid, self.degree, {k: simplify(-v) for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f):
        f = as_expr(f)
        return Form(self.algebroid, self.degree, {k: simplify(f * v) for k, v in self.coeffs.items()})

    def __rmul__(self, f):
        return self.scale(f)

    def __xor__(self, other):
        return wedge(self, other)

    def simplify(self):
        return Form(self.algebroid, self.degree, {k: simplify(v) for k, v in self.coeffs.items()})

    def is_structurally_zero(self):
        return not self.coeffs


def _accumulate(out, key, val):
    out.setdefault(key, []).append(val)


def _finish(algebroid, degree, acc):
    return Form(algebroid, degree, {k: simplify(sum_exprs(v)) for k, v in acc.items()})


def wedge(a, b):
    _same(a.algebroid, b.algebroid)
    acc = {}
    for ka, va in a.coeffs.items():
        for kb, vb in b.coeffs.items():
            sign, key = sort_sign(ka + kb)
            if sign == 0:
                continue
            prod = va * vb
            _accumulate(acc, key, prod if sign > 0 else -prod)
    return _finish(a.algebroid, a.degree + b.degree, acc)


def wedge_all(forms):
    forms = list(forms)
    out = forms[0]
    for f in forms[1:]:
        out = wedge(out, f)
    return out


def exterior_derivative(form):
    A = form.algebroid
    acc = {}
    for key, coeff in form.coeffs.items():
        for a in range(A.rank):
            df = A.apply_basis_anchor(a, coeff)
            if df is ZERO:
                continue
            sign, k2 = sort_sign((a,) + key)
            if sign:
                _accumulate(acc, k2, df if sign > 0 else -df)
        for pos, idx in enumerate(key):
            dbase = A.basis_differential(idx)
            for (b, c), val in dbase.coeffs.items():
                sign, k2 = sort_sign(key[:pos] + (b, c) + key[pos + 1:])
                if sign == 0:
                    continue
                if pos % 2:
                    sign = -sign
                term = coeff * val
                _accumulate(acc, k2, term if sign > 0 else -term)
    return _finish(A, form.degree + 1, acc)


def interior_product(section, form):
    _same(section.algebroid, form.algebroid)
    if form.degree == 0:
        raise DegreeZero("interior product of a function is undefined")
    acc = {}
    for key, coeff in form.coeffs.items():
        for pos, idx in enumerate(key):
            comp = section.components[idx]
            if comp is ZERO:
                continue
            term = comp * coeff
            _accumulate(acc, key[:pos] + key[pos + 1:], term if pos % 2 == 0 else -term)
    return _finish(form.algebroid, form.degree - 1, acc)


def lie_derivative(section, form):
    """Cartan formula: ``delta i_s + i_s delta``."""
    _same(section.algebroid, form.algebroid)
    if form.degree == 0:
        return form.algebroid.function(form.algebroid.apply_anchor(section, form.coeffs.get((), ZERO)))
    return exterior_derivative(interior_product(section, form)) + interior_product(
        section, exterior_derivative(form)
    )


def bracket(s1, s2):
    _same(s1.algebroid, s2.algebroid)
    A = s1.algebroid
    comps = []
    for c in range(A.rank):
        terms = []
        for a in range(A.rank):
            if s1.components[a] is ZERO:
                continue
            for b in range(A.rank):
                L = A.structure[a][b][c]
                if L is ZERO or s2.components[b] is ZERO:
                    continue
                terms.append(s1.components[a] * s2.components[b] * L)
        terms.append(A.apply_anchor(s1, s2.components[c]))
        terms.append(-A.apply_anchor(s2, s1.components[c]))
        comps.append(simplify(sum_exprs(terms)))
    return Section(A, comps)


def contract(form, sections):
    """``form(s1, ..., sq)`` as an expression (sparse determinant expansion)."""
    sections = list(sections)
    if len(sections) != form.degree:
        raise ArityMismatch(f"{form.degree}-form evaluated on {len(sections)} sections")
    for s in sections:
        _same(s.algebroid, form.algebroid)
    if form.degree == 0:
        return form.coeffs.get((), ZERO)
    comps = [s.components for s in sections]
    terms = []

    def expand(row, cols, acc, sign):
        if row == len(comps):
            terms.append(acc if sign > 0 else -acc)
            return
        for pos, c in enumerate(cols):
            v = comps[row][c]
            if v is ZERO:
                continue
            expand(row + 1, cols[:pos] + cols[pos + 1:], v if acc is None else acc * v,
                   -sign if pos % 2 else sign)

    for key, coeff in form.coeffs.items():
        before = len(terms)
        expand(0, key, None, 1)
        for i in range(before, len(terms)):
            terms[i] = coeff * terms[i]
    return simplify(sum_exprs(terms))


def eval_form(form, sections, point):
    """Numeric value of ``form(s1, ..., sq)`` at ``point`` (determinant expansion)."""
    sections = list(sections)
    if len(sections) != form.degree:
        raise ArityMismatch(f"{form.degree}-form evaluated on {len(sections)} sections")
    for s in sections:
        _same(s.algebroid, form.algebroid)
    A = form.algebroid
    keys = list(form.coeffs)
    exprs = [form.coeffs[k] for k in keys]
    exprs += [c for s in sections for c in s.components]
    pts = np.array([[float(point[c]) for c in A.chart.coordinates]])
    vals = evaluate_many(exprs, A.chart, pts)[0]
    coeff_vals = vals[: len(keys)]
    comps = vals[len(keys):].reshape(len(sections), A.rank) if sections else np.zeros((0, A.rank))
    total = 0.0
    for key, cv in zip(keys, coeff_vals):
        if not key:
            total += cv
            continue
        m = comps[:, list(key)].T
        total += cv * float(np.linalg.det(m))
    return total


def validate(A, spec=None):
    """Antisymmetry, anchor compatibility and Jacobi residual families."""
    spec = spec or SampleSpec()
    r, chart = A.rank, A.chart
    L = A.structure
    anti = []
    for a in range(r):
        for b in range(a, r):
            for c in range(r):
                anti.append(simplify(L[a][b][c] + L[b][a][c]))
    compat = []
    for a, b in combinations(range(r), 2):
        for k in range(chart.dim):
            lhs = sum_exprs(A.anchor[g][k] * L[a][b][g] for g in range(r))
            rhs = A.apply_basis_anchor(a, A.anchor[b][k]) - A.apply_basis_anchor(b, A.anchor[a][k])
            compat.append(simplify(lhs - rhs))
    jac = []
    for a, b, c in combinations(range(r), 3):
        for d in range(r):
            terms = []
            for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
                terms.append(A.apply_basis_anchor(x, L[y][z][d]))
                for e in range(r):
                    if L[x][e][d] is not ZERO and L[y][z][e] is not ZERO:
                        terms.append(L[x][e][d] * L[y][z][e])
            jac.append(simplify(sum_exprs(terms)))
    pts = sample_points(chart, spec)
    fams = [
        zero_family("antisymmetry", anti, chart, spec, pts),
        zero_family("anchor_compatibility", compat, chart, spec, pts),
        zero_family("jacobi", jac, chart, spec, pts),
    ]
    return Report(
        "validate",
        fams,
        details={"rank": r, "coordinates": list(chart.coordinates), "basis": list(A.basis)},
        sampling=spec.describe(chart),
    )


def _probe_coeff(chart, seed):
    """A deterministic low-degree polynomial used as a generic coefficient."""
    xs = [Var(c) for c in chart.coordinates]
    m = len(xs)
    terms = [Const(1 + seed % 5)]
    for i, x in enumerate(xs):
        c = (seed + 2 * i) % 5 - 2
        if c:
            terms.append(Const(c) * x * xs[(i + seed) % m])
    return simplify(sum_exprs(terms))


def probe_form(A, degree, seed=0):
    keys = list(combinations(range(A.rank), degree))
    return Form(A, degree, {k: _probe_coeff(A.chart, seed + 3 * j) for j, k in enumerate(keys)})


def probe_section(A, a, seed=0):
    """``f e_a`` with a non-constant probe coefficient ``f``."""
    comps = [ZERO] * A.rank
    xs = A.chart.coordinates
    comps[a] = simplify(Const(1) + Const(seed % 3 + 1) * Var(xs[(a + seed) % len(xs)]))
    return Section(A, comps)


def intrinsic_differential(form, sections):
    """``delta form`` on ``sections`` by the invariant formula built from anchor and bracket."""
    sections = list(sections)
    A = form.algebroid
    p = form.degree
    terms = []
    for i, s in enumerate(sections):
        rest = sections[:i] + sections[i + 1:]
        val = contract(form, rest) if p else form.coeffs.get((), ZERO)
        v = A.apply_anchor(s, val)
        terms.append(v if i % 2 == 0 else -v)
    for i, j in combinations(range(len(sections)), 2):
        rest = [x for k, x in enumerate(sections) if k not in (i, j)]
        v = contract(form, [bracket(sections[i], sections[j])] + rest)
        terms.append(v if (i + j) % 2 == 0 else -v)
    return simplify(sum_exprs(terms))


def calculus_check(A, spec=None, max_degree=2):
    """``delta delta = 0``, the antiderivation law and the invariant formula on probe forms."""
    spec = spec or SampleSpec()
    chart = A.chart
    pts = sample_points(chart, spec)
    dd, anti, intr = [], [], []
    for p in range(0, max_degree + 1):
        if p > A.rank:
            break
        w = probe_form(A, p, seed=p)
        dw = exterior_derivative(w)
        if p + 2 <= A.rank:
            dd.extend(exterior_derivative(dw).coeffs.values())
        for idx in combinations(range(A.rank), p + 1):
            secs = [probe_section(A, a, seed=i + p) for i, a in enumerate(idx)]
            intr.append(simplify(contract(dw, secs) - intrinsic_differential(w, secs)))
    for p, q in ((0, 1), (1, 1)):
        if p + q + 1 > A.rank:
            continue
        a, b = probe_form(A, p, seed=5), probe_form(A, q, seed=9)
        lhs = exterior_derivative(wedge(a, b))
        da = exterior_derivative(a)
        rhs = wedge(da, b) + (wedge(a, exterior_derivative(b)) if p % 2 == 0 else -wedge(a, exterior_derivative(b)))
        anti.extend((lhs - rhs).coeffs.values())
    fams = [
        zero_family("delta delta", dd, chart, spec, pts),
        zero_family("antiderivation", anti, chart, spec, pts),
        zero_family("invariant formula", intr, chart, spec, pts),
    ]
    return Report("calculus", fams, details={"rank": A.rank}, sampling=spec.describe(chart))


def tangent_algebroid(chart, basis=None):
    """The tangent bundle with the coordinate frame."""
    m = chart.dim
    anchor = [[ONE if i == a else ZERO for i in range(m)] for a in range(m)]
    zeros = [[[ZERO] * m for _ in range(m)] for _ in range(m)]
    labels = basis or tuple(f"d{c}" for c in chart.coordinates)
    return Algebroid(chart, anchor, zeros, labels, name="tangent")


def invert_matrix(P):
    """Symbolic inverse by Gauss-Jordan elimination with constant pivots.

    Succeeds for matrices that are triangular with constant diagonal up to a
    row permutation; anything needing a non-constant pivot is rejected.
    """
    n = len(P)
    rows = [[as_expr(x) for x in row] + [ONE if i == j else ZERO for j in range(n)] for i, row in enumerate(P)]
    for col in range(n):
        pivot = None
        for r in range(col, n):
            v = rows[r][col]
            if type(v) is Const and v.value != 0.0:
                pivot = r
                break
        if pivot is None:
            raise ValueError("basis change is not triangular with constant pivots")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        pv = rows[col][col].value
        if pv != 1.0:
            rows[col] = [simplify(x / pv) for x in rows[col]]
        for r in range(n):
            if r == col:
                continue
            f = rows[r][col]
            if f is ZERO:
                continue
            rows[r] = [simplify(x - f * y) for x, y in zip(rows[r], rows[col])]
    return [row[n:] for row in rows]


class BasisChange:
    """New local basis ``new[a] = sum_b matrix[a][b] * old[b]``."""

    def __init__(self, algebroid, matrix, labels=None, dual_labels=None):
        r = algebroid.rank
        if len(matrix) != r or any(len(row) != r for row in matrix):
            raise ShapeMismatch(f"basis change must be {r}x{r}")
        self.algebroid = algebroid
        self.matrix = [[as_expr(x) for x in row] for row in matrix]
        self.inverse = invert_matrix(self.matrix)
        self.labels = tuple(labels) if labels else tuple(f"s{a + 1}" for a in range(r))
        self.dual_labels = tuple(dual_labels) if dual_labels else tuple(f"s^{a + 1}" for a in range(r))

    def sections(self):
        return [Section(self.algebroid, row) for row in self.matrix]

    def dual_forms(self):
        """New dual 1-forms written in the old dual basis."""
        r = self.algebroid.rank
        return [
            Form(self.algebroid, 1, {(b,): self.inverse[b][a] for b in range(r)})
            for a in range(r)
        ]

    def section_to_new(self, section):
        r = self.algebroid.rank
        return [
            simplify(sum_exprs(section.components[b] * self.inverse[b][a] for b in range(r)))
            for a in range(r)
        ]

    def section_from_new(self, comps):
        r = self.algebroid.rank
        comps = [as_expr(c) for c in comps]
        return Section(
            self.algebroid,
            [simplify(sum_exprs(comps[a] * self.matrix[a][b] for a in range(r))) for b in range(r)],
        )

    def form_to_new(self, form):
        """Coefficients of ``form`` on increasing tuples of the new dual basis."""
        secs = self.sections()
        out = {}
        for key in combinations(range(self.algebroid.rank), form.degree):
            v = simplify(contract(form, [secs[k] for k in key]))
            if v is not ZERO:
                out[key] = v
        return out

    def form_from_new(self, degree, coeffs):
        duals = self.dual_forms()
        total = self.algebroid.zero_form(degree)
        for key, val in coeffs.items():
            if degree == 0:
                piece = self.algebroid.function(val)
            else:
                piece = wedge_all([duals[k] for k in key]).scale(val)
            total = total + piece
        return total
