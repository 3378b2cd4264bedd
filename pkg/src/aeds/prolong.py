"""Prolongation of an algebroid along a trivial fibration and pullbacks by sections.

The prolonged chart is the base chart followed by the fiber coordinates; the
prolonged basis is the base basis followed by one vertical element per fiber
coordinate.
"""

from __future__ import annotations

from .algebroid import Algebroid, Form, _accumulate, _finish, wedge_all
from .errors import AlgebroidMismatch, ShapeMismatch
from .expr import ONE, ZERO, as_expr, differentiate, simplify, substitute, sum_exprs


class ConnectionData:
    """Horizontal lifts ``h_i = d/dx^i + coeffs[mu][i] d/dy^mu``."""

    def __init__(self, coeffs):
        self.coeffs = [[as_expr(c) for c in row] for row in coeffs]


class ProlongedAlgebroid(Algebroid):
    def __init__(self, base, fiber, chart, anchor, structure, basis, connection=None, name=""):
        super().__init__(chart, anchor, structure, basis, name=name)
        self.base = base
        self.fiber = tuple(fiber)
        self.connection = connection

    @property
    def base_rank(self):
        return self.base.rank

    def fiber_index(self, mu):
        return self.base.rank + mu


def _labels(base, fiber, fiber_basis):
    labels = tuple(fiber_basis) if fiber_basis else tuple(f"E{y}" for y in fiber)
    if len(labels) != len(fiber):
        raise ShapeMismatch("one basis label is needed per fiber coordinate")
    return base.basis + labels


def prolong_trivial(A, fiber, fiber_basis=None, domain=None):
    fiber = tuple(fiber)
    chart = A.chart.extend(fiber, domain)
    r, m, k = A.rank, A.chart.dim, len(fiber)
    anchor = [list(A.anchor[a]) + [ZERO] * k for a in range(r)]
    for mu in range(k):
        anchor.append([ZERO] * m + [ONE if nu == mu else ZERO for nu in range(k)])
    n = r + k
    structure = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
    for a in range(r):
        for b in range(r):
            for c in range(r):
                structure[a][b][c] = A.structure[a][b][c]
    return ProlongedAlgebroid(A, fiber, chart, anchor, structure, _labels(A, fiber, fiber_basis),
                              name=f"prolongation of {A.name or 'algebroid'}")


def connection_curvature(A, fiber, conn, chart):
    """``K[mu][i][j] = h_i(A^mu_j) - h_j(A^mu_i)``."""
    base = A.chart.coordinates
    k = len(fiber)

    def h(i, f):
        terms = [differentiate(f, base[i])]
        for mu in range(k):
            terms.append(conn.coeffs[mu][i] * differentiate(f, fiber[mu]))
        return sum_exprs(terms)

    m = len(base)
    return [
        [[simplify(h(i, conn.coeffs[mu][j]) - h(j, conn.coeffs[mu][i])) for j in range(m)] for i in range(m)]
        for mu in range(k)
    ]


def prolong_connection(A, fiber, conn, fiber_basis=None, domain=None):
    fiber = tuple(fiber)
    chart = A.chart.extend(fiber, domain)
    if not isinstance(conn, ConnectionData):
        conn = ConnectionData(conn)
    r, m, k = A.rank, A.chart.dim, len(fiber)
    if len(conn.coeffs) != k or any(len(row) != m for row in conn.coeffs):
        raise ShapeMismatch(f"connection needs {k}x{m} coefficients")
    anchor = []
    for a in range(r):
        vert = [simplify(sum_exprs(A.anchor[a][i] * conn.coeffs[nu][i] for i in range(m))) for nu in range(k)]
        anchor.append(list(A.anchor[a]) + vert)
    for mu in range(k):
        anchor.append([ZERO] * m + [ONE if nu == mu else ZERO for nu in range(k)])
    K = connection_curvature(A, fiber, conn, chart)
    n = r + k
    structure = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
    for a in range(r):
        for b in range(r):
            for c in range(r):
                structure[a][b][c] = A.structure[a][b][c]
            for mu in range(k):
                structure[a][b][r + mu] = simplify(sum_exprs(
                    A.anchor[a][i] * A.anchor[b][j] * K[mu][i][j]
                    for i in range(m) for j in range(m)
                ))
        for mu in range(k):
            for nu in range(k):
                N = simplify(-sum_exprs(
                    A.anchor[a][i] * differentiate(conn.coeffs[nu][i], fiber[mu]) for i in range(m)
                ))
                structure[a][r + mu][r + nu] = N
                structure[r + mu][a][r + nu] = simplify(-N)
    return ProlongedAlgebroid(A, fiber, chart, anchor, structure, _labels(A, fiber, fiber_basis),
                              connection=conn, name=f"prolongation of {A.name or 'algebroid'}")


def section_exprs(P, section):
    """Normalise a section given as a mapping or sequence to a list of Exprs."""
    if isinstance(section, dict):
        missing = [y for y in P.fiber if y not in section]
        if missing:
            raise ShapeMismatch(f"section is missing fiber coordinates {missing}")
        vals = [section[y] for y in P.fiber]
    else:
        vals = list(section)
        if len(vals) != len(P.fiber):
            raise ShapeMismatch(f"section needs {len(P.fiber)} components")
    vals = [P.base.chart.parse(v) if isinstance(v, str) else as_expr(v) for v in vals]
    return vals


def pulled_vertical(P, section):
    """Pullback of each vertical dual element, as components on the base basis."""
    ybar = section_exprs(P, section)
    A = P.base
    subs = dict(zip(P.fiber, ybar))
    rows = []
    for mu in range(len(P.fiber)):
        comps = []
        for a in range(A.rank):
            v = A.apply_basis_anchor(a, ybar[mu])
            if P.connection is not None:
                hor = sum_exprs(A.anchor[a][i] * P.connection.coeffs[mu][i] for i in range(A.chart.dim))
                v = v - substitute(hor, subs)
            comps.append(simplify(v))
        rows.append(comps)
    return rows


def pullback(P, section, form):
    """Pull a form on the prolongation back along ``x -> (x, section(x))``."""
    if form.algebroid is not P:
        raise AlgebroidMismatch("form does not live on this prolongation")
    A = P.base
    ybar = section_exprs(P, section)
    subs = dict(zip(P.fiber, ybar))
    vert = pulled_vertical(P, section)
    ones = []
    for idx in range(P.rank):
        if idx < A.rank:
            ones.append(Form(A, 1, {(idx,): ONE}))
        else:
            comps = vert[idx - A.rank]
            ones.append(Form(A, 1, {(a,): c for a, c in enumerate(comps)}))
    acc = {}
    for key, coeff in form.coeffs.items():
        c = simplify(substitute(coeff, subs))
        if c is ZERO:
            continue
        if not key:
            _accumulate(acc, (), c)
            continue
        piece = wedge_all([ones[i] for i in key])
        for k2, v in piece.coeffs.items():
            _accumulate(acc, k2, c * v)
    return _finish(A, form.degree, acc)
