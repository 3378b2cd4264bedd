"""Polynomial-ansatz search for reduced multipliers.

The linear-in-``k`` Helmholtz conditions are collocated on a sample grid, the
null space is taken by SVD, and candidates drawn from it are re-verified
symbolically on a fresh grid before being accepted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .expr import ONE, ZERO, Const, Var, simplify, sum_exprs
from .ip import helmholtz_residuals
from .report import Report
from .sampling import SampleSpec, evaluate_many, sample_points

ROW_CAP = 4096
FOUND = "found"
ALL_SINGULAR = "nullspace nonempty but all singular"
EMPTY = "empty nullspace"


def monomials(nvars, degree):
    """Exponent tuples of total degree <= ``degree`` in graded-lex order."""
    out = []

    def rec(prefix, left, slots):
        if slots == 1:
            out.append(prefix + (left,))
            return
        for e in range(left, -1, -1):
            rec(prefix + (e,), left - e, slots - 1)

    for d in range(degree + 1):
        rec((), d, nvars)
    return out


@dataclass
class Ansatz:
    n: int
    degree: int
    variables: tuple
    monomials: list = field(init=False)
    pairs: list = field(init=False)

    def __post_init__(self):
        self.monomials = monomials(len(self.variables), self.degree)
        self.pairs = [(i, j) for i in range(self.n) for j in range(i, self.n)]

    @property
    def unknowns(self):
        return len(self.pairs) * len(self.monomials)

    def monomial_expr(self, exps):
        factors = [Var(v) ** e if e > 1 else Var(v) for v, e in zip(self.variables, exps) if e]
        out = ONE
        for f in factors:
            out = f if out is ONE else out * f
        return out

    def k_exprs(self, coeffs):
        n = self.n
        k = [[ZERO] * n for _ in range(n)]
        m = len(self.monomials)
        for p, (i, j) in enumerate(self.pairs):
            terms = []
            for q, exps in enumerate(self.monomials):
                c = float(coeffs[p * m + q])
                if c == 0.0:
                    continue
                mono = self.monomial_expr(exps)
                terms.append(Const(c) if mono is ONE else Const(c) * mono)
            k[i][j] = k[j][i] = simplify(sum_exprs(terms))
        return k


@dataclass
class CollocationSystem:
    matrix: np.ndarray
    tags: list
    points: np.ndarray
    ansatz: Ansatz


@dataclass
class MultiplierCandidate:
    coeffs: np.ndarray
    k: list
    report: Report
    min_det: float


def _monomial_values(ansatz, points):
    """Values and first derivatives of each monomial; shapes (p, m) and (p, v, m)."""
    mons = np.array(ansatz.monomials, dtype=int).reshape(len(ansatz.monomials), len(ansatz.variables))
    npts, nv = points.shape
    val = np.ones((npts, len(mons)))
    for v in range(nv):
        val *= points[:, v:v + 1] ** mons[:, v]
    der = np.zeros((npts, nv, len(mons)))
    for v in range(nv):
        e = mons[:, v]
        lowered = np.ones((npts, len(mons)))
        for u in range(nv):
            ex = mons[:, u] - (1 if u == v else 0)
            lowered *= points[:, u:u + 1] ** np.maximum(ex, 0)
        der[:, v, :] = np.where(e > 0, e * lowered, 0.0)
    return val, der


def build_collocation(ip, ansatz, spec=None):
    """Rows for the gamma, phi and antisymmetrised ``dk/dw`` families at every sample point."""
    spec = spec or SampleSpec()
    n = ip.n
    chart = ip.chart
    U = ansatz.unknowns
    count = max(4 * U, 1)
    pts = sample_points(chart, SampleSpec(spec.seed, count, spec.box, spec.tol_abs, spec.tol_rel))
    flat = [x for row in ip.lam for x in row] + [x for row in ip.phi for x in row] + list(ip.gamma)
    vals = evaluate_many(flat, chart, pts)
    lam = vals[:, : n * n].reshape(count, n, n)
    phi = vals[:, n * n: 2 * n * n].reshape(count, n, n)
    gam = vals[:, 2 * n * n:]
    mval, mder = _monomial_values(ansatz, pts)
    # gamma applied to each monomial
    gmon = mder[:, 0, :] + np.einsum("pi,pim->pm", gam, mder[:, 1:, :])
    M = len(ansatz.monomials)
    blocks, tags = [], []

    def add_family(name, inst, build):
        if not inst:
            return
        per = max(1, ROW_CAP // len(inst))
        npt = min(count, per)
        rows = np.zeros((npt, len(inst), U))
        for p, (a, b) in enumerate(ansatz.pairs):
            K = np.zeros((n, n))
            K[a, b] = K[b, a] = 1.0
            for q in range(M):
                rows[:, :, p * M + q] = build(K, q, npt)
        blocks.append(rows.reshape(npt * len(inst), U))
        tags.extend((name, idx, s) for s in range(npt) for idx in inst)

    gam_inst = [(i, j) for i in range(n) for j in range(i, n)]

    def gamma_rows(K, q, npt):
        kl = np.einsum("mj,pim->pij", K, lam[:npt]) + np.einsum("im,pjm->pij", K, lam[:npt])
        out = np.empty((npt, len(gam_inst)))
        for r, (i, j) in enumerate(gam_inst):
            out[:, r] = K[i, j] * gmon[:npt, q] - kl[:, i, j] * mval[:npt, q]
        return out

    phi_inst = list(combinations(range(n), 2))

    def phi_rows(K, q, npt):
        kp = np.einsum("mi,pjm->pij", K, phi[:npt])
        out = np.empty((npt, len(phi_inst)))
        for r, (i, j) in enumerate(phi_inst):
            out[:, r] = (kp[:, i, j] - kp[:, j, i]) * mval[:npt, q]
        return out

    dk_inst = [(i, j, l) for i, j in combinations(range(n), 2) for l in range(n)]

    def dk_rows(K, q, npt):
        out = np.empty((npt, len(dk_inst)))
        for r, (i, j, l) in enumerate(dk_inst):
            out[:, r] = K[j, l] * mder[:npt, 1 + i, q] - K[i, l] * mder[:npt, 1 + j, q]
        return out

    add_family("gamma_k", gam_inst, gamma_rows)
    add_family("phi", phi_inst, phi_rows)
    add_family("dk_dw", dk_inst, dk_rows)
    matrix = np.vstack(blocks) if blocks else np.zeros((0, U))
    return CollocationSystem(matrix, tags, pts, ansatz)


def nullspace(system):
    """Orthonormal null-space basis (rows) of the collocation matrix."""
    A = system.matrix if isinstance(system, CollocationSystem) else np.asarray(system, dtype=float)
    rows, cols = A.shape
    if cols == 0:
        return np.zeros((0, 0))
    if rows == 0:
        return np.eye(cols)
    _, S, Vt = np.linalg.svd(A, full_matrices=True)
    smax = S[0] if S.size else 0.0
    tau = max(rows, cols) * smax * 1e-10
    rank = int(np.sum(S > tau)) if smax > 0 else 0
    return Vt[rank:]


def _tidy(v):
    v = np.array(v, dtype=float)
    top = np.abs(v).max()
    if top == 0:
        return v
    v[np.abs(v) < 1e-12 * top] = 0.0
    v = v / v[np.argmax(np.abs(v))]
    # remove float noise around integers and simple fractions
    r = np.round(v, 12)
    return np.where(np.abs(r) < 1e-14, 0.0, r)


def _identity_vector(ansatz):
    """Coefficient vector of the constant identity matrix."""
    v = np.zeros(ansatz.unknowns)
    m = len(ansatz.monomials)
    for p, (i, j) in enumerate(ansatz.pairs):
        if i == j:
            v[p * m] = 1.0
    return v


def search_multiplier(ip, max_degree=2, spec=None, trials=32, min_degree=0, exhaustive=False):
    """Search polynomial multipliers of increasing degree.

    Trials per degree: the projection of the constant identity onto the null
    space, each basis vector, then ``trials`` seeded random combinations.
    Returns ``(candidates, report)`` with candidates in the order found.  A verdict other than ``found`` means no
    nonsingular candidate was found up to ``max_degree``; it is not a proof
    of nonexistence.
    """
    spec = spec or SampleSpec()
    variables = ("t",) + ip.wnames
    candidates = []
    best = 0.0
    per_degree = []
    verdict = EMPTY
    for d in range(min_degree, max_degree + 1):
        ansatz = Ansatz(ip.n, d, variables)
        system = build_collocation(ip, ansatz, spec)
        basis = nullspace(system)
        entry = {"degree": d, "unknowns": ansatz.unknowns, "rows": int(system.matrix.shape[0]),
                 "nullity": int(len(basis)), "trials": 0, "best_min_abs_det": 0.0}
        if len(basis):
            if verdict == EMPTY:
                verdict = ALL_SINGULAR
            rng = np.random.default_rng(spec.seed + 7919 * d)
            vecs = []
            ident = _identity_vector(ansatz)
            proj = basis.T @ (basis @ ident)
            if np.abs(proj).max() > 1e-8:
                vecs.append(proj)
            vecs += list(basis)
            if len(basis) > 1:
                vecs += [rng.standard_normal(len(basis)) @ basis for _ in range(trials)]
            for t, v in enumerate(vecs):
                coeffs = _tidy(v)
                k = ansatz.k_exprs(coeffs)
                rep = helmholtz_residuals(ip, k, spec.derive(1 + 1000 * d + t))
                md = rep.family("nondegeneracy").extra["min_abs_det"]
                entry["trials"] += 1
                entry["best_min_abs_det"] = max(entry["best_min_abs_det"], md)
                best = max(best, md)
                if rep.passed:
                    candidates.append(MultiplierCandidate(coeffs, k, rep, md))
        per_degree.append(entry)
        if candidates:
            verdict = FOUND
            if not exhaustive:
                break
    details = {
        "degrees": per_degree,
        "best_min_abs_det": best,
        "candidates": [
            {"k": [[str(x) for x in row] for row in c.k], "min_abs_det": c.min_det,
             "max_residual": c.report.max_residual}
            for c in candidates
        ],
    }
    fams = list(candidates[0].report.families) if candidates else []
    rep = Report("solve", fams, details=details, verdict=verdict, sampling=spec.describe(ip.chart))
    return candidates, rep
