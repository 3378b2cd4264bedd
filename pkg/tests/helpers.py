"""Shared fixtures-as-functions for the test modules."""

import numpy as np

from aeds import config
from aeds.algebroid import Algebroid, contract
from aeds.expr import Chart, Var
from aeds.ip import build_ip, structure_constants_from_entries
from aeds.sampling import SampleSpec, zero_family

from conftest import EXAMPLES

SO3 = [(1, 2, 3, 1.0), (2, 3, 1, 1.0), (3, 1, 2, 1.0)]
HEIS = [(1, 3, 2, 1.0)]


def so3(gamma=("0", "0", "0")):
    return build_ip(3, structure_constants_from_entries(3, SO3), list(gamma))


def heisenberg(gamma=("0", "0", "0")):
    return build_ip(3, structure_constants_from_entries(3, HEIS), list(gamma))


def r1(gamma=("0",)):
    return build_ip(1, np.zeros((1, 1, 1)), list(gamma))


def action_algebroid():
    """Vector fields d/dx, x d/dy, d/dy on the plane: a rank-3 algebroid with non-constant anchor."""
    chart = Chart(("x", "y"))
    anchor = [["1", "0"], ["0", "x"], ["0", "1"]]
    L = [[["0"] * 3 for _ in range(3)] for _ in range(3)]
    L[0][1][2] = "1"
    L[1][0][2] = "-1"
    return Algebroid(chart, [[chart.parse(a) for a in row] for row in anchor],
                     [[[chart.parse(v) for v in t] for t in s] for s in L], ("a", "b", "c"))


def load(name):
    return config.load(EXAMPLES / f"{name}.toml")


BUNDLED = ["semilinear", "radial-atiyah", "radial-manifold", "r1_canonical", "heisenberg", "so3_canonical"]


def carrier(name):
    prob = load(name)
    return prob.carrier() if prob.has("prolongation") else prob.algebroid()


def sections_equal(s1, s2, spec=None):
    spec = spec or SampleSpec()
    A = s1.algebroid
    return zero_family("eq", [a - b for a, b in zip(s1.components, s2.components)], A.chart, spec)


def forms_equal(f1, f2, spec=None):
    spec = spec or SampleSpec()
    diff = f1 - f2
    return zero_family("eq", list(diff.coeffs.values()), f1.algebroid.chart, spec)


def intrinsic_lie(section, form, secs):
    """``(L_s w)(s1..sq)`` from anchor and bracket only."""
    from aeds.algebroid import bracket

    A = form.algebroid
    out = A.apply_anchor(section, contract(form, secs))
    for i in range(len(secs)):
        moved = list(secs)
        moved[i] = bracket(section, secs[i])
        out = out - contract(form, moved)
    return out


def wvars(n):
    return [Var(f"w{i + 1}") for i in range(n)]
