import numpy as np
import pytest

from aeds.ip import build_ip, helmholtz_residuals
from aeds.sampling import SampleSpec
from aeds.solver import (
    ALL_SINGULAR,
    EMPTY,
    FOUND,
    Ansatz,
    build_collocation,
    monomials,
    nullspace,
    search_multiplier,
)

from helpers import heisenberg, r1, so3

SPEC = SampleSpec()


def test_monomials_graded():
    assert monomials(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert len(monomials(3, 2)) == 10


def test_nullspace_of_zero_matrix():
    assert nullspace(np.zeros((5, 3))).shape == (3, 3)
    assert nullspace(np.zeros((0, 4))).shape == (4, 4)


def test_nullspace_identity_block():
    M = np.zeros((3, 4))
    M[:3, :3] = np.eye(3)
    N = nullspace(M)
    assert N.shape == (1, 4)
    assert abs(abs(N[0, 3]) - 1.0) < 1e-14


def test_collocation_annihilates_known_multiplier():
    ip = r1()
    ans = Ansatz(1, 2, ("t", "w1"))
    sysm = build_collocation(ip, ans, SPEC)
    # 1 + w1^2 in the graded order (1, t, w1, t^2, t w1, w1^2)
    v = np.array([1, 0, 0, 0, 0, 1.0])
    assert np.abs(sysm.matrix @ v).max() < 1e-12
    bad = np.array([0, 1.0, 0, 0, 0, 0])
    assert np.abs(sysm.matrix @ bad).max() > 0.1


def test_r1_degree2_nullity():
    ip = r1()
    sysm = build_collocation(ip, Ansatz(1, 2, ("t", "w1")), SPEC)
    # any k(w1) works: 1, w1, w1^2
    assert len(nullspace(sysm)) == 3


def test_r1_search_finds_candidate():
    cands, rep = search_multiplier(r1(), 2, SPEC)
    assert rep.verdict == FOUND
    c = cands[0]
    assert c.min_det > 0.1
    assert helmholtz_residuals(r1(), c.k, SPEC.derive(99)).passed


def test_abelian_finds_identity():
    ip = build_ip(2, np.zeros((2, 2, 2)), ["0", "0"])
    cands, rep = search_multiplier(ip, 0, SPEC)
    assert rep.verdict == FOUND
    assert [[str(x) for x in row] for row in cands[0].k] == [["1", "0"], ["0", "1"]]


def test_so3_identity():
    cands, rep = search_multiplier(so3(), 0, SPEC)
    assert rep.verdict == FOUND


def test_heisenberg_all_singular():
    cands, rep = search_multiplier(heisenberg(), 0, SPEC)
    assert cands == []
    assert rep.verdict == ALL_SINGULAR
    assert rep.details["degrees"][0]["nullity"] >= 1
    assert rep.details["best_min_abs_det"] < 1e-9
    assert not rep.passed


def test_empty_nullspace():
    # gamma = w1 forces k' = 2 lambda k with lambda = -1/2, so k = c exp(-t): not polynomial
    ip = r1(("w1",))
    cands, rep = search_multiplier(ip, 1, SPEC)
    assert rep.verdict == EMPTY
    assert cands == []


def test_search_deterministic():
    a = search_multiplier(r1(), 2, SPEC)[1].to_dict()
    b = search_multiplier(r1(), 2, SPEC)[1].to_dict()
    assert a == b


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_candidates_hold_on_fresh_seeds(seed):
    cands, rep = search_multiplier(r1(), 2, SampleSpec(seed=seed))
    assert rep.verdict == FOUND
    for c in cands:
        assert helmholtz_residuals(r1(), c.k, SampleSpec(seed=1000 + seed)).passed
