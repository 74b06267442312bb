import numpy as np
import pytest
import scipy.sparse as sp

from c1vol.c1space import (AssumptionError, CSV_COLUMNS, brute_force_dim, build_space, c1_audit,
                           dims_report, gram_rank, select_mode)
from c1vol.splinecore import space_dims

from reference_values import THREEPATCH_DIMS


def two_patch_formula(p, r, k):
    n, n0, n1 = space_dims(p, r, k)
    return 2 * n * n * (n - 2) + n0 * n0 + n1 * n1


@pytest.fixture(scope="module")
def threepatch_basis(threepatch):
    return build_space(threepatch, 3, 1, 1)


def test_mode_selection(twopatch, threepatch, fourpatch, twocube):
    assert select_mode(twopatch) == "two-patch"
    assert select_mode(threepatch) == "subclassA"
    assert select_mode(fourpatch) == "subclassA"
    with pytest.raises(AssumptionError):
        build_space(twocube, 3, 1, 0)


def test_two_patch_example(twopatch):
    basis = build_space(twopatch, 3, 1, 0)
    assert basis.mode == "two-patch"
    assert basis.dim == 2 * 16 * 2 + 16 + 4 == 84


@pytest.mark.parametrize("p,L", [(3, 0), (5, 1), (6, 0)])
def test_threepatch_family_dims(threepatch, p, L):
    rep = dims_report(threepatch, p, 1, 2 ** L - 1)
    assert (rep.dim_patch, rep.dim_face, rep.dim_edge, rep.dim_total) == THREEPATCH_DIMS[(p, L)]
    assert rep.closed_form["patch"] == rep.dim_patch
    assert rep.closed_form["face"] == rep.dim_face


def test_built_counts_match_dims_report(threepatch_basis, threepatch):
    rep = dims_report(threepatch_basis)
    assert (rep.dim_patch, rep.dim_face, rep.dim_edge, rep.dim_total) == THREEPATCH_DIMS[(3, 1)]
    assert list(rep.row()) == list(CSV_COLUMNS)


def test_general_mode_closed_forms(threepatch):
    basis = build_space(threepatch, 4, 1, 0, mode="general")
    rep = dims_report(basis)
    n, n0, n1 = space_dims(4, 1, 0)
    assert rep.dim_patch == 3 * (n - 4) ** 3
    assert rep.dim_face == rep.closed_form["face"]
    assert rep.dim_total == THREEPATCH_DIMS[(4, 0)][3]
    assert c1_audit(basis, samples=40).passed


def test_evaluation(threepatch_basis):
    b = threepatch_basis
    rng = np.random.default_rng(0)
    xi = rng.random((10, 3))
    j = b.dim - 3
    fn = b.function(j)
    np.testing.assert_allclose(b.evaluate_member(j, 1, xi), fn.evaluate(1, xi), atol=1e-14)
    with pytest.raises(ValueError):
        b.evaluate(np.ones(b.dim + 1), 0, xi)
    c = rng.standard_normal(b.dim)
    h = 1e-6
    x0 = np.array([[0.3, 0.6, 0.45]])
    for a in range(3):
        e = np.zeros((1, 3))
        e[0, a] = h
        fd = (b.evaluate(c, 2, x0 + e) - b.evaluate(c, 2, x0 - e)) / (2 * h)
        d = b.evaluate(c, 2, x0, tuple(int(i == a) for i in range(3)))
        assert abs(fd[0] - d[0]) <= 1e-5 * max(1.0, abs(d[0]))


def test_audit_passes_and_catches_corruption(threepatch_basis):
    assert c1_audit(threepatch_basis).passed
    M = threepatch_basis.matrix.tolil(copy=True)
    # corrupt one coefficient of a face function next to an inner face
    j = threepatch_basis.families["face"][0]
    rows = threepatch_basis.matrix[:, j].nonzero()[0]
    M[rows[0], j] += 0.1
    bad = c1_audit(threepatch_basis, coeffs=sp.csc_matrix(M)[:, j:j + 1])
    assert not bad.passed


@pytest.mark.parametrize("p", [3, 4, 5])
def test_two_patch_audit(twopatch, p):
    assert c1_audit(build_space(twopatch, p, 1, 1), samples=40).passed


def test_direct_sum_supports(threepatch_basis):
    a, b = threepatch_basis.families["patch"]
    M = threepatch_basis.matrix.tocsc()
    patch_rows = set(M[:, a:b].nonzero()[0])
    other_rows = set(M[:, b:].nonzero()[0])
    assert not patch_rows & other_rows


def test_brute_force_oracle(threepatch, fourpatch, twopatch):
    assert brute_force_dim(threepatch, 3, 1, 0) == 76 == build_space(threepatch, 3, 1, 0).dim
    # non-generic volume: one more edge function than generic
    assert brute_force_dim(fourpatch, 3, 1, 0) == dims_report(fourpatch, 3, 1, 0).dim_total
    assert brute_force_dim(twopatch, 3, 1, 1) == two_patch_formula(3, 1, 1)


def test_gram_has_full_rank(threepatch_basis):
    rank, _ = gram_rank(threepatch_basis)
    assert rank == threepatch_basis.dim


@pytest.mark.parametrize("p,k", [(3, 0), (4, 2), (6, 1)])
def test_two_patch_enumeration(twopatch, p, k):
    for r in range(1, p - 1):
        assert build_space(twopatch, p, r, k).dim == two_patch_formula(p, r, k)
