import warnings

import numpy as np
import pytest

from c1vol.c1space import build_space, c1_audit, dims_report
from c1vol.edgespace import (EdgeSystem, UnknownMap, assemble_general, assemble_subclassA,
                             exact_kernel_dim, kernel_basis, kernel_dim, realize_edge_functions)
from c1vol.splinecore import SplineSpaceConfig
from c1vol.topology import TopologyError

from reference_values import GENERIC_EDGE_DIMS, NONGENERIC_EDGE_DIMS, generic_formula


def test_subclass_examples(threepatch, fourpatch, wedge5):
    assert exact_kernel_dim(assemble_subclassA(threepatch, SplineSpaceConfig(3, 1, 0))) == 16
    assert exact_kernel_dim(assemble_subclassA(fourpatch, SplineSpaceConfig(4, 1, 1))) == 30
    assert exact_kernel_dim(assemble_subclassA(wedge5, SplineSpaceConfig(6, 2, 2))) == 66
    assert GENERIC_EDGE_DIMS[5][(6, 2)][2] == 66
    assert NONGENERIC_EDGE_DIMS[(4, 1)][1] == 30


def test_subclass_row_count(threepatch, fourpatch):
    for vol in (threepatch, fourpatch):
        nu = vol.num_patches
        for prk in [(3, 1, 0), (4, 2, 2)]:
            s = SplineSpaceConfig(*prk)
            system = assemble_subclassA(vol, s)
            assert system.shape[0] == nu * 4 * s.n * 2
            assert {t[0] for t in system.tags} == {"face-face", "face-edge"}


def test_rows_touch_at_least_two_unknowns(threepatch):
    system = assemble_general(threepatch, SplineSpaceConfig(3, 1, 0))
    assert all(len(row) >= 2 for row in system.rows)
    A = system.matrix()
    assert np.allclose(abs(A).max(axis=1).toarray().ravel(), 1.0)


def test_subclass_needs_one_inner_edge(twocube):
    with pytest.raises(TopologyError):
        assemble_subclassA(twocube, SplineSpaceConfig(3, 1, 0))


def test_two_patch_volume_has_no_inner_edge_functions(twopatch):
    basis = build_space(twopatch, 3, 1, 0, mode="two-patch")
    assert basis.counts.get("edge", 0) == 0
    # in the general framework only boundary edges and vertices contribute;
    # at p = 3, k = 0 they carry the whole space
    rep = dims_report(twopatch, 3, 1, 0, mode="general")
    assert rep.dim_patch == 0 and rep.dim_face == 0
    assert rep.dim_edge == basis.dim == 84


def test_empty_system_gives_unit_kernel():
    um = UnknownMap()
    for j in range(5):
        um.add(("edge", (0, 1), 0, j), [j], [1])
    system = EdgeSystem([], [], um, 5, True, "subclassA")
    kb = kernel_basis(system)
    assert kb.dim == 5
    np.testing.assert_array_equal(kb.vectors, np.eye(5))
    with pytest.raises(KeyError):
        um.add(("edge", (0, 1), 0, 0), [0], [1])


@pytest.mark.parametrize("name,prk", [("threepatch", (4, 1, 1)), ("fourpatch", (5, 2, 2)),
                                      ("threepatch", (6, 3, 2))])
def test_kernel_modes_agree(request, name, prk):
    vol = request.getfixturevalue(name)
    system = assemble_subclassA(vol, SplineSpaceConfig(*prk))
    exact = exact_kernel_dim(system)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        svd = kernel_basis(system, "svd")
    mds = kernel_basis(system, "mds")
    assert svd.dim == mds.dim == exact == kernel_dim(system, "svd")
    A = system.matrix()
    for kb in (svd, mds):
        V = kb.vectors
        assert np.abs(A @ V).max() <= 1e-10 * np.abs(V).max()
        assert np.linalg.matrix_rank(V) == kb.dim
    # a determining set: unit values on the free unknowns
    assert len(mds.determining) == mds.dim


def test_realized_edge_functions_are_c1_and_independent(threepatch):
    space = SplineSpaceConfig(4, 1, 1)
    system = assemble_subclassA(threepatch, space)
    kb = kernel_basis(system, dim=exact_kernel_dim(system))
    E = realize_edge_functions(system, kb)
    assert E.shape[1] == 25
    basis = build_space(threepatch, 4, 1, 1)
    audit = c1_audit(basis, samples=60, coeffs=E)
    assert audit.passed, audit
    s = np.linalg.svd(E.toarray(), compute_uv=False)
    assert s[-1] > 1e-10 * s[0]


@pytest.mark.parametrize("p,r", [(3, 1), (4, 2), (5, 3)])
def test_low_smoothness_gap_edge_dim_independent_of_k(wedge5, p, r):
    dims = [exact_kernel_dim(assemble_subclassA(wedge5, SplineSpaceConfig(p, r, k)))
            for k in (0, 1, 2)]
    assert len(set(dims)) == 1
    assert dims[0] == generic_formula(5, p, r, 0)


def test_general_and_subclass_totals_agree(threepatch):
    sub = dims_report(threepatch, 3, 1, 1, mode="subclassA")
    gen = dims_report(threepatch, 3, 1, 1, mode="general")
    assert sub.dim_total == gen.dim_total == 334
