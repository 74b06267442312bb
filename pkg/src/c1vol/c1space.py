"""The C1 space as a direct sum of patch, face and edge families.

Three constructions are supported:

* ``two-patch``: one inner face, no inner edges.  Patch functions away from
  the face plus all functions of the face.
* ``subclassA``: one inner edge shared by all patches.  Patch functions with
  the first two view indices >= 2, face functions outside the edge window,
  and the edge functions from the kernel of the compatibility system.
* ``general``: interior patch functions, boundary- and inner-face functions
  not involved in any edge or vertex equation, and edge functions from the
  kernel of the full compatibility system.

The basis is stored as one sparse matrix whose columns are global
coefficient vectors (patch-major, each patch an n x n x n tensor in its own
parameter frame).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .c1basis import InnerFaceFamily, IsogeometricFunction, columns_matrix, view_map
from .edgespace import (assemble_general, assemble_subclassA, exact_kernel_dim,
                        inner_window_general, inner_window_subclass,
                        kernel_basis, realize_edge_functions, _ends)
from .gluing import compute_gluing, check_assumption1
from .splinecore import SplineSpaceConfig
from .topology import TopologyError

MODES = ("auto", "two-patch", "general", "subclassA")


class AssumptionError(ValueError):
    """The gluing assumption fails on some inner face."""


# ---------------------------------------------------------------- evaluation

def point_eval_matrix(space, xi, derivs=(0, 0, 0)):
    """Sparse (m, n^3) matrix of the tensor B-splines (or mixed partials) at
    parameter points xi of shape (m, 3)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    m = len(xi)
    B = space.basis
    p, n = space.p, space.n
    step = p - space.r
    idx, val = [], []
    for d in range(3):
        full = B.matrix(xi[:, d], derivs[d])
        start = B.element_of(xi[:, d]) * step
        cols = start[:, None] + np.arange(p + 1)[None, :]
        idx.append(cols)
        val.append(np.take_along_axis(full, cols, axis=1))
    I = (idx[0][:, :, None, None] * n * n + idx[1][:, None, :, None] * n
         + idx[2][:, None, None, :]).reshape(m, -1)
    V = (val[0][:, :, None, None] * val[1][:, None, :, None]
         * val[2][:, None, None, :]).reshape(m, -1)
    rows = np.repeat(np.arange(m), I.shape[1])
    return sp.csr_matrix((V.ravel(), (rows, I.ravel())), shape=(m, n ** 3))


# ---------------------------------------------------------------- basis

@dataclass
class C1Basis:
    volume: object
    space: SplineSpaceConfig
    mode: str
    matrix: sp.csc_matrix            # (num_patches * n^3, dim)
    labels: list
    families: dict                   # name -> (start, stop)
    edge_system: object = None
    kernel: object = None
    edge_dim_exact: int = None
    notes: list = field(default_factory=list)

    @property
    def dim(self):
        return self.matrix.shape[1]

    @property
    def counts(self):
        return {name: b - a for name, (a, b) in self.families.items()}

    def family(self, name):
        a, b = self.families[name]
        return self.matrix[:, a:b]

    def patch_block(self, i):
        n3 = self.space.n ** 3
        return self.matrix[i * n3:(i + 1) * n3]

    def function(self, j):
        fam = next(nm for nm, (a, b) in self.families.items() if a <= j < b)
        return IsogeometricFunction.from_column(self.space, self.matrix[:, j],
                                                self.volume.num_patches, fam,
                                                tuple(self.labels[j]))

    def coefficients(self, c):
        """Global coefficient vector of the combination sum c_j phi_j."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError(f"coefficient vector must have length {self.dim}, got {c.shape}")
        return self.matrix @ c

    def evaluate(self, c, patch, xi, derivs=(0, 0, 0)):
        """Value (or parametric mixed partial) of sum c_j phi_j on a patch."""
        if not 0 <= patch < self.volume.num_patches:
            raise IndexError(f"patch {patch} out of range")
        g = self.coefficients(c)
        n3 = self.space.n ** 3
        E = point_eval_matrix(self.space, xi, derivs)
        return E @ g[patch * n3:(patch + 1) * n3]

    def evaluate_member(self, j, patch, xi, derivs=(0, 0, 0)):
        e = np.zeros(self.dim)
        e[j] = 1.0
        return self.evaluate(e, patch, xi, derivs)


def _unit_columns(gids, total):
    gids = np.asarray(gids, dtype=np.int64)
    return sp.csc_matrix((np.ones(len(gids)), (gids, np.arange(len(gids)))),
                         shape=(total, len(gids)))


def _view_box_gids(view, n, ranges):
    """Global ids of a box of view-frame indices, lexicographic in the view."""
    grids = np.meshgrid(*[np.asarray(r, dtype=int) for r in ranges], indexing="ij")
    idx = tuple(g.ravel() for g in grids)
    return view.patch * n ** 3 + view_map(view.sym, n)[idx], list(zip(*[i.tolist() for i in idx]))


def select_mode(volume):
    if len(volume.inner_faces) == 1 and not volume.inner_edges:
        return "two-patch"
    if volume.subclass_chain() is not None:
        return "subclassA"
    return "general"


def _check(volume, k, gluing):
    rep = check_assumption1(volume, k, gluing)
    if not rep.passed:
        bad = [f.face_key for f in rep.faces if not f.passed]
        raise AssumptionError(f"gluing assumption fails on faces {bad}")
    return rep


def build_space(volume, p, r, k, mode="auto", kernel_mode="svd", tol=1e-9,
                check=True, variant="derivative"):
    """Construct the full basis of the C1 space."""
    space = SplineSpaceConfig(p, r, k)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    auto = select_mode(volume)
    if mode == "auto":
        mode = auto
    elif mode == "two-patch" and auto != "two-patch":
        raise TopologyError("two-patch mode needs exactly one inner face and no inner edge")
    elif mode == "subclassA" and auto != "subclassA":
        raise TopologyError("volume is not in the one-inner-edge subclass")
    gluing = {f.key: compute_gluing(volume, f) for f in volume.inner_faces}
    if check:
        _check(volume, k, gluing)
    if variant != "derivative":
        raise ValueError("only the derivative variant yields members of the space")
    builder = {"two-patch": _build_two_patch, "subclassA": _build_subclass,
               "general": _build_general}[mode]
    return builder(volume, space, gluing, kernel_mode, tol)


def _assemble(volume, space, blocks):
    total = volume.num_patches * space.n ** 3
    mats, labels, fams, start = [], [], {}, 0
    for name, (M, labs) in blocks:
        mats.append(M)
        labels.extend(labs)
        fams[name] = (start, start + M.shape[1])
        start += M.shape[1]
    mat = sp.hstack(mats, format="csc") if mats else sp.csc_matrix((total, 0))
    mat.eliminate_zeros()
    return mat, labels, fams


def _face_block(volume, space, gd, keep):
    fam = InnerFaceFamily(volume, space, gd)
    labs, cols = [], []
    for j1 in (0, 1):
        m = fam.sizes(j1)
        if m == 0:
            continue
        labels, entries = fam.entries(j1)
        for lab, col in zip(labels, entries):
            if keep(*lab):
                labs.append(("face", gd.face_key) + lab)
                cols.append(col)
    return columns_matrix(cols, volume.num_patches * space.n ** 3), labs


def _build_two_patch(volume, space, gluing, kernel_mode, tol):
    face = volume.inner_faces[0]
    gd = gluing[face.key]
    v0, v1 = gd.views
    n = space.n
    total = volume.num_patches * n ** 3
    blocks = []
    for side, v in enumerate((v0, v1)):
        rng = [range(2, n), range(n), range(n)] if side == 0 else [range(n), range(2, n), range(n)]
        g, idx = _view_box_gids(v, n, rng)
        blocks.append((f"patch{v.patch}", (_unit_columns(g, total),
                                           [("patch", v.patch) + t for t in idx])))
    # any further patches (not adjacent to the face) keep all their functions
    for i in range(volume.num_patches):
        if i not in (v0.patch, v1.patch):
            g = np.arange(i * n ** 3, (i + 1) * n ** 3)
            blocks.append((f"patch{i}", (_unit_columns(g, total),
                                         [("patch", i, int(a)) for a in range(n ** 3)])))
    blocks.append(("face", _face_block(volume, space, gd, lambda *_: True)))
    blocks = _merge_patch_blocks(blocks)
    mat, labels, fams = _assemble(volume, space, blocks)
    return C1Basis(volume, space, "two-patch", mat, labels, fams)


def _merge_patch_blocks(blocks):
    """Collapse per-patch blocks into one 'patch' family (patch id order)."""
    pb = sorted([b for b in blocks if b[0].startswith("patch")],
                key=lambda b: int(b[0][5:]))
    rest = [b for b in blocks if not b[0].startswith("patch")]
    if not pb:
        return rest
    M = sp.hstack([b[1][0] for b in pb], format="csc")
    labs = [lab for b in pb for lab in b[1][1]]
    return [("patch", (M, labs))] + rest


def _edge_block(system, kernel_mode, tol, dim_exact, edge_key):
    kb = kernel_basis(system, kernel_mode, tol, dim=dim_exact)
    E = realize_edge_functions(system, kb)
    labs = [("edge", edge_key, j) for j in range(E.shape[1])]
    return kb, sp.csc_matrix(E), labs


def _build_subclass(volume, space, gluing, kernel_mode, tol):
    chain = volume.subclass_chain()
    edge, views, faces = chain
    nu = len(views)
    n = space.n
    total = volume.num_patches * n ** 3
    blocks = []
    for m, v in enumerate(views):
        g, idx = _view_box_gids(v, n, [range(2, n), range(2, n), range(n)])
        blocks.append((f"patch{v.patch}", (_unit_columns(g, total),
                                           [("patch", v.patch) + t for t in idx])))
    blocks = _merge_patch_blocks(blocks)
    win = inner_window_subclass(space)
    face_mats, face_labs = [], []
    for m in range(nu):
        gd = compute_gluing(volume, volume.faces[volume.face_index[faces[m]]],
                            (views[m], views[(m + 1) % nu]))
        M, labs = _face_block(volume, space, gd, lambda j1, j2, j3: not win(j1, j2, j3))
        face_mats.append(M)
        face_labs.extend(labs)
    blocks.append(("face", (sp.hstack(face_mats, format="csc"), face_labs)))
    system = assemble_subclassA(volume, space, exact=True, chain=chain)
    dim_exact = exact_kernel_dim(system)
    kb, E, labs = _edge_block(system, kernel_mode, tol, dim_exact, edge.key)
    blocks.append(("edge", (E, labs)))
    mat, labels, fams = _assemble(volume, space, blocks)
    return C1Basis(volume, space, "subclassA", mat, labels, fams, system, kb, dim_exact)


def _build_general(volume, space, gluing, kernel_mode, tol):
    n = space.n
    total = volume.num_patches * n ** 3
    inner = list(range(2, n - 2))
    from .topology import IDENTITY, View
    pm, plabs = [], []
    for i in range(volume.num_patches):
        g, idx = _view_box_gids(View(i, IDENTITY), n, [inner, inner, inner])
        pm.append(_unit_columns(g, total))
        plabs.extend(("patch", i) + t for t in idx)
    blocks = [("patch", (sp.hstack(pm, format="csc"), plabs))]
    wi = inner_window_general(space)
    fm, flabs = [], []
    for face in volume.faces:
        if face.inner:
            M, labs = _face_block(volume, space, gluing[face.key],
                                  lambda j1, j2, j3: not wi(j1, j2, j3))
        else:
            v = volume.standard_form_boundary(face)
            g, idx = _view_box_gids(v, n, [[0, 1], inner, inner])
            M = _unit_columns(g, total)
            labs = [("bface", face.key) + t for t in idx]
        fm.append(M)
        flabs.extend(labs)
    blocks.append(("face", (sp.hstack(fm, format="csc"), flabs)))
    system = assemble_general(volume, space, gluing, exact=True)
    dim_exact = exact_kernel_dim(system)
    kb, E, labs = _edge_block(system, kernel_mode, tol, dim_exact, "all")
    blocks.append(("edge", (E, labs)))
    mat, labels, fams = _assemble(volume, space, blocks)
    return C1Basis(volume, space, "general", mat, labels, fams, system, kb, dim_exact)


# ---------------------------------------------------------------- dimensions

@dataclass
class DimsReport:
    mode: str
    p: int
    r: int
    k: int
    dim_patch: int
    dim_face: int
    dim_edge: int
    closed_form: dict = field(default_factory=dict)

    @property
    def dim_total(self):
        return self.dim_patch + self.dim_face + self.dim_edge

    def row(self):
        return {"mode": self.mode, "p": self.p, "r": self.r, "k": self.k,
                "dim_patch": self.dim_patch, "dim_face": self.dim_face,
                "dim_edge": self.dim_edge, "dim_total": self.dim_total}


CSV_COLUMNS = ("mode", "p", "r", "k", "dim_patch", "dim_face", "dim_edge", "dim_total")


def _count(m, keep):
    return sum(1 for j2 in range(m) for j3 in range(m) if keep(j2, j3))


def dims_report(obj, p=None, r=None, k=None, mode="auto"):
    """Family dimensions, either of a built :class:`C1Basis` or, given a
    volume and (p, r, k), by counting index windows and computing the exact
    edge kernel dimension (no basis functions are formed)."""
    if isinstance(obj, C1Basis):
        c = obj.counts
        space = obj.space
        rep = DimsReport(obj.mode, space.p, space.r, space.k, c.get("patch", 0),
                         c.get("face", 0), c.get("edge", 0))
        rep.closed_form = closed_form_counts(obj.volume, space, obj.mode)
        return rep
    volume = obj
    space = SplineSpaceConfig(p, r, k)
    if mode == "auto":
        mode = select_mode(volume)
    n, n0, n1 = space.n, space.n0, space.n1
    P = volume.num_patches
    if mode == "two-patch":
        dp = 2 * n * n * (n - 2) + (P - 2) * n ** 3
        df = n0 * n0 + n1 * n1
        de = 0
    elif mode == "subclassA":
        nu = len(volume.inner_faces)
        win = inner_window_subclass(space)
        dp = P * n * (n - 2) ** 2
        df = nu * (_count(n0, lambda a, b: not win(0, a, b))
                   + _count(n1, lambda a, b: not win(1, a, b)))
        de = exact_kernel_dim(assemble_subclassA(volume, space, exact=True))
    else:
        wi = inner_window_general(space)
        E = _ends(n, 2)
        dp = P * max(n - 4, 0) ** 3
        nb = len(volume.boundary_faces)
        df = nb * 2 * _count(n, lambda a, b: a not in E and b not in E)
        df += len(volume.inner_faces) * (_count(n0, lambda a, b: not wi(0, a, b))
                                         + _count(n1, lambda a, b: not wi(1, a, b)))
        gluing = {f.key: compute_gluing(volume, f) for f in volume.inner_faces}
        de = exact_kernel_dim(assemble_general(volume, space, gluing, exact=True))
    rep = DimsReport(mode, p, r, k, dp, df, de)
    rep.closed_form = closed_form_counts(volume, space, mode)
    return rep


def closed_form_counts(volume, space, mode):
    """Closed-form patch/face family sizes of each construction."""
    n, n0, n1 = space.n, space.n0, space.n1
    P = volume.num_patches
    if mode == "two-patch":
        return {"patch": 2 * n * n * (n - 2) + (P - 2) * n ** 3, "face": n0 ** 2 + n1 ** 2,
                "total": 2 * n * n * (n - 2) + n0 ** 2 + n1 ** 2 + (P - 2) * n ** 3}
    if mode == "subclassA":
        nu = len(volume.inner_faces)
        return {"patch": P * n * (n - 2) ** 2,
                "face": nu * ((n0 - 3) * n0 + (n1 - 2) * n1)}
    m = max(n - 4, 0)
    return {"patch": P * m ** 3,
            "face": len(volume.boundary_faces) * 2 * m * m
            + len(volume.inner_faces) * (max(n0 - 6, 0) ** 2 + max(n1 - 4, 0) ** 2)}


# ---------------------------------------------------------------- audits

@dataclass
class AuditReport:
    value_jump: float
    gradient_jump: float
    per_face: dict
    worst_function: int
    value_tol: float = 1e-11
    gradient_tol: float = 1e-9

    @property
    def passed(self):
        return self.value_jump <= self.value_tol and self.gradient_jump <= self.gradient_tol


def _physical_gradients(volume, space, patch, xi, coeffs):
    """Physical gradients (m, 3, ncols) of coefficient columns on a patch."""
    d = [point_eval_matrix(space, xi, tuple(int(a == b) for a in range(3))) @ coeffs
         for b in range(3)]
    d = [np.asarray(x.todense()) if sp.issparse(x) else x for x in d]
    G = np.stack(d, axis=1)                      # (m, 3, ncols) parametric
    J = volume.jacobian(patch, xi)               # (m, 3, 3)
    return np.linalg.solve(np.transpose(J, (0, 2, 1)), G)


def c1_audit(basis, samples=100, seed=0, coeffs=None, value_tol=1e-11, gradient_tol=1e-9):
    """Maximal value and relative gradient jumps of all basis functions (or
    of the given coefficient columns) across every inner face."""
    vol, space = basis.volume, basis.space
    Phi = basis.matrix if coeffs is None else sp.csc_matrix(coeffs)
    n3 = space.n ** 3
    rng = np.random.default_rng(seed)
    worst_v, worst_g, worst_fn, per_face = 0.0, 0.0, -1, {}
    for face in vol.inner_faces:
        v0, v1 = compute_gluing(vol, face).views
        t = rng.random((samples, 2))
        eta0 = np.column_stack([np.zeros(samples), t[:, 0], t[:, 1]])
        eta1 = np.column_stack([t[:, 0], np.zeros(samples), t[:, 1]])
        xi0, xi1 = v0.sym(eta0), v1.sym(eta1)
        C0 = Phi[v0.patch * n3:(v0.patch + 1) * n3]
        C1 = Phi[v1.patch * n3:(v1.patch + 1) * n3]
        val0 = np.asarray((point_eval_matrix(space, xi0) @ C0).todense())
        val1 = np.asarray((point_eval_matrix(space, xi1) @ C1).todense())
        g0 = _physical_gradients(vol, space, v0.patch, xi0, C0)
        g1 = _physical_gradients(vol, space, v1.patch, xi1, C1)
        vj = np.abs(val0 - val1).max(axis=0)
        gj = np.linalg.norm(g0 - g1, axis=1).max(axis=0)
        scale = np.maximum(np.linalg.norm(g0, axis=1).max(axis=0),
                           np.linalg.norm(g1, axis=1).max(axis=0))
        rel = np.where(scale > 0, gj / np.where(scale > 0, scale, 1.0), 0.0)
        fv, fg = float(vj.max(initial=0.0)), float(rel.max(initial=0.0))
        per_face[face.key] = (fv, fg)
        if fg > worst_g:
            worst_fn = int(np.argmax(rel))
        worst_v, worst_g = max(worst_v, fv), max(worst_g, fg)
    return AuditReport(worst_v, worst_g, per_face, worst_fn, value_tol, gradient_tol)


def gram_rank(basis, q=None, tol=1e-10):
    """Numerical rank of the Gram matrix of the full basis."""
    from .approx import gram_matrix
    G = gram_matrix(basis, q)
    d = np.sqrt(np.diag(G))
    Gs = G / d[:, None] / d[None, :]
    s = np.linalg.eigvalsh(Gs)
    return int((s > tol * s.max()).sum()), s


# ---------------------------------------------------------------- oracle

def brute_force_dim(volume, p, r, k, tol=1e-9):
    """Dimension of the C1 space from scratch: nullspace of C0 coefficient
    matching plus C1 collocation of the four-term relation on all inner
    faces, over all patch coefficients (desk scale only)."""
    space = SplineSpaceConfig(p, r, k)
    n = space.n
    n3 = n ** 3
    total = volume.num_patches * n3
    rows = []
    q = p + 3
    nodes = (np.arange(q) + 0.5) / q
    pts = ((np.arange(k + 1)[:, None] + nodes[None, :]) / (k + 1)).ravel()
    T1, T2 = np.meshgrid(pts, pts, indexing="ij")
    T1, T2 = T1.ravel(), T2.ravel()
    for face in volume.inner_faces:
        gd = compute_gluing(volume, face)
        v0, v1 = gd.views
        # C0: layer-0 coefficients agree
        m0 = view_map(v0.sym, n)[0, :, :].ravel() + v0.patch * n3
        m1 = view_map(v1.sym, n)[:, 0, :].ravel() + v1.patch * n3
        rows.append(sp.csr_matrix((np.r_[np.ones(n * n), -np.ones(n * n)],
                                   (np.r_[np.arange(n * n), np.arange(n * n)], np.r_[m0, m1])),
                                  shape=(n * n, total)))
        # C1: alpha0 d2 f1 + alpha1 d1 f0 - beta d1 f1 - gamma d3 f1 = 0 at the
        # collocation points, f0 on side 0 and f1 on side 1 in view frames
        m = len(T1)
        z = np.zeros(m)
        eta0 = np.column_stack([z, T1, T2])
        eta1 = np.column_stack([T1, z, T2])

        def dview(v, eta, axis):
            # derivative along view axis a = derivative along patch axis perm[a]
            # with sign -1 when flipped
            pa = v.sym.perm[axis]
            sgn = -1.0 if v.sym.flips[axis] else 1.0
            der = tuple(int(b == pa) for b in range(3))
            E = point_eval_matrix(space, v.sym(eta), der) * sgn
            E = sp.csr_matrix(E)
            return sp.csr_matrix((E.data, E.indices + v.patch * n3, E.indptr),
                                 shape=(m, total))

        a0 = gd.alpha0.evalf(T1, T2)
        a1 = gd.alpha1.evalf(T1, T2)
        be = gd.beta.evalf(T1, T2)
        ga = gd.gamma.evalf(T1, T2)
        D = sp.diags
        rows.append(D(a0) @ dview(v1, eta1, 1) + D(a1) @ dview(v0, eta0, 0)
                    - D(be) @ dview(v1, eta1, 0) - D(ga) @ dview(v1, eta1, 2))
    if not rows:
        return total
    A = sp.vstack(rows).tocsr()
    # drop columns that appear in no row; they are free
    used = np.unique(A.indices)
    Ad = A[:, used].toarray()
    Ad /= np.maximum(np.abs(Ad).max(axis=1, keepdims=True), 1e-300)
    s = np.linalg.svd(Ad, compute_uv=False)
    rank = int((s > tol * s[0]).sum()) if len(s) else 0
    if rank < len(s) and s[rank] > 1e-3 * tol * s[0]:
        warnings.warn("brute-force rank gap is narrow")
    return total - rank
