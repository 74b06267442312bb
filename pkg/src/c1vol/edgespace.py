"""Compatibility systems near edges and vertices, their kernels and the
resulting edge functions.

Equality of the mixed derivatives d1^l1 d2^l2 (l1, l2 <= 1) of two tensor
splines along the edge xi1 = xi2 = 0 at the n Greville abscissae is the same
as equality of their coefficients with indices (a, b, c), a, b in {0, 1},
c in I: the map from those coefficients to the collocated derivatives is the
Kronecker product of the invertible 2x2 matrix [N_a^(l)(0)] (twice) with the
Greville collocation matrix.  Likewise the eight corner derivatives
correspond to the 2x2x2 corner coefficients.  The systems are therefore
assembled directly as coefficient equalities, which keeps every entry an
exact rational number for rational vertices.
"""

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .c1basis import InnerFaceFamily, global_ids, tables_for, view_map
from .gluing import compute_gluing
from .topology import TopologyError


class RankAmbiguityWarning(UserWarning):
    pass


PRIMES = (2147483629, 2147483587)


# ---------------------------------------------------------------- unknowns

@dataclass
class UnknownMap:
    """Ordered registry of unknowns with their coefficient-space columns.

    Labels: ("face", key, (j1, j2, j3)), ("bface", key, (j1, j2, j3)),
    ("edge", key, patch, gid), ("vertex", key, patch, gid)."""
    labels: list = field(default_factory=list)
    columns: list = field(default_factory=list)   # (gids, values) in realization
    index: dict = field(default_factory=dict)

    def add(self, label, gids, values):
        if label in self.index:
            raise KeyError(f"duplicate unknown {label}")
        self.index[label] = len(self.labels)
        self.labels.append(label)
        self.columns.append((np.asarray(gids, dtype=np.int64), values))
        return self.index[label]

    def __len__(self):
        return len(self.labels)

    def kinds(self):
        return [lab[0] for lab in self.labels]


@dataclass
class EdgeSystem:
    rows: list            # list of dict col -> value
    tags: list            # row provenance
    unknowns: UnknownMap
    num_coeffs: int
    exact: bool
    mode: str

    @property
    def shape(self):
        return (len(self.rows), len(self.unknowns))

    def matrix(self, scale=True):
        """Sparse float matrix, rows scaled to unit max-abs entry."""
        r, c, v = [], [], []
        for i, row in enumerate(self.rows):
            if not row:
                continue
            vals = np.array([float(x) for x in row.values()])
            s = np.abs(vals).max() if scale else 1.0
            r.extend([i] * len(row))
            c.extend(row.keys())
            v.extend(vals / s)
        return sp.csr_matrix((v, (r, c)), shape=self.shape)

    def realization_matrix(self):
        """Columns of all unknowns in the global coefficient space (float)."""
        r, c, v = [], [], []
        for j, (g, vals) in enumerate(self.unknowns.columns):
            r.append(g)
            c.append(np.full(len(g), j))
            v.append(np.asarray([float(x) for x in vals]))
        if not r:
            return sp.csc_matrix((self.num_coeffs, 0))
        return sp.csc_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                             shape=(self.num_coeffs, len(self.unknowns)))


def _face_unknowns(fam, window, exact, blocks):
    """Face functions selected by window(j1, j2, j3).

    Returns (label, realization column, row entries) triples.  The
    realization column holds all float coefficients; the row entries are
    restricted to the tangential coefficient blocks (B, C) in ``blocks``,
    which is all the compatibility rows need, and are exact when asked."""
    out = []
    for j1 in (0, 1):
        m = fam.sizes(j1)
        if m == 0:
            continue
        J2 = [j for j in range(m) if any(window(j1, j, j3) for j3 in range(m))]
        if not J2:
            continue
        labels, cols = fam.entries(j1, J2, None, False)
        restricted = [fam.entries(j1, J2, None, exact, B, C)[1] for B, C in blocks]
        for i, (lab, col) in enumerate(zip(labels, cols)):
            if window(*lab):
                rows = {}
                for part in restricted:
                    g, v = part[i]
                    rows.update(zip(g.tolist(), v))
                out.append((lab, col, rows))
    return out


def _ends(m, width):
    return set(range(min(width, m))) | set(range(max(m - width, 0), m))


def inner_window_general(space):
    n0, n1 = space.n0, space.n1
    E = {0: _ends(n0, 3), 1: _ends(n1, 2)}
    return lambda j1, j2, j3: j2 in E[j1] or j3 in E[j1]


def inner_window_subclass(space):
    return lambda j1, j2, j3: j2 <= 2 - j1


def boundary_window_general(space):
    E = _ends(space.n, 2)
    return lambda j1, j2, j3: j2 in E or j3 in E


def edge_block_gids(view, n, ends=False):
    """Global ids of the coefficient block (a, b, c), a, b in {0,1}, c in I."""
    A, Bi, C = np.meshgrid([0, 1], [0, 1], np.arange(n), indexing="ij")
    return global_ids(view, n, (A.ravel(), Bi.ravel(), C.ravel()))


def corner_block_gids(view, n):
    A, Bi, C = np.meshgrid([0, 1], [0, 1], [0, 1], indexing="ij")
    return global_ids(view, n, (A.ravel(), Bi.ravel(), C.ravel()))


class _Assembler:
    def __init__(self, volume, space, exact, mode):
        self.volume = volume
        self.space = space
        self.exact = exact
        self.n = space.n
        self.um = UnknownMap()
        self.rows, self.tags = [], []
        self.face_lookup = {}   # face key -> gid -> {col: value}
        self.one = Fraction(1) if exact else 1.0

    def add_face_family(self, key, entries, kind="face"):
        table = self.face_lookup.setdefault(key, {})
        for lab, (g, vals), rows in entries:
            col = self.um.add((kind, key, lab), g, vals)
            for gi, vi in rows.items():
                table.setdefault(gi, {})[col] = vi

    def add_bface(self, face, window):
        v = self.volume.standard_form_boundary(face)
        n = self.n
        entries = []
        for j1 in (0, 1):
            for j2 in range(n):
                for j3 in range(n):
                    if window(j1, j2, j3):
                        g = global_ids(v, n, (np.array([j1]), np.array([j2]), np.array([j3])))
                        entries.append(((j1, j2, j3), (g, [1.0]), {int(g[0]): self.one}))
        self.add_face_family(face.key, entries, "bface")

    def face_row(self, key, g):
        return self.face_lookup.get(key, {}).get(int(g), {})

    def add_row(self, parts, tag):
        row = {}
        for sign, d in parts:
            for c, v in d.items():
                row[c] = row.get(c, 0) + sign * v
        row = {c: v for c, v in row.items() if v != 0}
        if row:
            self.rows.append(row)
            self.tags.append(tag)

    def edge_unknowns(self, edge_key, view):
        gids = edge_block_gids(view, self.n)
        cols = []
        for g in gids.tolist():
            cols.append(self.um.add(("edge", edge_key, view.patch, g), [g], [-self.one]))
        return gids, cols

    def edge_rows(self, edge_key, view, left, right):
        gids, cols = self.edge_unknowns(edge_key, view)
        for g, c in zip(gids.tolist(), cols):
            L = self.face_row(left, g)
            R = self.face_row(right, g)
            self.add_row([(1, L), (-1, R)], ("face-face", edge_key, view.patch))
            self.add_row([(1, L), (-1, {c: self.one})], ("face-edge", edge_key, view.patch))

    def system(self, mode):
        return EdgeSystem(self.rows, self.tags, self.um,
                          self.volume.num_patches * self.n ** 3, self.exact, mode)


def assemble_subclassA(volume, space, gluing=None, exact=True, chain=None):
    chain = chain or volume.subclass_chain()
    if chain is None:
        raise TopologyError("volume is not in the one-inner-edge subclass")
    edge, views, faces = chain
    nu = len(views)
    asm = _Assembler(volume, space, exact, "subclassA")
    window = inner_window_subclass(space)
    for m in range(nu):
        face = volume.faces[volume.face_index[faces[m]]]
        gd = compute_gluing(volume, face, (views[m], views[(m + 1) % nu]))
        fam = InnerFaceFamily(volume, space, gd)
        blocks = [([0, 1], None)]
        asm.add_face_family(faces[m], _face_unknowns(fam, window, exact, blocks))
    for m in range(nu):
        asm.edge_rows(edge.key, views[m], faces[m], faces[m - 1])
    return asm.system("subclassA")


def assemble_general(volume, space, gluing=None, exact=True):
    asm = _Assembler(volume, space, exact, "general")
    wi = inner_window_general(space)
    wb = boundary_window_general(space)
    ends = sorted(_ends(space.n, 2))
    blocks = [(ends, None), (None, ends)]
    for face in volume.faces:
        if face.inner:
            gd = gluing[face.key] if gluing else compute_gluing(volume, face)
            fam = InnerFaceFamily(volume, space, gd)
            asm.add_face_family(face.key, _face_unknowns(fam, wi, exact, blocks))
        else:
            asm.add_bface(face, wb)
    edge_cols = {}
    for edge in volume.edges:
        for patch in sorted({p for p, _ in edge.owners}):
            view = volume.standard_form_edge(edge, patch)
            left, right = volume.edge_side_faces(view)
            start = len(asm.um)
            asm.edge_rows(edge.key, view, left, right)
            for c in range(start, len(asm.um)):
                lab = asm.um.labels[c]
                edge_cols[(edge.key, patch, lab[3])] = c
    n = space.n
    for vert in volume.vertex_info:
        for patch, _ in vert.owners:
            view = volume.standard_form_vertex(vert.key, patch)
            gids = corner_block_gids(view, n)
            vcols = [asm.um.add(("vertex", vert.key, patch, g), [g], [asm.one])
                     for g in gids.tolist()]
            for edge in _patch_edges_at(volume, patch, vert.key):
                for g, vc in zip(gids.tolist(), vcols):
                    ec = edge_cols[(edge, patch, g)]
                    asm.add_row([(1, {vc: asm.one}), (-1, {ec: asm.one})],
                                ("edge-vertex", vert.key, patch, edge))
    return asm.system("general")


def _patch_edges_at(volume, patch, vertex):
    from .topology import LOCAL_EDGES, edge_corners
    ids = volume.patches[patch]
    out = []
    for le in LOCAL_EDGES:
        a, b = (ids[c] for c in edge_corners(*le))
        if vertex in (a, b):
            out.append(tuple(sorted((a, b))))
    return out


# ---------------------------------------------------------------- rank / kernel

def _to_modular(system, P, cols=None):
    rows = system.rows
    cols = list(range(len(system.unknowns))) if cols is None else list(cols)
    pos = {c: i for i, c in enumerate(cols)}
    M = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for i, row in enumerate(rows):
        for c, v in row.items():
            if c not in pos:
                continue
            v = Fraction(v)
            M[i, pos[c]] = (v.numerator % P) * pow(v.denominator % P, P - 2, P) % P
    return M


def rank_mod(M, P):
    """Rank of an int64 matrix over GF(P) (P < 2^31)."""
    M = M.copy() % P
    rows, cols = M.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(M[r:, c])[0]
        if len(nz) == 0:
            continue
        piv = r + nz[0]
        if piv != r:
            M[[r, piv]] = M[[piv, r]]
        inv = pow(int(M[r, c]), P - 2, P)
        M[r] = (M[r] * inv) % P
        below = r + 1 + np.nonzero(M[r + 1:, c])[0]
        if len(below):
            f = M[below, c][:, None]
            M[below] = (M[below] - (f * M[r][None, :]) % P) % P
        r += 1
    return r


def exact_rank(system):
    """Rank over the rationals (maximum over two large primes)."""
    if not system.exact:
        raise ValueError("exact rank needs an exactly assembled system")
    return max(rank_mod(_to_modular(system, P), P) for P in PRIMES)


def exact_kernel_dim(system):
    """Kernel dimension over the rationals.

    Edge unknowns occurring in exactly one face-edge row with coefficient -1
    and nowhere else are eliminated first (they are determined by that row),
    which shrinks the matrix without changing the kernel dimension."""
    nunk = len(system.unknowns)
    occurrences = {}
    for i, row in enumerate(system.rows):
        for c in row:
            occurrences.setdefault(c, []).append(i)
    kinds = system.unknowns.kinds()
    drop_rows, drop_cols = set(), set()
    for c in range(nunk):
        if kinds[c] == "edge" and len(occurrences.get(c, [])) == 1:
            i = occurrences[c][0]
            if system.tags[i][0] == "face-edge" and i not in drop_rows:
                drop_rows.add(i)
                drop_cols.add(c)
    keep_cols = [c for c in range(nunk) if c not in drop_cols]
    sub = EdgeSystem([r for i, r in enumerate(system.rows) if i not in drop_rows],
                     [t for i, t in enumerate(system.tags) if i not in drop_rows],
                     system.unknowns, system.num_coeffs, True, system.mode)
    if not keep_cols:
        return 0
    rank = max(rank_mod(_to_modular(sub, P, keep_cols), P) for P in PRIMES)
    return len(keep_cols) - rank


def svd_rank(A, tol=1e-9):
    """Numerical rank with relative tolerance; returns (rank, ambiguous, s)."""
    if A.shape[0] == 0 or A.shape[1] == 0:
        return 0, False, np.zeros(0)
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0, False, s
    cut = tol * s[0]
    rank = int((s > cut).sum())
    ambiguous = False
    if rank < len(s):
        below = s[rank]
        above = s[rank - 1] if rank > 0 else np.inf
        ambiguous = not (above > 10 * cut and below < 0.1 * cut)
    return rank, ambiguous, s


def _column_scaled(system):
    A = system.matrix().toarray()
    norms = np.abs(A).max(axis=0)
    norms[norms == 0] = 1.0
    return A / norms, norms


@dataclass
class KernelBasis:
    vectors: np.ndarray      # (num unknowns, dim)
    dim: int
    mode: str
    determining: list = None
    residual: float = 0.0


def kernel_basis(system, mode="svd", tol=1e-9, dim=None):
    """Kernel vectors of the system.  ``dim`` (e.g. the exact kernel
    dimension) overrides the numerical rank decision in svd mode."""
    nunk = len(system.unknowns)
    if nunk == 0:
        return KernelBasis(np.zeros((0, 0)), 0, mode)
    if not system.rows:
        return KernelBasis(np.eye(nunk), nunk, mode)
    A, norms = _column_scaled(system)
    if mode == "svd":
        U, s, Vt = np.linalg.svd(A)
        rank, amb, _ = svd_rank(A, tol)
        if dim is not None and nunk - rank != dim:
            warnings.warn(f"numerical kernel dimension {nunk - rank} differs from the "
                          f"prescribed {dim}; using {dim}", RankAmbiguityWarning)
            rank, amb = nunk - dim, False
        if amb:
            warnings.warn(f"rank gap ambiguous: candidates {rank} and neighbors; "
                          f"singular values near cut {s[max(rank - 1, 0):rank + 1]}",
                          RankAmbiguityWarning)
        K = Vt[rank:].T / norms[:, None]
        det = None
    elif mode == "mds":
        K, det = _mds_kernel(A, tol)
        K = K / norms[:, None]
    else:
        raise ValueError(f"unknown kernel mode {mode!r}")
    # normalize columns
    if K.shape[1]:
        K = K / np.abs(K).max(axis=0)
    res = np.abs(system.matrix() @ K).max() if K.size else 0.0
    return KernelBasis(K, K.shape[1], mode, det, float(res))


def _mds_kernel(A, tol):
    """Kernel via reduced row echelon form: free columns form a determining set."""
    A = A.copy()
    rows, cols = A.shape
    thresh = tol * np.abs(A).max()
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        i = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[i, c]) <= thresh:
            A[r:, c] = 0.0
            continue
        A[[r, i]] = A[[i, r]]
        A[r] /= A[r, c]
        others = np.nonzero(A[:, c])[0]
        others = others[others != r]
        A[others] -= A[others, c][:, None] * A[r][None, :]
        pivots.append(c)
        r += 1
    free = [c for c in range(cols) if c not in set(pivots)]
    K = np.zeros((cols, len(free)))
    for j, f in enumerate(free):
        K[f, j] = 1.0
        for i, pc in enumerate(pivots):
            K[pc, j] = -A[i, f]
    return K, free


def realize_edge_functions(system, kernel):
    """Edge functions as columns in the global coefficient space (CSC)."""
    C = system.realization_matrix()
    if kernel.dim == 0:
        return sp.csc_matrix((system.num_coeffs, 0))
    return sp.csc_matrix(C @ kernel.vectors)


def face_columns_of_system(system):
    """Indices of the face unknowns."""
    return [i for i, k in enumerate(system.unknowns.kinds()) if k in ("face", "bface")]


def kernel_dim(system, method="exact", tol=1e-9):
    if method == "exact":
        return exact_kernel_dim(system)
    A, _ = _column_scaled(system)
    rank, amb, _ = svd_rank(A, tol) if len(system.rows) else (0, False, None)
    if amb:
        warnings.warn("rank gap ambiguous", RankAmbiguityWarning)
    return len(system.unknowns) - rank


def subclass_edge_dim_formula(nu, p, r, k, generic=True):
    """Closed-form generic / non-generic edge-space dimension of the subclass."""
    if generic:
        return 3 * p + 1 + nu * (p - 1) + k * max(0, (nu + 3) * (p - r - 3) + 3)
    return 3 * p + 2 + nu * (p - 1) + k * max(0, (nu + 3) * (p - r - 3) + 4)
