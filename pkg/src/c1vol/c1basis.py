"""Explicit basis families: patch, boundary-face and inner-face functions.

An inner-face function is given on its two patches (in the standard-form
views of the face) by

    side 0:  f0(xi2, xi3) M0(xi1) + B0(xi2, xi3) M1(xi1)
    side 1:  f0(xi1, xi3) M0(xi2) + B1(xi1, xi3) M1(xi2)

with B_s = beta_s d1 f0 + gamma_s d2 f0 +/- alpha_s f1.  Because beta_s,
gamma_s and the splitting polynomials are bilinear, B_s is a short sum of
products of univariate splines, and its coefficients in S^{p,r} follow from
univariate coefficient tables.  Those tables are computed exactly (rational
Greville collocation plus a membership check), so the coefficient tensors
of the face functions are exact whenever the vertices are rational.

The generic :func:`extract_spline_coeffs` (per-element interpolation) is an
independent route used to cross-check the table construction.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import lcm

import numpy as np
import scipy.sparse as sp

from .gluing import GluingError
from .splinecore import SplineSpaceConfig, m_matrix, r_matrix
from .topology import IDENTITY


class MembershipError(ValueError):
    """A constructed function is not a member of the tensor spline space."""


# ---------------------------------------------------------------- exact tables

def solve_exact(A, Y):
    """Solve A X = Y over the rationals by Gauss-Jordan elimination."""
    A = np.array(A, dtype=object)
    Y = np.array(Y, dtype=object)
    n = A.shape[0]
    M = np.concatenate([A, Y], axis=1)
    for col in range(n):
        piv = next((i for i in range(col, n) if M[i, col] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular collocation matrix")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
        M[col] = M[col] / M[col, col]
        for i in range(n):
            if i != col and M[i, col] != 0:
                M[i] = M[i] - M[i, col] * M[col]
    return M[:, n:]


TABLE_NAMES = ("N", "D0", "D1", "W0", "W1", "T0", "T1", "T2")


@dataclass(frozen=True)
class UnivariateTables:
    """Coefficients in S^{p,r} (columns) of the univariate building blocks.

    N  : N^{p,r+1}_j
    Da : t^a dN^{p,r+1}_j
    Wa : t^a (N^{p,r+1}_j - t dN^{p,r+1}_j / p)
    Ta : t^a N^{p-2,r}_j

    ``numer[name] / denom`` equals ``exact[name]`` with integer numerators,
    which makes exact products much cheaper than Fraction arithmetic."""
    space: SplineSpaceConfig
    exact: dict
    approx: dict
    numer: dict
    denom: int

    def get(self, name, exact=False):
        return (self.exact if exact else self.approx)[name]


def _block_values(space, x):
    p = space.p
    tr, tv = space.trace_basis, space.transversal_basis
    N = tr.exact(x)
    D = tr.exact(x, 1)
    W = [a - x * b / p for a, b in zip(N, D)]
    T = tv.exact(x)
    out = {"N": N, "D0": D, "D1": [x * v for v in D], "W0": W,
           "W1": [x * v for v in W], "T0": T, "T1": [x * v for v in T],
           "T2": [x * x * v for v in T]}
    return out


def _support(basis, j):
    t, d = basis.knots, basis.degree
    return t[j], t[j + d + 1]


@lru_cache(maxsize=None)
def univariate_tables(p, r, k):
    space = SplineSpaceConfig(p, r, k)
    B = space.basis
    n = B.dim
    g = B.greville
    A = [B.exact(x) for x in g]
    vals = [_block_values(space, x) for x in g]
    exact = {}
    for nm in TABLE_NAMES:
        src = space.transversal_basis if nm.startswith("T") else space.trace_basis
        tab = np.full((src.dim, n), Fraction(0), dtype=object)
        for j in range(src.dim):
            # a spline of S^{p,r} supported in [lo, hi] only uses the
            # B-splines whose support lies there; solve the local system
            lo, hi = _support(src, j)
            idx = [i for i in range(n) if B.knots[i] >= lo and B.knots[i + p + 1] <= hi]
            Asub = [[A[i][l] for l in idx] for i in idx]
            Ysub = [[vals[i][nm][j]] for i in idx]
            tab[j, idx] = solve_exact(Asub, Ysub)[:, 0]
        exact[nm] = tab
    # membership check at points off the collocation grid
    checks = []
    for e in range(k + 1):
        for q in range(1, p + 2):
            checks.append(Fraction(e, k + 1) + Fraction(q, (p + 2) * (k + 1)))
    for x in checks:
        bx = np.array(B.exact(x), dtype=object)
        nz = np.nonzero(bx != 0)[0]
        v = _block_values(space, x)
        for nm in TABLE_NAMES:
            if any(exact[nm][:, nz].dot(bx[nz]) != np.array(v[nm], dtype=object)):
                raise MembershipError(f"univariate block {nm} is not in S^{p},{r}")
    approx = {nm: np.array(t, dtype=float) for nm, t in exact.items()}
    denom = 1
    for t in exact.values():
        for x in t.ravel():
            denom = lcm(denom, x.denominator)
    numer = {nm: np.array([[int(x * denom) for x in row] for row in t], dtype=object)
             for nm, t in exact.items()}
    return UnivariateTables(space, exact, approx, numer, denom)


def tables_for(space):
    return univariate_tables(space.p, space.r, space.k)


# ---------------------------------------------------------------- index maps

def view_index_map(sym, n):
    """Flattened original-frame index of every entry of a viewed tensor."""
    J = np.indices((n, n, n))
    out = [None] * 3
    for a in range(3):
        out[sym.perm[a]] = n - 1 - J[a] if sym.flips[a] else J[a]
    return out[0] * n * n + out[1] * n + out[2]


_VIEW_MAPS = {}


def view_map(sym, n):
    key = (sym, n)
    if key not in _VIEW_MAPS:
        _VIEW_MAPS[key] = view_index_map(sym, n)
    return _VIEW_MAPS[key]


def global_ids(view, n, idx):
    """Global coefficient ids of view-frame tensor indices idx (tuple of arrays)."""
    return view.patch * n ** 3 + view_map(view.sym, n)[idx]


# ---------------------------------------------------------------- functions

@dataclass
class IsogeometricFunction:
    """Per-patch coefficient tensors (absent patch means zero)."""
    space: SplineSpaceConfig
    coeffs: dict
    kind: str = ""
    index: tuple = ()

    def on_patch(self, i):
        if i in self.coeffs:
            return self.coeffs[i]
        n = self.space.n
        return np.zeros((n, n, n))

    def evaluate(self, i, xi, derivs=(0, 0, 0)):
        from .splinecore import eval_tensor3_many
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if i not in self.coeffs:
            return np.zeros(len(xi))
        return eval_tensor3_many(self.space, self.coeffs[i], xi, derivs)

    @classmethod
    def from_column(cls, space, col, num_patches, kind="", index=()):
        n3 = space.n ** 3
        col = np.asarray(col.todense()).ravel() if sp.issparse(col) else np.asarray(col)
        coeffs = {}
        for i in range(num_patches):
            block = col[i * n3:(i + 1) * n3]
            if np.any(block != 0):
                coeffs[i] = block.reshape(space.n, space.n, space.n).astype(float)
        return cls(space, coeffs, kind, index)

    def to_json(self):
        return {"kind": self.kind, "index": list(self.index),
                "p": self.space.p, "r": self.space.r, "k": self.space.k,
                "coeffs": {str(i): a.tolist() for i, a in self.coeffs.items()}}


def patch_function(volume, space, i, j):
    n = space.n
    if not 0 <= i < volume.num_patches:
        raise IndexError(f"patch {i} out of range")
    if any(not 0 <= v < n for v in j):
        raise IndexError(f"index {j} out of range 0..{n - 1}")
    a = np.zeros((n, n, n))
    a[tuple(j)] = 1.0
    return IsogeometricFunction(space, {i: a}, "patch", (i,) + tuple(j))


def boundary_face_function(volume, space, face, j):
    """Standard B-spline j = (j1, j2, j3) of the face's patch seen with the
    face at xi1 = 0."""
    v = volume.standard_form_boundary(face)
    n = space.n
    if j[0] not in (0, 1) or any(not 0 <= x < n for x in j[1:]):
        raise IndexError(f"boundary-face index {j} out of range")
    a = np.zeros(n ** 3)
    a[view_map(v.sym, n)[tuple(j)]] = 1.0
    return IsogeometricFunction(space, {v.patch: a.reshape(n, n, n)},
                                "boundary-face", (face.key,) + tuple(j))


class InnerFaceFamily:
    """All functions phi_{j1,j2,j3} of one inner face."""

    def __init__(self, volume, space, gd):
        self.volume = volume
        self.space = space
        self.gd = gd
        self.views = gd.views
        self.tables = tables_for(space)

    def sizes(self, j1):
        return self.space.n0 if j1 == 0 else self.space.n1

    def terms(self, j1, side):
        """Bilinear/biquadratic weights of the separable sum for B_side."""
        gd = self.gd
        p = self.space.p
        out = []
        if j1 == 0:
            if not gd.has_split:
                raise GluingError("planar face: j1 = 0 face functions need the splitting")
            if side == 0:
                be, ga, de = gd.beta0, gd.gamma0, gd.delta0
            else:
                be, ga, de = gd.beta1, gd.gamma1, gd.delta1
            for (P, U, V, scale) in ((be, "D", "W", 1), (ga, "W", "D", 1),
                                     (de, "D", "D", Fraction(1, p))):
                c = P.c
                for a in range(c.shape[0]):
                    for b in range(c.shape[1]):
                        if c[a, b] != 0:
                            out.append((c[a, b] * scale, f"{U}{a}", f"{V}{b}"))
        else:
            alpha = gd.alpha0 if side == 0 else -gd.alpha1
            c = alpha.c
            for a in range(c.shape[0]):
                for b in range(c.shape[1]):
                    if c[a, b] != 0:
                        out.append((c[a, b], f"T{a}", f"T{b}"))
        return out

    def layers(self, j1, side, J2=None, J3=None, exact=False, B=None, C=None):
        """Coefficient layers in the side's view frame.

        Returns an array of shape (|J2|, |J3|, 2, |B|, |C|): entry
        [u, v, l, b, c] is the coefficient of layer l (transversal index)
        at tangential indices (B[b], C[c]) of phi_{j1, J2[u], J3[v]}.
        B and C default to all indices."""
        m = self.sizes(j1)
        J2 = np.arange(m) if J2 is None else np.asarray(J2, dtype=int)
        J3 = np.arange(m) if J3 is None else np.asarray(J3, dtype=int)
        T = self.tables
        n = self.space.n
        B = np.arange(n) if B is None else np.asarray(B, dtype=int)
        C = np.arange(n) if C is None else np.asarray(C, dtype=int)
        if exact:
            return self._layers_exact(j1, side, J2, J3, B, C)
        hp = 1.0 / ((self.space.k + 1) * self.space.p)
        S = np.zeros((len(J2), len(J3), len(B), len(C)))
        for w, U, V in self.terms(j1, side):
            u = T.get(U)[np.ix_(J2, B)]
            v = T.get(V)[np.ix_(J3, C)]
            S += float(w) * (u[:, None, :, None] * v[None, :, None, :])
        out = np.zeros((len(J2), len(J3), 2, len(B), len(C)))
        if j1 == 0:
            u = T.get("N")[np.ix_(J2, B)]
            v = T.get("N")[np.ix_(J3, C)]
            out[:, :, 0] = u[:, None, :, None] * v[None, :, None, :]
        out[:, :, 1] = out[:, :, 0] + hp * S
        return out

    def _layers_exact(self, j1, side, J2, J3, B, C):
        """Exact version of :meth:`layers` with integer numerators.

        Entries are Fractions where nonzero and the int 0 elsewhere."""
        T = self.tables
        terms = self.terms(j1, side)
        dw = 1
        for w, _, _ in terms:
            dw = lcm(dw, Fraction(w).denominator)
        hp = Fraction(1, (self.space.k + 1) * self.space.p)
        # F = Fint / D^2 and S = Sint / (dw D^2)
        shape = (len(J2), len(J3), len(B), len(C))
        Sint = np.zeros(shape, dtype=object)
        Sint[...] = 0
        for w, U, V in terms:
            u = T.numer[U][np.ix_(J2, B)]
            v = T.numer[V][np.ix_(J3, C)]
            Sint = Sint + int(Fraction(w) * dw) * (u[:, None, :, None] * v[None, :, None, :])
        Fint = np.zeros(shape, dtype=object)
        Fint[...] = 0
        if j1 == 0:
            u = T.numer["N"][np.ix_(J2, B)]
            v = T.numer["N"][np.ix_(J3, C)]
            Fint = u[:, None, :, None] * v[None, :, None, :]
        D2 = T.denom ** 2
        s_num, s_den = hp.numerator, hp.denominator * dw
        # layer 1 = (Fint s_den + Sint s_num) / (D2 s_den)
        L1 = Fint * s_den + Sint * s_num
        out = np.zeros((len(J2), len(J3), 2, len(B), len(C)), dtype=object)
        out[...] = 0
        for l, (num, den) in enumerate(((Fint, D2), (L1, D2 * s_den))):
            flat = num.ravel()
            res = np.zeros(flat.shape, dtype=object)
            res[...] = 0
            for i in np.nonzero(flat != 0)[0]:
                res[i] = Fraction(flat[i], den)
            out[:, :, l] = res.reshape(num.shape)
        return out

    def side_gids(self, side, B=None, C=None):
        """Global ids array (2, |B|, |C|): layer l, tangential (b, c)."""
        n = self.space.n
        v = self.views[side]
        m = view_map(v.sym, n)
        if side == 0:
            ids = m[0:2, :, :]
        else:
            ids = np.transpose(m[:, 0:2, :], (1, 0, 2))
        if B is not None:
            ids = ids[:, B, :]
        if C is not None:
            ids = ids[:, :, C]
        return v.patch * n ** 3 + ids

    def entries(self, j1, J2=None, J3=None, exact=False, B=None, C=None):
        """Sparse entries of the functions phi_{j1, J2 x J3}, optionally
        restricted to tangential coefficient indices B x C.

        Returns (list of (j1, j2, j3), list of (gids, values))."""
        m = self.sizes(j1)
        J2 = np.arange(m) if J2 is None else np.asarray(J2, dtype=int)
        J3 = np.arange(m) if J3 is None else np.asarray(J3, dtype=int)
        per_side = [self.layers(j1, s, J2, J3, exact, B, C) for s in (0, 1)]
        gids = [self.side_gids(s, B, C).ravel() for s in (0, 1)]
        labels, cols = [], []
        for u, j2 in enumerate(J2):
            for v, j3 in enumerate(J3):
                g_all, v_all = [], []
                for s in (0, 1):
                    vals = per_side[s][u, v].ravel()
                    nz = np.nonzero(vals != 0)[0]
                    g_all.append(gids[s][nz])
                    v_all.append(vals[nz])
                labels.append((j1, int(j2), int(j3)))
                cols.append((np.concatenate(g_all), np.concatenate(v_all)))
        return labels, cols

    def function(self, j1, j2, j3):
        labels, cols = self.entries(j1, [j2], [j3])
        g, val = cols[0]
        n = self.space.n
        coeffs = {}
        for gi, vi in zip(g, val):
            i, loc = divmod(int(gi), n ** 3)
            coeffs.setdefault(i, np.zeros(n ** 3))[loc] = float(vi)
        coeffs = {i: a.reshape(n, n, n) for i, a in coeffs.items()}
        return IsogeometricFunction(self.space, coeffs, f"inner-face-{j1}",
                                    (self.gd.face_key, j1, j2, j3))


def inner_face_function(volume, space, gd, j1, j2, j3):
    fam = InnerFaceFamily(volume, space, gd)
    m = fam.sizes(j1)
    if j1 not in (0, 1) or not (0 <= j2 < m and 0 <= j3 < m):
        raise IndexError(f"inner-face index ({j1}, {j2}, {j3}) out of range")
    return fam.function(j1, j2, j3)


def columns_matrix(cols, total, exact=False):
    """Stack sparse (gids, values) columns into a CSC matrix (float)."""
    rows, cidx, vals = [], [], []
    for c, (g, v) in enumerate(cols):
        rows.append(g)
        cidx.append(np.full(len(g), c))
        vals.append(np.asarray(v, dtype=float))
    if not cols:
        return sp.csc_matrix((total, 0))
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cidx))),
                         shape=(total, len(cols)))


# ---------------------------------------------------------------- direct route

@dataclass
class TracePair:
    """Trace f0 and transversal derivative f1 as callables of (t1, t2).

    ``f0(t1, t2, d)`` returns the mixed partial of order d = (d1, d2)."""
    f0: object
    f1: object


def tensor_trace(space, j1, j2, j3, variant="derivative", lam=None, vol=None):
    """The trace pair selected for phi_{j1,j2,j3} of an inner face."""
    tr, tv = space.trace_basis, space.transversal_basis
    if j1 == 0:
        def f0(t1, t2, d=(0, 0)):
            return tr.matrix(t1, d[0])[:, j2] * tr.matrix(t2, d[1])[:, j3]
        scale = space.p / (float(lam) * float(vol))

        def f1(t1, t2):
            return scale * (r_matrix(space, t1, 0, variant)[:, j2]
                            * r_matrix(space, t2, 0, variant)[:, j3])
    else:
        def f0(t1, t2, d=(0, 0)):
            return np.zeros(np.shape(np.atleast_1d(t1)))

        def f1(t1, t2):
            return tv.matrix(t1)[:, j2] * tv.matrix(t2)[:, j3]
    return TracePair(f0, f1)


def taylor_sides(space, pair, gd):
    """The two patch-local expressions (view frames) of the first-order
    expansion, with M0/M1 in place of 1 and the transversal coordinate."""
    def transversal(side, t1, t2):
        a0, bs, gs, sign = gd.side(side)
        lin = 0.0
        if bs is not None:
            lin = bs.evalf(t1, t2) * pair.f0(t1, t2, (1, 0)) + gs.evalf(t1, t2) * pair.f0(t1, t2, (0, 1))
        return lin + sign * a0.evalf(t1, t2) * pair.f1(t1, t2)

    def side0(xi):
        xi = np.atleast_2d(xi)
        t1, t2 = xi[:, 1], xi[:, 2]
        M = m_matrix(space, xi[:, 0])
        return pair.f0(t1, t2) * M[:, 0] + transversal(0, t1, t2) * M[:, 1]

    def side1(xi):
        xi = np.atleast_2d(xi)
        t1, t2 = xi[:, 0], xi[:, 2]
        M = m_matrix(space, xi[:, 1])
        return pair.f0(t1, t2) * M[:, 0] + transversal(1, t1, t2) * M[:, 1]

    return side0, side1


def extract_spline_coeffs(func, space, tol=1e-10):
    """Coefficients in S^{p,r} (x3) of a patch-local function.

    The function is interpolated on every element at (p+1)^3 Chebyshev
    points; local coefficients of each global B-spline from all elements in
    its support must agree (relative tol), otherwise the function is not a
    member of the space and :class:`MembershipError` is raised."""
    B = space.basis
    p, k, n = space.p, space.k, space.n
    E = k + 1
    q = p + 1
    cheb = 0.5 - 0.5 * np.cos((2 * np.arange(q) + 1) * np.pi / (2 * q))
    pts = ((np.arange(E)[:, None] + cheb[None, :]) / E).ravel()  # (E*q,)
    Bm = B.matrix(pts)  # (E*q, n)
    starts = np.zeros(E, dtype=int)
    Linv = np.zeros((E, q, q))
    for e in range(E):
        rows = Bm[e * q:(e + 1) * q]
        nz = np.nonzero(np.abs(rows).sum(axis=0) > 0)[0]
        if len(nz) != q:
            raise ValueError("unexpected number of active B-splines on an element")
        starts[e] = nz[0]
        Linv[e] = np.linalg.inv(rows[:, nz])
    X = np.stack(np.meshgrid(pts, pts, pts, indexing="ij"), -1).reshape(-1, 3)
    V = np.asarray(func(X), dtype=float).reshape(E, q, E, q, E, q)
    C = np.einsum("aiq,bjr,cks,aqbrcs->aibjck", Linv, Linv, Linv, V, optimize=True)
    gidx = starts[:, None] + np.arange(q)[None, :]  # (E, q)
    G1 = gidx[:, :, None, None, None, None]
    G2 = gidx[None, None, :, :, None, None]
    G3 = gidx[None, None, None, None, :, :]
    flat = np.broadcast_to(G1 * n * n + G2 * n + G3, C.shape).ravel()
    vals = C.ravel()
    s = np.zeros(n ** 3)
    cnt = np.zeros(n ** 3)
    np.add.at(s, flat, vals)
    np.add.at(cnt, flat, 1)
    mean = s / np.maximum(cnt, 1)
    scale = max(np.abs(mean).max(), 1e-300)
    dev = np.abs(vals - mean[flat]).max() / scale
    if dev > tol:
        raise MembershipError(f"element-wise coefficients disagree (relative {dev:.2e})")
    return mean.reshape(n, n, n)


def face_function_expression(volume, space, gd, j1, j2, j3, variant="derivative"):
    """Direct evaluation of phi_{j1,j2,j3} on both patches (view frames)."""
    pair = tensor_trace(space, j1, j2, j3, variant, gd.lam, gd.vol if gd.vol else 1)
    return taylor_sides(space, pair, gd)
