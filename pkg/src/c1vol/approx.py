"""L2 approximation in the C1 space and error measurement.

The mass matrix of the underlying discontinuous tensor spaces is applied
matrix-free by sum factorization on a per-element Gauss-Legendre grid.  The
Gram matrix of a C1 basis is Phi^T M Phi with Phi the sparse basis matrix.
Small problems form it densely and use a Jacobi-scaled Cholesky
factorization; large ones run preconditioned conjugate gradients with a
block preconditioner (Kronecker blocks for the patch-function boxes, a dense
factorized block for the face and edge functions).
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .c1space import point_eval_matrix


class IllConditionedError(np.linalg.LinAlgError):
    """The Gram matrix is numerically singular."""


# ---------------------------------------------------------------- quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule with q points per element and direction."""
    q: int
    elements: int
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def make(cls, q, elements):
        x, w = np.polynomial.legendre.leggauss(q)
        x = (x + 1) / 2
        w = w / 2
        e = np.arange(elements)[:, None]
        nodes = ((e + x[None, :]) / elements).ravel()
        weights = np.tile(w / elements, elements)
        return cls(q, elements, nodes, weights)


def quadrature(space, q=None):
    return QuadratureRule.make(q or space.p + 1, space.k + 1)


# ---------------------------------------------------------------- targets

def builtin_target(name):
    """Targets by name: 'cos-sin-cos' or 'constant:<value>' or
    'coordinate:<0|1|2>'."""
    if name in ("cos-sin-cos", "builtin:cos-sin-cos"):
        return lambda x: 5 * np.cos(x[:, 0] / 2) * np.sin(x[:, 1] / 2) * np.cos(x[:, 2] / 2)
    if name.startswith("constant:"):
        c = float(name.split(":", 1)[1])
        return lambda x: np.full(len(x), c)
    if name.startswith("coordinate:"):
        a = int(name.split(":", 1)[1])
        return lambda x: np.array(x[:, a], dtype=float)
    raise ValueError(f"unknown target {name!r}")


# ---------------------------------------------------------------- mass operator

class MassOperator:
    """Matrix-free mass matrix of the per-patch tensor spaces."""

    def __init__(self, volume, space, q=None):
        self.volume = volume
        self.space = space
        self.rule = quadrature(space, q)
        x = self.rule.nodes
        self.B = space.basis.matrix(x)             # (Q, n)
        Q = len(x)
        self.Q = Q
        n = space.n
        self.n = n
        X1, X2, X3 = np.meshgrid(x, x, x, indexing="ij")
        xi = np.column_stack([X1.ravel(), X2.ravel(), X3.ravel()])
        w = self.rule.weights
        W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
        self.points, self.weights = [], []
        for i in range(volume.num_patches):
            J = volume.jacobian(i, xi)
            det = np.abs(np.linalg.det(J))
            self.points.append(volume.eval_patch(i, xi))
            self.weights.append((W * det).reshape(Q, Q, Q))

    @property
    def size(self):
        return self.volume.num_patches * self.n ** 3

    def to_points(self, coeffs_patch):
        """Values at the quadrature grid of patch coefficient tensors (n,n,n,...)."""
        U = coeffs_patch
        for _ in range(3):
            U = np.tensordot(self.B, U, axes=(1, 0))
            U = np.moveaxis(U, 0, 2)
        return U

    def from_points(self, V):
        for _ in range(3):
            V = np.tensordot(self.B.T, V, axes=(1, 0))
            V = np.moveaxis(V, 0, 2)
        return V

    def apply(self, u):
        """M u for global coefficient vectors u of shape (size,) or (size, c)."""
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        if single:
            u = u[:, None]
        n, n3 = self.n, self.n ** 3
        out = np.zeros_like(u)
        for i in range(self.volume.num_patches):
            U = u[i * n3:(i + 1) * n3].reshape(n, n, n, -1)
            V = self.to_points(U) * self.weights[i][..., None]
            out[i * n3:(i + 1) * n3] = self.from_points(V).reshape(n3, -1)
        return out[:, 0] if single else out

    def load_vector(self, f):
        """Integrals of every tensor B-spline against f (global vector)."""
        n3 = self.n ** 3
        out = np.zeros(self.size)
        Q = self.Q
        for i in range(self.volume.num_patches):
            V = f(self.points[i]).reshape(Q, Q, Q) * self.weights[i]
            out[i * n3:(i + 1) * n3] = self.from_points(V).ravel()
        return out

    def diagonal(self):
        """Diagonal of M."""
        B2 = self.B ** 2
        n3 = self.n ** 3
        out = np.zeros(self.size)
        for i in range(self.volume.num_patches):
            V = self.weights[i]
            for _ in range(3):
                V = np.tensordot(B2.T, V, axes=(1, 0))
                V = np.moveaxis(V, 0, 2)
            out[i * n3:(i + 1) * n3] = V.ravel()
        return out

    def integrate(self, f):
        return sum(float((f(self.points[i]).reshape(self.weights[i].shape)
                          * self.weights[i]).sum()) for i in range(self.volume.num_patches))

    def patch_volumes(self):
        return [float(w.sum()) for w in self.weights]

    def values(self, g):
        """Values of the global coefficient vector g at every patch's grid."""
        n, n3 = self.n, self.n ** 3
        return [self.to_points(g[i * n3:(i + 1) * n3].reshape(n, n, n))
                for i in range(self.volume.num_patches)]


def gram_matrix(basis, q=None, mass=None, batch=256):
    """Dense Gram matrix Phi^T M Phi (desk scale)."""
    M = mass or MassOperator(basis.volume, basis.space, q)
    Phi = basis.matrix.tocsc()
    d = Phi.shape[1]
    G = np.zeros((d, d))
    for a in range(0, d, batch):
        cols = Phi[:, a:a + batch].toarray()
        G[:, a:a + batch] = Phi.T @ M.apply(cols)
    return (G + G.T) / 2


# ---------------------------------------------------------------- preconditioner

def _mass_1d(space, q):
    rule = QuadratureRule.make(q, space.k + 1)
    B = space.basis.matrix(rule.nodes)
    return (B * rule.weights[:, None]).T @ B


@dataclass
class _KronBlock:
    cols: np.ndarray          # basis column indices
    vecs: list                # eigenvectors of the 1D blocks
    vals: np.ndarray          # (a, b, c) eigenvalue tensor
    order: np.ndarray         # box position of each column
    scale: np.ndarray         # Jacobi correction
    shape: tuple

    def solve(self, r):
        x = np.zeros(np.prod(self.shape))
        x[self.order] = r / self.scale
        X = x.reshape(self.shape)
        for ax, V in enumerate(self.vecs):
            X = np.moveaxis(np.tensordot(V.T, np.moveaxis(X, ax, 0), axes=(1, 0)), 0, ax)
        X = X / self.vals
        for ax, V in enumerate(self.vecs):
            X = np.moveaxis(np.tensordot(V, np.moveaxis(X, ax, 0), axes=(1, 0)), 0, ax)
        return X.ravel()[self.order] / self.scale


class BlockPreconditioner:
    """Kronecker blocks for patch-function boxes, dense block for the rest."""

    def __init__(self, basis, mass, q):
        space = basis.space
        n, n3 = space.n, space.n ** 3
        Phi = basis.matrix.tocsc()
        M1 = _mass_1d(space, q or space.p + 1)
        diagM = mass.diagonal()
        self.blocks = []
        rest = set(range(basis.dim))
        if "patch" in basis.families:
            a, b = basis.families["patch"]
            cols = np.arange(a, b)
            gids = Phi[:, a:b].indices if (Phi[:, a:b].nnz == b - a) else None
            if gids is not None:
                for i in range(basis.volume.num_patches):
                    sel = (gids >= i * n3) & (gids < (i + 1) * n3)
                    if not sel.any():
                        continue
                    blk = self._kron_block(cols[sel], gids[sel] - i * n3, n, M1,
                                           diagM[gids[sel]])
                    if blk is not None:
                        self.blocks.append(blk)
                        rest -= set(blk.cols.tolist())
        self.rest = np.array(sorted(rest), dtype=int)
        if len(self.rest):
            R = Phi[:, self.rest]
            GR = np.zeros((len(self.rest), len(self.rest)))
            for s in range(0, len(self.rest), 256):
                cols = R[:, s:s + 256].toarray()
                GR[:, s:s + 256] = R.T @ mass.apply(cols)
            GR = (GR + GR.T) / 2
            d = np.sqrt(np.diag(GR))
            self.rest_scale = d
            self.rest_factor = sla.cho_factor(GR / d[:, None] / d[None, :])
        self.dim = basis.dim

    @staticmethod
    def _kron_block(cols, loc, n, M1, diag):
        ijk = np.array(np.unravel_index(loc, (n, n, n)))
        axes = [np.unique(ijk[a]) for a in range(3)]
        shape = tuple(len(x) for x in axes)
        if np.prod(shape) != len(loc):
            return None                 # not a box; handled by the dense block
        pos = [np.searchsorted(axes[a], ijk[a]) for a in range(3)]
        order = np.ravel_multi_index(pos, shape)
        vecs, lams = [], []
        for a in range(3):
            w, V = np.linalg.eigh(M1[np.ix_(axes[a], axes[a])])
            vecs.append(V)
            lams.append(w)
        vals = lams[0][:, None, None] * lams[1][None, :, None] * lams[2][None, None, :]
        kd = (np.diag(M1)[axes[0]][:, None, None] * np.diag(M1)[axes[1]][None, :, None]
              * np.diag(M1)[axes[2]][None, None, :]).ravel()[order]
        scale = np.sqrt(diag / kd)
        return _KronBlock(cols, vecs, vals, order, scale, shape)

    def __call__(self, r):
        z = np.zeros_like(r)
        for blk in self.blocks:
            z[blk.cols] = blk.solve(r[blk.cols])
        if len(self.rest):
            d = self.rest_scale
            z[self.rest] = sla.cho_solve(self.rest_factor, r[self.rest] / d) / d
        return z


def pcg(apply_A, b, precond, tol=1e-12, maxiter=2000):
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = r @ z
    nb = np.linalg.norm(b)
    if nb == 0:
        return x, 0, 0.0
    for it in range(1, maxiter + 1):
        Ap = apply_A(p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / nb
        if res < tol:
            return x, it, res
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    warnings.warn(f"PCG stopped after {maxiter} iterations (relative residual {res:.2e})")
    return x, maxiter, res


# ---------------------------------------------------------------- fitting

@dataclass
class FitResult:
    coeffs: np.ndarray
    e_volume: float
    e_faces: float
    e_edge: float
    method: str
    iterations: int = 0
    residual: float = 0.0
    diagnostics: dict = field(default_factory=dict)


DENSE_LIMIT = 6000


def solve_normal_equations(basis, b, mass, method="auto", q=None, tol=1e-12):
    d = basis.dim
    if method == "auto":
        method = "dense" if d <= DENSE_LIMIT else "pcg"
    Phi = basis.matrix.tocsr()
    PhiT = Phi.T.tocsr()
    if method == "dense":
        G = gram_matrix(basis, q, mass)
        s = np.sqrt(np.diag(G))
        if np.any(s == 0):
            raise IllConditionedError("a basis function has zero norm")
        Gs = G / s[:, None] / s[None, :]
        try:
            fac = sla.cho_factor(Gs)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedError(f"Gram matrix not positive definite: {exc}") from exc
        dmin = np.min(np.diag(fac[0])) ** 2
        if dmin <= 1e-14 * np.abs(Gs).max():
            raise IllConditionedError(f"Gram matrix numerically singular (pivot {dmin:.2e})")
        c = sla.cho_solve(fac, b / s) / s
        res = np.linalg.norm(G @ c - b) / max(np.linalg.norm(b), 1e-300)
        return c, "dense", 0, float(res)
    if method != "pcg":
        raise ValueError(f"unknown solver {method!r}")
    P = BlockPreconditioner(basis, mass, q)
    c, it, res = pcg(lambda v: PhiT @ mass.apply(Phi @ v), b, P, tol)
    return c, "pcg", it, float(res)


def l2_fit(basis, target, q=None, method="auto", tol=1e-12, mass=None):
    """Least-squares fit of target (callable on (m, 3) physical points or a
    builtin name) in the span of the basis, with relative L2 errors on the
    volume, the inner faces and the inner edges."""
    if isinstance(target, str):
        target = builtin_target(target)
    mass = mass or MassOperator(basis.volume, basis.space, q)
    Phi = basis.matrix.tocsr()
    b = Phi.T @ mass.load_vector(target)
    c, how, it, res = solve_normal_equations(basis, b, mass, method, q, tol)
    g = Phi @ c
    ev = error_on_region(basis, g, target, "volume", q, mass=mass, global_coeffs=True)
    ef = error_on_region(basis, g, target, "inner-faces", q, global_coeffs=True)
    ee = error_on_region(basis, g, target, "inner-edge", q, global_coeffs=True)
    return FitResult(c, ev, ef, ee, how, it, res)


def _rel(num, den, region):
    if den <= 0:
        raise ValueError(f"target has zero norm on region {region!r}")
    return math.sqrt(max(num, 0.0) / den)


def error_on_region(basis, c, target, region="volume", q=None, mass=None, global_coeffs=False):
    """Relative L2 error of sum c_j phi_j against target on the volume, the
    union of inner faces or the union of inner edges."""
    if isinstance(target, str):
        target = builtin_target(target)
    space, vol = basis.space, basis.volume
    g = np.asarray(c, dtype=float) if global_coeffs else basis.coefficients(c)
    n3 = space.n ** 3
    if region == "volume":
        mass = mass or MassOperator(vol, space, q)
        vals = mass.values(g)
        num = den = 0.0
        for i, V in enumerate(vals):
            z = target(mass.points[i]).reshape(V.shape)
            num += float(((V - z) ** 2 * mass.weights[i]).sum())
            den += float((z ** 2 * mass.weights[i]).sum())
        return _rel(num, den, region)
    rule = quadrature(space, q)
    x, w = rule.nodes, rule.weights
    num = den = 0.0
    if region == "inner-faces":
        from .gluing import compute_gluing
        T1, T2 = np.meshgrid(x, x, indexing="ij")
        W = (w[:, None] * w[None, :]).ravel()
        eta = np.column_stack([np.zeros(T1.size), T1.ravel(), T2.ravel()])
        for face in vol.inner_faces:
            v = compute_gluing(vol, face).views[0]
            J = vol.jacobian(v.patch, eta, v.sym)
            dA = np.linalg.norm(np.cross(J[:, :, 1], J[:, :, 2]), axis=1)
            X = vol.eval_patch(v.patch, eta, sym=v.sym)
            u = point_eval_matrix(space, v.sym(eta)) @ g[v.patch * n3:(v.patch + 1) * n3]
            z = target(X)
            num += float(((u - z) ** 2 * W * dA).sum())
            den += float((z ** 2 * W * dA).sum())
        return _rel(num, den, region)
    if region == "inner-edge":
        edges = vol.inner_edges
        if not edges:
            raise ValueError("volume has no inner edge")
        eta = np.column_stack([np.zeros(len(x)), np.zeros(len(x)), x])
        for edge in edges:
            patch = edge.owners[0][0]
            v = vol.standard_form_edge(edge, patch)
            J = vol.jacobian(v.patch, eta, v.sym)
            ds = np.linalg.norm(J[:, :, 2], axis=1)
            X = vol.eval_patch(v.patch, eta, sym=v.sym)
            u = point_eval_matrix(space, v.sym(eta)) @ g[v.patch * n3:(v.patch + 1) * n3]
            z = target(X)
            num += float(((u - z) ** 2 * w * ds).sum())
            den += float((z ** 2 * w * ds).sum())
        return _rel(num, den, region)
    raise ValueError(f"unknown region {region!r}")


# ---------------------------------------------------------------- studies

CONVERGENCE_COLUMNS = ("p", "r", "L", "dim_total", "dim_patch", "dim_face", "dim_edge",
                       "e_volume", "e_faces", "e_edge", "order_volume", "note")


def convergence_study(volume, ps, r, Ls, target="cos-sin-cos", max_dim=30000,
                      q=None, mode="auto"):
    """One row per (p, L) with dimensions, errors and estimated orders
    log2(e_{L-1} / e_L).  Rows over max_dim report dimensions only."""
    from .c1space import build_space, dims_report
    rows = []
    for p in ps:
        prev = None
        for L in Ls:
            k = 2 ** L - 1
            row = {"p": p, "r": r, "L": L}
            try:
                rep = dims_report(volume, p, r, k, mode)
                row.update(dim_total=rep.dim_total, dim_patch=rep.dim_patch,
                           dim_face=rep.dim_face, dim_edge=rep.dim_edge)
                if rep.dim_total > max_dim:
                    row["note"] = f"dimension {rep.dim_total} above cap {max_dim}; errors skipped"
                    prev = None
                    rows.append(row)
                    continue
                basis = build_space(volume, p, r, k, mode=mode)
                fit = l2_fit(basis, target, q)
                row.update(e_volume=fit.e_volume, e_faces=fit.e_faces, e_edge=fit.e_edge)
                if prev is not None and fit.e_volume > 0:
                    row["order_volume"] = math.log2(prev / fit.e_volume)
                prev = fit.e_volume
            except Exception as exc:   # record the failure and keep going
                row["note"] = f"failed: {exc}"
                prev = None
            rows.append(row)
    return rows
