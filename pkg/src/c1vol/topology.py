"""Trilinear multi-patch volumes: data model, incidence and standard-form views.

Corner convention of a patch (bit pattern of (xi1, xi2, xi3), xi1 fastest)::

          6 ---------- 7
         /|           /|          xi3
        4 ---------- 5 |           |  xi2
        | |          | |           | /
        | 2 ---------|-3           |/
        |/           |/            +---- xi1
        0 ---------- 1

A view is a patch together with a cube symmetry ``s``; the viewed map is
``F(s(eta))``.  Views are never stored as new geometry.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import permutations, product

import numpy as np

from .polyalgebra import Poly, det3


class TopologyError(ValueError):
    pass


class VolumeParseError(ValueError):
    pass


# ---------------------------------------------------------------- symmetries

@dataclass(frozen=True)
class CubeSymmetry:
    """Map eta -> xi with xi[perm[a]] = eta[a], or 1 - eta[a] if flips[a]."""
    perm: tuple = (0, 1, 2)
    flips: tuple = (False, False, False)

    def __call__(self, eta):
        eta = np.asarray(eta)
        xi = [None] * 3
        for a in range(3):
            v = eta[..., a]
            xi[self.perm[a]] = 1 - v if self.flips[a] else v
        return np.stack(xi, axis=-1)

    def apply_exact(self, eta):
        xi = [None] * 3
        for a in range(3):
            xi[self.perm[a]] = 1 - eta[a] if self.flips[a] else eta[a]
        return tuple(xi)

    def corner(self, c):
        """Old corner index seen at new corner c."""
        bits = [(c >> a) & 1 for a in range(3)]
        old = [0, 0, 0]
        for a in range(3):
            old[self.perm[a]] = bits[a] ^ int(self.flips[a])
        return old[0] + 2 * old[1] + 4 * old[2]

    def compose(self, other):
        """The symmetry eta -> self(other(eta))."""
        perm = [0, 0, 0]
        flips = [False] * 3
        for a in range(3):
            b = other.perm[a]
            perm[a] = self.perm[b]
            flips[a] = other.flips[a] ^ self.flips[b]
        return CubeSymmetry(tuple(perm), tuple(flips))

    def inverse(self):
        perm = [0, 0, 0]
        flips = [False] * 3
        for a in range(3):
            perm[self.perm[a]] = a
            flips[self.perm[a]] = self.flips[a]
        return CubeSymmetry(tuple(perm), tuple(flips))

    @property
    def parity(self):
        """+1 for orientation preserving, -1 otherwise."""
        p = self.perm
        inv = sum(1 for i in range(3) for j in range(i + 1, 3) if p[i] > p[j])
        return (-1) ** (inv + sum(self.flips))


ALL_SYMMETRIES = tuple(CubeSymmetry(perm, flips)
                       for perm in permutations(range(3))
                       for flips in product((False, True), repeat=3))

IDENTITY = ALL_SYMMETRIES[0]


def transform_coeffs(a, sym):
    """Coefficients of f(sym(eta)) from those of f(xi) (symmetric knots)."""
    b = np.transpose(a, sym.perm)
    for ax in range(3):
        if sym.flips[ax]:
            b = np.flip(b, axis=ax)
    return np.ascontiguousarray(b)


def transform_index(sym, idx, n):
    """Index in the original frame of tensor entry ``idx`` of the view."""
    out = [0, 0, 0]
    for a in range(3):
        out[sym.perm[a]] = n - 1 - idx[a] if sym.flips[a] else idx[a]
    return tuple(out)


# ---------------------------------------------------------------- local cube

LOCAL_FACES = tuple((axis, side) for axis in range(3) for side in (0, 1))


def face_corners(axis, side):
    return tuple(c for c in range(8) if (c >> axis) & 1 == side)


def edge_corners(axis, b_other):
    """Corners of the cube edge along ``axis`` with fixed bits of the other axes."""
    others = [d for d in range(3) if d != axis]
    base = sum(b << d for b, d in zip(b_other, others))
    return (base, base + (1 << axis))


LOCAL_EDGES = tuple((axis, bo) for axis in range(3) for bo in product((0, 1), repeat=2))


def trilinear_weights(xi):
    xi = np.asarray(xi, dtype=float)
    w = []
    for c in range(8):
        t = np.ones(xi.shape[:-1])
        for d in range(3):
            t = t * (xi[..., d] if (c >> d) & 1 else 1 - xi[..., d])
        w.append(t)
    return np.stack(w, axis=-1)


def trilinear_poly(corners):
    """Three exact trivariate polynomials of the trilinear map."""
    comps = []
    for comp in range(3):
        c = np.full((2, 2, 2), Fraction(0), dtype=object)
        for corner in range(8):
            # product of (1 - x) or x factors expanded on monomials
            val = corners[corner][comp]
            for mono in product((0, 1), repeat=3):
                coef = 1
                for d in range(3):
                    bit = (corner >> d) & 1
                    if bit:
                        coef *= 1 if mono[d] else 0
                    else:
                        coef *= -1 if mono[d] else 1
                if coef:
                    c[mono] += coef * val
        comps.append(Poly(c))
    return comps


# ---------------------------------------------------------------- volume

def _parse_number(v):
    if isinstance(v, bool):
        raise VolumeParseError(f"invalid coordinate {v!r}")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(repr(v))
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise VolumeParseError(f"invalid coordinate {v!r}") from exc
    raise VolumeParseError(f"invalid coordinate {v!r}")


def format_number(x):
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class View:
    """A patch seen through a cube symmetry."""
    patch: int
    sym: CubeSymmetry


@dataclass
class FaceInfo:
    key: tuple
    owners: list = field(default_factory=list)  # (patch, (axis, side))

    @property
    def inner(self):
        return len(self.owners) == 2


@dataclass
class EdgeInfo:
    key: tuple
    owners: list = field(default_factory=list)  # (patch, (axis, other bits))


@dataclass
class VertexInfo:
    key: int
    owners: list = field(default_factory=list)  # (patch, corner)


class MultiPatchVolume:
    def __init__(self, vertices, patches, validate=True):
        self.vertices = tuple(tuple(Fraction(c) for c in v) for v in vertices)
        self.patches = tuple(tuple(int(i) for i in p) for p in patches)
        for p in self.patches:
            if len(p) != 8:
                raise TopologyError("every patch needs 8 corner indices")
            if any(i < 0 or i >= len(self.vertices) for i in p):
                raise TopologyError("corner index out of range")
            if len(set(p)) != 8:
                raise TopologyError("patch with repeated corner vertex")
        if validate:
            self._validate()

    # ------------------------------------------------------------ I/O
    @classmethod
    def from_json(cls, text, validate=True):
        try:
            doc = json.loads(text)
            verts = [[_parse_number(c) for c in v] for v in doc["vertices"]]
            patches = doc["patches"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise VolumeParseError(f"malformed volume document: {exc}") from exc
        if any(len(v) != 3 for v in verts):
            raise VolumeParseError("vertices must have three coordinates")
        return cls(verts, patches, validate=validate)

    @classmethod
    def load(cls, path, validate=True):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read(), validate=validate)

    def to_json(self):
        doc = {"vertices": [[format_number(c) for c in v] for v in self.vertices],
               "patches": [list(p) for p in self.patches]}
        return json.dumps(doc, indent=1)

    @property
    def num_patches(self):
        return len(self.patches)

    # ------------------------------------------------------------ geometry
    def corners(self, i, sym=IDENTITY):
        p = self.patches[i]
        return [self.vertices[p[sym.corner(c)]] for c in range(8)]

    def corner_ids(self, i, sym=IDENTITY):
        p = self.patches[i]
        return [p[sym.corner(c)] for c in range(8)]

    def corner_array(self, i, sym=IDENTITY):
        return np.array([[float(x) for x in v] for v in self.corners(i, sym)])

    def eval_patch(self, i, xi, derivs=(0, 0, 0), sym=IDENTITY):
        """Trilinear map (or a mixed partial of order <= 1 per axis)."""
        X = self.corner_array(i, sym)
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 1
        xi = np.atleast_2d(xi)
        w = np.ones((xi.shape[0], 8))
        for c in range(8):
            for d in range(3):
                bit = (c >> d) & 1
                if derivs[d] == 0:
                    w[:, c] *= xi[:, d] if bit else 1 - xi[:, d]
                elif derivs[d] == 1:
                    w[:, c] *= 1 if bit else -1
                else:
                    w[:, c] = 0
        out = w @ X
        return out[0] if single else out

    def jacobian(self, i, xi, sym=IDENTITY):
        """Jacobian matrices d x / d xi of shape (m, 3, 3), columns = partials."""
        cols = [self.eval_patch(i, np.atleast_2d(xi), tuple(int(a == d) for a in range(3)), sym)
                for d in range(3)]
        return np.stack(cols, axis=-1)

    def patch_poly(self, i, sym=IDENTITY):
        return trilinear_poly(self.corners(i, sym))

    def jacobian_det_poly(self, i, sym=IDENTITY):
        F = self.patch_poly(i, sym)
        cols = [[F[c].diff(d) for c in range(3)] for d in range(3)]
        return det3(cols)

    def patch_volume(self, i):
        return self.jacobian_det_poly(i).integrate()

    # ------------------------------------------------------------ incidence
    @cached_property
    def faces(self):
        table = {}
        for i, _ in enumerate(self.patches):
            for lf in LOCAL_FACES:
                key = tuple(sorted(self.patches[i][c] for c in face_corners(*lf)))
                table.setdefault(key, FaceInfo(key)).owners.append((i, lf))
        return sorted(table.values(), key=lambda f: f.key)

    @cached_property
    def edges(self):
        table = {}
        for i, _ in enumerate(self.patches):
            for le in LOCAL_EDGES:
                key = tuple(sorted(self.patches[i][c] for c in edge_corners(*le)))
                table.setdefault(key, EdgeInfo(key)).owners.append((i, le))
        return sorted(table.values(), key=lambda e: e.key)

    @cached_property
    def vertex_info(self):
        table = {}
        for i, p in enumerate(self.patches):
            for c in range(8):
                table.setdefault(p[c], VertexInfo(p[c])).owners.append((i, c))
        return sorted(table.values(), key=lambda v: v.key)

    @cached_property
    def inner_faces(self):
        return [f for f in self.faces if f.inner]

    @cached_property
    def boundary_faces(self):
        return [f for f in self.faces if not f.inner]

    @cached_property
    def face_index(self):
        return {f.key: j for j, f in enumerate(self.faces)}

    def faces_of_edge(self, edge):
        """Faces whose closure contains the edge."""
        a, b = edge.key
        return [f for f in self.faces if a in f.key and b in f.key
                and self._face_has_edge(f, edge)]

    def _face_has_edge(self, f, edge):
        patch, lf = f.owners[0]
        ids = [self.patches[patch][c] for c in face_corners(*lf)]
        # face corners ordered by bits of the two free axes; edge must be a side
        free = [d for d in range(3) if d != lf[0]]
        corners = face_corners(*lf)
        pos = {self.patches[patch][c]: ((c >> free[0]) & 1, (c >> free[1]) & 1) for c in corners}
        a, b = edge.key
        if a not in pos or b not in pos:
            return False
        pa, pb = pos[a], pos[b]
        return (pa[0] == pb[0]) != (pa[1] == pb[1]) and ids is not None

    @cached_property
    def inner_edges(self):
        out = []
        for e in self.edges:
            fs = self.faces_of_edge(e)
            if fs and all(f.inner for f in fs):
                out.append(e)
        return out

    # ------------------------------------------------------------ validation
    def _validate(self):
        keys = [tuple(sorted(p)) for p in self.patches]
        if len(set(keys)) != len(keys):
            raise TopologyError("duplicate patch")
        for f in self.faces:
            if len(f.owners) > 2:
                raise TopologyError(f"face {f.key} shared by more than two patches")
        self._check_hanging()
        for i in range(self.num_patches):
            cert = check_nonsingular(self, i)
            if not cert.ok:
                raise TopologyError(f"patch {i} is singular: {cert.message}")

    def _check_hanging(self):
        # a vertex must not lie on an edge of a patch it is not a corner of
        V = self.vertices
        for e in self.edges:
            a, b = e.key
            A, B = V[a], V[b]
            d = [B[c] - A[c] for c in range(3)]
            dd = sum(x * x for x in d)
            for v, P in enumerate(V):
                if v in (a, b):
                    continue
                w = [P[c] - A[c] for c in range(3)]
                cross = (w[1] * d[2] - w[2] * d[1], w[2] * d[0] - w[0] * d[2],
                         w[0] * d[1] - w[1] * d[0])
                if any(cross):
                    continue
                s = sum(x * y for x, y in zip(w, d))
                if 0 < s < dd:
                    raise TopologyError(f"hanging vertex {v} on edge {e.key}")

    # ------------------------------------------------------------ views
    def view_det_sign(self, i, sym):
        d = self.jacobian_det_poly(i).restrict(0, Fraction(1, 2)).restrict(0, Fraction(1, 2))
        d = d(Fraction(1, 2))
        return (1 if d > 0 else -1) * sym.parity

    def standard_form_interface(self, face):
        """Views (i0, i1) with F_i0(0,t1,t2) = F_i1(t1,0,t2), both positively oriented."""
        if not face.inner:
            raise TopologyError("standard_form_interface needs an inner face")
        (p0, _), (p1, _) = face.owners
        fset = set(face.key)
        for s0 in ALL_SYMMETRIES:
            ids0 = self.corner_ids(p0, s0)
            if {ids0[c] for c in face_corners(0, 0)} != fset:
                continue
            if self.view_det_sign(p0, s0) < 0:
                continue
            for s1 in ALL_SYMMETRIES:
                ids1 = self.corner_ids(p1, s1)
                # corner (b1, 0, b3) of i1 equals corner (0, b1, b3) of i0
                if all(ids1[b1 + 4 * b3] == ids0[2 * b1 + 4 * b3]
                       for b1 in (0, 1) for b3 in (0, 1)):
                    if self.view_det_sign(p1, s1) > 0:
                        v0, v1 = View(p0, s0), View(p1, s1)
                        self._verify_interface(v0, v1)
                        return v0, v1
        raise TopologyError(f"no standard form for face {face.key}")

    def _verify_interface(self, v0, v1):
        F0 = self.patch_poly(v0.patch, v0.sym)
        F1 = self.patch_poly(v1.patch, v1.sym)
        grid = [Fraction(i, 4) for i in range(5)]
        for t1 in grid:
            for t2 in grid:
                a = [f(Fraction(0), t1, t2) for f in F0]
                b = [f(t1, Fraction(0), t2) for f in F1]
                if a != b:
                    raise TopologyError("interface views disagree on the shared face")

    def fig2_vertices(self, face):
        """The twelve labelled vertices of an interface in standard form."""
        v0, v1 = self.standard_form_interface(face)
        c0 = self.corner_ids(v0.patch, v0.sym)
        c1 = self.corner_ids(v1.patch, v1.sym)
        return c0 + [c1[2], c1[3], c1[6], c1[7]]

    def standard_form_boundary(self, face):
        patch, _ = face.owners[0]
        fset = set(face.key)
        for s in ALL_SYMMETRIES:
            ids = self.corner_ids(patch, s)
            if {ids[c] for c in face_corners(0, 0)} == fset and self.view_det_sign(patch, s) > 0:
                return View(patch, s)
        raise TopologyError("no standard form for boundary face")

    def standard_form_edge(self, edge, patch):
        """View with the edge at xi1 = xi2 = 0, running from key[0] to key[1]."""
        a, b = edge.key
        for s in ALL_SYMMETRIES:
            ids = self.corner_ids(patch, s)
            if ids[0] == a and ids[4] == b and self.view_det_sign(patch, s) > 0:
                return View(patch, s)
        raise TopologyError(f"patch {patch} does not contain edge {edge.key}")

    def edge_side_faces(self, view):
        """Keys of the faces at xi1 = 0 (left) and xi2 = 0 (right) of an edge view."""
        ids = self.corner_ids(view.patch, view.sym)
        left = tuple(sorted(ids[c] for c in face_corners(0, 0)))
        right = tuple(sorted(ids[c] for c in face_corners(1, 0)))
        return left, right

    def standard_form_vertex(self, vertex, patch):
        for s in ALL_SYMMETRIES:
            ids = self.corner_ids(patch, s)
            if ids[0] == vertex and self.view_det_sign(patch, s) > 0:
                return View(patch, s)
        raise TopologyError(f"patch {patch} does not contain vertex {vertex}")

    # ------------------------------------------------------------ subclass A
    def subclass_chain(self):
        """For a volume with one inner edge shared by all patches: the cyclic
        chain of views (one per patch) and the face keys Gamma^(m), where
        face m is xi1 = 0 of view m and xi2 = 0 of view m+1.  Returns None if
        the volume is not of this type."""
        if len(self.inner_edges) != 1:
            return None
        edge = self.inner_edges[0]
        patches = sorted({p for p, _ in edge.owners})
        nu = len(patches)
        if nu < 3 or nu != self.num_patches or len(self.inner_faces) != nu:
            return None
        views, faces = [], []
        current = patches[0]
        for m in range(nu):
            v = self.standard_form_edge(edge, current)
            left, right = self.edge_side_faces(v)
            if m > 0 and right != faces[-1]:
                # the other orientation-preserving choice swaps the two sides
                return None
            views.append(v)
            faces.append(left)
            f = self.faces[self.face_index[left]]
            if not f.inner:
                return None
            nxt = [p for p, _ in f.owners if p != current]
            current = nxt[0]
        if current != patches[0] or self.edge_side_faces(views[0])[1] != faces[-1]:
            return None
        if len(set(v.patch for v in views)) != nu:
            return None
        # verify the chain standard form exactly
        for m in range(nu):
            self._verify_interface(views[m], views[(m + 1) % nu])
        return edge, views, faces


# ---------------------------------------------------------------- checks

@dataclass
class Certificate:
    ok: bool
    certified: bool
    sign: int
    message: str = ""
    point: tuple = None


def check_nonsingular(volume, i, grid=33):
    """Certify a nonvanishing Jacobian determinant on the unit cube.

    All Bernstein coefficients of one strict sign certify; otherwise a dense
    sample grid is searched for a sign change or zero."""
    d = volume.jacobian_det_poly(i)
    b = np.array(d.to_bernstein((2, 2, 2)), dtype=object).ravel()
    if all(x > 0 for x in b):
        return Certificate(True, True, 1, "bernstein coefficients positive")
    if all(x < 0 for x in b):
        return Certificate(True, True, -1, "bernstein coefficients negative")
    g = np.linspace(0, 1, grid)
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    vals = d.evalf(X[:, 0], X[:, 1], X[:, 2])
    scale = np.abs(vals).max()
    if scale == 0 or (vals.min() <= 1e-14 * scale and vals.max() >= -1e-14 * scale):
        j = int(np.argmin(np.abs(vals)))
        return Certificate(False, False, 0, "jacobian determinant vanishes or changes sign",
                           tuple(X[j]))
    sign = 1 if vals.min() > 0 else -1
    return Certificate(True, False, sign, "inconclusive certificate; sampled sign constant")


def load_volume(text):
    return MultiPatchVolume.from_json(text)
