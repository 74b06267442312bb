"""Gluing data of inner faces and the gluing-assumption checks.

For an interface in standard form, F0(0, t1, t2) = F1(t1, 0, t2), the four
determinant polynomials

    alpha0 = lam * det(d1 F0, d2 F0, d3 F0)      at (0, t1, t2)
    alpha1 = lam * det(d1 F1, d2 F1, d3 F1)      at (t1, 0, t2)
    beta   = lam * det(d2 F1, d3 F1, d1 F0)
    gamma  = lam * det(d1 F1, d2 F1, d1 F0)

satisfy alpha0 d2F1 + alpha1 d1F0 - beta d1F1 - gamma d3F1 = 0.  For
non-planar faces beta and gamma split into bilinear pieces weighted by the
alphas.  Everything is exact rational arithmetic.
"""

from dataclasses import dataclass, field
from fractions import Fraction

from .polyalgebra import Poly, det3, common_roots_check


class GluingError(ValueError):
    pass


@dataclass
class GluingData:
    face_key: tuple
    views: tuple
    lam: Fraction
    alpha0: Poly
    alpha1: Poly
    beta: Poly
    gamma: Poly
    vol: Fraction
    # bilinear splittings; None for planar faces
    beta0: Poly = None
    beta1: Poly = None
    gamma0: Poly = None
    gamma1: Poly = None
    delta0: Poly = None
    delta1: Poly = None
    fig2: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def planar(self):
        return self.vol == 0

    @property
    def has_split(self):
        return self.beta0 is not None

    def side(self, s):
        """(alpha, beta_s, gamma_s, sign) of side s; sign multiplies the
        alpha f1 term in the transversal derivative identity."""
        if s == 0:
            return self.alpha0, self.beta0, self.gamma0, 1
        return self.alpha1, self.beta1, self.gamma1, -1


def _face_derivs(volume, view, axis):
    """The three partials of a viewed patch map restricted to xi_axis = 0,
    as bivariate polynomials in the two remaining variables."""
    F = volume.patch_poly(view.patch, view.sym)
    return [[F[c].diff(d).restrict(axis, 0) for c in range(3)] for d in range(3)]


def compute_gluing(volume, face, views=None):
    if views is None:
        views = volume.standard_form_interface(face)
    v0, v1 = views
    D0 = _face_derivs(volume, v0, 0)   # functions of (xi2, xi3) = (t1, t2)
    D1 = _face_derivs(volume, v1, 1)   # functions of (xi1, xi3) = (t1, t2)
    d0 = det3(D0)
    d1 = det3(D1)
    b = det3([D1[1], D1[2], D0[0]])
    g = det3([D1[0], D1[1], D0[0]])
    den = (d0 * d0 + d1 * d1).integrate()
    if den == 0:
        raise GluingError("degenerate interface: vanishing Jacobian determinants")
    lam = (d0 + d1).integrate() / den
    gd = GluingData(face.key, (v0, v1), lam, d0 * lam, d1 * lam, b * lam, g * lam,
                    Fraction(0))
    if lam <= 0:
        gd.warnings.append("non-positive lambda; orientation of the views is inconsistent")
    ids = volume.corner_ids(v0.patch, v0.sym) + [
        volume.corner_ids(v1.patch, v1.sym)[c] for c in (2, 3, 6, 7)]
    gd.fig2 = ids
    X = [volume.vertices[i] for i in ids]
    sub = lambda a, c: [X[a][j] - X[c][j] for j in range(3)]
    vol = _det3_const(sub(2, 0), sub(4, 0), sub(6, 0))
    gd.vol = vol
    if vol != 0:
        d1F0 = D0[0]
        d2F1 = D1[1]
        const = lambda v: [Poly.const(x, 2) for x in v]
        e62, e04 = const(sub(6, 2)), const(sub(0, 4))
        e64, e20 = const(sub(6, 4)), const(sub(2, 0))
        e40 = const(sub(4, 0))
        gd.beta0 = det3([e62, e04, d1F0]) * (1 / vol)
        gd.beta1 = det3([e62, e04, d2F1]) * (1 / vol)
        gd.gamma0 = det3([e64, e20, d1F0]) * (1 / vol)
        gd.gamma1 = det3([e64, e20, d2F1]) * (1 / vol)
        gd.delta0 = det3([e20, e40, d1F0]) * (1 / vol)
        gd.delta1 = det3([e20, e40, d2F1]) * (1 / vol)
    return gd


def _det3_const(a, b, c):
    return (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]))


def split_gluing(gd):
    if not gd.has_split:
        raise GluingError("planar face: splitting of the gluing data unavailable")
    return gd.beta0, gd.beta1, gd.gamma0, gd.gamma1, gd.delta0, gd.delta1, gd.vol


def cond_mapping_residual(volume, gd):
    """The three components of alpha0 d2F1 + alpha1 d1F0 - beta d1F1 - gamma d3F1."""
    v0, v1 = gd.views
    D0 = _face_derivs(volume, v0, 0)
    D1 = _face_derivs(volume, v1, 1)
    return [gd.alpha0 * D1[1][c] + gd.alpha1 * D0[0][c] - gd.beta * D1[0][c]
            - gd.gamma * D1[2][c] for c in range(3)]


def identity_residuals(volume, gd):
    """All exact identities as polynomials (each must vanish identically)."""
    out = {"cond_mapping": cond_mapping_residual(volume, gd)}
    if gd.has_split:
        lv = gd.lam * gd.vol
        t1, t2 = Poly.var(0, 2), Poly.var(1, 2)
        out["beta"] = [gd.beta - (gd.beta0 * gd.alpha1 + gd.beta1 * gd.alpha0)]
        out["gamma"] = [gd.gamma - (gd.gamma0 * gd.alpha1 + gd.gamma1 * gd.alpha0)]
        out["alpha0"] = [gd.alpha0 - (gd.delta0 - t1 * gd.gamma0 - t2 * gd.beta0) * lv]
        out["alpha1"] = [gd.alpha1 + (gd.delta1 - t1 * gd.gamma1 - t2 * gd.beta1) * lv]
    return out


def identities_hold(volume, gd):
    return all(P.is_zero() for v in identity_residuals(volume, gd).values() for P in v)


def transversal_direction(volume, gd, side, t):
    """Transversal direction d at face parameters t = (t1, t2), from one side.

    With the Jacobian columns ordered (t1-tangent, t2-tangent, transversal):
    side 0 uses (-beta0, -gamma0, 1) / alpha0, side 1 (beta1, gamma1, -1) / alpha1."""
    if gd.has_split:
        b0, g0, b1, g1 = gd.beta0, gd.gamma0, gd.beta1, gd.gamma1
    elif gd.beta.is_zero() and gd.gamma.is_zero():
        # planar face without shear: the zero splitting is exact
        b0 = g0 = b1 = g1 = Poly.const(0, 2)
    else:
        raise GluingError("planar face: transversal direction needs the splitting")
    t1, t2 = float(t[0]), float(t[1])
    v = gd.views[side]
    if side == 0:
        J = volume.jacobian(v.patch, [0.0, t1, t2], v.sym)[0]
        cols = (J[:, 1], J[:, 2], J[:, 0])
        w = (-b0.evalf(t1, t2), -g0.evalf(t1, t2), 1.0)
        a = gd.alpha0.evalf(t1, t2)
    else:
        J = volume.jacobian(v.patch, [t1, 0.0, t2], v.sym)[0]
        cols = (J[:, 0], J[:, 2], J[:, 1])
        w = (b1.evalf(t1, t2), g1.evalf(t1, t2), -1.0)
        a = gd.alpha1.evalf(t1, t2)
    if a == 0:
        raise GluingError("alpha vanishes")
    return (w[0] * cols[0] + w[1] * cols[1] + w[2] * cols[2]) / a


def positive_on_box(P, degree=(2, 2), depth=4):
    """Certify P > 0 on [0,1]^2 with Bernstein coefficients and subdivision."""
    def rec(Q, level):
        b = Q.to_bernstein(degree)
        vals = [x for x in b.ravel()]
        if all(x > 0 for x in vals):
            return True
        if any(x <= 0 for x in (b[0, 0], b[0, -1], b[-1, 0], b[-1, -1])):
            return False  # a corner value is non-positive
        if level >= depth:
            return None
        half = Fraction(1, 2)
        parts = []
        for a in (0, 1):
            for c in (0, 1):
                parts.append(_affine(Q, (half, a * half), (half, c * half)))
        results = [rec(R, level + 1) for R in parts]
        if any(r is False for r in results):
            return False
        if all(r is True for r in results):
            return True
        return None
    return rec(P, 0)


def _affine(Q, m1, m2):
    """Q(s1 * t1 + o1, s2 * t2 + o2) as a new polynomial."""
    (s1, o1), (s2, o2) = m1, m2
    t1 = Poly.var(0, 2) * s1 + o1
    t2 = Poly.var(1, 2) * s2 + o2
    out = Poly.const(0, 2)
    p1 = [Poly.const(1, 2)]
    for _ in range(Q.c.shape[0]):
        p1.append(p1[-1] * t1)
    p2 = [Poly.const(1, 2)]
    for _ in range(Q.c.shape[1]):
        p2.append(p2[-1] * t2)
    for i in range(Q.c.shape[0]):
        for j in range(Q.c.shape[1]):
            if Q.c[i, j] != 0:
                out = out + p1[i] * p2[j] * Q.c[i, j]
    return out


# ---------------------------------------------------------------- gluing assumption

@dataclass
class FaceReport:
    face_key: tuple
    planar: bool
    bidegrees: dict
    full_bidegrees: bool
    grid_roots: list
    gcd_constant: bool
    alpha_positive: bool
    identities: bool

    @property
    def passed(self):
        return (not self.planar and self.full_bidegrees and not self.grid_roots
                and self.gcd_constant and self.alpha_positive and self.identities)


@dataclass
class Assumption1Report:
    faces: list

    @property
    def passed(self):
        return all(f.passed for f in self.faces)

    def as_dict(self):
        return {"passed": self.passed, "faces": [
            {"face": list(f.face_key), "planar": f.planar,
             "bidegrees": {k: list(v) for k, v in f.bidegrees.items()},
             "full_bidegrees": f.full_bidegrees,
             "grid_roots": [[str(a), str(b), which] for a, b, which in f.grid_roots],
             "gcd_constant": f.gcd_constant, "alpha_positive": f.alpha_positive,
             "identities": f.identities, "passed": f.passed} for f in self.faces]}


FULL = {"alpha0": (2, 2), "alpha1": (2, 2), "beta": (3, 2), "gamma": (2, 3)}


def coplanar(points):
    a, b, c, d = points
    sub = lambda x, y: [x[j] - y[j] for j in range(3)]
    return _det3_const(sub(b, a), sub(c, a), sub(d, a)) == 0


def check_assumption1(volume, k, gluing_map=None, exact_gcd=True):
    faces = []
    for face in volume.inner_faces:
        gd = gluing_map[face.key] if gluing_map else compute_gluing(volume, face)
        planar = coplanar([volume.vertices[i] for i in face.key])
        degs = {name: getattr(gd, name).effective_degree()[0] for name in FULL}
        full = all(degs[nm] == FULL[nm] for nm in FULL)
        roots = []
        for a in range(1, k + 1):
            for c in range(1, k + 1):
                t = (Fraction(a, k + 1), Fraction(c, k + 1))
                if gd.beta(*t) == 0:
                    roots.append((t[0], t[1], "beta"))
                if gd.gamma(*t) == 0:
                    roots.append((t[0], t[1], "gamma"))
        gcd_const = not common_roots_check(gd.alpha0, gd.alpha1, exact=exact_gcd)
        pos = bool(positive_on_box(gd.alpha0)) and bool(positive_on_box(gd.alpha1))
        faces.append(FaceReport(face.key, planar or gd.planar, degs, full, roots,
                                gcd_const, pos, identities_hold(volume, gd)))
    return Assumption1Report(faces)


def gluing_map(volume):
    return {f.key: compute_gluing(volume, f) for f in volume.inner_faces}
