"""Univariate and tensor-product B-spline spaces on open-uniform knot vectors.

All spaces live on [0, 1] with ``k`` equally spaced interior breakpoints.
Knot positions and Greville abscissae are kept as exact fractions; floating
point evaluation goes through :class:`scipy.interpolate.BSpline`, while
:func:`bspline_basis_exact` evaluates the same basis with Cox-de Boor in any
number type (used with ``Fraction`` for exact collocation).
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline


class ParameterError(ValueError):
    pass


def space_dims(p, r, k):
    """Dimensions (n, n0, n1) of S^{p,r}, S^{p,r+1} and S^{p-2,r}."""
    check_params(p, r, k)
    n = p + 1 + k * (p - r)
    n0 = p + 1 + k * (p - r - 1)
    n1 = p - 1 + k * (p - r - 2)
    return n, n0, n1


def check_params(p, r, k):
    if not (isinstance(p, (int, np.integer)) and isinstance(r, (int, np.integer))
            and isinstance(k, (int, np.integer))):
        raise ParameterError("p, r, k must be integers")
    if p < 3 or r < 1 or r > p - 2 or k < 0:
        raise ParameterError(f"invalid (p, r, k) = ({p}, {r}, {k}); "
                             "need p >= 3, 1 <= r <= p-2, k >= 0")


@dataclass(frozen=True)
class Basis1D:
    """B-spline basis of degree ``degree`` and regularity ``reg`` on a uniform
    mesh with ``k`` interior breakpoints (interior multiplicity degree - reg).

    ``reg >= degree`` means no interior knots (plain polynomials)."""
    degree: int
    reg: int
    k: int

    @cached_property
    def h(self):
        return Fraction(1, self.k + 1)

    @cached_property
    def mult(self):
        return max(self.degree - self.reg, 0)

    @cached_property
    def knots(self):
        interior = []
        for i in range(1, self.k + 1):
            interior += [i * self.h] * self.mult
        d = self.degree
        return tuple([Fraction(0)] * (d + 1) + interior + [Fraction(1)] * (d + 1))

    @cached_property
    def dim(self):
        return len(self.knots) - self.degree - 1

    @cached_property
    def greville(self):
        t, d = self.knots, self.degree
        if d == 0:
            return tuple((t[j] + t[j + 1]) / 2 for j in range(self.dim))
        return tuple(sum(t[j + 1:j + d + 1], Fraction(0)) / d for j in range(self.dim))

    @cached_property
    def breaks(self):
        return tuple(Fraction(i, self.k + 1) for i in range(self.k + 2))

    @cached_property
    def _spl(self):
        t = np.array([float(v) for v in self.knots])
        return BSpline(t, np.eye(self.dim), self.degree, extrapolate=False)

    def matrix(self, x, deriv=0):
        """Values (or derivatives) of all basis functions at points x.

        Returns an array of shape (len(x), dim).  Elements are half open,
        the last one closed."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < -1e-14) or np.any(x > 1 + 1e-14):
            raise ValueError("evaluation point outside [0, 1]")
        x = np.clip(x, 0.0, 1.0)
        if deriv > self.degree:
            return np.zeros((len(x), self.dim))
        spl = self._spl if deriv == 0 else self._spl.derivative(deriv)
        out = spl(x)
        # scipy leaves x == 1 to the last nondegenerate interval already;
        # guard against nan from extrapolate=False at the right end.
        bad = np.isnan(out).any(axis=1)
        if bad.any():
            out[bad] = self._right_end(deriv)
        return out

    def _right_end(self, deriv):
        vals = bspline_basis_exact(self.knots, self.degree, Fraction(1), deriv)
        return np.array([float(v) for v in vals])

    def element_of(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.minimum((x * (self.k + 1)).astype(int), self.k)

    def exact(self, x, deriv=0):
        """Exact values of all basis functions at a rational point."""
        return bspline_basis_exact(self.knots, self.degree, Fraction(x), deriv)


def bspline_basis_exact(knots, degree, x, deriv=0):
    """All basis values (or ``deriv``-th derivatives) at x by Cox-de Boor.

    Works for any field type supporting + - * / (Fraction, float).  Right
    continuous at interior knots, left limit at the last knot."""
    t = knots
    m = len(t) - degree - 1
    if deriv > degree:
        return [x * 0] * m
    # span index mu with t[mu] <= x < t[mu+1], restricted to nondegenerate spans
    last = len(t) - degree - 2
    mu = degree
    while mu < last and not (t[mu] <= x < t[mu + 1]):
        mu += 1
    if x >= t[last + 1]:
        mu = last
        while t[mu] == t[mu + 1]:
            mu -= 1
    # triangular table of lower-degree values on the span
    deg = degree - deriv
    vals = [x * 0 + 1]
    for d in range(1, deg + 1):
        new = [x * 0] * (d + 1)
        for i in range(d):
            lo = mu - d + 1 + i
            left, right = t[lo], t[lo + d]
            w = (x - left) / (right - left) if right != left else 0
            new[i] += (1 - w) * vals[i]
            new[i + 1] += w * vals[i]
        vals = new
    # derivative recursion: N_{j,d-1} feeds N'_{j,d} and N'_{j-1,d}
    for d in range(deg + 1, degree + 1):
        new = [x * 0] * (d + 1)
        for i in range(d):
            j = mu - d + 1 + i
            a = t[j + d] - t[j]
            if a != 0:
                new[i + 1] += d * vals[i] / a
                new[i] -= d * vals[i] / a
        vals = new
    out = [x * 0] * m
    for i, v in enumerate(vals):
        out[mu - degree + i] = v
    return out


@dataclass(frozen=True)
class SplineSpaceConfig:
    """Main space S^{p,r}_h with its companion spaces."""
    p: int
    r: int
    k: int

    def __post_init__(self):
        check_params(self.p, self.r, self.k)

    @property
    def h(self):
        return Fraction(1, self.k + 1)

    @cached_property
    def dims(self):
        return space_dims(self.p, self.r, self.k)

    @property
    def n(self):
        return self.dims[0]

    @property
    def n0(self):
        return self.dims[1]

    @property
    def n1(self):
        return self.dims[2]

    @cached_property
    def basis(self):
        return Basis1D(self.p, self.r, self.k)

    @cached_property
    def trace_basis(self):
        """S^{p,r+1}: traces of inner-face functions."""
        return Basis1D(self.p, self.r + 1, self.k)

    @cached_property
    def deriv_basis(self):
        """S^{p-1,r}: derivatives of the trace space."""
        return Basis1D(self.p - 1, self.r, self.k)

    @cached_property
    def transversal_basis(self):
        """S^{p-2,r}: transversal derivatives of the second face family."""
        return Basis1D(self.p - 2, self.r, self.k)

    @property
    def knots(self):
        return self.basis.knots

    def greville(self):
        return self.basis.greville


def eval_bspline(space, j, x, deriv=0):
    """Value or derivative of N_j of the main space at x."""
    if not 0 <= j < space.n:
        raise IndexError(f"B-spline index {j} out of range 0..{space.n - 1}")
    return float(space.basis.matrix([x], deriv)[0, j])


def greville(space):
    return space.greville()


# The auxiliary R functions.  The formula printed with the construction uses
# h * (N^{p-1,r}_{j-1} - N^{p-1,r}_j); face functions built from it are only
# piecewise polynomials of degree p when every S^{p-1,r} B-spline has support
# length 1/h, i.e. for k = 0.  The "derivative" variant R_j = N'^{p,r+1}_j / p
# agrees with the printed one for k = 0 and keeps membership for all k.
R_VARIANTS = ("derivative", "printed")


def r_matrix(space, x, deriv=0, variant="derivative"):
    """R_j(x) (or derivative) for all j in I_0, shape (len(x), n0)."""
    if variant == "derivative":
        return space.trace_basis.matrix(x, deriv + 1) / space.p
    if variant != "printed":
        raise ValueError(f"unknown R variant {variant!r}")
    low = space.deriv_basis.matrix(x, deriv)
    return float(space.h) * _telescope(low)


def r_exact(space, x, deriv=0, variant="derivative"):
    if variant == "derivative":
        return [v / space.p for v in space.trace_basis.exact(x, deriv + 1)]
    low = space.deriv_basis.exact(x, deriv)
    return [space.h * v for v in _telescope_list(low)]


def _telescope(low):
    m = low.shape[1]
    out = np.zeros((low.shape[0], m + 1))
    out[:, 1:] += low
    out[:, :-1] -= low
    return out


def _telescope_list(low):
    m = len(low)
    out = [low[0] * 0] * (m + 1)
    for i, v in enumerate(low):
        out[i + 1] += v
        out[i] -= v
    return out


def r_function(space, j, x, deriv=0, variant="derivative"):
    if not 0 <= j < space.n0:
        raise IndexError(f"R index {j} out of range 0..{space.n0 - 1}")
    return float(r_matrix(space, [x], deriv, variant)[0, j])


def m_matrix(space, x, deriv=0):
    """M_0 = N_0 + N_1 and M_1 = (h/p) N_1, shape (len(x), 2)."""
    N = space.basis.matrix(x, deriv)
    return np.stack([N[:, 0] + N[:, 1], float(space.h) / space.p * N[:, 1]], axis=1)


def m_function(space, j, x, deriv=0):
    if j not in (0, 1):
        raise IndexError("M index must be 0 or 1")
    return float(m_matrix(space, [x], deriv)[0, j])


# M in terms of the first two B-splines of S^{p,r}: rows j=0,1, columns N_0,N_1
def m_coeffs(space):
    return np.array([[1.0, 1.0], [0.0, float(space.h) / space.p]])


@dataclass
class TensorCoeffs3:
    space: SplineSpaceConfig
    a: np.ndarray

    def __post_init__(self):
        n = self.space.n
        if self.a.shape != (n, n, n):
            raise ValueError(f"coefficient tensor must have shape {(n, n, n)}")


def eval_tensor3(coeffs, xi, derivs=(0, 0, 0)):
    """Value or mixed partial of a trivariate tensor spline at one point."""
    B = coeffs.space.basis
    b = [B.matrix([xi[d]], derivs[d])[0] for d in range(3)]
    return float(np.einsum("ijk,i,j,k->", coeffs.a, b[0], b[1], b[2]))


def eval_tensor3_many(space, a, xi, derivs=(0, 0, 0)):
    """Vectorized evaluation at points xi of shape (m, 3)."""
    xi = np.asarray(xi, dtype=float)
    B = space.basis
    b = [B.matrix(xi[:, d], derivs[d]) for d in range(3)]
    return np.einsum("ijk,mi,mj,mk->m", a, b[0], b[1], b[2])
