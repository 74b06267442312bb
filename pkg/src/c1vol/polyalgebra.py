"""Exact multivariate polynomials on the unit box in monomial form.

Coefficients are stored in an object array ``c`` with ``c[i, j, ...]`` the
coefficient of ``t1**i * t2**j * ...``.  Entries are ``Fraction`` for exact
work; any field type works as long as it is consistent.
"""

from fractions import Fraction
from itertools import product
from math import comb

import numpy as np
import sympy


class Poly:
    __slots__ = ("c",)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=object)
        if c.ndim == 0:
            raise ValueError("use Poly.const for constants")
        self.c = c

    @classmethod
    def const(cls, value, nvars):
        return cls(np.full((1,) * nvars, Fraction(value), dtype=object))

    @classmethod
    def var(cls, axis, nvars):
        shape = [1] * nvars
        shape[axis] = 2
        c = np.full(shape, Fraction(0), dtype=object)
        idx = [0] * nvars
        idx[axis] = 1
        c[tuple(idx)] = Fraction(1)
        return cls(c)

    @property
    def nvars(self):
        return self.c.ndim

    @property
    def shape_degree(self):
        return tuple(s - 1 for s in self.c.shape)

    def _pad(self, shape):
        if tuple(self.c.shape) == tuple(shape):
            return self.c
        out = np.full(shape, Fraction(0), dtype=object)
        out[tuple(slice(0, s) for s in self.c.shape)] = self.c
        return out

    def _coerce(self, other):
        if isinstance(other, Poly):
            return other
        return Poly.const(other, self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        shape = tuple(max(a, b) for a, b in zip(self.c.shape, other.c.shape))
        return Poly(self._pad(shape) + other._pad(shape))

    __radd__ = __add__

    def __neg__(self):
        return Poly(-self.c)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly(self.c * other)
        shape = tuple(a + b - 1 for a, b in zip(self.c.shape, other.c.shape))
        out = np.full(shape, Fraction(0), dtype=object)
        for idx in zip(*np.nonzero(self.c != 0)):
            a = self.c[idx]
            sl = tuple(slice(i, i + s) for i, s in zip(idx, other.c.shape))
            out[sl] = out[sl] + a * other.c
        return Poly(out)

    __rmul__ = __mul__

    def diff(self, axis):
        c = self.c
        m = c.shape[axis]
        if m == 1:
            return Poly(np.full(c.shape, Fraction(0), dtype=object))
        idx = [slice(None)] * c.ndim
        idx[axis] = slice(1, None)
        w = np.arange(1, m).reshape([-1 if d == axis else 1 for d in range(c.ndim)])
        return Poly(c[tuple(idx)] * w.astype(object))

    def restrict(self, axis, value):
        """Substitute t_axis = value, dropping that variable."""
        value = Fraction(value)
        c = np.moveaxis(self.c, axis, 0)
        out = np.full(c.shape[1:], Fraction(0), dtype=object)
        for i in reversed(range(c.shape[0])):
            out = out * value + c[i]
        if out.ndim == 0:
            return out
        return Poly(out)

    def __call__(self, *x):
        """Exact evaluation at a point (Fractions or ints)."""
        c = self.c
        for xi in reversed(x):
            acc = c[..., -1]
            for i in range(c.shape[-1] - 2, -1, -1):
                acc = acc * xi + c[..., i]
            c = acc
        return c

    def to_float(self):
        return np.array(self.c, dtype=float)

    def evalf(self, *x):
        """Floating point evaluation at arrays of points (broadcast)."""
        c = self.to_float()
        x = [np.asarray(v, dtype=float) for v in x]
        if self.nvars == 1:
            return np.polynomial.polynomial.polyval(x[0], c)
        if self.nvars == 2:
            return np.polynomial.polynomial.polyval2d(x[0], x[1], c)
        if self.nvars == 3:
            return np.polynomial.polynomial.polyval3d(x[0], x[1], x[2], c)
        raise NotImplementedError

    def integrate(self):
        """Exact integral over the unit box."""
        total = Fraction(0)
        for idx in zip(*np.nonzero(self.c != 0)):
            w = Fraction(1)
            for i in idx:
                w /= (i + 1)
            total += self.c[idx] * w
        return total

    def is_zero(self):
        return not np.any(self.c != 0)

    def effective_degree(self, tol=0):
        """Smallest degree box containing the significant coefficients.

        ``tol`` is relative to the largest coefficient magnitude; 0 means
        exact.  Returns (degree tuple, is_zero)."""
        mag = np.abs(np.array(self.c, dtype=float)) if tol > 0 else None
        if tol > 0:
            scale = mag.max() if mag.size else 0.0
            mask = mag > tol * scale if scale > 0 else np.zeros(mag.shape, bool)
        else:
            mask = self.c != 0
        if not mask.any():
            return (0,) * self.nvars, True
        nz = np.nonzero(mask)
        return tuple(int(v.max()) for v in nz), False

    def trim(self):
        deg, zero = self.effective_degree()
        if zero:
            return Poly.const(0, self.nvars)
        return Poly(self.c[tuple(slice(0, d + 1) for d in deg)])

    def to_bernstein(self, degree):
        """Bernstein coefficients on the box of the given degree."""
        deg, zero = self.effective_degree()
        if any(d > D for d, D in zip(deg, degree)) and not zero:
            raise ValueError(f"degree box {degree} smaller than polynomial degree {deg}")
        c = Poly(self.c)._pad(tuple(D + 1 for D in degree))
        # along each axis: b_j = sum_{i<=j} C(j,i)/C(D,i) a_i
        for axis, D in enumerate(degree):
            T = np.full((D + 1, D + 1), Fraction(0), dtype=object)
            for j in range(D + 1):
                for i in range(j + 1):
                    T[j, i] = Fraction(comb(j, i), comb(D, i))
            c = np.moveaxis(np.tensordot(T, np.moveaxis(c, axis, 0), axes=(1, 0)), 0, axis)
        return c

    def __repr__(self):
        return f"Poly(degree={self.shape_degree})"

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None


def from_bernstein(b):
    """Inverse of :meth:`Poly.to_bernstein` for a Bernstein coefficient array."""
    c = np.array(b, dtype=object)
    for axis, m in enumerate(c.shape):
        D = m - 1
        # a_i = C(D,i) * sum_{j<=i} (-1)^{i-j} C(i,j) b_j
        T = np.full((m, m), Fraction(0), dtype=object)
        for i in range(m):
            for j in range(i + 1):
                T[i, j] = Fraction(comb(D, i) * comb(i, j) * (-1) ** (i - j))
        c = np.moveaxis(np.tensordot(T, np.moveaxis(c, axis, 0), axes=(1, 0)), 0, axis)
    return Poly(c)


def det3(cols):
    """Determinant of three 3-vectors of polynomials (column vectors)."""
    a, b, c = cols
    return (a[0] * (b[1] * c[2] - b[2] * c[1])
            - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]))


def poly_mul(P, Q):
    return P * Q


def poly_add(P, Q):
    return P + Q


def poly_diff(P, axis):
    return P.diff(axis)


def effective_bidegree(P, tol=0):
    return P.effective_degree(tol)


def to_bernstein(P, degree):
    return P.to_bernstein(degree)


def _to_sympy(P, syms):
    expr = 0
    for idx in zip(*np.nonzero(P.c != 0)):
        term = sympy.Rational(P.c[idx].numerator, P.c[idx].denominator)
        for s, e in zip(syms, idx):
            term *= s ** int(e)
        expr += term
    return sympy.Poly(expr, *syms, domain="QQ")


def common_factor_exact(P, Q):
    """True iff the bivariate polynomials share a nonconstant factor.

    Uses resultants with respect to each variable: a factor of positive
    degree in t_a makes Res_{t_a} vanish identically."""
    t1, t2 = sympy.symbols("t1 t2")
    A, B = _to_sympy(P, (t1, t2)), _to_sympy(Q, (t1, t2))
    for var in (t1, t2):
        if A.degree(var) == 0 and B.degree(var) == 0:
            continue
        if A.degree(var) == 0 or B.degree(var) == 0:
            # a factor of positive degree in var cannot divide the other one
            continue
        res = sympy.resultant(A.as_expr(), B.as_expr(), var)
        if sympy.simplify(res) == 0:
            return True
    return False


def common_factor_sampled(P, Q, density=65, tol=1e-8):
    """Heuristic: do P and Q nearly vanish together somewhere on [0,1]^2?"""
    g = np.linspace(0.0, 1.0, density)
    X, Y = np.meshgrid(g, g, indexing="ij")
    a, b = np.abs(P.evalf(X, Y)), np.abs(Q.evalf(X, Y))
    scale = max(a.max(), b.max(), 1e-300)
    i, j = np.unravel_index(np.argmin(a + b), a.shape)
    # refine around the best grid point
    x0, y0 = X[i, j], Y[i, j]
    step = 1.0 / (density - 1)
    for _ in range(4):
        gx = np.clip(np.linspace(x0 - step, x0 + step, 21), 0, 1)
        gy = np.clip(np.linspace(y0 - step, y0 + step, 21), 0, 1)
        X2, Y2 = np.meshgrid(gx, gy, indexing="ij")
        v = np.abs(P.evalf(X2, Y2)) + np.abs(Q.evalf(X2, Y2))
        i, j = np.unravel_index(np.argmin(v), v.shape)
        x0, y0 = X2[i, j], Y2[i, j]
        step /= 10
    best = abs(P.evalf(x0, y0)) + abs(Q.evalf(x0, y0))
    return bool(best / scale < tol)


def common_roots_check(P, Q, exact=True, density=65, tol=1e-8):
    """True when a nontrivial common factor (common root curve) is suspected."""
    if P.is_zero() or Q.is_zero():
        raise ValueError("common_roots_check needs nonzero polynomials")
    if exact:
        return common_factor_exact(P, Q)
    return common_factor_sampled(P, Q, density, tol)
