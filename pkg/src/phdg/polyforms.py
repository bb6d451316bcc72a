"""Polynomial 0-, 1- and 2-forms in two variables, plus edge polynomials.

Scalar polynomials are stored in the divided-power monomial basis
x^a y^b / (a! b!), ordered by total degree and then by the power of y.  In this
basis partial derivatives are pure index shifts, so d(d(nu)) vanishes exactly
in floating point.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import polynomial as npoly

# local edges of the reference triangle, each traversed counter-clockwise
REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REFERENCE_EDGES = ((0, 1), (1, 2), (2, 0))


def n_monomials(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(degree: int):
    """Exponent pairs (a, b) in storage order."""
    return tuple((k - b, b) for k in range(degree + 1) for b in range(k + 1))


@lru_cache(maxsize=None)
def _factorial_table(degree):
    f = np.array([factorial(i) for i in range(degree + 1)], dtype=float)
    return np.outer(f, f)


def _to_grid(degree, coeffs):
    grid = np.zeros((degree + 1, degree + 1))
    for c, (a, b) in zip(coeffs, monomial_exponents(degree)):
        grid[a, b] = c
    return grid


def _from_grid(grid, degree):
    out = np.zeros(n_monomials(degree))
    for i, (a, b) in enumerate(monomial_exponents(degree)):
        if a < grid.shape[0] and b < grid.shape[1]:
            out[i] = grid[a, b]
    return out


@dataclass(frozen=True)
class PolyScalar:
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if c.shape != (n_monomials(self.degree),):
            raise ValueError(
                f"degree {self.degree} needs {n_monomials(self.degree)} coefficients, got {c.shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, degree=0):
        return cls(degree, np.zeros(n_monomials(degree)))

    @classmethod
    def constant(cls, value):
        return cls(0, np.array([float(value)]))

    @classmethod
    def from_monomials(cls, terms: dict, degree=None):
        """Build from ordinary monomial coefficients {(a, b): c} meaning c x^a y^b."""
        if degree is None:
            degree = max((a + b for a, b in terms), default=0)
        grid = np.zeros((degree + 1, degree + 1))
        for (a, b), c in terms.items():
            if a + b > degree:
                raise ValueError("monomial exceeds degree")
            grid[a, b] += c * factorial(a) * factorial(b)
        return cls(degree, _from_grid(grid, degree))

    def grid(self):
        """Divided-power coefficients as a (degree+1, degree+1) array."""
        return _to_grid(self.degree, self.coeffs)

    def plain_grid(self):
        """Ordinary monomial coefficients P[a, b] of x^a y^b."""
        return self.grid() / _factorial_table(self.degree)

    @classmethod
    def from_plain_grid(cls, P, degree=None):
        if degree is None:
            degree = P.shape[0] + P.shape[1] - 2
        grid = np.zeros((degree + 1, degree + 1))
        na, nb = min(P.shape[0], degree + 1), min(P.shape[1], degree + 1)
        grid[:na, :nb] = P[:na, :nb]
        return cls(degree, _from_grid(grid * _factorial_table(degree), degree))

    def __call__(self, x, y):
        return npoly.polyval2d(np.asarray(x, float), np.asarray(y, float), self.plain_grid())

    def elevate(self, degree):
        if degree < self.degree:
            raise ValueError("cannot lower degree")
        return PolyScalar(degree, _from_grid(self.grid(), degree))

    def __add__(self, other):
        if not isinstance(other, PolyScalar):
            other = PolyScalar.constant(other)
        d = max(self.degree, other.degree)
        return PolyScalar(d, self.elevate(d).coeffs + other.elevate(d).coeffs)

    __radd__ = __add__

    def __neg__(self):
        return PolyScalar(self.degree, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, PolyScalar):
            P, Q = self.plain_grid(), other.plain_grid()
            R = np.zeros((P.shape[0] + Q.shape[0] - 1,) * 2)
            for a in range(P.shape[0]):
                for b in range(P.shape[1] - a):
                    if P[a, b] != 0.0:
                        R[a:a + Q.shape[0], b:b + Q.shape[1]] += P[a, b] * Q
            return PolyScalar.from_plain_grid(R, self.degree + other.degree)
        return PolyScalar(self.degree, float(other) * self.coeffs)

    __rmul__ = __mul__

    def dx(self):
        g = self.grid()
        d = max(self.degree - 1, 0)
        return PolyScalar(d, _from_grid(g[1:, :], d) if self.degree else np.zeros(1))

    def dy(self):
        g = self.grid()
        d = max(self.degree - 1, 0)
        return PolyScalar(d, _from_grid(g[:, 1:], d) if self.degree else np.zeros(1))

    def integrate_reference(self):
        """Exact integral over the reference triangle."""
        total = 0.0
        for c, (a, b) in zip(self.coeffs, monomial_exponents(self.degree)):
            total += c / factorial(a + b + 2)
        return total


@dataclass(frozen=True)
class Poly1Form:
    comp_x: PolyScalar
    comp_y: PolyScalar

    def __post_init__(self):
        d = max(self.comp_x.degree, self.comp_y.degree)
        object.__setattr__(self, "comp_x", self.comp_x.elevate(d))
        object.__setattr__(self, "comp_y", self.comp_y.elevate(d))

    @property
    def degree(self):
        return self.comp_x.degree

    def __call__(self, x, y):
        return np.stack([self.comp_x(x, y), self.comp_y(x, y)], axis=-1)

    def __add__(self, other):
        return Poly1Form(self.comp_x + other.comp_x, self.comp_y + other.comp_y)

    def __mul__(self, c):
        return Poly1Form(self.comp_x * c, self.comp_y * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Poly2Form:
    density: PolyScalar

    def __call__(self, x, y):
        return self.density(x, y)

    def integrate_reference(self):
        return self.density.integrate_reference()


@dataclass(frozen=True)
class EdgePoly:
    """Polynomial in the edge parameter s in [0, 1], ordinary monomial coefficients."""

    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.degree + 1,):
            raise ValueError(f"degree {self.degree} needs {self.degree + 1} coefficients")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_coeffs(cls, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(len(c) - 1, c)

    def __call__(self, s):
        return npoly.polyval(np.asarray(s, float), self.coeffs)

    def deriv(self):
        if self.degree == 0:
            return EdgePoly(0, np.zeros(1))
        return EdgePoly.from_coeffs(npoly.polyder(self.coeffs))

    def reversed(self):
        """q(s) = p(1 - s)."""
        return EdgePoly.from_coeffs(_compose_linear(self.coeffs, 1.0, -1.0))

    def integrate(self):
        return float(np.sum(self.coeffs / np.arange(1, self.degree + 2)))


def _compose_linear(c, a0, a1):
    """Coefficients of p(a0 + a1 s) given coefficients of p."""
    out = np.zeros(len(c))
    lin = np.array([a0, a1])
    power = np.array([1.0])
    for k, ck in enumerate(c):
        out[: len(power)] += ck * power
        power = npoly.polymul(power, lin)
    return out


def d0(nu: PolyScalar) -> Poly1Form:
    return Poly1Form(nu.dx(), nu.dy())


def d1(sigma: Poly1Form) -> Poly2Form:
    return Poly2Form(sigma.comp_y.dx() - sigma.comp_x.dy())


def wedge11(lam: Poly1Form, mu: Poly1Form) -> Poly2Form:
    return Poly2Form(lam.comp_x * mu.comp_y - lam.comp_y * mu.comp_x)


def wedge02(nu: PolyScalar, omega: Poly2Form) -> Poly2Form:
    return Poly2Form(nu * omega.density)


def _restrict(nu: PolyScalar, p0, p1):
    """Coefficients in s of nu(p0 + s (p1 - p0))."""
    P = nu.plain_grid()
    xs = np.array([p0[0], p1[0] - p0[0]])
    ys = np.array([p0[1], p1[1] - p0[1]])
    out = np.zeros(nu.degree + 1)
    xpow = [np.array([1.0])]
    ypow = [np.array([1.0])]
    for _ in range(nu.degree):
        xpow.append(npoly.polymul(xpow[-1], xs))
        ypow.append(npoly.polymul(ypow[-1], ys))
    for a in range(nu.degree + 1):
        for b in range(nu.degree + 1 - a):
            if P[a, b] != 0.0:
                term = P[a, b] * npoly.polymul(xpow[a], ypow[b])
                out[: len(term)] += term
    return out


def _edge_points(edge, direction):
    if edge not in (0, 1, 2):
        raise ValueError(f"local edge index must be 0, 1 or 2, got {edge!r}")
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    i, j = REFERENCE_EDGES[edge]
    p0, p1 = REFERENCE_VERTICES[i], REFERENCE_VERTICES[j]
    return (p0, p1) if direction == 1 else (p1, p0)


def trace_0form_segment(nu: PolyScalar, p0, p1) -> EdgePoly:
    return EdgePoly(nu.degree, _restrict(nu, np.asarray(p0, float), np.asarray(p1, float)))


def trace_1form_segment(sigma: Poly1Form, p0, p1) -> EdgePoly:
    """Pullback of sigma along s -> p0 + s (p1 - p0)."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    t = p1 - p0
    c = t[0] * _restrict(sigma.comp_x, p0, p1) + t[1] * _restrict(sigma.comp_y, p0, p1)
    return EdgePoly(sigma.degree, c)


def trace_0form(nu: PolyScalar, edge: int, direction: int = 1) -> EdgePoly:
    p0, p1 = _edge_points(edge, direction)
    return trace_0form_segment(nu, p0, p1)


def trace_1form(sigma: Poly1Form, edge: int, direction: int = 1) -> EdgePoly:
    p0, p1 = _edge_points(edge, direction)
    return trace_1form_segment(sigma, p0, p1)


def pullback_1form(components, B):
    """Covariant transform of physical 1-form components: returns B^T sigma."""
    B = np.asarray(B, dtype=float)
    if B.shape != (2, 2):
        raise ValueError("jacobian must be 2x2")
    det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
    if not np.isfinite(det) or abs(det) <= 1e-14 * max(np.abs(B).max(), 1e-300) ** 2:
        raise ValueError("singular jacobian")
    return np.asarray(components, dtype=float) @ B


def _affine_compose(nu: PolyScalar, B, c):
    P = nu.plain_grid()
    lx = np.zeros((2, 2))
    lx[0, 0], lx[1, 0], lx[0, 1] = c[0], B[0][0], B[0][1]
    ly = np.zeros((2, 2))
    ly[0, 0], ly[1, 0], ly[0, 1] = c[1], B[1][0], B[1][1]
    one = PolyScalar.constant(1.0)
    X = PolyScalar.from_plain_grid(lx, 1)
    Y = PolyScalar.from_plain_grid(ly, 1)
    xp = [one]
    yp = [one]
    for _ in range(nu.degree):
        xp.append(xp[-1] * X)
        yp.append(yp[-1] * Y)
    out = PolyScalar.zero(nu.degree)
    for a in range(nu.degree + 1):
        for b in range(nu.degree + 1 - a):
            if P[a, b] != 0.0:
                out = out + P[a, b] * (xp[a] * yp[b])
    return PolyScalar(nu.degree, out.elevate(nu.degree).coeffs)


def pullback_scalar(nu: PolyScalar, B, c=(0.0, 0.0)) -> PolyScalar:
    """nu composed with the affine map x -> B x + c."""
    return _affine_compose(nu, np.asarray(B, float), np.asarray(c, float))


def pullback_poly1form(sigma: Poly1Form, B, c=(0.0, 0.0)) -> Poly1Form:
    B = np.asarray(B, float)
    sx = pullback_scalar(sigma.comp_x, B, c)
    sy = pullback_scalar(sigma.comp_y, B, c)
    return Poly1Form(B[0, 0] * sx + B[1, 0] * sy, B[0, 1] * sx + B[1, 1] * sy)
