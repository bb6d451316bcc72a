"""Broken polynomial spaces: scalars of degree r and 1-forms of degree r+1."""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .mesh import Mesh
from .polyforms import Poly1Form, PolyScalar, monomial_exponents, n_monomials
from .quadrature import triangle_rule

MAX_ORDER = 4


def _shifted_legendre(n):
    # integer coefficients of P_n(2x - 1) in powers of x
    return [(-1) ** (n + k) * comb(n, k) * comb(n + k, k) for k in range(n + 1)]


@lru_cache(maxsize=None)
def orthonormal_scalar_basis(degree: int):
    """Hierarchical L2-orthonormal basis of P_degree on the reference triangle.

    Starts from products of shifted Legendre polynomials (well conditioned on
    the triangle), forms their Gram matrix in exact rational arithmetic and
    orthonormalizes by Cholesky.
    """
    exps = monomial_exponents(degree)
    start = []
    for a, b in exps:
        la, lb = _shifted_legendre(a), _shifted_legendre(b)
        start.append({(i, j): la[i] * lb[j] for i in range(a + 1) for j in range(b + 1)})

    def inner(p, q):
        s = Fraction(0)
        for (a1, b1), c1 in p.items():
            for (a2, b2), c2 in q.items():
                a, b = a1 + a2, b1 + b2
                s += Fraction(c1 * c2 * factorial(a) * factorial(b), factorial(a + b + 2))
        return s

    m = len(start)
    gram = np.array([[float(inner(start[i], start[j])) for j in range(m)] for i in range(m)])
    L = np.linalg.cholesky(gram)
    Linv = np.linalg.solve(L, np.eye(m))
    P = np.zeros((m, degree + 1, degree + 1))
    for i, terms in enumerate(start):
        for (a, b), c in terms.items():
            P[i, a, b] = c
    P = np.tensordot(Linv, P, axes=1)
    return tuple(PolyScalar.from_plain_grid(P[i], degree) for i in range(m))


@lru_cache(maxsize=None)
def oneform_basis(degree: int):
    """Componentwise basis: (phi_i, 0) for all i, then (0, phi_i)."""
    phis = orthonormal_scalar_basis(degree)
    zero = PolyScalar.zero(degree)
    return tuple(Poly1Form(p, zero) for p in phis) + tuple(Poly1Form(zero, p) for p in phis)


def tabulate_scalar(basis, points):
    """Values and gradients at reference points: (nb, npts), (nb, npts, 2)."""
    x, y = points[:, 0], points[:, 1]
    vals = np.array([p(x, y) for p in basis])
    grads = np.array([np.stack([p.dx()(x, y), p.dy()(x, y)], axis=-1) for p in basis])
    return vals, grads


@dataclass(frozen=True)
class BrokenSpace:
    mesh: Mesh
    form_rank: int
    poly_degree: int

    def __post_init__(self):
        if self.form_rank not in (0, 1):
            raise ValueError("form rank must be 0 or 1")

    @property
    def n_scalar(self):
        return n_monomials(self.poly_degree)

    @property
    def dofs_per_element(self):
        return self.n_scalar * (1 if self.form_rank == 0 else 2)

    @property
    def total_dofs(self):
        return self.dofs_per_element * self.mesh.n_elements

    @property
    def basis(self):
        if self.form_rank == 0:
            return orthonormal_scalar_basis(self.poly_degree)
        return oneform_basis(self.poly_degree)

    def zeros(self):
        return FieldCoeffs(self, np.zeros(self.total_dofs))

    def evaluate(self, values, ref_points):
        """Field values at reference points on every element.

        Returns (nel, npts) for scalars and physical components (nel, npts, 2)
        for 1-forms.
        """
        c = np.asarray(values, dtype=float).reshape(self.mesh.n_elements, self.dofs_per_element)
        phi, _ = tabulate_scalar(orthonormal_scalar_basis(self.poly_degree), ref_points)
        if self.form_rank == 0:
            return c @ phi
        ns = self.n_scalar
        ref = np.stack([c[:, :ns] @ phi, c[:, ns:] @ phi], axis=-1)
        # push forward: physical components = B^{-T} reference components
        Binv = np.linalg.inv(self.mesh.jacobians)
        return np.einsum("kji,kpj->kpi", Binv, ref)


@dataclass
class FieldCoeffs:
    space: BrokenSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.total_dofs,):
            raise ValueError(
                f"coefficient vector of length {self.values.shape} does not match "
                f"{self.space.total_dofs} dofs"
            )


def make_spaces(mesh: Mesh, r: int):
    """(E_p, E_q): broken scalars of degree r and broken 1-forms of degree r+1."""
    if not isinstance(r, (int, np.integer)) or r < 0:
        raise ValueError(f"polynomial order must be a non-negative integer, got {r!r}")
    if r > MAX_ORDER:
        raise ValueError(f"polynomial order {r} not supported (max {MAX_ORDER})")
    return BrokenSpace(mesh, 0, r), BrokenSpace(mesh, 1, r + 1)


def project_field(space: BrokenSpace, field, t=0.0, chunk=4096) -> FieldCoeffs:
    """Elementwise L2 projection of ``field(t, x, y)``.

    Scalars return arrays of shape x.shape, 1-forms physical components with a
    trailing axis of length 2.  On an affine element with an orthonormal
    reference basis, the L2 projection of a 1-form equals the reference
    projection of its pullback B^T f, which is what is computed below.
    """
    mesh = space.mesh
    deg = min(2 * space.poly_degree + 6, 20)
    rule = triangle_rule(deg)
    phi, _ = tabulate_scalar(orthonormal_scalar_basis(space.poly_degree), rule.points)
    # the basis is orthonormal only up to rounding; solve with its computed Gram matrix
    gram = (phi * rule.weights) @ phi.T
    wphi = np.linalg.solve(gram, phi * rule.weights)
    out = np.empty((mesh.n_elements, space.dofs_per_element))
    for start in range(0, mesh.n_elements, chunk):
        sl = slice(start, min(start + chunk, mesh.n_elements))
        X = mesh.map_points(rule.points, sl)
        f = np.asarray(field(t, X[..., 0], X[..., 1]), dtype=float)
        if space.form_rank == 0:
            f = np.broadcast_to(f, X.shape[:2])
            out[sl] = f @ wphi.T
        else:
            f = np.broadcast_to(f, X.shape)
            fref = np.einsum("kji,kpj->kpi", mesh.jacobians[sl], f)
            ns = space.n_scalar
            out[sl, :ns] = fref[..., 0] @ wphi.T
            out[sl, ns:] = fref[..., 1] @ wphi.T
    return FieldCoeffs(space, out.ravel())


def eval_field(coeffs: FieldCoeffs, element: int, ref_point):
    space = coeffs.space
    if not 0 <= element < space.mesh.n_elements:
        raise IndexError(f"element id {element} out of range")
    npe = space.dofs_per_element
    c = coeffs.values[element * npe:(element + 1) * npe]
    x, y = float(ref_point[0]), float(ref_point[1])
    basis = orthonormal_scalar_basis(space.poly_degree)
    phi = np.array([p(x, y) for p in basis])
    if space.form_rank == 0:
        return float(c @ phi)
    ns = space.n_scalar
    ref = np.array([c[:ns] @ phi, c[ns:] @ phi])
    return np.linalg.solve(space.mesh.jacobians[element].T, ref)
