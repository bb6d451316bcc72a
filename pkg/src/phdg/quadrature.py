"""Quadrature on the reference triangle and the unit interval.

Triangle rules are collapsed Gauss-Jacobi products, symmetrized over the six
vertex permutations so every rule is invariant under the triangle's symmetry
group.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.special import eval_jacobi, roots_jacobi, roots_legendre

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self):
        return len(self.weights)


def _check_degree(exact_degree):
    if not isinstance(exact_degree, (int, np.integer)) or exact_degree < 0:
        raise ValueError(f"quadrature degree must be a non-negative integer, got {exact_degree!r}")
    if exact_degree > MAX_DEGREE:
        raise ValueError(f"quadrature degree {exact_degree} exceeds supported maximum {MAX_DEGREE}")


@lru_cache(maxsize=None)
def edge_rule(exact_degree: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of the given degree."""
    _check_degree(exact_degree)
    npts = exact_degree // 2 + 1
    x, w = roots_legendre(npts)
    pts = 0.5 * (x + 1.0)
    wts = 0.5 * w
    # exact mirror symmetry so reversed traversal maps nodes onto nodes
    half = npts // 2
    pts[npts - half:] = 1.0 - pts[:half][::-1]
    wts[npts - half:] = wts[:half][::-1]
    if npts % 2:
        pts[half] = 0.5
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, exact_degree)


def _gauss_jacobi_10(n):
    """Gauss-Jacobi rule for the weight (1 - x) on [-1, 1], nodes polished by Newton."""
    x, _ = roots_jacobi(n, 1.0, 0.0)
    if n == 1:
        return x, np.array([2.0])
    for _ in range(3):
        dp = 0.5 * (n + 2) * eval_jacobi(n - 1, 2.0, 1.0, x)
        x = x - eval_jacobi(n, 1.0, 0.0, x) / dp
    dp = 0.5 * (n + 2) * eval_jacobi(n - 1, 2.0, 1.0, x)
    return x, 4.0 / ((1.0 - x * x) * dp * dp)


@lru_cache(maxsize=None)
def triangle_rule(exact_degree: int) -> QuadRule:
    """Symmetric rule on the triangle (0,0),(1,0),(0,1); points have shape (npts, 2)."""
    _check_degree(exact_degree)
    npts = exact_degree // 2 + 1
    # x = u, y = v (1 - u): the Jacobian (1 - u) is absorbed by a Gauss-Jacobi weight
    xu, wu = _gauss_jacobi_10(npts)
    u = 0.5 * (xu + 1.0)
    wu = 0.25 * wu
    xv, wv = roots_legendre(npts)
    v = 0.5 * (xv + 1.0)
    wv = 0.5 * wv

    U, Vv = np.meshgrid(u, v, indexing="ij")
    x = U.ravel()
    y = (Vv * (1.0 - U)).ravel()
    w = np.outer(wu, wv).ravel()

    bary = np.stack([1.0 - x - y, x, y], axis=1)
    pts, wts = [], []
    for perm in permutations(range(3)):
        b = bary[:, perm]
        pts.append(b[:, 1:])
        wts.append(w / 6.0)
    pts = np.concatenate(pts)
    wts = np.concatenate(wts)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, exact_degree)


def integrate_triangle(f, rule: QuadRule):
    """Integrate a vectorized callable f(x, y) over the reference triangle."""
    x, y = rule.points[:, 0], rule.points[:, 1]
    return np.tensordot(f(x, y), rule.weights, axes=([-1], [0]))
