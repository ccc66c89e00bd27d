"""Scaled monomial bases on polygons and positive-weight polygon quadrature.

Monomials are m_a(x) = ((x - x_E)/h_E)^a in graded lexicographic order
(1, xi, eta, xi^2, xi*eta, eta^2, ...).  Quadrature is a composite rule over
the ear-clip sub-triangulation using a collapsed (Duffy) tensor Gauss rule,
which keeps every weight positive at any exactness degree.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import ElementGeometry, GeometryError


class ConditionWarning(UserWarning):
    """Raised (as a warning) when an element matrix is badly conditioned."""


def poly_dim(k: int) -> int:
    """dim P_k in two variables; 0 for k < 0."""
    return 0 if k < 0 else (k + 1) * (k + 2) // 2


def monomial_exponents(k: int) -> np.ndarray:
    """Graded-lex exponent pairs (m1, m2) for all |m| <= k."""
    out = []
    for d in range(k + 1):
        for m2 in range(d + 1):
            out.append((d - m2, m2))
    return np.asarray(out, dtype=int).reshape(-1, 2)


@dataclass
class MonomialBasis:
    """Scaled monomials of degree <= k on one element."""
    degree: int
    geom: ElementGeometry
    exponents: np.ndarray = field(init=False)

    def __post_init__(self):
        self.exponents = monomial_exponents(self.degree)

    @property
    def dim(self) -> int:
        return poly_dim(self.degree)

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Values of all basis monomials at `points`; shape (npts, dim)."""
        pts = np.atleast_2d(points)
        xi = (pts[:, 0] - self.geom.centroid[0]) / self.geom.diameter
        eta = (pts[:, 1] - self.geom.centroid[1]) / self.geom.diameter
        e = self.exponents
        return xi[:, None] ** e[None, :, 0] * eta[:, None] ** e[None, :, 1]

    def eval_grad(self, points: np.ndarray) -> np.ndarray:
        """Gradients at `points`; shape (npts, dim, 2)."""
        pts = np.atleast_2d(points)
        h = self.geom.diameter
        xi = (pts[:, 0] - self.geom.centroid[0]) / h
        eta = (pts[:, 1] - self.geom.centroid[1]) / h
        e = self.exponents
        n, nb = len(pts), len(e)
        out = np.zeros((n, nb, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            for j, (m1, m2) in enumerate(e):
                if m1 > 0:
                    out[:, j, 0] = m1 / h * xi ** (m1 - 1) * eta ** m2
                if m2 > 0:
                    out[:, j, 1] = m2 / h * xi ** m1 * eta ** (m2 - 1)
        return out

    def grad_coeff_maps(self):
        """Coefficient matrices of d/dx and d/dy: P_k -> P_{k-1}.

        Returns (Dx, Dy) with shape (dim P_{k-1}, dim P_k) so that the
        gradient of sum c_a m_a has coefficients Dx @ c, Dy @ c in the
        degree-(k-1) basis.
        """
        k = self.degree
        e_lo = monomial_exponents(k - 1) if k >= 1 else np.zeros((0, 2), int)
        index_lo = {tuple(m): i for i, m in enumerate(e_lo)}
        Dx = np.zeros((len(e_lo), self.dim))
        Dy = np.zeros((len(e_lo), self.dim))
        h = self.geom.diameter
        for j, (m1, m2) in enumerate(self.exponents):
            if m1 > 0:
                Dx[index_lo[(m1 - 1, m2)], j] = m1 / h
            if m2 > 0:
                Dy[index_lo[(m1, m2 - 1)], j] = m2 / h
        return Dx, Dy

    def laplacian_coeff_map(self) -> np.ndarray:
        """Coefficient matrix of the Laplacian: P_k -> P_{k-2}."""
        k = self.degree
        e_lo = monomial_exponents(k - 2) if k >= 2 else np.zeros((0, 2), int)
        index_lo = {tuple(m): i for i, m in enumerate(e_lo)}
        L = np.zeros((len(e_lo), self.dim))
        h2 = self.geom.diameter ** 2
        for j, (m1, m2) in enumerate(self.exponents):
            if m1 >= 2:
                L[index_lo[(m1 - 2, m2)], j] += m1 * (m1 - 1) / h2
            if m2 >= 2:
                L[index_lo[(m1, m2 - 2)], j] += m2 * (m2 - 1) / h2
        return L


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass
class PolygonQuadrature:
    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,), positive, summing to |E|
    degree: int


def _duffy_triangle_rule(degree: int):
    """Rule on the reference triangle {x,y>=0, x+y<=1}, exact to `degree`.

    Collapsing the unit square raises the polynomial degree by one in the
    radial direction, hence n Gauss points per axis with 2n-1 >= degree+1.
    """
    n = max(1, (degree + 3) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    U, V = np.meshgrid(x, x, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    wts = (WU * WV * (1.0 - U)).ravel()
    return pts, wts


def build_quadrature(geom: ElementGeometry, degree: int) -> PolygonQuadrature:
    """Composite positive-weight rule over the element sub-triangulation."""
    if degree < 0:
        raise ValueError("quadrature degree must be >= 0")
    ref_pts, ref_w = _duffy_triangle_rule(degree)
    pts_out, w_out = [], []
    for (i, j, k) in geom.triangles:
        a, b, c = geom.vertices[i], geom.vertices[j], geom.vertices[k]
        J = np.column_stack([b - a, c - a])
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if det <= 0:
            raise GeometryError(f"cell {geom.cell_id}: degenerate sub-triangle")
        pts_out.append(ref_pts @ J.T + a)
        w_out.append(ref_w * det)
    return PolygonQuadrature(np.vstack(pts_out), np.concatenate(w_out), degree)


def mass_matrix(basis: MonomialBasis, quad: PolygonQuadrature) -> np.ndarray:
    """H with H_ab = int_E m_a m_b; warns when badly conditioned."""
    phi = basis.eval(quad.points)
    H = phi.T @ (quad.weights[:, None] * phi)
    H = 0.5 * (H + H.T)
    if np.linalg.cond(H) > 1e12:
        warnings.warn(
            f"cell {basis.geom.cell_id}: mass matrix condition number > 1e12",
            ConditionWarning, stacklevel=2)
    return H


def stiffness_matrix(basis: MonomialBasis, quad: PolygonQuadrature) -> np.ndarray:
    """G with G_ab = int_E grad m_a . grad m_b (singular along constants)."""
    dphi = basis.eval_grad(quad.points)
    G = np.einsum("qad,q,qbd->ab", dphi, quad.weights, dphi)
    return 0.5 * (G + G.T)
