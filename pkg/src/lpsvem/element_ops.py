"""Per-element operators of the enhanced scalar virtual space of order k.

Every operator maps local degree-of-freedom vectors to polynomial coefficient
vectors in the scaled monomial basis.  Degrees of freedom per element: vertex
values, k-1 internal Gauss-Lobatto values per edge, and scaled internal
moments against monomials up to degree k-2.  The enhancement constraint (the
moments of w against monomials of degree k-1 and k equal those of its energy
projection) makes all maps below computable from the DOFs alone:

* ``P_nabla``      energy projection onto P_k (and ``P_nabla_lo`` onto P_{k-1})
* ``P_zero``       L2 projection onto P_k
* ``P_grad``       componentwise L2 projection of the gradient onto P_{k-1}
* ``P_grad_hi``    the same at degree k, used by the fluctuation operators
* ``S``            dofi-dofi stabilizer of (I - Pi_nabla_k)
* ``S_lo``         dofi-dofi stabilizer of (I - Pi_nabla_{k-1})
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import ElementGeometry, PolyMesh
from .polybasis import (ConditionWarning, MonomialBasis, PolygonQuadrature,
                        build_quadrature, mass_matrix, monomial_exponents,
                        poly_dim, stiffness_matrix)


class ElementError(RuntimeError):
    """Local construction failed (rank deficiency, degenerate data)."""


# internal Gauss-Lobatto parameters on (0,1) for the k+1 edge nodes
_GL_INTERNAL = {
    1: [],
    2: [0.5],
    3: [0.5 - 0.5 / math.sqrt(5.0), 0.5 + 0.5 / math.sqrt(5.0)],
}

SUPPORTED_ORDERS = tuple(sorted(_GL_INTERNAL))


def edge_internal_params(k: int) -> list[float]:
    if k not in _GL_INTERNAL:
        raise ValueError(f"order {k} not supported (orders {SUPPORTED_ORDERS})")
    return list(_GL_INTERNAL[k])


def _lagrange_values(nodes: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Values of the Lagrange basis on `nodes` at `pts`; shape (npts, nnodes)."""
    n = len(nodes)
    out = np.ones((len(pts), n))
    for i in range(n):
        for j in range(n):
            if i != j:
                out[:, i] *= (pts - nodes[j]) / (nodes[i] - nodes[j])
    return out


# ---------------------------------------------------------------------------
# global dof layout
# ---------------------------------------------------------------------------

@dataclass
class DofLayout:
    """Global numbering of the scalar space: vertices, edges, cell moments."""
    mesh: PolyMesh
    k: int
    n_scalar: int = field(init=False)
    n_point: int = field(init=False)

    def __post_init__(self):
        mesh, k = self.mesh, self.k
        self.n_moment_per_cell = poly_dim(k - 2)
        self.n_point = mesh.n_vertices + mesh.n_edges * (k - 1)
        self.n_scalar = self.n_point + mesh.n_cells * self.n_moment_per_cell
        self._params = np.asarray(edge_internal_params(k))

    def edge_dofs(self, eid: int) -> np.ndarray:
        k = self.k
        base = self.mesh.n_vertices + eid * (k - 1)
        return np.arange(base, base + (k - 1))

    def cell_moment_dofs(self, ci: int) -> np.ndarray:
        base = self.n_point + ci * self.n_moment_per_cell
        return np.arange(base, base + self.n_moment_per_cell)

    def cell_dofs(self, ci: int) -> np.ndarray:
        """Global ids in local order: vertices, edge nodes (traversal order),
        internal moments."""
        mesh, k = self.mesh, self.k
        cell = mesh.cells[ci]
        ids = [cell]
        for loc, eid in enumerate(mesh.cell_edges[ci]):
            ed = self.edge_dofs(eid)
            v0 = cell[loc]
            if mesh.edges[eid, 0] != v0:  # traversed against canonical order
                ed = ed[::-1]
            ids.append(ed)
        ids.append(self.cell_moment_dofs(ci))
        return np.concatenate(ids)

    def point_dof_coords(self) -> np.ndarray:
        """Coordinates of all point-valued dofs (vertex + edge nodes)."""
        mesh, k = self.mesh, self.k
        coords = [mesh.vertices]
        if k > 1:
            a = mesh.vertices[mesh.edges[:, 0]]
            b = mesh.vertices[mesh.edges[:, 1]]
            pts = np.stack([(1 - t) * a + t * b for t in self._params], axis=1)
            coords.append(pts.reshape(-1, 2))
        return np.vstack(coords)

    def marker_point_dofs(self, markers) -> np.ndarray:
        """Point dofs lying on the closure of the given boundary markers."""
        mesh = self.mesh
        out: set[int] = set()
        for name in markers:
            for eid in mesh.boundary_markers.get(name, []):
                a, b = mesh.edges[eid]
                out.add(int(a))
                out.add(int(b))
                out.update(int(d) for d in self.edge_dofs(eid))
        return np.array(sorted(out), dtype=int)


# ---------------------------------------------------------------------------
# per-element operator bundle
# ---------------------------------------------------------------------------

@dataclass
class ElementOps:
    geom: ElementGeometry
    k: int
    quad: PolygonQuadrature
    basis: MonomialBasis
    n_dof: int
    # mass/stiffness of the monomial basis
    H: np.ndarray
    Gt: np.ndarray
    # projector matrices (dofs -> coefficients)
    D: np.ndarray
    P_nabla: np.ndarray
    P_nabla_lo: np.ndarray
    P_zero: np.ndarray
    moments: np.ndarray
    P_grad: tuple[np.ndarray, np.ndarray]
    P_grad_hi: tuple[np.ndarray, np.ndarray]
    R_grad: tuple[np.ndarray, np.ndarray]
    Div_lo: np.ndarray
    Div_hi: np.ndarray
    R_div: np.ndarray
    # stabilizers (dofs x dofs)
    S: np.ndarray
    S_lo: np.ndarray
    # phi-independent local form matrices (unit parameters)
    lps_div_unit: np.ndarray
    lps_press_unit: np.ndarray
    lps_temp_unit: np.ndarray
    diffusion_unit: np.ndarray
    b_div: np.ndarray
    int_m: np.ndarray
    mean_map: np.ndarray
    # cached value tables on the quadrature points
    Phi: np.ndarray
    Phi_lo: np.ndarray
    Pq: np.ndarray
    Gq: tuple[np.ndarray, np.ndarray]
    warnings: list[str]

    @property
    def eps_maps(self):
        """Coefficient maps of the projected symmetric gradient components
        (e11, e22, e12) acting on stacked [u1; u2] dof vectors."""
        n = self.n_dof
        gx, gy = self.P_grad
        z = np.zeros_like(gx)
        e11 = np.hstack([gx, z])
        e22 = np.hstack([z, gy])
        e12 = 0.5 * np.hstack([gy, gx])
        return e11, e22, e12


def _edge_rule(k: int):
    n = k + 2
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def build_cell_ops(geom: ElementGeometry, k: int, quad_degree: int | None = None) -> ElementOps:
    """Assemble every projector, fluctuation map and stabilizer on one cell."""
    if quad_degree is None:
        quad_degree = 2 * k + 2
    nv = len(geom.vertices)
    nk = poly_dim(k)
    nk1 = poly_dim(k - 1)
    nk2 = poly_dim(k - 2)
    n_dof = nv * k + nk2
    quad = build_quadrature(geom, quad_degree)
    basis = MonomialBasis(k, geom)
    msgs: list[str] = []

    with warnings.catch_warnings(record=True) as wrec:
        warnings.simplefilter("always", ConditionWarning)
        H = mass_matrix(basis, quad)
    for w in wrec:
        warnings.warn(w.message, ConditionWarning, stacklevel=2)
        msgs.append(str(w.message))
    Gt = stiffness_matrix(basis, quad)
    Phi = basis.eval(quad.points)
    Phi_lo = Phi[:, :nk1]
    area = geom.area

    # --- boundary trace machinery -----------------------------------------
    tq, tw = _edge_rule(k)
    params = edge_internal_params(k)
    nodes = np.array([0.0] + params + [1.0])
    lag = _lagrange_values(nodes, tq)          # (nq_e, k+1)
    # local ids of the trace nodes on edge i: [v_i, edge block, v_{i+1}]
    def edge_trace_dofs(i):
        out = [i]
        out.extend(nv + i * (k - 1) + np.arange(k - 1))
        out.append((i + 1) % nv)
        return np.array(out, dtype=int)

    perimeter = float(geom.edge_lengths.sum())
    # boundary integrals: bmean[j] = (1/|dE|) * int_dE phi_j ds  and the flux
    # tables used by the B matrices
    bmean = np.zeros(n_dof)
    edge_pts = []      # quadrature points per edge
    edge_wts = []      # physical weights per edge
    edge_dof_tab = []  # trace dof ids per edge
    for i in range(nv):
        a = geom.vertices[i]
        b = geom.vertices[(i + 1) % nv]
        pts = a[None, :] + tq[:, None] * (b - a)[None, :]
        wts = tw * geom.edge_lengths[i]
        dofs = edge_trace_dofs(i)
        bmean[dofs] += lag.T @ wts / perimeter
        edge_pts.append(pts)
        edge_wts.append(wts)
        edge_dof_tab.append(dofs)

    moment_cols = nv * k + np.arange(nk2)

    def poly_boundary_mean(bas):
        vals = np.zeros(bas.dim)
        for i in range(nv):
            vals += edge_wts[i] @ bas.eval(edge_pts[i])
        return vals / perimeter

    def dof_matrix(bas) -> np.ndarray:
        """dof_i(m_a) for the monomials of `bas`; shape (n_dof, bas.dim)."""
        Dm = np.zeros((n_dof, bas.dim))
        Dm[:nv, :] = bas.eval(geom.vertices)
        if k > 1:
            for i in range(nv):
                a = geom.vertices[i]
                b = geom.vertices[(i + 1) % nv]
                pts = a[None, :] + np.asarray(params)[:, None] * (b - a)[None, :]
                Dm[nv + i * (k - 1):nv + (i + 1) * (k - 1), :] = bas.eval(pts)
        if nk2:
            full = basis.eval(quad.points)
            low = bas.eval(quad.points)
            Dm[moment_cols, :] = (full[:, :nk2].T @ (quad.weights[:, None] * low)) / area
        return Dm

    def pi_nabla_matrix(deg: int) -> np.ndarray:
        """Energy projector onto P_deg (deg <= k) as a coeff map."""
        nd = poly_dim(deg)
        bas = MonomialBasis(deg, geom)
        G = Gt[:nd, :nd].copy()
        B = np.zeros((nd, n_dof))
        lap = bas.laplacian_coeff_map()          # (dim P_{deg-2}, nd)
        if lap.shape[0]:
            B[:, moment_cols[:lap.shape[0]]] = -area * lap.T
        for i in range(nv):
            gm = bas.eval_grad(edge_pts[i])      # (nq_e, nd, 2)
            flux = gm @ geom.edge_normals[i]     # (nq_e, nd)
            B[:, edge_dof_tab[i]] += flux.T @ (edge_wts[i][:, None] * lag)
        # constant mode fixed by the boundary mean
        G[0, :] = poly_boundary_mean(bas)
        B[0, :] = bmean
        try:
            return np.linalg.solve(G, B)
        except np.linalg.LinAlgError as exc:
            raise ElementError(
                f"cell {geom.cell_id}: energy projector rank-deficient") from exc

    P_nabla = pi_nabla_matrix(k)
    if k == 1:
        # energy projection onto constants is the boundary mean
        P_nabla_lo = bmean[None, :].copy()
    else:
        P_nabla_lo = pi_nabla_matrix(k - 1)

    D = dof_matrix(basis)

    # --- computable moments up to degree k (enhancement) -------------------
    moments = np.zeros((nk, n_dof))
    if nk2:
        moments[:nk2, moment_cols] = area * np.eye(nk2)
    HP = H @ P_nabla
    moments[nk2:, :] = HP[nk2:, :]
    P_zero = np.linalg.solve(H, moments)

    # --- gradient projections ----------------------------------------------
    def grad_projection(deg: int):
        """L2 projection of the gradient onto [P_deg]^2, deg in {k-1, k}."""
        bas = MonomialBasis(deg, geom)
        nd = poly_dim(deg)
        Dx, Dy = bas.grad_coeff_maps()           # (dim P_{deg-1}, nd)
        N = [np.zeros((nd, n_dof)), np.zeros((nd, n_dof))]
        for comp, Dc in enumerate((Dx, Dy)):
            if Dc.shape[0]:
                # moments of w against M_{deg-1} are computable rows
                N[comp] -= Dc.T @ moments[:Dc.shape[0], :]
            for i in range(nv):
                mv = bas.eval(edge_pts[i])       # (nq_e, nd)
                nrm = geom.edge_normals[i][comp]
                N[comp][:, edge_dof_tab[i]] += nrm * (mv.T @ (edge_wts[i][:, None] * lag))
        Hd = H[:nd, :nd]
        return tuple(np.linalg.solve(Hd, Nc) for Nc in N)

    P_grad = grad_projection(k - 1)
    P_grad_hi = grad_projection(k)
    pad = np.zeros((nk - nk1, n_dof))
    R_grad = tuple(P_grad_hi[c] - np.vstack([P_grad[c], pad]) for c in (0, 1))

    # divergence of [u1; u2]: the moment equations add componentwise, so the
    # projected divergence is [d/dx block | d/dy block]
    Div_lo = np.hstack([P_grad[0], P_grad[1]])
    Div_hi = np.hstack([P_grad_hi[0], P_grad_hi[1]])
    R_div = Div_hi - np.vstack([Div_lo, np.zeros((nk - nk1, 2 * n_dof))])

    # --- stabilizers --------------------------------------------------------
    Pdof = D @ P_nabla
    S = (np.eye(n_dof) - Pdof).T @ (np.eye(n_dof) - Pdof)
    Pdof_lo = D[:, :nk1] @ P_nabla_lo
    S_lo = (np.eye(n_dof) - Pdof_lo).T @ (np.eye(n_dof) - Pdof_lo)
    S = 0.5 * (S + S.T)
    S_lo = 0.5 * (S_lo + S_lo.T)

    # --- phi-independent local matrices -------------------------------------
    lps_press_unit = sum(R_grad[c].T @ H @ R_grad[c] for c in (0, 1)) + S_lo
    lps_temp_unit = sum(R_grad[c].T @ H @ R_grad[c] for c in (0, 1)) + S
    S2 = np.zeros((2 * n_dof, 2 * n_dof))
    S2[:n_dof, :n_dof] = S
    S2[n_dof:, n_dof:] = S
    lps_div_unit = R_div.T @ H @ R_div + S2
    diffusion_unit = sum(P_grad[c].T @ H[:nk1, :nk1] @ P_grad[c] for c in (0, 1)) + S
    b_div = P_zero.T @ H[:nk1, :].T @ Div_lo
    int_m = quad.weights @ Phi
    mean_map = (int_m @ P_zero) / area
    Pq = Phi @ P_zero
    Gq = tuple(Phi_lo @ P_grad[c] for c in (0, 1))

    return ElementOps(
        geom=geom, k=k, quad=quad, basis=basis, n_dof=n_dof, H=H, Gt=Gt, D=D,
        P_nabla=P_nabla, P_nabla_lo=P_nabla_lo, P_zero=P_zero, moments=moments,
        P_grad=P_grad, P_grad_hi=P_grad_hi, R_grad=R_grad, Div_lo=Div_lo,
        Div_hi=Div_hi, R_div=R_div, S=S, S_lo=S_lo,
        lps_div_unit=lps_div_unit, lps_press_unit=lps_press_unit,
        lps_temp_unit=lps_temp_unit, diffusion_unit=diffusion_unit,
        b_div=b_div, int_m=int_m, mean_map=mean_map, Phi=Phi, Phi_lo=Phi_lo,
        Pq=Pq, Gq=Gq, warnings=msgs)


@dataclass
class MeshOps:
    """Element operators for every cell plus the global dof layout."""
    mesh: PolyMesh
    k: int
    layout: DofLayout
    cells: list[ElementOps]
    cell_dofs: list[np.ndarray]

    @property
    def n_scalar(self) -> int:
        return self.layout.n_scalar

    def interpolate_scalar(self, f) -> np.ndarray:
        """Dof vector of a smooth function (point values + scaled moments)."""
        lay = self.layout
        out = np.zeros(lay.n_scalar)
        pts = lay.point_dof_coords()
        out[:lay.n_point] = f(pts[:, 0], pts[:, 1])
        for ci, ops in enumerate(self.cells):
            if lay.n_moment_per_cell:
                vals = f(ops.quad.points[:, 0], ops.quad.points[:, 1])
                mom = (ops.quad.weights * vals) @ ops.Phi[:, :lay.n_moment_per_cell]
                out[lay.cell_moment_dofs(ci)] = mom / ops.geom.area
        return out

    def interpolate_vector(self, f1, f2) -> np.ndarray:
        return np.concatenate([self.interpolate_scalar(f1), self.interpolate_scalar(f2)])


def build_mesh_ops(mesh: PolyMesh, k: int, quad_degree: int | None = None) -> MeshOps:
    layout = DofLayout(mesh, k)
    cells = [build_cell_ops(mesh.cell_geometry(ci), k, quad_degree)
             for ci in range(mesh.n_cells)]
    cell_dofs = [layout.cell_dofs(ci) for ci in range(mesh.n_cells)]
    return MeshOps(mesh, k, layout, cells, cell_dofs)
