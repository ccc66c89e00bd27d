"""Discrete bilinear/trilinear forms, LPS stabilization and global assembly.

Local matrices act on local dof vectors (scalar fields) or on stacked
[u1; u2] vectors (velocity).  Stabilization parameters scale per element as
tau1 = c1, tau2 = c2*h_E^2 and tau3 = c3*h_E.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .element_ops import ElementOps, MeshOps


class ConfigurationError(ValueError):
    """Problem description inconsistent with the mesh or with itself."""


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------

@dataclass
class Viscosity:
    """Temperature-dependent viscosity with declared bounds.

    The argument is clamped to ``temp_range`` before evaluation, which
    realizes the globally-bounded-viscosity assumption while leaving values
    near the solution untouched; ``mu_min``/``mu_max`` must bound the values
    on that range.
    """
    func: object                     # vectorized callable mu(r)
    mu_min: float
    mu_max: float
    temp_range: tuple[float, float] = (-np.inf, np.inf)
    lipschitz: float | None = None

    def __post_init__(self):
        if not (0.0 < self.mu_min <= self.mu_max):
            raise ConfigurationError("need 0 < mu_min <= mu_max")
        lo, hi = self.temp_range
        if np.isfinite(lo) and np.isfinite(hi):
            xs = np.linspace(lo, hi, 513)
            vals = np.asarray(self(xs), dtype=float)
            if vals.min() < self.mu_min * (1 - 1e-9) or vals.max() > self.mu_max * (1 + 1e-9):
                raise ConfigurationError(
                    f"viscosity leaves [{self.mu_min:g}, {self.mu_max:g}] on the "
                    f"declared temperature range (sampled {vals.min():g}..{vals.max():g})")

    def __call__(self, r):
        lo, hi = self.temp_range
        return self.func(np.clip(r, lo, hi))

    @classmethod
    def constant(cls, value: float) -> "Viscosity":
        return cls(func=lambda r: np.full_like(np.asarray(r, dtype=float), value),
                   mu_min=value, mu_max=value)


@dataclass
class Conductivity:
    """Temperature-dependent conductivity kappa(r) with a reference scale."""
    func: object
    kappa_ref: float
    temp_range: tuple[float, float] = (-np.inf, np.inf)

    def __call__(self, r):
        lo, hi = self.temp_range
        return self.func(np.clip(r, lo, hi))


@dataclass
class BoundaryCondition:
    """Per-marker data: velocity Dirichlet and temperature Dirichlet/zero-flux.

    ``velocity`` is a callable (x, y) -> (2,) or (2, n) values; it must be set
    on every marker.  ``temperature`` is a Dirichlet callable or None for the
    natural zero-flux condition.
    """
    velocity: object
    temperature: object | None = None


@dataclass
class ProblemSpec:
    """Coefficients, sources, boundary data and stabilization constants."""
    k: int
    viscosity: Viscosity
    conductivity: float | Conductivity
    bcs: dict[str, BoundaryCondition]
    alpha: float = 0.0
    buoyancy: object | None = None        # f(x, y) -> (2, n); used with alpha
    fixed_source: object | None = None    # F(x, y) -> (2, n)
    heat_source: object | None = None     # g(x, y) -> (n,)
    c1: float = 0.1
    c2: float = 0.002
    c3: float = 1.0
    convection_form: str = "skew"

    def __post_init__(self):
        # all-zero taus are allowed (unstabilized comparison runs)
        if self.c1 < 0 or self.c2 < 0 or self.c3 < 0:
            raise ConfigurationError("stabilization constants must be >= 0")
        if self.convection_form not in ("skew", "convective"):
            raise ConfigurationError(f"unknown convection form {self.convection_form!r}")

    @property
    def kappa_ref(self) -> float:
        return self.conductivity.kappa_ref if isinstance(self.conductivity, Conductivity) \
            else float(self.conductivity)

    def taus(self, h_E: float) -> tuple[float, float, float]:
        return self.c1, self.c2 * h_E ** 2, self.c3 * h_E


# ---------------------------------------------------------------------------
# local forms
# ---------------------------------------------------------------------------

def _mu_values(ops: ElementOps, spec: ProblemSpec, phi_coeffs: np.ndarray):
    """Viscosity at the quadrature points and at the cell mean temperature."""
    mu = spec.viscosity
    vals = np.asarray(mu(ops.Phi @ phi_coeffs), dtype=float)
    mu0 = float(mu(np.array([phi_coeffs @ ops.int_m / ops.geom.area]))[0])
    lo, hi = mu.mu_min * (1 - 1e-9), mu.mu_max * (1 + 1e-9)
    if vals.min() < lo or vals.max() > hi or not (lo <= mu0 <= hi):
        bad = float(vals.min() if vals.min() < lo else vals.max())
        raise ConfigurationError(
            f"cell {ops.geom.cell_id}: viscosity value {bad:g} outside "
            f"declared bounds [{mu.mu_min:g}, {mu.mu_max:g}]")
    return vals, mu0


def local_viscous(ops: ElementOps, spec: ProblemSpec, phi_coeffs: np.ndarray) -> np.ndarray:
    """mu-weighted consistency term on projected strains plus VEM stabilizer."""
    mu_q, mu0 = _mu_values(ops, spec, phi_coeffs)
    w = ops.quad.weights * mu_q
    Hmu = ops.Phi_lo.T @ (w[:, None] * ops.Phi_lo)
    e11, e22, e12 = ops.eps_maps
    A = e11.T @ Hmu @ e11 + e22.T @ Hmu @ e22 + 2.0 * (e12.T @ Hmu @ e12)
    n = ops.n_dof
    A[:n, :n] += mu0 * ops.S
    A[n:, n:] += mu0 * ops.S
    return 0.5 * (A + A.T)


def local_divergence(ops: ElementOps) -> np.ndarray:
    """b^E(v, q) = int_E (Pi0_{k-1} div v)(Pi0_k q); rows q, columns v."""
    return ops.b_div


def local_temperature(ops: ElementOps, spec: ProblemSpec,
                      phi_coeffs: np.ndarray | None = None) -> np.ndarray:
    """Diffusion on projected gradients plus kappa-scaled VEM stabilizer."""
    kappa = spec.conductivity
    if not isinstance(kappa, Conductivity):
        return float(kappa) * ops.diffusion_unit
    if phi_coeffs is None:
        raise ConfigurationError("nonlinear conductivity needs a temperature iterate")
    k_q = np.asarray(kappa(ops.Phi @ phi_coeffs), dtype=float)
    k0 = float(kappa(np.array([phi_coeffs @ ops.int_m / ops.geom.area]))[0])
    w = ops.quad.weights * k_q
    Hk = ops.Phi_lo.T @ (w[:, None] * ops.Phi_lo)
    gx, gy = ops.P_grad
    A = gx.T @ Hk @ gx + gy.T @ Hk @ gy + k0 * ops.S
    return 0.5 * (A + A.T)


def local_convection(ops: ElementOps, u_coeffs: np.ndarray, form: str = "skew") -> np.ndarray:
    """Convection matrix tested with Pi0_k psi; rows psi, columns phi.

    ``u_coeffs`` holds the Pi0_k coefficients of both velocity components,
    shape (2, dim P_k).  The skew variant returns (c - c^T)/2 exactly.
    """
    V1 = ops.Phi @ u_coeffs[0]
    V2 = ops.Phi @ u_coeffs[1]
    w = ops.quad.weights
    conv = ops.Pq.T @ ((w * V1)[:, None] * ops.Gq[0] + (w * V2)[:, None] * ops.Gq[1])
    if form == "convective":
        return conv
    return 0.5 * (conv - conv.T)


def local_lps_terms(ops: ElementOps, spec: ProblemSpec):
    """(L1, L2, L3) on one element with the tau scalings applied."""
    t1, t2, t3 = spec.taus(ops.geom.diameter)
    return t1 * ops.lps_div_unit, t2 * ops.lps_press_unit, t3 * ops.lps_temp_unit


def _check_finite(vals, ops, what):
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = ops.quad.points[~np.isfinite(vals.reshape(len(ops.quad.points), -1)).all(axis=1)][0]
        raise ConfigurationError(
            f"{what} is not finite near ({bad[0]:.6g}, {bad[1]:.6g})")
    return vals


def local_loads(ops: ElementOps, spec: ProblemSpec,
                phi_coeffs: np.ndarray | None = None):
    """(momentum rhs (2n,), heat rhs (n,)) for one element."""
    x, y = ops.quad.points[:, 0], ops.quad.points[:, 1]
    w = ops.quad.weights
    n = ops.n_dof
    rhs_m = np.zeros(2 * n)
    if spec.fixed_source is not None:
        F = _check_finite(spec.fixed_source(x, y), ops, "momentum source")
        rhs_m[:n] += ops.Pq.T @ (w * F[0])
        rhs_m[n:] += ops.Pq.T @ (w * F[1])
    if spec.buoyancy is not None and spec.alpha != 0.0:
        fb = _check_finite(spec.buoyancy(x, y), ops, "buoyancy field")
        phi_vals = np.zeros(len(w)) if phi_coeffs is None else ops.Phi @ phi_coeffs
        rhs_m[:n] += ops.Pq.T @ (w * spec.alpha * fb[0] * phi_vals)
        rhs_m[n:] += ops.Pq.T @ (w * spec.alpha * fb[1] * phi_vals)
    rhs_h = np.zeros(n)
    if spec.heat_source is not None:
        gv = _check_finite(spec.heat_source(x, y), ops, "heat source")
        rhs_h = ops.Pq.T @ (w * gv)
    return rhs_m, rhs_h


# ---------------------------------------------------------------------------
# global assembly
# ---------------------------------------------------------------------------

@dataclass
class DirichletData:
    mask: np.ndarray    # boolean over the field's dofs
    values: np.ndarray  # prescribed values (zero on free dofs)

    @property
    def free(self) -> np.ndarray:
        return np.where(~self.mask)[0]

    @property
    def fixed(self) -> np.ndarray:
        return np.where(self.mask)[0]


@dataclass
class StokesSystem:
    """Blocks of the decoupled momentum/continuity problem for a frozen phi."""
    A_uu: sp.csr_matrix          # viscous + L1, (2N, 2N)
    B: sp.csr_matrix             # divergence coupling, (N, 2N)
    L2: sp.csr_matrix
    rhs_momentum: np.ndarray
    mean_row: np.ndarray         # integral of Pi0_k p over the domain
    dirichlet_u: DirichletData


@dataclass
class TransportSystem:
    """Blocks of the decoupled temperature problem for a given velocity."""
    A_TT: sp.csr_matrix          # diffusion (+ VEM stabilizer)
    C: sp.csr_matrix             # convection (skew or one-sided)
    L3: sp.csr_matrix
    rhs_heat: np.ndarray
    dirichlet_phi: DirichletData


@dataclass
class AssembledSystem:
    """Global sparse blocks of the stabilized coupled problem."""
    A_uu: sp.csr_matrix          # viscous + L1, (2N, 2N)
    B: sp.csr_matrix             # divergence coupling, (N, 2N)
    L1: sp.csr_matrix
    L2: sp.csr_matrix
    A_TT: sp.csr_matrix          # diffusion (+ stabilizer)
    C: sp.csr_matrix             # convection (skew or one-sided)
    L3: sp.csr_matrix
    rhs_momentum: np.ndarray
    rhs_heat: np.ndarray
    mean_row: np.ndarray         # integral of Pi0_k p over the domain
    dirichlet_u: DirichletData
    dirichlet_phi: DirichletData

    def stokes(self) -> StokesSystem:
        return StokesSystem(self.A_uu, self.B, self.L2, self.rhs_momentum,
                            self.mean_row, self.dirichlet_u)

    def transport(self) -> TransportSystem:
        return TransportSystem(self.A_TT, self.C, self.L3, self.rhs_heat,
                               self.dirichlet_phi)


class Assembler:
    """Scatter-add assembly with precomputed sparsity and static blocks."""

    def __init__(self, mops: MeshOps, spec: ProblemSpec):
        self.mops = mops
        self.spec = spec
        mesh = mops.mesh
        if spec.k != mops.k:
            raise ConfigurationError("problem order differs from the operator order")
        unknown = set(spec.bcs) - set(mesh.boundary_markers)
        if unknown:
            raise ConfigurationError(f"boundary condition for unknown marker {sorted(unknown)}")
        missing = [m for m in mesh.boundary_markers
                   if m not in spec.bcs or spec.bcs[m].velocity is None]
        if missing:
            raise ConfigurationError(f"velocity Dirichlet data missing on markers {missing}")
        self.N = mops.n_scalar
        self._index_arrays()
        self._static_blocks()
        self._dirichlet()
        self._static_rhs()

    # -- sparsity ------------------------------------------------------------

    def _index_arrays(self):
        N = self.N
        rows_s, cols_s = [], []       # scalar x scalar blocks
        rows_v, cols_v = [], []       # vector x vector blocks
        rows_b, cols_b = [], []       # pressure x vector block
        self.vec_dofs = []
        for cd in self.mops.cell_dofs:
            vd = np.concatenate([cd, cd + N])
            self.vec_dofs.append(vd)
            rows_s.append(np.repeat(cd, len(cd)))
            cols_s.append(np.tile(cd, len(cd)))
            rows_v.append(np.repeat(vd, len(vd)))
            cols_v.append(np.tile(vd, len(vd)))
            rows_b.append(np.repeat(cd, len(vd)))
            cols_b.append(np.tile(vd, len(cd)))
        self._rs = np.concatenate(rows_s)
        self._cs = np.concatenate(cols_s)
        self._rv = np.concatenate(rows_v)
        self._cv = np.concatenate(cols_v)
        self._rb = np.concatenate(rows_b)
        self._cb = np.concatenate(cols_b)

    def _scalar_block(self, vals_per_cell) -> sp.csr_matrix:
        vals = np.concatenate([v.ravel() for v in vals_per_cell])
        return sp.coo_matrix((vals, (self._rs, self._cs)), shape=(self.N, self.N)).tocsr()

    def _vector_block(self, vals_per_cell) -> sp.csr_matrix:
        vals = np.concatenate([v.ravel() for v in vals_per_cell])
        return sp.coo_matrix((vals, (self._rv, self._cv)), shape=(2 * self.N, 2 * self.N)).tocsr()

    def _pv_block(self, vals_per_cell) -> sp.csr_matrix:
        vals = np.concatenate([v.ravel() for v in vals_per_cell])
        return sp.coo_matrix((vals, (self._rb, self._cb)), shape=(self.N, 2 * self.N)).tocsr()

    # -- static pieces ---------------------------------------------------------

    def _static_blocks(self):
        spec, mops = self.spec, self.mops
        l1, l2, l3, bdiv, hsurr, m0 = [], [], [], [], [], []
        mean = np.zeros(self.N)
        for ops, cd in zip(mops.cells, mops.cell_dofs):
            t1, t2, t3 = spec.taus(ops.geom.diameter)
            l1.append(t1 * ops.lps_div_unit)
            l2.append(t2 * ops.lps_press_unit)
            l3.append(t3 * ops.lps_temp_unit)
            bdiv.append(ops.b_div)
            hsurr.append(ops.diffusion_unit)
            m0.append(ops.P_zero.T @ ops.H @ ops.P_zero)
            mean[cd] += ops.P_zero.T @ ops.int_m
        self.L1 = self._vector_block(l1)
        self.L2 = self._scalar_block(l2)
        self.L3 = self._scalar_block(l3)
        self.B = self._pv_block(bdiv)
        self.h1_surrogate = self._scalar_block(hsurr)
        self.mass0 = self._scalar_block(m0)
        self.mean_row = mean
        if not isinstance(spec.conductivity, Conductivity):
            self.A_TT_const = self._scalar_block(
                [float(spec.conductivity) * ops.diffusion_unit for ops in mops.cells])
        else:
            self.A_TT_const = None

    def _dirichlet(self):
        mops, spec = self.mops, self.spec
        lay = mops.layout
        N = self.N
        coords = lay.point_dof_coords()
        mask_u = np.zeros(2 * N, dtype=bool)
        val_u = np.zeros(2 * N)
        mask_t = np.zeros(N, dtype=bool)
        val_t = np.zeros(N)
        for name in mops.mesh.boundary_markers:
            bc = spec.bcs[name]
            dofs = lay.marker_point_dofs([name])
            x, y = coords[dofs, 0], coords[dofs, 1]
            uv = np.asarray(bc.velocity(x, y), dtype=float).reshape(2, -1)
            mask_u[dofs] = True
            mask_u[dofs + N] = True
            val_u[dofs] = uv[0]
            val_u[dofs + N] = uv[1]
            if bc.temperature is not None:
                mask_t[dofs] = True
                val_t[dofs] = np.asarray(bc.temperature(x, y), dtype=float).ravel()
        val_u[~mask_u] = 0.0
        val_t[~mask_t] = 0.0
        self.dirichlet_u = DirichletData(mask_u, val_u)
        self.dirichlet_phi = DirichletData(mask_t, val_t)

    def _static_rhs(self):
        """Heat source and fixed momentum source do not depend on the iterate."""
        spec, mops = self.spec, self.mops
        rhs_m = np.zeros(2 * self.N)
        rhs_h = np.zeros(self.N)
        static = ProblemSpec(
            k=spec.k, viscosity=spec.viscosity, conductivity=spec.conductivity,
            bcs=spec.bcs, alpha=0.0, buoyancy=None, fixed_source=spec.fixed_source,
            heat_source=spec.heat_source, c1=spec.c1, c2=spec.c2, c3=spec.c3,
            convection_form=spec.convection_form)
        for ops, cd, vd in zip(mops.cells, mops.cell_dofs, self.vec_dofs):
            rm, rh = local_loads(ops, static, None)
            rhs_m[vd] += rm
            rhs_h[cd] += rh
        self._rhs_m_static = rhs_m
        self._rhs_h_static = rhs_h
        self._has_buoyancy = spec.buoyancy is not None and spec.alpha != 0.0

    # -- per-iterate assembly -------------------------------------------------

    def phi_cell_coeffs(self, phi: np.ndarray) -> list[np.ndarray]:
        return [ops.P_zero @ phi[cd] for ops, cd in zip(self.mops.cells, self.mops.cell_dofs)]

    def u_cell_coeffs(self, u: np.ndarray) -> list[np.ndarray]:
        N = self.N
        out = []
        for ops, cd in zip(self.mops.cells, self.mops.cell_dofs):
            out.append(np.vstack([ops.P_zero @ u[cd], ops.P_zero @ u[cd + N]]))
        return out

    def build_stokes(self, phi: np.ndarray) -> StokesSystem:
        return StokesSystem(
            A_uu=(self.viscous_block(phi) + self.L1).tocsr(), B=self.B, L2=self.L2,
            rhs_momentum=self.momentum_rhs(phi), mean_row=self.mean_row,
            dirichlet_u=self.dirichlet_u)

    def build_transport(self, u: np.ndarray, phi: np.ndarray) -> TransportSystem:
        return TransportSystem(
            A_TT=self.diffusion_block(phi), C=self.convection_block(u), L3=self.L3,
            rhs_heat=self._rhs_h_static.copy(), dirichlet_phi=self.dirichlet_phi)

    def assemble(self, u: np.ndarray | None = None,
                 phi: np.ndarray | None = None) -> AssembledSystem:
        """Build every global block for the given previous iterate."""
        N = self.N
        if phi is None:
            phi = np.zeros(N)
        if u is None:
            u = np.zeros(2 * N)
        st = self.build_stokes(phi)
        tr = self.build_transport(u, phi)
        return AssembledSystem(
            A_uu=st.A_uu, B=self.B, L1=self.L1, L2=self.L2,
            A_TT=tr.A_TT, C=tr.C, L3=self.L3, rhs_momentum=st.rhs_momentum,
            rhs_heat=tr.rhs_heat, mean_row=self.mean_row,
            dirichlet_u=self.dirichlet_u, dirichlet_phi=self.dirichlet_phi)


    # -- split assembly used by the Picard sweep -------------------------------

    def viscous_block(self, phi: np.ndarray) -> sp.csr_matrix:
        spec = self.spec
        if spec.viscosity.mu_min == spec.viscosity.mu_max:
            if not hasattr(self, "_visc_const"):
                phi_c = self.phi_cell_coeffs(np.zeros(self.N))
                self._visc_const = self._vector_block(
                    [local_viscous(o, spec, c) for o, c in zip(self.mops.cells, phi_c)])
            return self._visc_const
        phi_c = self.phi_cell_coeffs(phi)
        return self._vector_block(
            [local_viscous(o, spec, c) for o, c in zip(self.mops.cells, phi_c)])

    def convection_block(self, u: np.ndarray) -> sp.csr_matrix:
        u_c = self.u_cell_coeffs(u)
        return self._scalar_block(
            [local_convection(o, c, self.spec.convection_form)
             for o, c in zip(self.mops.cells, u_c)])

    def diffusion_block(self, phi: np.ndarray) -> sp.csr_matrix:
        if self.A_TT_const is not None:
            return self.A_TT_const
        phi_c = self.phi_cell_coeffs(phi)
        return self._scalar_block(
            [local_temperature(o, self.spec, c) for o, c in zip(self.mops.cells, phi_c)])

    def momentum_rhs(self, phi: np.ndarray) -> np.ndarray:
        rhs = self._rhs_m_static.copy()
        if not self._has_buoyancy:
            return rhs
        spec = self.spec
        phi_c = self.phi_cell_coeffs(phi)
        for ops, vd, pc in zip(self.mops.cells, self.vec_dofs, phi_c):
            x, y = ops.quad.points[:, 0], ops.quad.points[:, 1]
            w = ops.quad.weights
            fb = _check_finite(spec.buoyancy(x, y), ops, "buoyancy field")
            phi_vals = ops.Phi @ pc
            rhs[vd] += np.concatenate([
                ops.Pq.T @ (w * spec.alpha * fb[0] * phi_vals),
                ops.Pq.T @ (w * spec.alpha * fb[1] * phi_vals)])
        return rhs


def assemble_global(mops: MeshOps, spec: ProblemSpec,
                    u: np.ndarray | None = None,
                    phi: np.ndarray | None = None) -> AssembledSystem:
    """One-shot assembly of all blocks for a given previous iterate."""
    return Assembler(mops, spec).assemble(u=u, phi=phi)
