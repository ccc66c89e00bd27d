"""Computable VEM error norms, divergence diagnostics and field export.

H1-type errors compare exact gradients with gradients of the elementwise
energy projection; L2-type errors use the L2 projection, both integrated with
the element quadrature.  The pressure error is taken against the zero-mean
shift of the exact pressure.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .element_ops import MeshOps


@dataclass
class ErrorBundle:
    e_u_h1: float | None
    e_u_l2: float | None
    e_p_l2: float | None
    e_phi_h1: float | None
    e_phi_l2: float | None
    div_violation: float
    phi_dev_min: float
    phi_dev_max: float

    @property
    def phi_dev_absmax(self) -> float:
        return max(abs(self.phi_dev_min), abs(self.phi_dev_max))


class ExactFields:
    """Analytic reference fields with gradients; all callables vectorized."""

    def __init__(self, u=None, grad_u=None, p=None, phi=None, grad_phi=None):
        self.u = u                # (x, y) -> (2, n)
        self.grad_u = grad_u      # (x, y) -> (2, 2, n), [i, j] = d u_i / d x_j
        self.p = p
        self.phi = phi
        self.grad_phi = grad_phi  # (x, y) -> (2, n)


def _finite(vals, where):
    a = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(a)):
        flat = a.reshape(-1, a.shape[-1])
        bad = np.where(~np.isfinite(flat).all(axis=0))[0][0]
        raise ValueError(f"exact-field provider returned a non-finite value at "
                         f"quadrature point #{bad} in {where}")
    return a


def exact_pressure_mean(exact: ExactFields, mops: MeshOps) -> float:
    total = 0.0
    area = 0.0
    for ops in mops.cells:
        x, y = ops.quad.points[:, 0], ops.quad.points[:, 1]
        total += float(ops.quad.weights @ _finite(exact.p(x, y), "pressure mean"))
        area += ops.geom.area
    return total / area


def compute_errors(state, exact: ExactFields | None, mops: MeshOps,
                   phi_reference=None) -> ErrorBundle:
    """Error norms of a coupled state against analytic fields.

    ``phi_reference`` (callable or constant) feeds the dof-point extremes of
    phi_h - reference; it defaults to the exact temperature.
    """
    N = mops.n_scalar
    lay = mops.layout
    eu1 = eu0 = ep = et1 = et0 = 0.0
    div2 = 0.0
    p_shift = exact_pressure_mean(exact, mops) if exact is not None and exact.p else 0.0
    for ops, cd in zip(mops.cells, mops.cell_dofs):
        pts, w = ops.quad.points, ops.quad.weights
        x, y = pts[:, 0], pts[:, 1]
        u_loc = np.concatenate([state.u[cd], state.u[cd + N]])
        dcoef = ops.Div_lo @ u_loc
        div2 += float(dcoef @ ops.H[:len(dcoef), :len(dcoef)] @ dcoef)
        if exact is None:
            continue
        dphi_tab = ops.basis.eval_grad(pts)           # (nq, nk, 2)
        if exact.u is not None:
            ue = _finite(exact.u(x, y), "velocity")
            gue = _finite(exact.grad_u(x, y), "velocity gradient")
            for comp, dof in enumerate((state.u[cd], state.u[cd + N])):
                cnab = ops.P_nabla @ dof
                gh = np.einsum("qad,a->qd", dphi_tab, cnab)
                eu1 += float(w @ ((gue[comp, 0] - gh[:, 0]) ** 2
                                  + (gue[comp, 1] - gh[:, 1]) ** 2))
                vh = ops.Pq @ dof
                eu0 += float(w @ (ue[comp] - vh) ** 2)
        if exact.p is not None:
            ph = ops.Pq @ state.p[cd]
            pe = _finite(exact.p(x, y), "pressure") - p_shift
            ep += float(w @ (pe - ph) ** 2)
        if exact.phi is not None:
            cnab = ops.P_nabla @ state.phi[cd]
            gh = np.einsum("qad,a->qd", dphi_tab, cnab)
            gte = _finite(exact.grad_phi(x, y), "temperature gradient")
            et1 += float(w @ ((gte[0] - gh[:, 0]) ** 2 + (gte[1] - gh[:, 1]) ** 2))
            th = ops.Pq @ state.phi[cd]
            et0 += float(w @ (_finite(exact.phi(x, y), "temperature") - th) ** 2)

    ref = phi_reference if phi_reference is not None else (exact.phi if exact else None)
    if ref is None:
        dev_min = dev_max = 0.0
    else:
        coords = lay.point_dof_coords()
        ref_vals = (np.full(len(coords), float(ref)) if np.isscalar(ref)
                    else np.asarray(ref(coords[:, 0], coords[:, 1]), dtype=float))
        dev = state.phi[:lay.n_point] - ref_vals
        dev_min, dev_max = float(dev.min()), float(dev.max())

    have = exact is not None
    return ErrorBundle(
        e_u_h1=math.sqrt(eu1) if have and exact.u else None,
        e_u_l2=math.sqrt(eu0) if have and exact.u else None,
        e_p_l2=math.sqrt(ep) if have and exact.p else None,
        e_phi_h1=math.sqrt(et1) if have and exact.phi else None,
        e_phi_l2=math.sqrt(et0) if have and exact.phi else None,
        div_violation=math.sqrt(div2), phi_dev_min=dev_min, phi_dev_max=dev_max)


def observed_rates(hs, errors):
    """rate_i = log(e_i / e_{i+1}) / log(h_i / h_{i+1}); inf for zero coarse error."""
    hs = list(hs)
    es = list(errors)
    if len(hs) != len(es) or len(hs) < 2:
        raise ValueError("need matching h/error sequences of length >= 2")
    out = []
    for i in range(len(hs) - 1):
        if es[i + 1] == 0.0:
            out.append(math.inf)
        elif es[i] == 0.0:
            out.append(-math.inf)
        else:
            out.append(math.log(es[i] / es[i + 1]) / math.log(hs[i] / hs[i + 1]))
    return out


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _vertex_fields(state, mops: MeshOps):
    """Average the projected fields over cells incident to each vertex."""
    mesh = mops.mesh
    N = mops.n_scalar
    nv = mesh.n_vertices
    acc = np.zeros((nv, 4))
    cnt = np.zeros(nv)
    for ci, (ops, cd) in enumerate(zip(mops.cells, mops.cell_dofs)):
        cell = mesh.cells[ci]
        vals = ops.basis.eval(mesh.vertices[cell])    # (nvc, nk)
        u1 = vals @ (ops.P_nabla @ state.u[cd])
        u2 = vals @ (ops.P_nabla @ state.u[cd + N])
        pv = vals @ (ops.P_zero @ state.p[cd])
        tv = vals @ (ops.P_zero @ state.phi[cd])
        acc[cell] += np.column_stack([u1, u2, pv, tv])
        cnt[cell] += 1.0
    return acc / cnt[:, None]


def export_fields(state, mesh, mops: MeshOps, path, fmt: str = "vtk_legacy"):
    """Write per-vertex projected fields as legacy-ASCII VTK polydata or CSV."""
    fields = _vertex_fields(state, mops)
    if fmt == "vtk_legacy":
        text = _vtk_text(mesh, fields)
    elif fmt == "csv":
        text = _csv_text(mesh, fields)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _vtk_text(mesh, fields) -> str:
    out = io.StringIO()
    nv = mesh.n_vertices
    out.write("# vtk DataFile Version 3.0\n")
    out.write("coupled flow fields\nASCII\nDATASET POLYDATA\n")
    out.write(f"POINTS {nv} double\n")
    for xy in mesh.vertices:
        out.write(f"{xy[0]:.17g} {xy[1]:.17g} 0\n")
    size = sum(len(c) + 1 for c in mesh.cells)
    out.write(f"POLYGONS {mesh.n_cells} {size}\n")
    for c in mesh.cells:
        out.write(" ".join([str(len(c))] + [str(int(i)) for i in c]) + "\n")
    out.write(f"POINT_DATA {nv}\n")
    out.write("VECTORS velocity double\n")
    for row in fields:
        out.write(f"{row[0]:.17g} {row[1]:.17g} 0\n")
    for name, col in (("pressure", 2), ("temperature", 3)):
        out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for row in fields:
            out.write(f"{row[col]:.17g}\n")
    return out.getvalue()


def _csv_text(mesh, fields) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["x", "y", "u1", "u2", "p", "phi"])
    for xy, row in zip(mesh.vertices, fields):
        writer.writerow([f"{v:.17g}" for v in (xy[0], xy[1], row[0], row[1], row[2], row[3])])
    return out.getvalue()
