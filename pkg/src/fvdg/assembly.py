"""Global assembly of the coupled FV / interior-penalty DG system.

The bilinear form is the sum of
  * the DG part on DG cells: volume diffusion, consistency and
    epsilon-adjoint facet terms, sigma/h penalty, weak-form convection
    with interior upwinding, reaction;
  * the FV part on FV cells: two-point-flux transmissibilities
    (|gamma|/d) K_gamma over interior and Dirichlet facets, interior
    upwind convection, reaction;
  * the interface part: a two-point flux between the DG trace at the
    projection point y_gamma and the FV cell value, plus upwinded
    interface convection.

Boundary convection uses the upwind numerical flux throughout: the
outflow part (beta.n >= 0 pointwise) couples the interior trace on the
left-hand side, while inflow Dirichlet data enters the right-hand side
through -(beta.n) g_D.  Dirichlet data also enters through the DG
penalty/adjoint terms and the FV transmissibility term, evaluated at
y_gamma.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import (BC_DIRICHLET, BC_NEUMANN, FacetKind, check_tpfa_admissible,
                       classify_facets)
from .quadrature import gauss_legendre_01
from .solution import build_dofmap

__all__ = [
    "AssemblyError",
    "DGParams",
    "SparseSystem",
    "harmonic_face_diffusivity",
    "upwind_trace",
    "assemble_system",
    "assemble_system_coo",
    "dump_system",
]


class AssemblyError(Exception):
    pass


@dataclass(frozen=True)
class DGParams:
    """Interior-penalty DG parameters and scheme variant switches.

    epsilon = -1 is symmetric IPDG (needs sigma above the coercivity
    threshold; the benchmark default sigma = 14 is ample for k = 1),
    epsilon = 0 incomplete, epsilon = +1 nonsymmetric.  `obb()` gives the
    nonsymmetric variant with zero interior penalty and unit boundary
    penalty.

    literal_dirichlet_rhs selects the (sigma/h)-scaled adjoint data term
    in the right-hand side exactly as printed instead of the
    adjoint-consistent K grad(v).n g_D form; it is retained for
    comparison and breaks consistency for nonzero boundary data.
    interface_pointwise = False collapses interface traces to the single
    projection point y_gamma instead of per-quadrature-point traces.
    """

    degree: int = 1
    epsilon: int = -1
    sigma: float = 14.0
    sigma_boundary: float = None
    quad_degree: int = None
    literal_dirichlet_rhs: bool = False
    interface_pointwise: bool = True
    admissibility_tol: float = 1e-8

    def __post_init__(self):
        if self.degree < 1:
            raise AssemblyError("DG degree must be >= 1")
        if self.epsilon not in (-1, 0, 1):
            raise AssemblyError("epsilon must be one of -1, 0, 1")
        if self.sigma < 0 or (self.sigma_boundary is not None and self.sigma_boundary < 0):
            raise AssemblyError("penalty parameters must be >= 0")
        if self.quad_degree is not None and self.quad_degree < 2 * self.degree + 1:
            raise AssemblyError(
                f"quadrature degree {self.quad_degree} is insufficient for "
                f"degree-{self.degree} elements (need >= {2 * self.degree + 1})")

    @property
    def sigma_b(self):
        return self.sigma if self.sigma_boundary is None else self.sigma_boundary

    @property
    def volume_quad_degree(self):
        return self.quad_degree if self.quad_degree is not None else 2 * self.degree + 2

    @property
    def facet_quad_points(self):
        return self.degree + 2

    @classmethod
    def obb(cls, degree=1, **kw):
        return cls(degree=degree, epsilon=1, sigma=0.0, sigma_boundary=1.0, **kw)


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: object = None

    @property
    def shape(self):
        return self.matrix.shape


def upwind_trace(beta_dot_n, u_upstream, u_downstream):
    """Upwind value for a facet whose normal points upstream -> downstream:
    the upstream-side trace when beta.n >= 0, the downstream one otherwise."""
    return np.where(np.asarray(beta_dot_n) >= 0, u_upstream, u_downstream)


# ---------------------------------------------------------------------------
# harmonic face diffusivity


_HARM_NODES, _HARM_WEIGHTS = None, None


def _harmonic_rule(n_panels=2, n_gauss=8):
    # composite Gauss along [0,1]; two panels keep half-and-half piecewise
    # coefficients exact
    global _HARM_NODES, _HARM_WEIGHTS
    if _HARM_NODES is None:
        x, w = gauss_legendre_01(n_gauss)
        nodes = np.concatenate([(x + i) / n_panels for i in range(n_panels)])
        weights = np.concatenate([w / n_panels] * n_panels)
        _HARM_NODES, _HARM_WEIGHTS = nodes, weights
    return _HARM_NODES, _HARM_WEIGHTS


def _harmonic_batch(K, p0, p1):
    """K_gamma = d * (integral of 1/K along [p0, p1])^-1, vectorized."""
    p0 = np.atleast_2d(p0)
    p1 = np.atleast_2d(p1)
    t, w = _harmonic_rule()
    pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
    vals = np.asarray(K(pts[..., 0], pts[..., 1]), dtype=float)
    if (vals <= 0).any():
        raise AssemblyError("non-positive diffusion coefficient sampled on a flux segment")
    inv_mean = (w[None, :] / vals).sum(axis=1)      # (1/d) * int ds/K
    return 1.0 / inv_mean


def harmonic_face_diffusivity(K, facet):
    """Harmonic normal average of K along the facet's flux segment L_gamma."""
    if facet.flux_segment is None:
        raise AssemblyError("facet carries no flux segment; classify the mesh first")
    p0, p1 = facet.flux_segment
    return float(_harmonic_batch(K, p0[None, :], p1[None, :])[0])


# ---------------------------------------------------------------------------
# assembly


class _Triplets:
    def __init__(self):
        self.rows = []
        self.cols = []
        self.vals = []
        self.rhs_rows = []
        self.rhs_vals = []

    def add_blocks(self, rows, cols, vals):
        """rows (..., ni), cols (..., nj), vals (..., ni, nj)."""
        r = np.broadcast_to(rows[..., :, None], vals.shape)
        c = np.broadcast_to(cols[..., None, :], vals.shape)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(np.ascontiguousarray(vals, dtype=float).ravel())

    def add(self, rows, cols, vals):
        self.rows.append(np.asarray(rows, dtype=np.int64).ravel())
        self.cols.append(np.asarray(cols, dtype=np.int64).ravel())
        self.vals.append(np.asarray(vals, dtype=float).ravel())

    def add_rhs(self, rows, vals):
        self.rhs_rows.append(np.asarray(rows, dtype=np.int64).ravel())
        self.rhs_vals.append(np.asarray(vals, dtype=float).ravel())

    def concat(self):
        cat = lambda chunks, dt: (np.concatenate(chunks) if chunks
                                  else np.empty(0, dtype=dt))
        return (cat(self.rows, np.int64), cat(self.cols, np.int64),
                cat(self.vals, float), cat(self.rhs_rows, np.int64),
                cat(self.rhs_vals, float))


def _facet_quadrature(mesh, idx, nq):
    t, w = gauss_legendre_01(nq)
    va = mesh.vertices[mesh.facet_vertices[idx, 0]]
    vb = mesh.vertices[mesh.facet_vertices[idx, 1]]
    pts = va[:, None, :] + t[None, :, None] * (vb - va)[:, None, :]
    wq = mesh.facet_measure[idx, None] * w[None, :]
    return pts, wq


def _dirichlet_values(mesh, spec, idx, pts):
    """Evaluate per-tag g_D at facet quadrature points, grouped by tag."""
    out = np.empty(pts.shape[:-1])
    tags = np.array([mesh.boundary_tags[int(f)] for f in idx])
    for tag in np.unique(tags):
        sel = tags == tag
        g = spec.dirichlet[tag]
        out[sel] = np.asarray(g(pts[sel][..., 0], pts[sel][..., 1]), dtype=float)
    return out


def assemble_system_coo(mesh, partition, spec, params):
    """Assemble the coupled system as COO triplets plus the right-hand side.

    Returns (rows, cols, vals, rhs, dofmap, classified_mesh).  Triplet
    order is deterministic; duplicate entries are meant to be summed.
    """
    mesh = classify_facets(mesh, partition, spec)
    if not partition.is_all_dg:
        _check_fv_admissibility(mesh, params.admissibility_tol)

    dofmap = build_dofmap(partition, params.degree)
    off = dofmap.offsets
    ndof = dofmap.total
    nb = None
    basis = None
    if not partition.is_all_fv:
        basis = mesh.dg_basis(params.degree)
        nb = basis.nb

    trip = _Triplets()

    # ---- volume terms ----------------------------------------------------
    for ids, pts, w in mesh.cell_quadrature(params.volume_quad_degree):
        x, y = pts[..., 0], pts[..., 1]
        cval = np.asarray(spec.reaction(x, y), dtype=float)
        fval = np.asarray(spec.source(x, y), dtype=float)
        is_dg = partition.is_dg[ids]
        fv = ids[~is_dg]
        if fv.size:
            sel = ~is_dg
            trip.add(off[fv], off[fv], (w[sel] * cval[sel]).sum(axis=1))
            trip.add_rhs(off[fv], (w[sel] * fval[sel]).sum(axis=1))
        dg = ids[is_dg]
        if dg.size:
            sel = is_dg
            Kv = np.asarray(spec.diffusion(x[sel], y[sel]), dtype=float)
            bv = np.asarray(spec.velocity(x[sel], y[sel]), dtype=float)
            phi = basis.eval_cells(dg, pts[sel])
            grad = basis.grad_cells(dg, pts[sel])
            wsel = w[sel]
            blocks = np.einsum("gp,gpid,gpjd->gij", wsel * Kv, grad, grad)
            bgrad = np.einsum("gpid,gpd->gpi", grad, bv)
            blocks -= np.einsum("gp,gpi,gpj->gij", wsel, bgrad, phi)
            blocks += np.einsum("gp,gpi,gpj->gij", wsel * cval[sel], phi, phi)
            dof_idx = off[dg][:, None] + np.arange(nb)
            trip.add_blocks(dof_idx, dof_idx, blocks)
            trip.add_rhs(dof_idx, np.einsum("gp,gpi->gi", wsel * fval[sel], phi))

    # ---- facet preliminaries ----------------------------------------------
    kind = mesh.facet_kind
    owner = mesh.facet_cells[:, 0]
    nbr = mesh.facet_cells[:, 1]
    nq = params.facet_quad_points

    def facet_data(idx, with_K=False):
        pts, wq = _facet_quadrature(mesh, idx, nq)
        bv = np.asarray(spec.velocity(pts[..., 0], pts[..., 1]), dtype=float)
        nrm = mesh.facet_normal[idx]
        bn = bv[..., 0] * nrm[:, None, 0] + bv[..., 1] * nrm[:, None, 1]
        Kq = None
        if with_K:
            Kq = np.asarray(spec.diffusion(pts[..., 0], pts[..., 1]), dtype=float)
        return pts, wq, bn, Kq

    # ---- DG interior facets -------------------------------------------------
    idx = np.nonzero(kind == FacetKind.DG_INTERIOR)[0]
    if idx.size:
        pts, wq, bn, Kq = facet_data(idx, with_K=True)
        o, n_ = owner[idx], nbr[idx]
        nrm = mesh.facet_normal[idx]
        phiO = basis.eval_cells(o, pts)
        phiN = basis.eval_cells(n_, pts)
        gO = basis.grad_cells(o, pts)
        gN = basis.grad_cells(n_, pts)
        gnO = gO[..., 0] * nrm[:, None, None, 0] + gO[..., 1] * nrm[:, None, None, 1]
        gnN = gN[..., 0] * nrm[:, None, None, 0] + gN[..., 1] * nrm[:, None, None, 1]
        J = np.concatenate([phiO, -phiN], axis=2)            # [u] = u_O - u_N
        AV = 0.5 * np.concatenate([gnO, gnN], axis=2)        # {grad u . n}
        pos = bn >= 0
        UP = np.concatenate([phiO * pos[..., None], phiN * (~pos)[..., None]], axis=2)
        wK = wq * Kq
        M = -np.einsum("fq,fqi,fqj->fij", wK, J, AV)
        M += params.epsilon * np.einsum("fq,fqi,fqj->fij", wK, AV, J)
        pen = (params.sigma / mesh.facet_h[idx])[:, None] * wq
        M += np.einsum("fq,fqi,fqj->fij", pen, J, J)
        M += np.einsum("fq,fqi,fqj->fij", wq * bn, J, UP)
        dofs = np.concatenate([off[o][:, None] + np.arange(nb),
                               off[n_][:, None] + np.arange(nb)], axis=1)
        trip.add_blocks(dofs, dofs, M)

    # ---- DG boundary facets ---------------------------------------------------
    for bc_type in (BC_DIRICHLET, BC_NEUMANN):
        idx = np.nonzero((kind == FacetKind.DG_BOUNDARY) & (mesh.facet_bc == bc_type))[0]
        if not idx.size:
            continue
        pts, wq, bn, Kq = facet_data(idx, with_K=True)
        o = owner[idx]
        nrm = mesh.facet_normal[idx]
        phi = basis.eval_cells(o, pts)
        dofs = off[o][:, None] + np.arange(nb)
        M = np.einsum("fq,fqi,fqj->fij", wq * np.maximum(bn, 0.0), phi, phi)
        if bc_type == BC_DIRICHLET:
            g_ = basis.grad_cells(o, pts)
            gn = g_[..., 0] * nrm[:, None, None, 0] + g_[..., 1] * nrm[:, None, None, 1]
            wK = wq * Kq
            M -= np.einsum("fq,fqi,fqj->fij", wK, phi, gn)
            M += params.epsilon * np.einsum("fq,fqi,fqj->fij", wK, gn, phi)
            sb = (params.sigma_b / mesh.facet_h[idx])[:, None] * wq
            M += np.einsum("fq,fqi,fqj->fij", sb, phi, phi)
            g = _dirichlet_values(mesh, spec, idx, pts)
            if params.literal_dirichlet_rhs:
                adj = params.epsilon * np.einsum("fq,fqi->fi", sb * g, gn)
            else:
                adj = params.epsilon * np.einsum("fq,fqi->fi", wK * g, gn)
            trip.add_rhs(dofs, adj)
            trip.add_rhs(dofs, np.einsum("fq,fqi->fi", sb * g, phi))
            trip.add_rhs(dofs,
                         -np.einsum("fq,fqi->fi", wq * np.minimum(bn, 0.0) * g, phi))
        trip.add_blocks(dofs, dofs, M)

    # ---- FV interior facets ---------------------------------------------------
    idx = np.nonzero(kind == FacetKind.FV_INTERIOR)[0]
    if idx.size:
        pts, wq, bn, _ = facet_data(idx)
        o, n_ = owner[idx], nbr[idx]
        T = (mesh.facet_measure[idx] / mesh.facet_d[idx]) \
            * _harmonic_batch(spec.diffusion, mesh.sites[o], mesh.sites[n_])
        s_plus = (wq * np.maximum(bn, 0.0)).sum(axis=1)
        s_minus = (wq * np.minimum(bn, 0.0)).sum(axis=1)
        do, dn = off[o], off[n_]
        trip.add(do, do, T + s_plus)
        trip.add(do, dn, -T + s_minus)
        trip.add(dn, do, -T - s_plus)
        trip.add(dn, dn, T - s_minus)

    # ---- FV boundary facets ------------------------------------------------------
    for bc_type in (BC_DIRICHLET, BC_NEUMANN):
        idx = np.nonzero((kind == FacetKind.FV_BOUNDARY) & (mesh.facet_bc == bc_type))[0]
        if not idx.size:
            continue
        pts, wq, bn, _ = facet_data(idx)
        o = owner[idx]
        do = off[o]
        s_plus = (wq * np.maximum(bn, 0.0)).sum(axis=1)
        trip.add(do, do, s_plus)
        if bc_type == BC_DIRICHLET:
            y = mesh.facet_y[idx]
            T = (mesh.facet_measure[idx] / mesh.facet_d[idx]) \
                * _harmonic_batch(spec.diffusion, mesh.sites[o], y)
            trip.add(do, do, T)
            gy = _dirichlet_values(mesh, spec, idx, y[:, None, :])[:, 0]
            trip.add_rhs(do, T * gy)
            g = _dirichlet_values(mesh, spec, idx, pts)
            trip.add_rhs(do, -(wq * np.minimum(bn, 0.0) * g).sum(axis=1))

    # ---- interface facets (owner = DG, neighbor = FV, normal DG -> FV) ----------
    idx = np.nonzero(kind == FacetKind.INTERFACE)[0]
    if idx.size:
        pts, wq, bn, _ = facet_data(idx)
        o, n_ = owner[idx], nbr[idx]          # o: DG cell, n_: FV cell
        y = mesh.facet_y[idx]
        T = (mesh.facet_measure[idx] / mesh.facet_d[idx]) \
            * _harmonic_batch(spec.diffusion, mesh.sites[n_], y)
        phiy = basis.eval_cells(o, y)                        # (F, nb)
        dofs_dg = off[o][:, None] + np.arange(nb)
        dofs_fv = off[n_]
        trip.add_blocks(dofs_dg, dofs_dg,
                        np.einsum("f,fi,fj->fij", T, phiy, phiy))
        trip.add_blocks(dofs_dg, dofs_fv[:, None], -(T[:, None] * phiy)[:, :, None])
        trip.add_blocks(dofs_fv[:, None], dofs_dg, -(T[:, None] * phiy)[:, None, :])
        trip.add(dofs_fv, dofs_fv, T)
        if params.interface_pointwise:
            phiq = basis.eval_cells(o, pts)                  # (F, nq, nb)
        else:
            phiq = np.broadcast_to(phiy[:, None, :], (len(idx), nq, nb))
        sp_q = wq * np.maximum(bn, 0.0)
        sm_q = wq * np.minimum(bn, 0.0)
        trip.add_blocks(dofs_dg, dofs_dg,
                        np.einsum("fq,fqi,fqj->fij", sp_q, phiq, phiq))
        trip.add_blocks(dofs_fv[:, None], dofs_dg,
                        -np.einsum("fq,fqj->fj", sp_q, phiq)[:, None, :])
        trip.add_blocks(dofs_dg, dofs_fv[:, None],
                        np.einsum("fq,fqi->fi", sm_q, phiq)[:, :, None])
        trip.add(dofs_fv, dofs_fv, -sm_q.sum(axis=1))

    rows, cols, vals, rhs_rows, rhs_vals = trip.concat()
    return rows, cols, vals, (rhs_rows, rhs_vals), dofmap, mesh


def _check_fv_admissibility(mesh, tol):
    """TPFA admissibility restricted to facets the FV scheme actually uses."""
    fv_kinds = np.isin(mesh.facet_kind,
                       (FacetKind.FV_INTERIOR, FacetKind.FV_BOUNDARY, FacetKind.INTERFACE))
    if not fv_kinds.any():
        return
    report = check_tpfa_admissible(mesh, tol)
    if report.ok:
        return
    bad = [f for f in report.offending_facets if fv_kinds[f]]
    if bad:
        raise AssemblyError(
            f"FV region is not TPFA-admissible: {len(bad)} offending facet(s), "
            f"worst orthogonality defect {report.worst_orthogonality_defect:.3e} rad")


def assemble_system(mesh, partition, spec, params):
    """Assemble and compress the coupled system a(u, v) = l(v)."""
    rows, cols, vals, (rhs_rows, rhs_vals), dofmap, _ = \
        assemble_system_coo(mesh, partition, spec, params)
    n = dofmap.total
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    rhs = np.zeros(n)
    np.add.at(rhs, rhs_rows, rhs_vals)
    return SparseSystem(matrix=mat, rhs=rhs, dofmap=dofmap)


def dump_system(system, path_prefix):
    """Write the matrix in Matrix Market coordinate format and the
    right-hand side as one 17-significant-digit decimal per line."""
    coo = system.matrix.tocoo()
    with open(f"{path_prefix}.mtx", "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")
    with open(f"{path_prefix}.rhs.txt", "w") as fh:
        for v in system.rhs:
            fh.write(f"{v:.17g}\n")
