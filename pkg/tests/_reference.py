"""Independent oracles for the test suite.

These deliberately re-derive results through different routes than the
package: Voronoi cells via direct per-site half-plane clipping, and the
two schemes via plain per-entity assembly loops.  The reference
assemblers share only the mesh geometry, the quadrature rules, and the
per-cell basis transforms (all of which define the discrete scheme);
every bilinear-form contribution is recomputed here from the formulas.
"""

from math import fsum

import numpy as np
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from fvdg.geometry import BC_DIRICHLET, FacetKind
from fvdg.quadrature import gauss_legendre_01


# ---------------------------------------------------------------------------
# half-plane Voronoi oracle (O(n^2))


def halfplane_voronoi_cells(sites, domain):
    """Cell polygons as domain intersected with all bisector half-planes."""
    sites = np.asarray(sites, dtype=float)
    lo, hi = domain.bbox
    span = float(np.hypot(*(hi - lo))) * 4.0
    center = 0.5 * (lo + hi)
    cells = []
    for i, s in enumerate(sites):
        poly = domain.polygon
        for j, t in enumerate(sites):
            if i == j:
                continue
            mid = 0.5 * (s + t)
            d = t - s
            d = d / np.hypot(*d)
            # half-plane {x : (x - mid) . d <= 0} as a big rectangle
            perp = np.array([-d[1], d[0]])
            big = ShapelyPolygon([mid + span * perp, mid - span * perp,
                                  mid - span * perp - span * d,
                                  mid + span * perp - span * d])
            poly = poly.intersection(big)
        cells.append(poly)
    return cells


def polygon_vertex_set(poly):
    return np.asarray(poly.exterior.coords)[:-1]


def match_vertex_sets(a, b, tol):
    """Set equality of two vertex clouds within tolerance."""
    a = np.asarray(a)
    b = np.asarray(b)
    if len(a) != len(b):
        return False
    used = np.zeros(len(b), dtype=bool)
    for p in a:
        d = np.hypot(*(b - p).T)
        d[used] = np.inf
        k = int(np.argmin(d))
        if d[k] > tol:
            return False
        used[k] = True
    return True


# ---------------------------------------------------------------------------
# canonical exact summation


class Accumulator:
    """Entry -> contribution list; exact fsum on readout."""

    def __init__(self, n):
        self.n = n
        self.entries = {}
        self.rhs = {}

    def add(self, i, j, v):
        self.entries.setdefault((int(i), int(j)), []).append(float(v))

    def add_rhs(self, i, v):
        self.rhs.setdefault(int(i), []).append(float(v))

    def dense(self):
        A = np.zeros((self.n, self.n))
        for (i, j), vals in self.entries.items():
            A[i, j] = fsum(vals)
        b = np.zeros(self.n)
        for i, vals in self.rhs.items():
            b[i] = fsum(vals)
        return A, b


def canonical_dense(rows, cols, vals, rhs_pair, n):
    acc = Accumulator(n)
    for r, c, v in zip(rows, cols, vals):
        acc.add(r, c, v)
    for i, v in zip(*rhs_pair):
        acc.add_rhs(i, v)
    return acc.dense()


# ---------------------------------------------------------------------------
# shared numerical pieces (same rules as the scheme definition)


def _harmonic(spec, p0, p1):
    x, w = gauss_legendre_01(8)
    nodes = np.concatenate([x / 2, 0.5 + x / 2])
    weights = np.concatenate([w / 2, w / 2])
    pts = p0[None, :] + nodes[:, None] * (p1 - p0)[None, :]
    Kv = np.asarray(spec.diffusion(pts[:, 0], pts[:, 1]), dtype=float)
    return 1.0 / (weights / Kv).sum()


def _facet_points(mesh, f, nq):
    t, w = gauss_legendre_01(nq)
    va = mesh.vertices[mesh.facet_vertices[f, 0]]
    vb = mesh.vertices[mesh.facet_vertices[f, 1]]
    pts = va[None, :] + t[:, None] * (vb - va)[None, :]
    return pts, mesh.facet_measure[f] * w


def _g_at(mesh, spec, f, pts):
    g = spec.dirichlet[mesh.boundary_tags[int(f)]]
    return np.asarray(g(pts[:, 0], pts[:, 1]), dtype=float)


# ---------------------------------------------------------------------------
# reference cell-centered TPFA assembler (pure FV partitions)


def reference_tpfa(mesh, spec, params):
    """Plain-loop TPFA assembly on a classified all-FV mesh."""
    n = mesh.n_cells
    acc = Accumulator(n)
    nq = params.facet_quad_points

    for ids, pts, w in mesh.cell_quadrature(params.volume_quad_degree):
        cv = np.asarray(spec.reaction(pts[..., 0], pts[..., 1]), dtype=float)
        fv = np.asarray(spec.source(pts[..., 0], pts[..., 1]), dtype=float)
        for g, cell in enumerate(ids):
            acc.add(cell, cell, (w[g] * cv[g]).sum())
            acc.add_rhs(cell, (w[g] * fv[g]).sum())

    for f in range(mesh.n_facets):
        o, nb = mesh.facet_cells[f]
        pts, wq = _facet_points(mesh, f, nq)
        bv = np.asarray(spec.velocity(pts[:, 0], pts[:, 1]), dtype=float)
        nrm = mesh.facet_normal[f]
        bn = bv[:, 0] * nrm[0] + bv[:, 1] * nrm[1]
        kind = mesh.facet_kind[f]
        if kind == FacetKind.FV_INTERIOR:
            T = (mesh.facet_measure[f] / mesh.facet_d[f]) \
                * _harmonic(spec, mesh.sites[o], mesh.sites[nb])
            sp = (wq * np.maximum(bn, 0.0)).sum()
            sm = (wq * np.minimum(bn, 0.0)).sum()
            acc.add(o, o, T + sp)
            acc.add(o, nb, -T + sm)
            acc.add(nb, o, -T - sp)
            acc.add(nb, nb, T - sm)
        elif kind == FacetKind.FV_BOUNDARY:
            acc.add(o, o, (wq * np.maximum(bn, 0.0)).sum())
            if mesh.facet_bc[f] == BC_DIRICHLET:
                y = mesh.facet_y[f]
                T = (mesh.facet_measure[f] / mesh.facet_d[f]) \
                    * _harmonic(spec, mesh.sites[o], y)
                acc.add(o, o, T)
                gy = _g_at(mesh, spec, f, y[None, :])[0]
                acc.add_rhs(o, T * gy)
                g = _g_at(mesh, spec, f, pts)
                acc.add_rhs(o, -(wq * np.minimum(bn, 0.0) * g).sum())
        else:
            raise AssertionError("reference_tpfa expects an all-FV partition")
    return acc.dense()


# ---------------------------------------------------------------------------
# reference interior-penalty DG assembler (pure DG partitions)


def reference_ipdg(mesh, spec, params):
    """Plain-loop IPDG assembly on a classified all-DG mesh."""
    basis = mesh.dg_basis(params.degree)
    nb = basis.nb
    n = mesh.n_cells * nb
    acc = Accumulator(n)
    nq = params.facet_quad_points
    eps = params.epsilon

    def dofs(cell):
        return cell * nb + np.arange(nb)

    def add_block(rows, cols, M):
        for a, r in enumerate(rows):
            for b, c in enumerate(cols):
                acc.add(r, c, M[a, b])

    for ids, pts, w in mesh.cell_quadrature(params.volume_quad_degree):
        Kv = np.asarray(spec.diffusion(pts[..., 0], pts[..., 1]), dtype=float)
        bv = np.asarray(spec.velocity(pts[..., 0], pts[..., 1]), dtype=float)
        cv = np.asarray(spec.reaction(pts[..., 0], pts[..., 1]), dtype=float)
        fv = np.asarray(spec.source(pts[..., 0], pts[..., 1]), dtype=float)
        phi = basis.eval_cells(ids, pts)
        grad = basis.grad_cells(ids, pts)
        for g, cell in enumerate(ids):
            M = np.einsum("p,pid,pjd->ij", w[g] * Kv[g], grad[g], grad[g])
            bgrad = np.einsum("pid,pd->pi", grad[g], bv[g])
            M = M - np.einsum("p,pi,pj->ij", w[g], bgrad, phi[g])
            M = M + np.einsum("p,pi,pj->ij", w[g] * cv[g], phi[g], phi[g])
            add_block(dofs(cell), dofs(cell), M)
            r = np.einsum("p,pi->i", w[g] * fv[g], phi[g])
            for a, d in enumerate(dofs(cell)):
                acc.add_rhs(d, r[a])

    for f in range(mesh.n_facets):
        o, nbr = mesh.facet_cells[f]
        pts, wq = _facet_points(mesh, f, nq)
        bv = np.asarray(spec.velocity(pts[:, 0], pts[:, 1]), dtype=float)
        nrm = mesh.facet_normal[f]
        bn = bv[:, 0] * nrm[0] + bv[:, 1] * nrm[1]
        Kq = np.asarray(spec.diffusion(pts[:, 0], pts[:, 1]), dtype=float)
        kind = mesh.facet_kind[f]
        if kind == FacetKind.DG_INTERIOR:
            phiO = basis.eval_cells(np.full(len(pts), o), pts)
            phiN = basis.eval_cells(np.full(len(pts), nbr), pts)
            gO = basis.grad_cells(np.full(len(pts), o), pts)
            gN = basis.grad_cells(np.full(len(pts), nbr), pts)
            gnO = gO[..., 0] * nrm[0] + gO[..., 1] * nrm[1]
            gnN = gN[..., 0] * nrm[0] + gN[..., 1] * nrm[1]
            J = np.concatenate([phiO, -phiN], axis=1)
            AV = 0.5 * np.concatenate([gnO, gnN], axis=1)
            pos = bn >= 0
            UP = np.concatenate([phiO * pos[:, None], phiN * (~pos)[:, None]], axis=1)
            wK = wq * Kq
            M = -np.einsum("q,qi,qj->ij", wK, J, AV)
            M += eps * np.einsum("q,qi,qj->ij", wK, AV, J)
            pen = (params.sigma / mesh.facet_h[f]) * wq
            M += np.einsum("q,qi,qj->ij", pen, J, J)
            M += np.einsum("q,qi,qj->ij", wq * bn, J, UP)
            both = np.concatenate([dofs(o), dofs(nbr)])
            add_block(both, both, M)
        elif kind == FacetKind.DG_BOUNDARY:
            cells_f = np.full(len(pts), o)
            phi = basis.eval_cells(cells_f, pts)
            M = np.einsum("q,qi,qj->ij", wq * np.maximum(bn, 0.0), phi, phi)
            if mesh.facet_bc[f] == BC_DIRICHLET:
                g_ = basis.grad_cells(cells_f, pts)
                gn = g_[..., 0] * nrm[0] + g_[..., 1] * nrm[1]
                wK = wq * Kq
                M -= np.einsum("q,qi,qj->ij", wK, phi, gn)
                M += eps * np.einsum("q,qi,qj->ij", wK, gn, phi)
                sb = (params.sigma_b / mesh.facet_h[f]) * wq
                M += np.einsum("q,qi,qj->ij", sb, phi, phi)
                gval = _g_at(mesh, spec, f, pts)
                if params.literal_dirichlet_rhs:
                    radj = eps * np.einsum("q,qi->i", sb * gval, gn)
                else:
                    radj = eps * np.einsum("q,qi->i", wK * gval, gn)
                rpen = np.einsum("q,qi->i", sb * gval, phi)
                rin = -np.einsum("q,qi->i", wq * np.minimum(bn, 0.0) * gval, phi)
                for a, d in enumerate(dofs(o)):
                    acc.add_rhs(d, radj[a])
                    acc.add_rhs(d, rpen[a])
                    acc.add_rhs(d, rin[a])
            add_block(dofs(o), dofs(o), M)
        else:
            raise AssertionError("reference_ipdg expects an all-DG partition")
    return acc.dense()
