"""Conservative vertex slope limiter for the DG region.

Per-vertex bounds are the min/max of cell averages over the patch of
cells sharing the vertex, widened by the Dirichlet boundary value where
the vertex lies on a Dirichlet facet.  Each DG cell's linear part is
then scaled directionally (x first, then y, in that order; the result is
order-dependent by construction) so all its vertex values land inside
the bounds, leaving the cell average untouched.

For k >= 2 the limiter acts only on cells whose full polynomial violates
the vertex bounds somewhere: their modes of degree >= 2 are zeroed
(mean-free, so conservative) and the remaining linear part is limited.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import BC_DIRICHLET

__all__ = ["VertexBounds", "LimiterFactors", "compute_vertex_bounds",
           "limit_cell", "limit_solution"]

_TINY = 1e-300


@dataclass(frozen=True, eq=False)
class VertexBounds:
    u_min: np.ndarray
    u_max: np.ndarray


@dataclass(frozen=True, eq=False)
class LimiterFactors:
    alpha_x: np.ndarray
    alpha_y: np.ndarray


def compute_vertex_bounds(mesh, averages, spec):
    """Patch min/max of cell averages per vertex, with Dirichlet merge.

    Needs a classified mesh (Dirichlet facets are identified by the
    classification).
    """
    if not mesh.is_classified:
        raise ValueError("compute_vertex_bounds needs a classified mesh")
    averages = np.asarray(averages, dtype=float)
    u_min = np.full(mesh.n_vertices, np.inf)
    u_max = np.full(mesh.n_vertices, -np.inf)
    offsets, data = mesh.vertex_to_cells()
    counts = np.diff(offsets)
    vids = np.repeat(np.arange(mesh.n_vertices), counts)
    np.minimum.at(u_min, vids, averages[data])
    np.maximum.at(u_max, vids, averages[data])

    dir_facets = np.nonzero(mesh.facet_bc == BC_DIRICHLET)[0]
    if dir_facets.size:
        tags = np.array([mesh.boundary_tags[int(f)] for f in dir_facets])
        ends = mesh.facet_vertices[dir_facets]
        for tag in np.unique(tags):
            sel = tags == tag
            g = spec.dirichlet[tag]
            verts = np.unique(ends[sel].ravel())
            vals = np.asarray(g(mesh.vertices[verts, 0], mesh.vertices[verts, 1]),
                              dtype=float)
            np.minimum.at(u_min, verts, vals)
            np.maximum.at(u_max, verts, vals)
    return VertexBounds(u_min=u_min, u_max=u_max)


def _directional_alpha(u_ref, slope_term, lo, hi):
    """Three-case nodal factor: min(1, (hi-u)/(s)) for s>0, 1 for s=0,
    min(1, (lo-u)/s) for s<0; clamped into [0, 1]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(slope_term > 0, (hi - u_ref) / slope_term,
                     np.where(slope_term < 0, (lo - u_ref) / slope_term, 1.0))
    a = np.where(np.abs(slope_term) < _TINY, 1.0, a)
    return np.clip(np.minimum(1.0, a), 0.0, 1.0)


def limit_cell(cell, u, bounds):
    """Limit one DG cell; returns (alpha_x, alpha_y, new local coefficients)."""
    factors, coeffs = _limit_cells(u, bounds, np.array([cell], dtype=int))
    return float(factors[0, 0]), float(factors[0, 1]), coeffs[0]


def _limit_cells(u, bounds, cells):
    """Vectorized directional limiting over a batch of DG cells."""
    mesh = u.mesh
    basis = u.basis
    nb = basis.nb
    ubar, ux, uy = u.linear_parts(cells)

    loops = [mesh.cells[c] for c in cells]
    lens = np.array([len(lp) for lp in loops])
    flat_cells = np.repeat(np.arange(len(cells)), lens)
    flat_vids = np.concatenate(loops)
    starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
    vx = mesh.vertices[flat_vids, 0] - mesh.cell_centroids[cells][flat_cells, 0]
    vy = mesh.vertices[flat_vids, 1] - mesh.cell_centroids[cells][flat_cells, 1]
    lo = bounds.u_min[flat_vids]
    hi = bounds.u_max[flat_vids]

    # pass 1: x-direction against u0 = ubar
    sx = ux[flat_cells] * vx
    ax_nodes = _directional_alpha(ubar[flat_cells], sx, lo, hi)
    alpha_x = np.minimum.reduceat(ax_nodes, starts)
    # pass 2: y-direction against the pre-limited vertex values
    uhat = ubar[flat_cells] + alpha_x[flat_cells] * sx
    sy = uy[flat_cells] * vy
    ay_nodes = _directional_alpha(uhat, sy, lo, hi)
    alpha_y = np.minimum.reduceat(ay_nodes, starts)

    h = mesh.cell_diameters[cells]
    mono = np.zeros((len(cells), nb))
    mono[:, 0] = ubar
    mono[:, 1] = alpha_x * ux * h
    mono[:, 2] = alpha_y * uy * h
    coeffs = basis.from_monomial(cells, mono)
    # pin mode 0 so the original cell average survives the coefficient
    # round-trip exactly (the remaining modes are mean-free only up to
    # quadrature round-off)
    orig_avg = (basis.avg_weights[cells] * u.dg_coefficients(cells)).sum(axis=1)
    aw = basis.avg_weights[cells]
    coeffs[:, 0] = (orig_avg - (aw[:, 1:] * coeffs[:, 1:]).sum(axis=1)) / aw[:, 0]
    return np.column_stack([alpha_x, alpha_y]), coeffs


def limit_solution(u, bounds, dg_cells=None, return_factors=False):
    """Apply the vertex limiter on DG cells; FV cells are untouched.

    Cells already inside the vertex bounds keep their full polynomial
    (all factors 1); for k >= 2 only flagged cells lose their
    higher-order modes.
    """
    if dg_cells is None:
        dg_cells = u.partition.dg_cells()
    dg_cells = np.asarray(dg_cells, dtype=int)
    factors = LimiterFactors(alpha_x=np.ones(u.mesh.n_cells),
                             alpha_y=np.ones(u.mesh.n_cells))
    if dg_cells.size == 0:
        out = u.copy()
        return (out, factors) if return_factors else out

    # flag cells whose polynomial leaves the vertex bounds somewhere
    loops = [u.mesh.cells[c] for c in dg_cells]
    lens = np.array([len(lp) for lp in loops])
    flat_cells = np.repeat(dg_cells, lens)
    flat_vids = np.concatenate(loops)
    vals = u.eval_cells(flat_cells, u.mesh.vertices[flat_vids])
    tol = 1e-12 * max(1.0, np.abs(vals).max() if vals.size else 1.0)
    viol = (vals < bounds.u_min[flat_vids] - tol) | (vals > bounds.u_max[flat_vids] + tol)
    starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
    flagged = dg_cells[np.logical_or.reduceat(viol, starts)] if viol.any() \
        else np.array([], dtype=int)

    coeffs = u.coefficients.copy()
    if flagged.size:
        fac, new_local = _limit_cells(u, bounds, flagged)
        off = u.dofmap.offsets
        idx = off[flagged][:, None] + np.arange(u.basis.nb)
        coeffs[idx] = new_local
        factors.alpha_x[flagged] = fac[:, 0]
        factors.alpha_y[flagged] = fac[:, 1]
    out = u.with_coefficients(coeffs)
    return (out, factors) if return_factors else out
