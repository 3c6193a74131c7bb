"""Discrete solutions over the mixed P0(FV) / Pk(DG) space."""

from dataclasses import dataclass

import numpy as np

from .basis import space_dimension
from .geometry import points_in_polygon

__all__ = ["DofMap", "DiscreteSolution", "build_dofmap", "project_function",
           "solution_cell_average", "evaluate_solution"]


@dataclass(frozen=True, eq=False)
class DofMap:
    """Cell-wise dof layout: 1 dof on FV cells, dim P_k on DG cells."""

    offsets: np.ndarray          # (n_cells + 1,) prefix sums
    degree: int

    @property
    def total(self):
        return int(self.offsets[-1])

    def cell_dofs(self, cell):
        return np.arange(self.offsets[cell], self.offsets[cell + 1])

    def local_dim(self, cell):
        return int(self.offsets[cell + 1] - self.offsets[cell])


def build_dofmap(partition, degree):
    nb = space_dimension(degree)
    dims = np.where(partition.is_dg, nb, 1)
    offsets = np.zeros(partition.n_cells + 1, dtype=np.int64)
    np.cumsum(dims, out=offsets[1:])
    return DofMap(offsets=offsets, degree=degree)


class DiscreteSolution:
    """Coefficient vector over the mixed space, with evaluation helpers.

    FV cells hold their cell value directly; DG cells hold coefficients
    in the orthonormal per-cell basis.
    """

    def __init__(self, mesh, partition, params, coefficients):
        self.mesh = mesh
        self.partition = partition
        self.params = params
        self.dofmap = build_dofmap(partition, params.degree)
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (self.dofmap.total,):
            raise ValueError(
                f"expected {self.dofmap.total} coefficients, got {coefficients.shape}")
        self.coefficients = coefficients
        self.basis = mesh.dg_basis(params.degree)

    @property
    def degree(self):
        return self.params.degree

    def with_coefficients(self, coefficients):
        return DiscreteSolution(self.mesh, self.partition, self.params, coefficients)

    def copy(self):
        return self.with_coefficients(self.coefficients.copy())

    # -- averages -----------------------------------------------------------

    def cell_averages(self):
        out = np.empty(self.mesh.n_cells)
        off = self.dofmap.offsets
        is_dg = self.partition.is_dg
        fv = np.nonzero(~is_dg)[0]
        out[fv] = self.coefficients[off[fv]]
        dg = np.nonzero(is_dg)[0]
        if dg.size:
            nb = self.basis.nb
            idx = off[dg, None] + np.arange(nb)[None, :]
            out[dg] = (self.basis.avg_weights[dg] * self.coefficients[idx]).sum(axis=1)
        return out

    def cell_average(self, cell):
        off = self.dofmap.offsets
        if not self.partition.is_dg[cell]:
            return float(self.coefficients[off[cell]])
        c = self.coefficients[off[cell]:off[cell + 1]]
        return float(self.basis.avg_weights[cell] @ c)

    # -- point evaluation -----------------------------------------------------

    def eval_cells(self, cells, points):
        """One-sided values at points paired with their containing cells.

        cells (...,) against points (..., 2) or (..., P, 2); no
        containment check (see `evaluate_solution` for the checked form).
        """
        cells = np.asarray(cells, dtype=int)
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        is_dg = self.partition.is_dg[cells]
        off = self.dofmap.offsets
        extra = points.ndim == cells.ndim + 2
        fvmask = ~is_dg
        if fvmask.any():
            vals = self.coefficients[off[cells[fvmask]]]
            out[fvmask] = vals[..., None] if extra else vals
        if is_dg.any():
            dgc = cells[is_dg]
            nb = self.basis.nb
            coef = self.coefficients[off[dgc][..., None] + np.arange(nb)]
            phi = self.basis.eval_cells(dgc, points[is_dg])
            out[is_dg] = np.einsum("...i,...i->...",
                                   phi, coef[..., None, :] if extra else coef)
        return out

    def dg_coefficients(self, cells):
        """(m, nb) coefficient block for DG cells."""
        cells = np.asarray(cells, dtype=int)
        if not self.partition.is_dg[cells].all():
            raise ValueError("dg_coefficients called with FV cells")
        off = self.dofmap.offsets
        return self.coefficients[off[cells][:, None] + np.arange(self.basis.nb)]

    def linear_parts(self, cells):
        """(ubar, ux, uy) of the P1 truncation on DG cells, about centroids."""
        cells = np.asarray(cells, dtype=int)
        coef = self.dg_coefficients(cells)[:, :3].copy()
        # modes >= 2 are mean-free and drop out of the linear projection
        pad = np.zeros((len(cells), self.basis.nb))
        pad[:, :3] = coef
        mono = self.basis.to_monomial(cells, pad)
        h = self.mesh.cell_diameters[cells]
        return mono[:, 0], mono[:, 1] / h, mono[:, 2] / h


def solution_cell_average(u, cell):
    """Average of u over one cell (FV: the coefficient itself)."""
    return u.cell_average(cell)


def evaluate_solution(u, cells, points):
    """Checked evaluation: each point must lie in its named cell."""
    cells = np.atleast_1d(np.asarray(cells, dtype=int))
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tol = 1e-9 * u.mesh.domain.diameter
    for c in np.unique(cells):
        sel = cells == c
        poly = u.mesh.cell_coords(c)
        ok = points_in_polygon(pts[sel], poly)
        if not ok.all():
            # points on the cell boundary fail the strict crossing test; accept
            # them when they are within tolerance of the polygon
            from .geometry import _segment_distance
            bad = np.nonzero(~ok)[0]
            for b in bad:
                p = pts[sel][b]
                dmin = min(_segment_distance(p[None], poly[i], poly[(i + 1) % len(poly)])[0]
                           for i in range(len(poly)))
                if dmin > tol:
                    raise ValueError(f"point {tuple(p)} lies outside cell {c}")
    return u.eval_cells(cells, pts)


def project_function(mesh, partition, params, fn):
    """L2 projection of fn(x, y) onto the mixed space (exact per-cell)."""
    dofmap = build_dofmap(partition, params.degree)
    coeffs = np.zeros(dofmap.total)
    basis = mesh.dg_basis(params.degree)
    off = dofmap.offsets
    for ids, pts, w in mesh.cell_quadrature(2 * params.degree + 2):
        vals = fn(pts[..., 0], pts[..., 1])
        is_dg = partition.is_dg[ids]
        fv = ids[~is_dg]
        if fv.size:
            sel = ~is_dg
            coeffs[off[fv]] = (w[sel] * vals[sel]).sum(axis=1) / mesh.cell_areas[fv]
        dg = ids[is_dg]
        if dg.size:
            phi = basis.eval_cells(dg, pts[is_dg])
            proj = np.einsum("gp,gp,gpi->gi", w[is_dg], vals[is_dg], phi)
            idx = off[dg][:, None] + np.arange(basis.nb)
            coeffs[idx] = proj
    return DiscreteSolution(mesh, partition, params, coeffs)
