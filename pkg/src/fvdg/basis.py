"""Per-cell DG bases: scaled monomials orthonormalized against the cell.

Monomials in ((x-xc)/h, (y-yc)/h) about the centroid are Gram-Schmidt
orthonormalized (via a Cholesky factor of the cell mass matrix) for
conditioning.  Because the centroid-centered linear monomials have zero
cell mean, the mode-0 coefficient alone carries the cell average, and
truncating modes of degree >= 2 leaves exactly the L2-projection onto
linears with the average untouched.

Evaluation accepts either points aligned with the cell array
(cells (...,), points (..., 2)) or one extra quadrature axis
(cells (...,), points (..., P, 2)).
"""

import numpy as np

__all__ = ["monomial_exponents", "space_dimension", "DGBasis"]


def space_dimension(k):
    return (k + 1) * (k + 2) // 2


def monomial_exponents(k):
    """Total-degree-ordered exponent pairs: 1, x, y, x^2, xy, y^2, ..."""
    exps = []
    for d in range(k + 1):
        for ay in range(d + 1):
            exps.append((d - ay, ay))
    return np.array(exps, dtype=int)


class DGBasis:
    """Orthonormal polynomial bases of degree k for every cell of a mesh."""

    def __init__(self, mesh, degree):
        if degree < 1:
            raise ValueError("DG degree must be >= 1")
        self.mesh = mesh
        self.degree = degree
        self.exponents = monomial_exponents(degree)
        self.nb = len(self.exponents)
        n = mesh.n_cells
        self.transform = np.empty((n, self.nb, self.nb))   # phi = m @ transform
        self.avg_weights = np.empty((n, self.nb))          # cell-average functionals
        for ids, pts, w in mesh.cell_quadrature(2 * degree + 2):
            m = self._monomials(self._xi(ids, pts))        # (g, P, nb)
            mass = np.einsum("gp,gpi,gpj->gij", w, m, m)
            L = np.linalg.cholesky(mass)
            B = np.transpose(np.linalg.inv(L), (0, 2, 1))  # upper triangular L^{-T}
            self.transform[ids] = B
            phi = np.einsum("gpi,gij->gpj", m, B)
            self.avg_weights[ids] = np.einsum("gp,gpj->gj", w, phi) \
                / self.mesh.cell_areas[ids, None]

    # -- helpers -----------------------------------------------------------

    def _align(self, cells, points):
        """Broadcast centroid/diameter lookups against the point layout."""
        cells = np.asarray(cells, dtype=int)
        points = np.asarray(points, dtype=float)
        c = self.mesh.cell_centroids[cells]
        h = self.mesh.cell_diameters[cells]
        T = self.transform[cells]
        if points.ndim == cells.ndim + 2:     # extra quadrature axis
            c = c[..., None, :]
            h = h[..., None]
            T = T[..., None, :, :]
        elif points.ndim != cells.ndim + 1:
            raise ValueError("points must be cells.shape + (2,) or cells.shape + (P, 2)")
        return points, c, h, T

    def _xi(self, cells, points):
        points, c, h, _ = self._align(cells, points)
        return (points - c) / h[..., None]

    def _monomials(self, xi):
        ax = self.exponents[:, 0]
        ay = self.exponents[:, 1]
        return xi[..., 0, None] ** ax * xi[..., 1, None] ** ay

    def _monomial_grads(self, xi):
        ax = self.exponents[:, 0]
        ay = self.exponents[:, 1]
        x = xi[..., 0, None]
        y = xi[..., 1, None]
        dmx = ax * x ** np.maximum(ax - 1, 0) * y ** ay
        dmy = ay * x ** ax * y ** np.maximum(ay - 1, 0)
        return np.stack([dmx, dmy], axis=-1)               # (..., nb, 2)

    # -- evaluation ---------------------------------------------------------

    def eval_cells(self, cells, points):
        """Basis values phi, shape points.shape[:-1] + (nb,)."""
        points, c, h, T = self._align(cells, points)
        m = self._monomials((points - c) / h[..., None])
        return np.einsum("...i,...ij->...j", m, T)

    def grad_cells(self, cells, points):
        """Physical basis gradients, shape points.shape[:-1] + (nb, 2)."""
        points, c, h, T = self._align(cells, points)
        dm = self._monomial_grads((points - c) / h[..., None])
        g = np.einsum("...id,...ij->...jd", dm, T)
        return g / h[..., None, None]

    # -- coefficient conversions ---------------------------------------------

    def to_monomial(self, cells, coeffs):
        """Orthonormal coefficients (..., nb) -> scaled-monomial coefficients."""
        return np.einsum("...ij,...j->...i", self.transform[np.asarray(cells, int)], coeffs)

    def from_monomial(self, cells, mono):
        """Inverse of to_monomial."""
        cells = np.atleast_1d(np.asarray(cells, dtype=int))
        mono2 = np.atleast_2d(np.asarray(mono, dtype=float))
        out = np.linalg.solve(self.transform[cells], mono2[..., None])[..., 0]
        return out.reshape(np.shape(mono))
