"""Gauss quadrature on segments, triangles, and polygonal cells.

Triangle rules come from a collapsed (Duffy) construction so arbitrary
polynomial degree is available; polygon rules fan-triangulate about the
cell centroid with signed Jacobians, which stays exact on non-convex
cells because overlapping triangle contributions cancel.
"""

import numpy as np
from scipy.special import roots_jacobi

__all__ = [
    "gauss_legendre_01",
    "triangle_rule",
    "polygon_rule",
    "fan_rule_batch",
]

_tri_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre_01(n):
    """n-point Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(degree):
    """Quadrature on the reference triangle {x,y >= 0, x+y <= 1}.

    Exact for bivariate polynomials of total degree <= degree.  Weights
    sum to 1/2 (the reference area).
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    rule = _tri_cache.get(degree)
    if rule is not None:
        return rule
    n = max(1, (degree + 2) // 2)
    # u-direction absorbs the (1-u) Jacobian through a Gauss-Jacobi rule
    # with weight (1-t) on [-1,1]; mapped to [0,1] it integrates
    # (1-u) p(u) du exactly for deg p <= 2n-1.
    tu, wu = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (tu + 1.0)
    wu = 0.25 * wu
    v, wv = gauss_legendre_01(n)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = uu.ravel()
    y = (vv * (1.0 - uu)).ravel()
    w = np.outer(wu, wv).ravel()
    rule = (np.column_stack([x, y]), w)
    _tri_cache[degree] = rule
    return rule


def polygon_rule(verts, degree, centroid=None):
    """Quadrature points/weights over a simple polygon given by CCW verts.

    Fan triangulation about `centroid` (default: vertex average as a safe
    interior-ish pivot; any pivot is valid since triangle contributions
    are signed).
    """
    verts = np.asarray(verts, dtype=float)
    if centroid is None:
        centroid = verts.mean(axis=0)
    pts, w = fan_rule_batch(verts[None, :, :], np.asarray(centroid, float)[None, :], degree)
    return pts[0], w[0]


def fan_rule_batch(verts, pivots, degree):
    """Vectorized fan rule for a batch of equal-vertex-count polygons.

    verts: (m, v, 2) CCW loops, pivots: (m, 2).  Returns points (m, P, 2)
    and signed weights (m, P) with P = v * len(triangle_rule(degree)).
    Weights sum to the polygon areas.
    """
    verts = np.asarray(verts, dtype=float)
    pivots = np.asarray(pivots, dtype=float)
    m, v, _ = verts.shape
    ref, wref = triangle_rule(degree)
    a = verts - pivots[:, None, :]            # (m, v, 2) edge starts rel. pivot
    b = np.roll(verts, -1, axis=1) - pivots[:, None, :]
    jac = a[:, :, 0] * b[:, :, 1] - a[:, :, 1] * b[:, :, 0]   # (m, v) = 2*signed area
    # x = pivot + r0*a + r1*b for each reference point (r0, r1)
    pts = (pivots[:, None, None, :]
           + ref[None, None, :, 0, None] * a[:, :, None, :]
           + ref[None, None, :, 1, None] * b[:, :, None, :])  # (m, v, nref, 2)
    w = jac[:, :, None] * wref[None, None, :]                 # (m, v, nref)
    return pts.reshape(m, v * len(wref), 2), w.reshape(m, v * len(wref))
