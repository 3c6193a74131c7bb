"""Clipped Voronoi mesh generation and Lloyd relaxation.

Each cell is the intersection of the domain with the half-planes
|x - s_i| <= |x - s_j|, so site segments are perpendicular bisectors of
the interior facets and the mesh satisfies two-point-flux admissibility
by construction.

The diagram itself comes from qhull, augmented with eight distant ghost
sites so every real region is bounded; ghost bisectors lie far outside
the domain and cannot touch the clipped cells.  Clipping against the
(possibly non-convex, possibly punctured) domain polygon is exact
polygon intersection.
"""

import numpy as np
import shapely
from scipy.spatial import Voronoi, cKDTree
from shapely.geometry import Polygon as ShapelyPolygon

from .geometry import MeshGenerationError, build_mesh

__all__ = ["generate_voronoi_mesh", "lloyd_relax"]


def _validate_sites(sites, domain):
    sites = np.ascontiguousarray(sites, dtype=float)
    if sites.ndim != 2 or sites.shape[1] != 2:
        raise MeshGenerationError("sites must be an (n, 2) array")
    n = len(sites)
    if n == 0:
        raise MeshGenerationError("no sites given")
    scale = domain.diameter
    if n > 1:
        dmin, _ = cKDTree(sites).query(sites, k=2)
        nearest = dmin[:, 1].min()
        if nearest <= 1e-12 * scale:
            raise MeshGenerationError(
                f"duplicate (or nearly coincident) sites: min pairwise distance "
                f"{nearest:.3e}")
    inside = domain.contains(sites)
    if not inside.all():
        bad = int(np.nonzero(~inside)[0][0])
        raise MeshGenerationError(f"site {bad} at {tuple(sites[bad])} lies outside the domain")
    on_boundary = domain.boundary_distance(sites) <= 1e-12 * scale
    if on_boundary.any():
        bad = int(np.nonzero(on_boundary)[0][0])
        raise MeshGenerationError(f"site {bad} lies on the domain boundary")
    if n >= 3:
        centered = sites - sites.mean(axis=0)
        # rank-1 site cloud = all collinear; qhull-style degeneracy
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[1] <= 1e-12 * max(sv[0], scale):
            raise MeshGenerationError("all sites are collinear (degenerate configuration)")
    return sites


def _raw_cells(sites, domain):
    """Bounded Voronoi polygons of the real sites (ghost-point trick)."""
    lo, hi = domain.bbox
    center = 0.5 * (lo + hi)
    radius = 10.0 * max(domain.diameter, 1e-30)
    th = 2.0 * np.pi * (np.arange(8) + 0.5) / 8
    ghosts = center + radius * np.column_stack([np.cos(th), np.sin(th)])
    vor = Voronoi(np.vstack([sites, ghosts]))
    polys = []
    for i in range(len(sites)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshGenerationError(f"unbounded Voronoi region for site {i}")
        pts = vor.vertices[region]
        # raw cells are convex: angular sort about the site gives the CCW loop
        ang = np.arctan2(pts[:, 1] - sites[i, 1], pts[:, 0] - sites[i, 0])
        polys.append(pts[np.argsort(ang)])
    return polys


def _clip_cells(polys, sites, domain):
    dom = domain.polygon
    loops = []
    for i, pts in enumerate(polys):
        clipped = shapely.intersection(ShapelyPolygon(pts), dom)
        parts = [g for g in shapely.get_parts(clipped)
                 if g.geom_type == "Polygon" and g.area > 0]
        if len(parts) != 1:
            raise MeshGenerationError(
                f"cell of site {i} clips to {len(parts)} components; "
                "refusing silent repair")
        cell = parts[0]
        if len(cell.interiors) > 0:
            raise MeshGenerationError(
                f"cell of site {i} encloses a domain hole; add sites near the hole")
        coords = np.asarray(cell.exterior.coords)[:-1]
        if not cell.exterior.is_ccw:
            coords = coords[::-1]
        loops.append(coords)
    return loops


def _merge_coordinates(loops, tol):
    """Snap near-coincident loop vertices to shared ids (union-find)."""
    counts = np.array([len(lp) for lp in loops])
    flat = np.vstack(loops)
    n = len(flat)
    parent = np.arange(n)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    pairs = cKDTree(flat).query_pairs(tol, output_type="ndarray")
    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n)])
    uniq, ids = np.unique(roots, return_inverse=True)
    vertices = flat[uniq]
    cells = []
    start = 0
    for c in counts:
        loop = ids[start:start + c]
        start += c
        keep = np.nonzero(loop != np.roll(loop, 1))[0]
        loop = loop[keep]
        if len(loop) < 3:
            raise MeshGenerationError("cell degenerated to fewer than 3 vertices "
                                      "after vertex merging")
        cells.append(loop.astype(np.int64))
    return vertices, cells


def generate_voronoi_mesh(sites, domain):
    """Clipped Voronoi mesh of `sites` inside `domain`.

    Raises MeshGenerationError for duplicate sites, sites outside the
    domain, all-collinear configurations, or cells that clip to
    disconnected / hole-enclosing regions.
    """
    sites = _validate_sites(sites, domain)
    if len(sites) == 1:
        if domain.holes:
            raise MeshGenerationError("a single site cannot tile a punctured domain")
        shell = domain.shell
        return build_mesh(shell, [np.arange(len(shell))], sites, domain)
    polys = _raw_cells(sites, domain)
    loops = _clip_cells(polys, sites, domain)
    vertices, cells = _merge_coordinates(loops, 1e-9 * domain.diameter)
    return build_mesh(vertices, cells, sites, domain)


def lloyd_relax(mesh, iterations):
    """Move sites to cell centroids and regenerate, `iterations` times."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    for _ in range(iterations):
        centroids = mesh.cell_centroids.copy()
        # a non-convex cell's centroid can escape the domain; keep the old site then
        ok = mesh.domain.contains(centroids)
        ok &= mesh.domain.boundary_distance(centroids) > 1e-12 * mesh.domain.diameter
        centroids[~ok] = mesh.sites[~ok]
        mesh = generate_voronoi_mesh(centroids, mesh.domain)
    return mesh
