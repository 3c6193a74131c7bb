"""Polygonal meshes with TPFA-admissible geometry and facet classification.

A mesh is a conforming tiling of a polygonal domain (optionally with
polygonal holes) by simple CCW cells, each carrying one interior site
point.  Facets are derived from the cell loops; under an FV/DG partition
they fall into five kinds (FV-interior, FV-boundary, DG-interior,
DG-boundary, FV-DG interface) and carry the two-point-flux geometry
(d_gamma, projection point, mesh-size h_gamma, inflow flag).

Conventions:
  * cell loops are CCW, so the outward normal of a directed edge (a, b)
    is the edge direction rotated by -90 degrees;
  * interior facet normals point from the owner (lower cell index) to
    the neighbor, except FV-DG interface facets whose normal always
    points from the DG cell into the FV cell;
  * meshes are immutable after construction; classification returns a
    new mesh object.
"""

import json
import warnings
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from .quadrature import fan_rule_batch

__all__ = [
    "MeshError",
    "MeshGenerationError",
    "MeshConformityError",
    "FacetKind",
    "BC_NONE",
    "BC_DIRICHLET",
    "BC_NEUMANN",
    "Domain",
    "Facet",
    "Mesh",
    "Partition",
    "AdmissibilityReport",
    "build_mesh",
    "structured_quad_mesh",
    "classify_facets",
    "check_tpfa_admissible",
    "vertex_neighborhood",
    "refine_sites",
    "tag_boundary",
    "save_mesh",
    "load_mesh",
]


class MeshError(Exception):
    pass


class MeshGenerationError(MeshError):
    pass


class MeshConformityError(MeshError):
    pass


class FacetKind(IntEnum):
    FV_INTERIOR = 0
    FV_BOUNDARY = 1
    DG_INTERIOR = 2
    DG_BOUNDARY = 3
    INTERFACE = 4


BC_NONE = -1
BC_DIRICHLET = 0
BC_NEUMANN = 1


# ---------------------------------------------------------------------------
# domain


@dataclass(frozen=True, eq=False)
class Domain:
    """Simple polygon with optional disjoint polygonal holes (all CCW)."""

    shell: np.ndarray
    holes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "shell", np.asarray(self.shell, dtype=float))
        object.__setattr__(self, "holes", tuple(np.asarray(h, dtype=float) for h in self.holes))

    @property
    def polygon(self):
        poly = getattr(self, "_poly", None)
        if poly is None:
            poly = ShapelyPolygon(self.shell, [h[::-1] for h in self.holes])
            if not poly.is_valid:
                raise MeshGenerationError("invalid domain polygon (self-intersection or bad holes)")
            object.__setattr__(self, "_poly", poly)
        return poly

    @property
    def area(self):
        return self.polygon.area

    @property
    def diameter(self):
        lo, hi = self.bbox
        return float(np.hypot(*(hi - lo)))

    @property
    def bbox(self):
        return self.shell.min(axis=0), self.shell.max(axis=0)

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return shapely.contains_xy(self.polygon, pts[:, 0], pts[:, 1])

    def boundary_distance(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return shapely.distance(self.polygon.boundary, shapely.points(pts))

    @staticmethod
    def rectangle(x0, y0, x1, y1):
        return Domain(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float))

    @staticmethod
    def l_shape(inner=2.0, outer=4.0):
        # [0, outer]^2 with the [0, inner]^2 corner removed
        return Domain(np.array([
            [inner, 0.0], [outer, 0.0], [outer, outer],
            [0.0, outer], [0.0, inner], [inner, inner],
        ]))

    @staticmethod
    def rectangle_with_circular_hole(x0, y0, x1, y1, cx=0.0, cy=0.0, radius=1.0,
                                     segments=128):
        th = 2.0 * np.pi * np.arange(segments) / segments
        hole = np.column_stack([cx + radius * np.cos(th), cy + radius * np.sin(th)])
        return Domain(
            np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float),
            (hole,),
        )


# ---------------------------------------------------------------------------
# partition


class Partition:
    """Per-cell FV/DG tags."""

    __slots__ = ("is_dg",)

    def __init__(self, is_dg):
        arr = np.asarray(is_dg, dtype=bool).copy()
        arr.setflags(write=False)
        self.is_dg = arr

    @classmethod
    def all_dg(cls, n_cells):
        return cls(np.ones(n_cells, dtype=bool))

    @classmethod
    def all_fv(cls, n_cells):
        return cls(np.zeros(n_cells, dtype=bool))

    @classmethod
    def from_fv_cells(cls, n_cells, fv_cells):
        is_dg = np.ones(n_cells, dtype=bool)
        idx = np.fromiter(fv_cells, dtype=int) if not isinstance(fv_cells, np.ndarray) else fv_cells
        if idx.size:
            is_dg[idx] = False
        return cls(is_dg)

    @property
    def n_cells(self):
        return self.is_dg.size

    @property
    def tags(self):
        return np.where(self.is_dg, "DG", "FV")

    def dg_cells(self):
        return np.nonzero(self.is_dg)[0]

    def fv_cells(self):
        return np.nonzero(~self.is_dg)[0]

    @property
    def dg_fraction(self):
        return float(np.count_nonzero(self.is_dg)) / max(self.n_cells, 1)

    @property
    def fv_fraction(self):
        return 1.0 - self.dg_fraction

    @property
    def is_all_fv(self):
        return not self.is_dg.any()

    @property
    def is_all_dg(self):
        return bool(self.is_dg.all())

    def with_fv_added(self, cells):
        is_dg = self.is_dg.copy()
        idx = np.fromiter(cells, dtype=int) if not isinstance(cells, np.ndarray) else cells
        if idx.size:
            is_dg[idx] = False
        return Partition(is_dg)

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.is_dg, other.is_dg)

    def __repr__(self):
        return f"Partition(n={self.n_cells}, dg={self.dg_fraction:.1%})"


# ---------------------------------------------------------------------------
# mesh


@dataclass(frozen=True, eq=False)
class Facet:
    """Read-only view of one facet, assembled from the mesh arrays."""

    index: int
    endpoints: np.ndarray          # (2,) vertex ids, in owner traversal order
    cells: tuple                   # (owner, neighbor) with neighbor = -1 on boundary
    normal: np.ndarray
    measure: float
    midpoint: np.ndarray
    kind: FacetKind | None = None
    d_gamma: float | None = None
    h_gamma: float | None = None
    y_gamma: np.ndarray | None = None
    boundary_tag: str | None = None
    bc: int = BC_NONE
    inflow: bool = False
    flux_segment: tuple | None = None   # (p0, p1) = L_gamma for TPFA facets

    @property
    def is_boundary(self):
        return self.cells[1] < 0


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray           # (nv, 2)
    cells: tuple                   # per-cell CCW vertex index arrays
    sites: np.ndarray              # (nc, 2)
    domain: Domain
    boundary_tags: dict = field(default_factory=dict)   # facet index -> tag

    # facet arrays (derived at build time)
    facet_vertices: np.ndarray = None   # (nf, 2) directed (a, b) in owner order
    facet_cells: np.ndarray = None      # (nf, 2) owner, neighbor (-1 boundary)
    facet_normal: np.ndarray = None
    facet_measure: np.ndarray = None
    facet_midpoint: np.ndarray = None

    # cell geometry
    cell_areas: np.ndarray = None
    cell_centroids: np.ndarray = None
    cell_diameters: np.ndarray = None

    # classification (None until classify_facets)
    facet_kind: np.ndarray = None
    facet_d: np.ndarray = None
    facet_h: np.ndarray = None
    facet_y: np.ndarray = None
    facet_bc: np.ndarray = None
    facet_inflow: np.ndarray = None

    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_facets(self):
        return len(self.facet_cells)

    @property
    def is_classified(self):
        return self.facet_kind is not None

    def cell_coords(self, i):
        return self.vertices[self.cells[i]]

    def boundary_facets(self):
        return np.nonzero(self.facet_cells[:, 1] < 0)[0]

    def interior_facets(self):
        return np.nonzero(self.facet_cells[:, 1] >= 0)[0]

    def facet(self, i):
        """Build the full Facet view for index i."""
        owner, nbr = (int(c) for c in self.facet_cells[i])
        kind = None if self.facet_kind is None else FacetKind(int(self.facet_kind[i]))
        seg = None
        if kind in (FacetKind.FV_INTERIOR, FacetKind.DG_INTERIOR):
            seg = (self.sites[owner].copy(), self.sites[nbr].copy())
        elif kind in (FacetKind.FV_BOUNDARY, FacetKind.DG_BOUNDARY):
            seg = (self.sites[owner].copy(), self.facet_y[i].copy())
        elif kind == FacetKind.INTERFACE:
            seg = (self.sites[nbr].copy(), self.facet_y[i].copy())   # FV site first
        return Facet(
            index=i,
            endpoints=self.facet_vertices[i].copy(),
            cells=(owner, nbr),
            normal=self.facet_normal[i].copy(),
            measure=float(self.facet_measure[i]),
            midpoint=self.facet_midpoint[i].copy(),
            kind=kind,
            d_gamma=None if self.facet_d is None else float(self.facet_d[i]),
            h_gamma=None if self.facet_h is None else float(self.facet_h[i]),
            y_gamma=None if self.facet_y is None else self.facet_y[i].copy(),
            boundary_tag=self.boundary_tags.get(i),
            bc=BC_NONE if self.facet_bc is None else int(self.facet_bc[i]),
            inflow=False if self.facet_inflow is None else bool(self.facet_inflow[i]),
            flux_segment=seg,
        )

    def vertex_to_cells(self):
        """CSR-style vertex -> incident cell adjacency, cached."""
        adj = self._cache.get("v2c")
        if adj is None:
            counts = np.zeros(self.n_vertices + 1, dtype=np.int64)
            for loop in self.cells:
                counts[loop + 1] += 1
            offsets = np.cumsum(counts)
            data = np.empty(offsets[-1], dtype=np.int64)
            cursor = offsets[:-1].copy()
            for ci, loop in enumerate(self.cells):
                data[cursor[loop]] = ci
                cursor[loop] += 1
            adj = (offsets, data)
            self._cache["v2c"] = adj
        return adj

    def cell_quadrature(self, degree, cells=None):
        """Grouped fan quadrature over cells (all by default).

        Returns a list of (cell_ids, points, weights) with points of
        shape (m, P, 2); groups collect cells with equal vertex counts
        so every array is rectangular.
        """
        key = ("quad", degree)
        groups = self._cache.get(key)
        if groups is None:
            nvs = np.array([len(c) for c in self.cells])
            groups = []
            for v in np.unique(nvs):
                ids = np.nonzero(nvs == v)[0]
                verts = np.stack([self.vertices[self.cells[i]] for i in ids])
                pts, w = fan_rule_batch(verts, self.cell_centroids[ids], degree)
                groups.append((ids, pts, w))
            self._cache[key] = groups
        if cells is None:
            return groups
        mask = np.zeros(self.n_cells, dtype=bool)
        mask[np.asarray(cells, dtype=int)] = True
        out = []
        for ids, pts, w in groups:
            sel = mask[ids]
            if sel.any():
                out.append((ids[sel], pts[sel], w[sel]))
        return out

    def dg_basis(self, degree):
        from .basis import DGBasis   # local import to avoid a cycle
        key = ("basis", degree)
        basis = self._cache.get(key)
        if basis is None:
            basis = DGBasis(self, degree)
            self._cache[key] = basis
        return basis


# ---------------------------------------------------------------------------
# construction


def _polygon_area_centroid(verts):
    x, y = verts[:, 0], verts[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    a = 0.5 * cross.sum()
    if a == 0.0:
        return 0.0, verts.mean(axis=0)
    cx = ((x + xs) * cross).sum() / (6.0 * a)
    cy = ((y + ys) * cross).sum() / (6.0 * a)
    return a, np.array([cx, cy])


def points_in_polygon(points, verts):
    """Crossing-number containment test (boundary points unreliable)."""
    pts = np.atleast_2d(points)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    x0, y0 = verts[:, 0], verts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for a0, b0, a1, b1 in zip(x0, y0, x1, y1):
        crosses = (b0 > y) != (b1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = a0 + (y - b0) * (a1 - a0) / (b1 - b0)
        inside ^= crosses & (x < xi)
    return inside


def _segment_distance(points, p0, p1):
    d = p1 - p0
    L2 = d @ d
    t = np.clip(((points - p0) @ d) / L2, 0.0, 1.0) if L2 > 0 else np.zeros(len(points))
    proj = p0 + t[:, None] * d
    return np.hypot(*(points - proj).T)


def build_mesh(vertices, cells, sites, domain, boundary_tags=None, validate=True):
    """Assemble a Mesh from raw arrays, deriving facets and geometry.

    Facet ids are deterministic: edges are numbered in first-occurrence
    order while walking cells in index order.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    sites = np.ascontiguousarray(sites, dtype=float)
    cells = tuple(np.asarray(c, dtype=np.int64) for c in cells)
    if len(sites) != len(cells):
        raise MeshError("one site per cell required")

    areas = np.empty(len(cells))
    centroids = np.empty((len(cells), 2))
    diameters = np.empty(len(cells))
    norm_cells = []
    for i, loop in enumerate(cells):
        if len(loop) < 3:
            raise MeshError(f"cell {i} has fewer than 3 vertices")
        if len(np.unique(loop)) != len(loop):
            raise MeshError(f"cell {i} repeats a vertex (non-simple polygon)")
        pts = vertices[loop]
        a, c = _polygon_area_centroid(pts)
        if a < 0:                      # normalize to CCW
            loop = loop[::-1].copy()
            pts = vertices[loop]
            a = -a
        if a <= 0.0:
            raise MeshError(f"cell {i} has non-positive area")
        areas[i] = a
        centroids[i] = c
        dif = pts[:, None, :] - pts[None, :, :]
        diameters[i] = np.sqrt((dif ** 2).sum(-1).max())
        norm_cells.append(loop)
    cells = tuple(norm_cells)

    # facet derivation: match directed edges
    edge_entries = {}
    order = []
    for ci, loop in enumerate(cells):
        for k in range(len(loop)):
            a, b = int(loop[k]), int(loop[(k + 1) % len(loop)])
            key = (a, b) if a < b else (b, a)
            if key not in edge_entries:
                edge_entries[key] = []
                order.append(key)
            edge_entries[key].append((ci, a, b))

    nf = len(order)
    f_verts = np.empty((nf, 2), dtype=np.int64)
    f_cells = np.empty((nf, 2), dtype=np.int64)
    for fi, key in enumerate(order):
        entries = edge_entries[key]
        if len(entries) > 2:
            raise MeshConformityError(f"edge {key} shared by {len(entries)} cells")
        if len(entries) == 2:
            (c0, a0, b0), (c1, a1, b1) = entries
            if (a0, b0) != (b1, a1):
                raise MeshConformityError(f"edge {key} traversed twice in the same direction")
            if c0 > c1:
                c0, c1, a0, b0 = c1, c0, a1, b1
            f_verts[fi] = (a0, b0)
            f_cells[fi] = (c0, c1)
        else:
            (c0, a0, b0) = entries[0]
            f_verts[fi] = (a0, b0)
            f_cells[fi] = (c0, -1)

    va = vertices[f_verts[:, 0]]
    vb = vertices[f_verts[:, 1]]
    t = vb - va
    measure = np.hypot(t[:, 0], t[:, 1])
    if (measure <= 0).any():
        raise MeshError("zero-length facet")
    normal = np.column_stack([t[:, 1], -t[:, 0]]) / measure[:, None]
    midpoint = 0.5 * (va + vb)

    mesh = Mesh(
        vertices=vertices, cells=cells, sites=sites, domain=domain,
        boundary_tags=dict(boundary_tags or {}),
        facet_vertices=f_verts, facet_cells=f_cells,
        facet_normal=normal, facet_measure=measure, facet_midpoint=midpoint,
        cell_areas=areas, cell_centroids=centroids, cell_diameters=diameters,
    )
    if validate:
        _validate_mesh(mesh)
    return mesh


def _validate_mesh(mesh, area_rtol=1e-10):
    scale = mesh.domain.diameter
    for i in range(mesh.n_cells):
        pts = mesh.cell_coords(i)
        site = mesh.sites[i]
        if not points_in_polygon(site[None, :], pts)[0]:
            raise MeshError(f"site of cell {i} is not strictly inside its cell")
    bidx = mesh.boundary_facets()
    if len(bidx):
        dist = mesh.domain.boundary_distance(mesh.facet_midpoint[bidx])
        bad = np.nonzero(dist > 1e-7 * scale)[0]
        if len(bad):
            raise MeshConformityError(
                f"{len(bad)} unmatched facet(s) not on the domain boundary "
                f"(first: facet {bidx[bad[0]]})")
    total = mesh.cell_areas.sum()
    if abs(total - mesh.domain.area) > area_rtol * max(mesh.domain.area, 1.0) * 100:
        raise MeshError(
            f"cell areas sum to {total!r}, domain area is {mesh.domain.area!r}")


def structured_quad_mesh(nx, ny, x0=0.0, y0=0.0, x1=1.0, y1=1.0):
    """Axis-aligned quad grid with cell centers as sites (TPFA-admissible)."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    sites = []
    for j in range(ny):
        for i in range(nx):
            cells.append(np.array([vid(i, j), vid(i + 1, j),
                                   vid(i + 1, j + 1), vid(i, j + 1)]))
            sites.append([0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])])
    return build_mesh(vertices, cells, np.array(sites), Domain.rectangle(x0, y0, x1, y1))


# ---------------------------------------------------------------------------
# classification


def classify_facets(mesh, partition, bcs, theta=1e-3):
    """Classify facets under a partition and boundary-condition map.

    `bcs` supplies `dirichlet` (tag -> g), `neumann_tags` (set of tags)
    and `velocity` (callable used to flag inflow at facet midpoints).
    Returns a new Mesh; interface facets are re-oriented DG -> FV.
    Idempotent: classification always starts from the stored geometry.
    """
    if partition.n_cells != mesh.n_cells:
        raise MeshError("partition size does not match the mesh")
    is_dg = partition.is_dg
    owner = mesh.facet_cells[:, 0].copy()
    nbr = mesh.facet_cells[:, 1].copy()
    f_verts = mesh.facet_vertices.copy()
    normal = mesh.facet_normal.copy()
    interior = nbr >= 0

    kind = np.empty(mesh.n_facets, dtype=np.int8)
    o_dg = is_dg[owner]
    n_dg = np.zeros_like(o_dg)
    n_dg[interior] = is_dg[nbr[interior]]
    kind[~interior & o_dg] = FacetKind.DG_BOUNDARY
    kind[~interior & ~o_dg] = FacetKind.FV_BOUNDARY
    kind[interior & o_dg & n_dg] = FacetKind.DG_INTERIOR
    kind[interior & ~o_dg & ~n_dg] = FacetKind.FV_INTERIOR
    iface = interior & (o_dg != n_dg)
    kind[iface] = FacetKind.INTERFACE

    # re-orient interface facets DG -> FV: owner must be the DG cell
    flip = iface & ~o_dg
    if flip.any():
        owner[flip], nbr[flip] = nbr[flip], owner[flip]
        f_verts[flip] = f_verts[flip][:, ::-1]
        normal[flip] = -normal[flip]

    # h_gamma: max adjacent diameter (own diameter on the boundary)
    diam = mesh.cell_diameters
    h = diam[owner].copy()
    h[interior] = np.maximum(diam[owner[interior]], diam[nbr[interior]])

    # y_gamma: projection of the flux-relevant site onto the facet segment
    # (owner site; for interface facets the FV cell's site = neighbor)
    proj_site = mesh.sites[owner].copy()
    proj_site[iface] = mesh.sites[nbr[iface]]
    va = mesh.vertices[f_verts[:, 0]]
    vb = mesh.vertices[f_verts[:, 1]]
    seg = vb - va
    L2 = (seg ** 2).sum(axis=1)
    tpar = np.clip(((proj_site - va) * seg).sum(axis=1) / L2, 0.0, 1.0)
    y = va + tpar[:, None] * seg

    d = np.empty(mesh.n_facets)
    d[interior] = np.hypot(*(mesh.sites[owner[interior]] - mesh.sites[nbr[interior]]).T)
    d[~interior] = np.hypot(*(proj_site[~interior] - y[~interior]).T)
    d[iface] = np.hypot(*(proj_site[iface] - y[iface]).T)
    if (d <= 0).any():
        raise MeshError("degenerate facet geometry: d_gamma = 0")

    # boundary conditions + inflow flag
    bc = np.full(mesh.n_facets, BC_NONE, dtype=np.int8)
    inflow = np.zeros(mesh.n_facets, dtype=bool)
    bidx = np.nonzero(~interior)[0]
    if len(bidx):
        dtags = set(bcs.dirichlet)
        ntags = set(bcs.neumann_tags)
        for fi in bidx:
            tag = mesh.boundary_tags.get(int(fi))
            if tag is None:
                raise MeshError(f"boundary facet {fi} has no tag")
            if tag in dtags:
                bc[fi] = BC_DIRICHLET
            elif tag in ntags:
                bc[fi] = BC_NEUMANN
            else:
                raise MeshError(f"boundary tag {tag!r} is neither Dirichlet nor Neumann")
        mid = mesh.facet_midpoint[bidx]
        beta = np.asarray(bcs.velocity(mid[:, 0], mid[:, 1]))
        bn = (beta * normal[bidx]).sum(axis=1)
        inflow[bidx] = bn < -1e-14
        if np.any(inflow[bidx] & (bc[bidx] == BC_NEUMANN)):
            warnings.warn("inflow detected on a Neumann facet; the model assumes "
                          "inflow boundaries are Dirichlet", stacklevel=2)

    # shape regularity is an assumption, not an input: warn only
    fvlike = np.isin(kind, (FacetKind.FV_INTERIOR, FacetKind.FV_BOUNDARY, FacetKind.INTERFACE))
    ref = diam[owner].copy()
    ref[interior] = np.maximum(diam[owner[interior]], diam[nbr[interior]])
    ref[iface] = diam[nbr[iface]]          # FV-side diameter for interface facets
    slack = d[fvlike] - theta * ref[fvlike]
    if (slack < 0).any():
        warnings.warn(f"{int((slack < 0).sum())} facet(s) violate the "
                      f"d_gamma >= theta*h shape-regularity bound (theta={theta})",
                      stacklevel=2)

    f_cells = np.column_stack([owner, nbr])
    return replace(mesh, facet_vertices=f_verts, facet_cells=f_cells,
                   facet_normal=normal,
                   facet_kind=kind, facet_d=d, facet_h=h, facet_y=y,
                   facet_bc=bc, facet_inflow=inflow, _cache=dict(mesh._cache))


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    worst_orthogonality_defect: float
    offending_facets: tuple


def check_tpfa_admissible(mesh, tol=1e-8):
    """Verify the two-point-flux admissibility of a mesh.

    Interior facets: the site segment must be orthogonal to the facet.
    Boundary facets: the owner site must not lie on the facet (so the
    projection point exists at positive distance).
    """
    owner = mesh.facet_cells[:, 0]
    nbr = mesh.facet_cells[:, 1]
    interior = nbr >= 0
    va = mesh.vertices[mesh.facet_vertices[:, 0]]
    vb = mesh.vertices[mesh.facet_vertices[:, 1]]
    tang = (vb - va) / mesh.facet_measure[:, None]

    offending = []
    worst = 0.0
    ii = np.nonzero(interior)[0]
    if len(ii):
        seg = mesh.sites[nbr[ii]] - mesh.sites[owner[ii]]
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        degenerate = seglen <= 0
        cosang = np.zeros(len(ii))
        np.divide((seg * tang[ii]).sum(axis=1), seglen, out=cosang, where=~degenerate)
        defect = np.arcsin(np.clip(np.abs(cosang), 0.0, 1.0))
        defect[degenerate] = np.pi / 2
        worst = float(defect.max())
        offending.extend(int(f) for f in ii[defect > tol])

    scale = mesh.domain.diameter
    for fi in np.nonzero(~interior)[0]:
        dist = _segment_distance(mesh.sites[owner[fi]][None, :], va[fi], vb[fi])[0]
        if dist <= 1e-12 * scale:
            offending.append(int(fi))

    offending = tuple(sorted(set(offending)))
    return AdmissibilityReport(ok=(worst <= tol and not offending),
                               worst_orthogonality_defect=worst,
                               offending_facets=offending)


# ---------------------------------------------------------------------------
# neighborhoods and refinement


def vertex_neighborhood(mesh, cells):
    """Cells plus every cell sharing at least one vertex with them."""
    cells = np.asarray(list(cells) if not isinstance(cells, np.ndarray) else cells,
                       dtype=int)
    if cells.size == 0:
        return np.array([], dtype=int)
    offsets, data = mesh.vertex_to_cells()
    verts = np.unique(np.concatenate([mesh.cells[c] for c in cells]))
    out = [cells]
    for v in verts:
        out.append(data[offsets[v]:offsets[v + 1]])
    return np.unique(np.concatenate(out))


def refine_sites(mesh, marked, seed, count_per_cell=1):
    """Existing sites plus new ones sampled around marked cells' centroids.

    For each marked cell, `count_per_cell` points are drawn uniformly in
    the disk of radius 0.25*h_E about the centroid, rejected until they
    land inside the cell.  Deterministic for a fixed seed.
    """
    marked = np.asarray(sorted(set(int(c) for c in marked)), dtype=int)
    if marked.size == 0:
        return mesh.sites.copy()
    if count_per_cell < 1:
        raise ValueError("count_per_cell must be >= 1")
    rng = np.random.default_rng(seed)
    new_pts = []
    for c in marked:
        center = mesh.cell_centroids[c]
        radius = 0.25 * mesh.cell_diameters[c]
        poly = mesh.cell_coords(c)
        got = 0
        attempts = 0
        while got < count_per_cell:
            r = radius * np.sqrt(rng.random())
            th = 2.0 * np.pi * rng.random()
            p = center + r * np.array([np.cos(th), np.sin(th)])
            attempts += 1
            if points_in_polygon(p[None, :], poly)[0]:
                new_pts.append(p)
                got += 1
            elif attempts > 200 * count_per_cell:
                # pathological cell: fall back to a point between site and centroid
                new_pts.append(0.5 * (mesh.sites[c] + center))
                got += 1
    return np.vstack([mesh.sites, np.array(new_pts)])


def tag_boundary(mesh, tagger):
    """Return a mesh whose boundary facets are tagged via tagger(x, y)."""
    bidx = mesh.boundary_facets()
    mid = mesh.facet_midpoint[bidx]
    tags = tagger(mid[:, 0], mid[:, 1])
    return replace(mesh, boundary_tags={int(f): str(t) for f, t in zip(bidx, tags)},
                   _cache=dict(mesh._cache))


# ---------------------------------------------------------------------------
# mesh file format


def _point_list(arr):
    return "[" + ", ".join(f"[{x:.17g}, {y:.17g}]" for x, y in arr) + "]"


def save_mesh(mesh, path):
    """Write the mesh as a JSON document with 17-significant-digit decimals."""
    cells = "[" + ", ".join("[" + ", ".join(str(int(v)) for v in loop) + "]"
                            for loop in mesh.cells) + "]"
    tags = json.dumps({str(k): v for k, v in sorted(mesh.boundary_tags.items())})
    with open(path, "w") as fh:
        fh.write('{"vertices": %s, "cells": %s, "sites": %s, "boundary_tags": %s}\n'
                 % (_point_list(mesh.vertices), cells, _point_list(mesh.sites), tags))


def load_mesh(path, domain=None):
    """Read a mesh document; the domain is rebuilt from the boundary loops
    unless given explicitly."""
    with open(path) as fh:
        doc = json.load(fh)
    vertices = np.array(doc["vertices"], dtype=float)
    cells = [np.array(c, dtype=np.int64) for c in doc["cells"]]
    sites = np.array(doc["sites"], dtype=float)
    if domain is None:
        domain = _domain_from_cells(vertices, cells)
    mesh = build_mesh(vertices, cells, sites, domain)
    tags = {int(k): str(v) for k, v in doc.get("boundary_tags", {}).items()}
    return replace(mesh, boundary_tags=tags, _cache=dict(mesh._cache))


def _domain_from_cells(vertices, cells):
    """Recover the domain polygon as the union boundary of the cells."""
    edge_count = {}
    directed = {}
    for loop in cells:
        for k in range(len(loop)):
            a, b = int(loop[k]), int(loop[(k + 1) % len(loop)])
            key = (a, b) if a < b else (b, a)
            edge_count[key] = edge_count.get(key, 0) + 1
            if key not in directed:
                directed[key] = (a, b)
    succ = {}
    for key, n in edge_count.items():
        if n == 1:
            a, b = directed[key]
            succ[a] = b
    loops = []
    seen = set()
    for start in list(succ):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = succ[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = succ[cur]
        loops.append(np.array(loop, dtype=int))
    rings = [vertices[lp] for lp in loops]
    signed = [_polygon_area_centroid(r)[0] for r in rings]
    shell_i = int(np.argmax(np.abs(signed)))
    shell = rings[shell_i] if signed[shell_i] > 0 else rings[shell_i][::-1]
    holes = []
    for i, r in enumerate(rings):
        if i == shell_i:
            continue
        holes.append(r[::-1] if signed[i] < 0 else r)   # store holes CCW
    return Domain(shell, tuple(holes))
