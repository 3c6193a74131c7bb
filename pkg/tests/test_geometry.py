import json

import numpy as np
import pytest

from fvdg.geometry import (BC_DIRICHLET, BC_NEUMANN, Domain, FacetKind, Mesh,
                           MeshConformityError, MeshError, Partition,
                           build_mesh, check_tpfa_admissible, classify_facets,
                           load_mesh, refine_sites, save_mesh,
                           structured_quad_mesh, tag_boundary,
                           vertex_neighborhood)

from conftest import rectangle_spec, tagged_structured, random_voronoi


# ---------------------------------------------------------------------------
# construction


def test_structured_mesh_counts_and_geometry():
    m = structured_quad_mesh(3, 2, 0, 0, 3, 2)
    assert m.n_cells == 6
    assert m.n_vertices == 12
    # 3*2 cells: interior facets 2*2 + 3*1 = 7, boundary 2*(3+2) = 10
    assert m.n_facets == 17
    assert np.allclose(m.cell_areas, 1.0)
    assert np.allclose(m.cell_diameters, np.sqrt(2.0))
    rep = check_tpfa_admissible(m)
    assert rep.ok
    assert rep.worst_orthogonality_defect <= 1e-12


def test_boundary_normals_point_outward():
    m = structured_quad_mesh(2, 2)
    for f in m.boundary_facets():
        owner = m.facet_cells[f, 0]
        out = m.facet_midpoint[f] - m.cell_centroids[owner]
        assert m.facet_normal[f] @ out > 0


def test_interior_normal_owner_to_neighbor():
    m = structured_quad_mesh(2, 1)
    f = m.interior_facets()[0]
    o, n = m.facet_cells[f]
    d = m.cell_centroids[n] - m.cell_centroids[o]
    assert m.facet_normal[f] @ d > 0


def test_build_mesh_rejects_bad_cells():
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    dom = Domain.rectangle(0, 0, 1, 1)
    with pytest.raises(MeshError):
        build_mesh(verts, [np.array([0, 1, 1, 2])], np.array([[0.5, 0.5]]), dom)
    with pytest.raises(MeshError):  # site outside its cell
        build_mesh(verts, [np.array([0, 1, 2, 3])], np.array([[1.5, 0.5]]), dom)


def test_build_mesh_rejects_nonconforming():
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1]], dtype=float)
    # duplicated cell: every edge traversed twice in the same direction
    cells = [np.array([0, 1, 2, 3]), np.array([0, 1, 2, 3])]
    sites = np.array([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(MeshConformityError):
        build_mesh(verts, cells, sites, Domain.rectangle(0, 0, 1, 1))
    # gap in the tiling: facet (1,2) is unmatched but interior to the domain
    cells = [np.array([0, 1, 2, 3])]
    sites = np.array([[0.5, 0.5]])
    with pytest.raises(MeshError):
        build_mesh(verts, cells, sites, Domain.rectangle(0, 0, 2, 1))


def test_cw_cell_loops_normalized():
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    m = build_mesh(verts, [np.array([0, 3, 2, 1])], np.array([[0.5, 0.5]]),
                   Domain.rectangle(0, 0, 1, 1))
    assert m.cell_areas[0] > 0


# ---------------------------------------------------------------------------
# classification


def _all_classified(nx, ny, partition, spec=None, **kw):
    spec = spec or rectangle_spec(**kw)
    mesh = tagged_structured(nx, ny, spec)
    return classify_facets(mesh, partition, spec), spec


def test_classify_all_fv():
    m, _ = _all_classified(3, 3, Partition.all_fv(9))
    kinds = set(FacetKind(int(k)) for k in m.facet_kind)
    assert kinds == {FacetKind.FV_INTERIOR, FacetKind.FV_BOUNDARY}


def test_classify_all_dg():
    m, _ = _all_classified(3, 3, Partition.all_dg(9))
    kinds = set(FacetKind(int(k)) for k in m.facet_kind)
    assert kinds == {FacetKind.DG_INTERIOR, FacetKind.DG_BOUNDARY}


def test_classify_plus_pattern_interface_count():
    # 6x6 grid, DG plus-shape: row j=2 for i=1..4 and column i=2 for j=1..4;
    # hand count of DG/FV edges gives 16
    dg = {(1, 2), (2, 2), (3, 2), (4, 2), (2, 1), (2, 3), (2, 4)}
    is_dg = np.zeros(36, dtype=bool)
    for (i, j) in dg:
        is_dg[j * 6 + i] = True
    m, _ = _all_classified(6, 6, Partition(is_dg))
    n_iface = int((m.facet_kind == FacetKind.INTERFACE).sum())
    assert n_iface == 16


def test_interface_normal_points_dg_to_fv():
    is_dg = np.zeros(9, dtype=bool)
    is_dg[4] = True
    m, _ = _all_classified(3, 3, Partition(is_dg))
    ifaces = np.nonzero(m.facet_kind == FacetKind.INTERFACE)[0]
    assert len(ifaces) == 4
    for f in ifaces:
        o, n = m.facet_cells[f]
        assert o == 4                      # owner is the DG cell
        d = m.cell_centroids[n] - m.cell_centroids[o]
        assert m.facet_normal[f] @ d > 0   # normal DG -> FV


def test_classify_idempotent_and_local():
    spec = rectangle_spec(beta=(1.0, 0.5))
    mesh = tagged_structured(4, 4, spec)
    rng = np.random.default_rng(0)
    part = Partition(rng.random(16) < 0.5)
    c1 = classify_facets(mesh, part, spec)
    c2 = classify_facets(c1, part, spec)
    assert np.array_equal(c1.facet_kind, c2.facet_kind)
    assert np.array_equal(c1.facet_cells, c2.facet_cells)
    assert np.allclose(c1.facet_normal, c2.facet_normal)
    # partition-locality: flipping one cell only changes its incident facets
    flipped = Partition(np.where(np.arange(16) == 5, ~part.is_dg, part.is_dg))
    c3 = classify_facets(mesh, flipped, spec)
    changed = np.nonzero(c1.facet_kind != c3.facet_kind)[0]
    for f in changed:
        assert 5 in c1.facet_cells[f]


def test_classify_inflow_flags():
    # beta = (1, 0): left boundary inflow, right outflow, top/bottom neutral
    spec = rectangle_spec(beta=(1.0, 0.0))
    mesh = tagged_structured(3, 3, spec)
    m = classify_facets(mesh, Partition.all_fv(9), spec)
    for f in m.boundary_facets():
        tag = m.boundary_tags[int(f)]
        if tag == "left":
            assert m.facet_inflow[f]
        else:
            assert not m.facet_inflow[f]


def test_classify_d_gamma_cases():
    spec = rectangle_spec(0, 0, 2, 1)
    mesh = tagged_structured(2, 1, spec, 0, 0, 2, 1)
    m = classify_facets(mesh, Partition.all_fv(2), spec)
    f_int = m.interior_facets()[0]
    assert np.isclose(m.facet_d[f_int], 1.0)        # site-to-site
    for f in m.boundary_facets():
        assert np.isclose(m.facet_d[f], 0.5)        # site-to-projection
        assert np.isclose(np.hypot(*(m.facet_y[f] - m.facet_midpoint[f])), 0.0)


def test_classify_bc_assignment_and_missing_tag():
    spec = rectangle_spec(neumann_sides=("top",))
    mesh = tagged_structured(2, 2, spec)
    m = classify_facets(mesh, Partition.all_fv(4), spec)
    tags = [m.boundary_tags[int(f)] for f in m.boundary_facets()]
    bcs = m.facet_bc[m.boundary_facets()]
    for t, b in zip(tags, bcs):
        assert b == (BC_NEUMANN if t == "top" else BC_DIRICHLET)
    bad = Mesh(**{**mesh.__dict__, "boundary_tags": {}})
    with pytest.raises(MeshError):
        classify_facets(bad, Partition.all_fv(4), spec)


# ---------------------------------------------------------------------------
# admissibility


def test_admissible_voronoi(unit_voronoi_50):
    rep = check_tpfa_admissible(unit_voronoi_50, tol=1e-10)
    assert rep.ok


def test_skewed_parallelograms_not_admissible():
    # two sheared unit cells; centroid segment is horizontal but the shared
    # edge is tilted: defect = arcsin(0.5/sqrt(1.25)) ~ 0.4636 rad
    verts = np.array([[0, 0], [1, 0], [2, 0], [2.5, 1], [1.5, 1], [0.5, 1]],
                     dtype=float)
    cells = [np.array([0, 1, 4, 5]), np.array([1, 2, 3, 4])]
    sites = np.array([[0.75, 0.5], [1.75, 0.5]])
    dom = Domain(np.array([[0, 0], [2, 0], [2.5, 1], [0.5, 1]], dtype=float))
    mesh = build_mesh(verts, cells, sites, dom)
    rep = check_tpfa_admissible(mesh, tol=1e-8)
    assert not rep.ok
    assert rep.offending_facets
    assert np.isclose(rep.worst_orthogonality_defect,
                      np.arcsin(0.5 / np.sqrt(1.25)), atol=1e-12)


# ---------------------------------------------------------------------------
# neighborhoods / refinement


def test_vertex_neighborhood_interior_and_corner():
    m = structured_quad_mesh(8, 8)
    center = 8 * 4 + 4
    nb = vertex_neighborhood(m, [center])
    assert len(nb) == 9
    assert center in nb
    corner = vertex_neighborhood(m, [0])
    assert sorted(corner) == [0, 1, 8, 9]
    assert len(vertex_neighborhood(m, [])) == 0


def test_vertex_neighborhood_monotone_extensive():
    m = random_voronoi(40, seed=3)
    rng = np.random.default_rng(1)
    a = rng.choice(40, size=4, replace=False)
    b = np.union1d(a, rng.choice(40, size=4, replace=False))
    na, nb = vertex_neighborhood(m, a), vertex_neighborhood(m, b)
    assert set(a) <= set(na)
    assert set(na) <= set(nb)


def test_refine_sites_deterministic_and_in_cell():
    m = structured_quad_mesh(2, 2)
    out1 = refine_sites(m, [1], seed=42, count_per_cell=3)
    out2 = refine_sites(m, [1], seed=42, count_per_cell=3)
    assert np.array_equal(out1, out2)
    assert out1.shape == (7, 2)
    poly = m.cell_coords(1)
    from fvdg.geometry import points_in_polygon
    assert points_in_polygon(out1[4:], poly).all()
    # empty marked set: unchanged
    assert np.array_equal(refine_sites(m, [], seed=1), m.sites)
    # all marked with n=1 doubles the count
    assert len(refine_sites(m, range(4), seed=1, count_per_cell=1)) == 8


# ---------------------------------------------------------------------------
# mesh file round-trip


def test_mesh_save_load_roundtrip(tmp_path, unit_voronoi_50):
    spec = rectangle_spec()
    mesh = tag_boundary(unit_voronoi_50, spec.boundary_tagger)
    path = tmp_path / "mesh.json"
    save_mesh(mesh, path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"vertices", "cells", "sites", "boundary_tags"}
    again = load_mesh(path)
    assert again.n_cells == mesh.n_cells
    assert np.array_equal(again.vertices, mesh.vertices)
    assert np.array_equal(again.sites, mesh.sites)
    assert again.boundary_tags == mesh.boundary_tags
    assert np.isclose(again.domain.area, mesh.domain.area, rtol=1e-12)


def test_mesh_load_with_hole_domain(tmp_path):
    dom = Domain.rectangle_with_circular_hole(-3, -3, 9, 3, segments=32)
    m = random_voronoi(120, seed=9, domain=dom, lloyd=1)
    path = tmp_path / "hemker.json"
    save_mesh(m, path)
    again = load_mesh(path)
    assert again.n_cells == m.n_cells
    assert len(again.domain.holes) == 1
    assert np.isclose(again.domain.area, dom.area, rtol=1e-12)
