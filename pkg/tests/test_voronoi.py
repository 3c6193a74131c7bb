import numpy as np
import pytest

from fvdg.geometry import Domain, MeshGenerationError, check_tpfa_admissible
from fvdg.voronoi import generate_voronoi_mesh, lloyd_relax

from _reference import halfplane_voronoi_cells, match_vertex_sets, polygon_vertex_set
from conftest import random_voronoi


def test_four_symmetric_sites_quarter_cells():
    dom = Domain.rectangle(-0.5, -0.5, 0.5, 0.5)
    sites = np.array([[-0.25, -0.25], [0.25, -0.25], [-0.25, 0.25], [0.25, 0.25]])
    m = generate_voronoi_mesh(sites, dom)
    assert m.n_cells == 4
    assert np.allclose(m.cell_areas, 0.25, atol=1e-14)
    # every interior facet orthogonal to its site segment
    rep = check_tpfa_admissible(m, tol=1e-12)
    assert rep.ok
    # quarter corners present
    for i in range(4):
        verts = m.cell_coords(i)
        assert match_vertex_sets(
            verts, np.array([[0, 0], [np.sign(m.sites[i, 0]) * 0.5, 0],
                             [0, np.sign(m.sites[i, 1]) * 0.5],
                             m.sites[i] * 2]), tol=1e-12)


def test_single_site_cell_is_domain():
    dom = Domain.rectangle(0, 0, 1, 1)
    m = generate_voronoi_mesh(np.array([[0.4, 0.6]]), dom)
    assert m.n_cells == 1
    assert np.isclose(m.cell_areas[0], 1.0)
    assert match_vertex_sets(m.cell_coords(0), dom.shell, tol=1e-12)


def test_random_sites_match_halfplane_oracle():
    dom = Domain.rectangle(0, 0, 1, 1)
    rng = np.random.default_rng(17)
    sites = 0.02 + 0.96 * rng.random((50, 2))
    m = generate_voronoi_mesh(sites, dom)
    assert abs(m.cell_areas.sum() - 1.0) <= 1e-12
    assert check_tpfa_admissible(m, tol=1e-10).ok
    oracle = halfplane_voronoi_cells(sites, dom)
    for i in range(50):
        assert np.isclose(m.cell_areas[i], oracle[i].area, rtol=1e-9)
        assert match_vertex_sets(m.cell_coords(i), polygon_vertex_set(oracle[i]),
                                 tol=1e-7)


def test_lshape_oracle_and_area():
    dom = Domain.l_shape()
    rng = np.random.default_rng(5)
    raw = rng.random((60, 2)) * 4
    keep = dom.contains(raw) & (dom.boundary_distance(raw) > 1e-6)
    sites = raw[keep][:25]
    m = generate_voronoi_mesh(sites, dom)
    assert np.isclose(m.cell_areas.sum(), 12.0, atol=1e-10)
    oracle = halfplane_voronoi_cells(sites, dom)
    for i in range(len(sites)):
        assert np.isclose(m.cell_areas[i], oracle[i].area, rtol=1e-9)


def test_errors_duplicate_outside_collinear():
    dom = Domain.rectangle(0, 0, 1, 1)
    with pytest.raises(MeshGenerationError):
        generate_voronoi_mesh(np.array([[0.5, 0.5], [0.5, 0.5]]), dom)
    with pytest.raises(MeshGenerationError):
        generate_voronoi_mesh(np.array([[0.5, 0.5], [1.5, 0.5]]), dom)
    with pytest.raises(MeshGenerationError):
        generate_voronoi_mesh(np.array([[0.2, 0.2], [0.5, 0.5], [0.8, 0.8]]), dom)


def test_cell_enclosing_hole_is_rejected():
    dom = Domain.rectangle_with_circular_hole(-3, -3, 9, 3, segments=32)
    # the lower site's half-plane cell wraps around the puncture
    sites = np.array([[0.0, 1.05], [0.0, 2.9]])
    with pytest.raises(MeshGenerationError):
        generate_voronoi_mesh(sites, dom)


def test_hemker_domain_mesh():
    dom = Domain.rectangle_with_circular_hole(-3, -3, 9, 3, segments=64)
    m = random_voronoi(250, seed=3, domain=dom, lloyd=1)
    assert np.isclose(m.cell_areas.sum(), dom.area, rtol=1e-10)
    assert check_tpfa_admissible(m, tol=1e-8).ok


def test_lloyd_zero_iterations_identity(unit_voronoi_50):
    m = lloyd_relax(unit_voronoi_50, 0)
    assert m is unit_voronoi_50


def test_lloyd_centroidal_fixed_point():
    dom = Domain.rectangle(-0.5, -0.5, 0.5, 0.5)
    sites = np.array([[-0.25, -0.25], [0.25, -0.25], [-0.25, 0.25], [0.25, 0.25]])
    m = lloyd_relax(generate_voronoi_mesh(sites, dom), 5)
    assert np.allclose(np.sort(m.sites, axis=0), np.sort(sites, axis=0), atol=1e-12)


def _min_cell_angle(mesh):
    worst = np.pi
    for i in range(mesh.n_cells):
        p = mesh.cell_coords(i)
        a = p - np.roll(p, 1, axis=0)
        b = np.roll(p, -1, axis=0) - p
        na = a / np.hypot(*a.T)[:, None]
        nb = b / np.hypot(*b.T)[:, None]
        ang = np.pi - np.arccos(np.clip((na * nb).sum(1), -1, 1))
        worst = min(worst, ang.min())
    return worst


def test_lloyd_improves_min_angle():
    dom = Domain.rectangle(0, 0, 1, 1)
    rng = np.random.default_rng(23)
    sites = 0.02 + 0.96 * rng.random((50, 2))
    m0 = generate_voronoi_mesh(sites, dom)
    m20 = lloyd_relax(m0, 20)
    assert _min_cell_angle(m20) >= _min_cell_angle(m0) - 1e-12
