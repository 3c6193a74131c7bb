import numpy as np
import pytest

from fvdg.geometry import Domain, structured_quad_mesh, tag_boundary
from fvdg.problem import (ProblemSpec, constant_field, constant_vector_field,
                          _edge_tagger)
from fvdg.voronoi import generate_voronoi_mesh, lloyd_relax


def rectangle_spec(x0=0.0, y0=0.0, x1=1.0, y1=1.0, K=1.0, beta=(0.0, 0.0),
                   c=0.0, f=0.0, g=0.0, neumann_sides=(), bounds=(0.0, 1.0),
                   name="synthetic"):
    """All-purpose rectangle problem for unit tests: one g_D everywhere
    except the sides named Neumann."""
    domain = Domain.rectangle(x0, y0, x1, y1)
    tagger = _edge_tagger([
        ("bottom", (x0, y0), (x1, y0)),
        ("right", (x1, y0), (x1, y1)),
        ("top", (x0, y1), (x1, y1)),
        ("left", (x0, y0), (x0, y1)),
    ], tol=1e-9 * max(1.0, domain.diameter))
    gfn = g if callable(g) else constant_field(g)
    dirichlet = {s: gfn for s in ("bottom", "right", "top", "left")
                 if s not in neumann_sides}
    return ProblemSpec(
        name=name, domain=domain,
        diffusion=K if callable(K) else constant_field(K),
        velocity=beta if callable(beta) else constant_vector_field(*beta),
        reaction=c if callable(c) else constant_field(c),
        source=f if callable(f) else constant_field(f),
        dirichlet=dirichlet, neumann_tags=frozenset(neumann_sides),
        bounds=bounds, boundary_tagger=tagger)


def tagged_structured(nx, ny, spec, x0=0.0, y0=0.0, x1=1.0, y1=1.0):
    mesh = structured_quad_mesh(nx, ny, x0, y0, x1, y1)
    return tag_boundary(mesh, spec.boundary_tagger)


def random_voronoi(n, seed, domain=None, lloyd=1, max_attempts=5):
    from fvdg.geometry import MeshGenerationError
    domain = domain or Domain.rectangle(0.0, 0.0, 1.0, 1.0)
    lo, hi = domain.bbox
    mesh = None
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed + 1013 * attempt)
        pts = np.empty((0, 2))
        while len(pts) < n:
            cand = lo + rng.random((2 * n + 32, 2)) * (hi - lo)
            keep = domain.contains(cand)
            keep &= domain.boundary_distance(cand) > 1e-9 * domain.diameter
            pts = np.vstack([pts, cand[keep]])
        try:
            mesh = generate_voronoi_mesh(pts[:n], domain)
            break
        except MeshGenerationError:
            continue
    if mesh is None:
        raise RuntimeError(f"mesh generation failed after {max_attempts} attempts")
    if lloyd:
        mesh = lloyd_relax(mesh, lloyd)
    return mesh


@pytest.fixture(scope="session")
def unit_voronoi_50():
    return random_voronoi(50, seed=7)
