import numpy as np
import pytest

from fvdg.adapt import AdmissibleInterval
from fvdg.assembly import DGParams
from fvdg.geometry import Partition, structured_quad_mesh
from fvdg.reporting import (SUMMARY_COLUMNS, read_summary, summary_row,
                            write_summary_row, write_vtk)
from fvdg.solution import DiscreteSolution


def _parse_vtk(path):
    """Minimal legacy-VTK reader for round-trip checks."""
    tokens = open(path).read().split("\n")
    i = tokens.index("DATASET UNSTRUCTURED_GRID")
    npts = int(tokens[i + 1].split()[1])
    pts = np.array([[float(v) for v in tokens[i + 2 + k].split()]
                    for k in range(npts)])
    i = i + 2 + npts
    ncells = int(tokens[i].split()[1])
    cells = [[int(v) for v in tokens[i + 1 + k].split()[1:]] for k in range(ncells)]
    i = i + 1 + ncells
    assert tokens[i].startswith("CELL_TYPES")
    types = [int(tokens[i + 1 + k]) for k in range(ncells)]
    i = i + 1 + ncells
    arrays = {}
    section = ""
    while i < len(tokens):
        line = tokens[i]
        if line.startswith("SCALARS"):
            name = line.split()[1]
            count = ncells if section.startswith("CELL_DATA") else npts
            vals = [float(tokens[i + 2 + k]) for k in range(count)]
            arrays[name] = np.array(vals)
            i += 2 + count
        else:
            if line.startswith("CELL_DATA") or line.startswith("POINT_DATA"):
                section = line
            i += 1
    return pts, cells, types, arrays


def test_vtk_roundtrip(tmp_path):
    mesh = structured_quad_mesh(2, 1, 0, 0, 2, 1)
    part = Partition(np.array([False, True]))
    basis = mesh.dg_basis(1)
    coeffs = np.concatenate([[0.123456789012345678],
                             basis.from_monomial(np.array([1]),
                                                 np.array([[0.5, 0.25, -0.125]]))[0]])
    u = DiscreteSolution(mesh, part, DGParams(), coeffs)
    path = tmp_path / "out.vtk"
    write_vtk(u, part, path, AdmissibleInterval(0.0, 1.0, 0.1, 0.1))
    pts, cells, types, arrays = _parse_vtk(path)
    assert len(pts) == mesh.n_vertices
    assert len(cells) == 2
    assert all(t == 7 for t in types)
    assert np.array_equal(pts[:, :2], mesh.vertices)
    assert np.array_equal(arrays["u_avg"], u.cell_averages())
    assert np.array_equal(arrays["region"], [0.0, 1.0])
    assert np.array_equal(arrays["violation"], [0.0, 0.0])
    # point data: one-sided values from the lowest incident cell
    shared = [v for v in range(mesh.n_vertices)
              if (np.isclose(mesh.vertices[v, 0], 1.0))]
    for v in shared:
        assert arrays["u"][v] == u.coefficients[0]


def test_vtk_all_fv_region_zero(tmp_path):
    mesh = structured_quad_mesh(2, 2)
    part = Partition.all_fv(4)
    u = DiscreteSolution(mesh, part, DGParams(), np.arange(4.0))
    path = tmp_path / "fv.vtk"
    write_vtk(u, part, path)
    _, _, _, arrays = _parse_vtk(path)
    assert np.array_equal(arrays["region"], np.zeros(4))


def test_summary_rows(tmp_path):
    path = tmp_path / "summary.csv"
    row = summary_row("triple_layer", "dg", 2000, 1.28e-1)
    assert row["iters"] == "--" and row["delta"] == "--"
    write_summary_row(row, path)
    write_summary_row(summary_row("triple_layer", "fv", 2000, 0.0), path)
    rows = read_summary(path)
    assert len(rows) == 2
    assert list(rows[0]) == SUMMARY_COLUMNS
    assert rows[0]["scheme"] == "dg"
    assert rows[1]["fv_fraction"] == f"{1.0:.5e}"


def test_summary_adaptive_needs_report():
    with pytest.raises(ValueError):
        summary_row("triple_layer", "coupled-adaptive", 2000, 1e-9,
                    report=None, delta=1e-9)
    from fvdg.adapt import AdaptiveReport
    with pytest.raises(ValueError):
        summary_row("triple_layer", "coupled-adaptive", 2000, 1e-9,
                    report=AdaptiveReport(), delta=1e-9)


def test_summary_missing_field_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_summary_row({"problem": "x"}, tmp_path / "s.csv")
