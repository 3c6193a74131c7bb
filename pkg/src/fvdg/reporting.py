"""Artifact writers: legacy VTK fields, adaptive-report CSV, summary CSV."""

import csv
import os

import numpy as np

__all__ = ["write_vtk", "write_report_csv", "write_profile_csv",
           "write_summary_row", "summary_row", "read_summary", "SUMMARY_COLUMNS"]

SUMMARY_COLUMNS = ["problem", "scheme", "n_cells", "osc", "iters", "delta",
                   "fv_fraction", "dg_fraction"]


def _sci(x):
    # 6 significant digits, "." decimal separator
    return f"{float(x):.5e}"


def write_vtk(u, partition, path, interval=None):
    """Legacy ASCII unstructured-grid file with polygon cells.

    Cell data: u_avg (cell averages), region (0 = FV, 1 = DG), violation
    (distance of the average to the admissible interval; zero when no
    interval is given).  Point data: one-sided vertex values of u taken
    from the lowest-index incident cell.
    """
    mesh = u.mesh
    averages = u.cell_averages()
    if interval is not None:
        violation = interval.dist(averages)
    else:
        violation = np.zeros(mesh.n_cells)

    # one-sided vertex values: lowest incident cell wins
    offsets, data = mesh.vertex_to_cells()
    first_cell = np.array([data[offsets[v]:offsets[v + 1]].min()
                           for v in range(mesh.n_vertices)])
    pvals = u.eval_cells(first_cell, mesh.vertices)

    lines = ["# vtk DataFile Version 2.0",
             "fvdg solution field",
             "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g} 0")
    size = sum(len(c) + 1 for c in mesh.cells)
    lines.append(f"CELLS {mesh.n_cells} {size}")
    for loop in mesh.cells:
        lines.append(" ".join([str(len(loop))] + [str(int(v)) for v in loop]))
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend(["7"] * mesh.n_cells)          # VTK_POLYGON
    lines.append(f"CELL_DATA {mesh.n_cells}")
    lines.append("SCALARS u_avg double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{v:.17g}" for v in averages)
    lines.append("SCALARS region int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend("1" if d else "0" for d in partition.is_dg)
    lines.append("SCALARS violation double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{v:.17g}" for v in violation)
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    lines.append("SCALARS u double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{v:.17g}" for v in pvals)
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def write_report_csv(report, path):
    """Per-iteration adaptive record: iter, eta_bp, n_violations, fractions."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "eta_bp", "n_violations", "fv_fraction", "dg_fraction"])
        for rec in report.records:
            w.writerow([rec.iteration, _sci(rec.eta_bp), rec.n_violations,
                        _sci(rec.fv_fraction), _sci(rec.dg_fraction)])


def write_profile_csv(profile, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "x", "y", "u", "cell"])
        for s, (x, y), v, c in zip(profile.params, profile.points,
                                   profile.values, profile.cells):
            w.writerow([_sci(s), f"{x:.17g}", f"{y:.17g}", _sci(v), int(c)])


def summary_row(problem, scheme, n_cells, osc, report=None, delta=None):
    """One Table-style summary record; adaptive-only fields render as '--'."""
    if scheme == "coupled-adaptive":
        if report is None or not report.records:
            raise ValueError("adaptive summary row needs a non-empty report")
        iters = str(report.bp_iterations)
        dstr = _sci(delta)
        fv, dg = report.final_fractions
    else:
        iters = "--"
        dstr = "--"
        fv, dg = (1.0, 0.0) if scheme == "fv" else (0.0, 1.0)
    return {"problem": problem, "scheme": scheme, "n_cells": str(int(n_cells)),
            "osc": _sci(osc), "iters": iters, "delta": dstr,
            "fv_fraction": _sci(fv), "dg_fraction": _sci(dg)}


def write_summary_row(row, path):
    """Append a summary row, creating the header on first write."""
    missing = [k for k in SUMMARY_COLUMNS if k not in row]
    if missing:
        raise ValueError(f"summary row lacks fields {missing}")
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        if fresh:
            w.writeheader()
        w.writerow({k: row[k] for k in SUMMARY_COLUMNS})


def read_summary(path):
    if not os.path.exists(path):
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
