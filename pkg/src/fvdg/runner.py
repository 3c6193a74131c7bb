"""Batch pipeline shared by the CLI subcommands: mesh building, scheme
dispatch, artifact writing."""

import json
import logging
import os
from dataclasses import dataclass, asdict

import numpy as np

from .adapt import AdaptiveConfig, AdmissibleInterval, run_adaptive
from .assembly import DGParams, assemble_system
from .figures import render_field, render_partition, render_profile
from .geometry import Partition, tag_boundary
from .linalg import solve_direct, solve_iterative
from .metrics import line_profile, osc_metric
from .problem import BENCHMARKS, make_benchmark, load_problem
from .reporting import (summary_row, write_profile_csv, write_report_csv,
                        write_summary_row, write_vtk, read_summary)
from .solution import DiscreteSolution
from .geometry import MeshGenerationError
from .voronoi import generate_voronoi_mesh, lloyd_relax

__all__ = ["RunConfig", "ConfigError", "sample_sites", "build_problem_mesh",
           "run_solve", "run_bench", "run_convergence", "PROFILE_LINES"]

log = logging.getLogger(__name__)

SCHEMES = ("fv", "dg", "coupled-adaptive")

# problem-specific report cross-sections
PROFILE_LINES = {
    "triple_layer": ((1.0, 0.0), (1.0, 1.0)),
    "hemker": ((2.0, -3.0), (2.0, 3.0)),
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str = "triple_layer"
    cells: int = 2000
    degree: int = 1
    epsilon: int = -1
    sigma: float = 14.0
    sigma_boundary: float = None
    delta: float = 1e-9
    eps_bp: float = None
    eps_h: float = None                  # None = "off"
    variant: str = "cell_average"
    scheme: str = "coupled-adaptive"
    seed: int = 0
    lloyd: int = 3
    out: str = None
    figures: bool = True
    solver: str = "direct"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.cells < 1:
            raise ConfigError("cells must be >= 1")
        if self.seed is None:
            raise ConfigError("seed is mandatory for reproducibility")
        if self.out is None:
            root = os.environ.get("FVDG_OUT", ".")
            self.out = os.path.join(root, f"{self.problem}_{self.scheme}_{self.cells}")

    def dg_params(self):
        try:
            return DGParams(degree=self.degree, epsilon=self.epsilon,
                            sigma=self.sigma, sigma_boundary=self.sigma_boundary)
        except Exception as exc:
            raise ConfigError(str(exc)) from None

    def adaptive_config(self):
        try:
            return AdaptiveConfig(delta=self.delta, eps_bp=self.eps_bp,
                                  eps_h=self.eps_h, variant=self.variant,
                                  seed=self.seed, solver=self.solver)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def resolve_problem(name_or_path):
    if name_or_path in BENCHMARKS:
        return make_benchmark(name_or_path)
    if os.path.exists(name_or_path):
        return load_problem(name_or_path)
    raise ConfigError(f"unknown problem {name_or_path!r} "
                      f"(not a benchmark name or a readable file)")


def sample_sites(domain, n, seed):
    """n uniform random sites strictly inside the domain (seeded rejection)."""
    rng = np.random.default_rng(seed)
    lo, hi = domain.bbox
    out = np.empty((0, 2))
    guard = 0
    while len(out) < n:
        m = max(2 * (n - len(out)), 64)
        cand = lo + rng.random((m, 2)) * (hi - lo)
        keep = domain.contains(cand)
        keep &= domain.boundary_distance(cand) > 1e-9 * domain.diameter
        out = np.vstack([out, cand[keep]])
        guard += 1
        if guard > 1000:
            raise ConfigError("site sampling failed; degenerate domain?")
    return out[:n]


def build_problem_mesh(spec, n_cells, seed, lloyd_iters=3, max_attempts=5):
    """Seeded sites + Lloyd passes, tagged for the problem's boundary map.

    Rarely, a raw random site configuration on a non-convex domain makes
    some clipped Voronoi cell disconnected; the generator rejects it, and
    we deterministically resample with a bumped seed.
    """
    mesh = None
    for attempt in range(max_attempts):
        sites = sample_sites(spec.domain, n_cells, seed + 1013 * attempt)
        try:
            mesh = generate_voronoi_mesh(sites, spec.domain)
            break
        except MeshGenerationError as exc:
            log.warning("site configuration rejected (%s); resampling", exc)
    if mesh is None:
        raise ConfigError(f"mesh generation failed after {max_attempts} attempts")
    if lloyd_iters:
        mesh = lloyd_relax(mesh, lloyd_iters)
    return tag_boundary(mesh, spec.boundary_tagger)


def _solve_fixed(mesh, partition, spec, params, solver):
    system = assemble_system(mesh, partition, spec, params)
    x = solve_iterative(system) if solver == "iterative" else solve_direct(system)
    return DiscreteSolution(mesh, partition, params, x)


def run_scheme(mesh, spec, config):
    """Dispatch one scheme; returns (solution, partition, report_or_None)."""
    params = config.dg_params()
    if config.scheme == "fv":
        part = Partition.all_fv(mesh.n_cells)
        return _solve_fixed(mesh, part, spec, params, config.solver), part, None
    if config.scheme == "dg":
        part = Partition.all_dg(mesh.n_cells)
        return _solve_fixed(mesh, part, spec, params, config.solver), part, None
    u, part, report = run_adaptive(mesh, spec, params, config.adaptive_config())
    return u, part, report


def run_solve(config):
    """Full solve pipeline; writes artifacts, returns a result summary dict."""
    spec = resolve_problem(config.problem)
    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, "config.json"), "w") as fh:
        json.dump(asdict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")

    mesh = build_problem_mesh(spec, config.cells, config.seed, config.lloyd)
    u, partition, report = run_scheme(mesh, spec, config)
    osc = osc_metric(u, spec.bounds)

    interval = AdmissibleInterval.from_bounds(spec.bounds, config.delta)
    write_vtk(u, partition, os.path.join(config.out, "solution.vtk"), interval)
    if report is not None:
        write_report_csv(report, os.path.join(config.out, "report.csv"))
        if report.terminated_by == "cap":
            log.warning("adaptive loop hit the iteration cap; results written anyway")

    profile = None
    if spec.name in PROFILE_LINES:
        p0, p1 = PROFILE_LINES[spec.name]
        profile = line_profile(u, (p0, p1), 400)
        write_profile_csv(profile, os.path.join(config.out, "profile.csv"))

    row = summary_row(spec.name, config.scheme, u.mesh.n_cells, osc.osc,
                      report=report, delta=config.delta)
    write_summary_row(row, os.path.join(config.out, "summary.csv"))

    if config.figures:
        render_field(u.mesh, u.cell_averages(),
                     os.path.join(config.out, "field.png"),
                     title=f"{spec.name} ({config.scheme})")
        render_partition(u.mesh, partition,
                         os.path.join(config.out, "partition.png"),
                         title=f"{spec.name} FV/DG regions")
        if profile is not None:
            render_profile(profile, os.path.join(config.out, "profile.png"),
                           title=f"{spec.name} profile")
    return {"row": row, "osc": osc.osc, "n_cells": u.mesh.n_cells,
            "report": report, "out": config.out}


def run_bench(suite, sizes, deltas, out, seed=0, degree=1, lloyd=3, figures=False):
    """Cartesian sweep writing one summary row per (problem, size, scheme, delta).

    Resumable: rows whose (problem, scheme, n_cells, delta) key already
    exists in the summary file are skipped; per-run failures are recorded
    in the osc column and the sweep continues.
    """
    problems = [p for p in BENCHMARKS if p != "manufactured"] if suite == "all" else [suite]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "summary.csv")
    done = {(r["problem"], r["scheme"], r["n_cells"], r["delta"])
            for r in read_summary(path)}
    for problem in problems:
        for size in sizes:
            for scheme, delta in ([("fv", None), ("dg", None)]
                                  + [("coupled-adaptive", d) for d in deltas]):
                dstr = "--" if delta is None else f"{float(delta):.5e}"
                key = (problem, scheme, str(int(size)), dstr)
                if key in done:
                    log.info("skip completed %s", key)
                    continue
                cfg = RunConfig(problem=problem, cells=size, scheme=scheme,
                                degree=degree, delta=delta if delta else 1e-9,
                                seed=seed, lloyd=lloyd, figures=figures,
                                out=os.path.join(out, f"{problem}_{scheme}_{size}"
                                                      + (f"_{delta:g}" if delta else "")))
                try:
                    res = run_solve(cfg)
                    row = dict(res["row"])
                    row["delta"] = dstr if delta is None else row["delta"]
                except Exception as exc:   # record and continue
                    log.error("run %s failed: %s", key, exc)
                    row = {"problem": problem, "scheme": scheme,
                           "n_cells": str(int(size)), "osc": f"failed: {exc}",
                           "iters": "--", "delta": dstr,
                           "fv_fraction": "--", "dg_fraction": "--"}
                write_summary_row(row, path)
                done.add(key)
    return path


def run_convergence(levels, schemes=("fv", "dg"), degree=1, seed=0, base_cells=1000,
                    lloyd=3, out=None, solver="direct", spec=None):
    """Manufactured-solution study on a hierarchy of Voronoi meshes.

    Reports the L2 norm of the cell-average error per level and the
    observed order between consecutive levels (h ratio = sqrt of the
    cell-count ratio).  `spec` may substitute any problem carrying an
    exact solution.
    """
    if levels < 2:
        raise ConfigError("need at least 2 levels")
    if spec is None:
        spec = make_benchmark("manufactured")
    if spec.exact is None:
        raise ConfigError("convergence study needs a problem with an exact solution")
    params = DGParams(degree=degree)
    sizes = [base_cells * 4 ** i for i in range(levels)]
    results = {s: [] for s in schemes}
    for lvl, n in enumerate(sizes):
        mesh = build_problem_mesh(spec, n, seed + lvl, lloyd)
        exact_avg = _exact_cell_averages(mesh, spec.exact)
        for scheme in schemes:
            part = Partition.all_fv(mesh.n_cells) if scheme == "fv" \
                else Partition.all_dg(mesh.n_cells)
            u = _solve_fixed(mesh, part, spec, params, solver)
            err = u.cell_averages() - exact_avg
            l2 = float(np.sqrt((mesh.cell_areas * err ** 2).sum()))
            results[scheme].append((mesh.n_cells, l2))
    table = []
    for scheme in schemes:
        rows = results[scheme]
        for i, (n, e) in enumerate(rows):
            if i == 0:
                order = ""
            else:
                n0, e0 = rows[i - 1]
                order = f"{2.0 * np.log(e0 / e) / np.log(n / n0):.3f}"
            table.append({"scheme": scheme, "n_cells": n, "l2_error": e, "order": order})
    if out:
        os.makedirs(out, exist_ok=True)
        import csv
        with open(os.path.join(out, "convergence.csv"), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["scheme", "n_cells", "l2_error", "order"])
            w.writeheader()
            for row in table:
                w.writerow(row)
    return table


def _exact_cell_averages(mesh, exact):
    out = np.empty(mesh.n_cells)
    for ids, pts, w in mesh.cell_quadrature(8):
        vals = exact(pts[..., 0], pts[..., 1])
        out[ids] = (w * vals).sum(axis=1) / mesh.cell_areas[ids]
    return out
