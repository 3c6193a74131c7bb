"""Figure rendering for run reports (PNG files next to the CSV output)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import PolyCollection

__all__ = ["render_field", "render_partition", "render_profile"]


def _cell_polys(mesh):
    return [mesh.cell_coords(i) for i in range(mesh.n_cells)]


def _finish(fig, ax, mesh, path, title):
    lo, hi = mesh.domain.bbox
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_field(mesh, cell_values, path, title=None, cmap="viridis"):
    """Cell-average field map colored per polygon."""
    fig, ax = plt.subplots(figsize=(7, 5))
    coll = PolyCollection(_cell_polys(mesh), array=np.asarray(cell_values),
                          cmap=cmap, edgecolors="none")
    ax.add_collection(coll)
    fig.colorbar(coll, ax=ax, shrink=0.85)
    _finish(fig, ax, mesh, path, title)


def render_partition(mesh, partition, path, title=None):
    """FV (orange) / DG (blue) region map."""
    fig, ax = plt.subplots(figsize=(7, 5))
    colors = np.where(partition.is_dg, "#6baed6", "#fdae6b")
    coll = PolyCollection(_cell_polys(mesh), facecolors=colors,
                          edgecolors="none")
    ax.add_collection(coll)
    handles = [plt.Rectangle((0, 0), 1, 1, color="#6baed6"),
               plt.Rectangle((0, 0), 1, 1, color="#fdae6b")]
    ax.legend(handles, ["DG", "FV"], loc="upper right", framealpha=0.9)
    _finish(fig, ax, mesh, path, title)


def render_profile(profile, path, title=None, ylabel="u"):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(profile.params, profile.values, lw=1.2)
    ax.set_xlabel("arclength")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
