"""Serialisation of reports and fields, and the figures saved alongside them.

Reports are JSON with insertion-ordered fields and floats printed at 17
significant digits, so identical runs produce byte-identical files.  Fields
go to CSV with a header line naming the field and the grid hash.  Each
report path also renders a small set of matplotlib figures next to the
delimited output.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from csvortex.grid import DiskGrid, RadialGrid


# -- canonical JSON ------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return '"nan"'
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        return format(v, ".17g")
    if isinstance(value, complex):
        return _fmt({"re": value.real, "im": value.imag})
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, dict):
        inner = ",".join(f"{_fmt(str(k))}:{_fmt(v)}" for k, v in value.items())
        return "{" + inner + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def canonical_json(payload: dict) -> str:
    """Deterministic JSON: field order preserved, floats at 17 significant digits."""
    return _fmt(payload)


def write_report(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write(canonical_json(payload))
        f.write("\n")


# -- field and table CSV ----------------------------------------------------------


def write_field_csv(path: str, name: str, grid, values: np.ndarray) -> None:
    """Node dump with columns r, theta, value and a provenance header."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if isinstance(grid, RadialGrid):
        r = grid.r
        theta = np.zeros_like(r)
    else:
        r = grid.node_r
        theta = grid.node_theta
    with open(path, "w") as f:
        f.write(f"# field={name} grid=sha256:{grid.grid_hash}\n")
        f.write("r,theta,value\n")
        for ri, ti, vi in zip(r, theta, values):
            f.write(f"{ri:.17g},{ti:.17g},{vi:.17g}\n")


def write_table_csv(path: str, columns: list[str], rows: list[tuple]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(format(v, ".17g") if isinstance(v, float) else str(v) for v in row) + "\n")


# -- figures ------------------------------------------------------------------------


def save_radial_profiles(path: str, r: np.ndarray, curves: dict[str, np.ndarray],
                         xlabel: str = "r", ylabel: str = "", title: str = "",
                         logx: bool = False) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, vals in curves.items():
        ax.plot(r, vals, label=label, lw=1.2)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_convergence_plot(path: str, histories: dict[str, list[float]], title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for label, h in histories.items():
        ax.semilogy(range(1, len(h) + 1), h, marker="o", ms=3, lw=1.0, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("residual / difference norm")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_loglog_slopes(path: str, x: list[float], series: dict[str, list[float]],
                       xlabel: str = "eps", title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for label, vals in series.items():
        ax.loglog(x, vals, marker="s", ms=4, lw=1.0, label=label)
    ax.set_xlabel(xlabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_disk_heatmap(path: str, grid: DiskGrid, values: np.ndarray, title: str = "",
                      r_max: float | None = None) -> None:
    nt = grid.n_theta
    mat = values[: grid.n_r * nt].reshape(grid.n_r, nt)
    theta = np.concatenate([grid.theta, [2 * math.pi]])
    mat = np.hstack([mat, mat[:, :1]])
    rr, tt = np.meshgrid(grid.r_rings, theta, indexing="ij")
    fig, ax = plt.subplots(figsize=(5.2, 4.4), subplot_kw={"projection": "polar"})
    pc = ax.pcolormesh(tt, rr, mat, shading="auto", cmap="viridis")
    if r_max is not None:
        ax.set_rmax(r_max)
    ax.set_xticklabels([])
    fig.colorbar(pc, ax=ax, shrink=0.8)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
