"""Figures written next to the CLI's delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DISPLAY_THRESHOLD_M = 0.1  # thinner flow is left blank on maps


def plot_bench(rows, path) -> Path:
    """Wall time and speedup against mesh count, one line per backend."""
    path = Path(path)
    fig, (ax_t, ax_s) = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
    labels = sorted({(r["backend"], r["lanes"]) for r in rows})
    for kind, lanes in labels:
        sel = sorted((r for r in rows if (r["backend"], r["lanes"]) == (kind, lanes)), key=lambda r: r["mesh_count"])
        meshes = [r["mesh_count"] for r in sel]
        label = kind if kind == "serial" else f"{kind} ({lanes} lanes)"
        ax_t.plot(meshes, [r["wall_s"] for r in sel], "o-", label=label)
        ax_s.plot(meshes, [r["speedup"] for r in sel], "o-", label=label)
    ax_t.set_xscale("log")
    ax_t.set_yscale("log")
    ax_t.set_xlabel("mesh count")
    ax_t.set_ylabel("wall time (s)")
    ax_s.set_xscale("log")
    ax_s.set_xlabel("mesh count")
    ax_s.set_ylabel("speedup vs serial")
    ax_s.axhline(1.0, color="0.6", lw=0.8)
    ax_t.legend(frameon=False)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_snapshot(snapshot, dem, path, threshold=DISPLAY_THRESHOLD_M) -> Path:
    """Flow thickness over elevation contours; cells below ``threshold`` m are blank."""
    path = Path(path)
    ny, nx = dem.shape
    extent = (dem.xll, dem.xll + nx * dem.cellsize, dem.yll, dem.yll + ny * dem.cellsize)
    fig, ax = plt.subplots(figsize=(6, 6 * ny / max(nx, 1) + 0.5), constrained_layout=True)
    x = dem.xll + (np.arange(nx) + 0.5) * dem.cellsize
    y = dem.yll + (np.arange(ny) + 0.5) * dem.cellsize
    ax.contour(x, y, dem.elevation, levels=15, colors="0.7", linewidths=0.5)
    h = np.ma.masked_less(snapshot.h_total, threshold)
    im = ax.imshow(h, origin="lower", extent=extent, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="flow thickness (m)", shrink=0.8)
    ax.set_title(f"t = {snapshot.t:g} s")
    ax.set_xlabel("X (m)")
    ax.set_ylabel("Y (m)")
    ax.set_aspect("equal")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
