"""Synthetic terrains and initial states used by validation, benchmarks and tests.

All scenarios use metre-scale cells with ``L = H = 1 m`` so scaled and
physical lengths coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .io import Hydrograph, format_hydrograph, format_par_list, write_grid
from .physics import ModelParams
from .scaling import ScalingConfig
from .solver import MixtureState
from .terrain import ElevationGrid, TerrainGeometry, compute_geometry


@dataclass
class Scenario:
    name: str
    dem: ElevationGrid
    initial: MixtureState
    params: ModelParams = field(default_factory=ModelParams)
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    hydrograph: Hydrograph | None = None

    @property
    def geom(self) -> TerrainGeometry:
        return compute_geometry(self.dem, self.scaling)


def cell_centres(nx, ny, cellsize=1.0):
    x = (np.arange(nx) + 0.5) * cellsize
    y = (np.arange(ny) + 0.5) * cellsize
    return np.meshgrid(x, y)


def make_grid(elevation, cellsize=1.0, xll=0.0, yll=0.0) -> ElevationGrid:
    ny, nx = elevation.shape
    return ElevationGrid(nx, ny, xll, yll, cellsize, -9999.0, elevation)


def release(h, phi_s):
    state = MixtureState.zeros(h.shape)
    state.hs = h * phi_s
    state.hf = h * (1.0 - phi_s)
    return state


def parabolic_pile(X, Y, x0, y0, radius, height):
    r2 = ((X - x0) ** 2 + (Y - y0) ** 2) / radius**2
    return height * np.maximum(1.0 - r2, 0.0)


def closed_bowl(n=200, cellsize=1.0, params=None) -> Scenario:
    """Paraboloid bowl with a central pile that stays far from the edges."""
    params = params or ModelParams()
    X, Y = cell_centres(n, n, cellsize)
    c = 0.5 * n * cellsize
    r2 = (X - c) ** 2 + (Y - c) ** 2
    b = 0.4 * r2 / c
    h = parabolic_pile(X, Y, c, c, 0.15 * n * cellsize, 3.0)
    return Scenario("closed-bowl", make_grid(b, cellsize), release(h, params.phi_s0), params)


def flat_pond(n=32, depth=1.0, params=None) -> Scenario:
    """Uniform still layer on flat horizontal ground."""
    params = params or ModelParams()
    b = np.full((n, n), 5.0)
    return Scenario("flat-pond", make_grid(b), release(np.full((n, n), depth), params.phi_s0), params)


def symmetric_release(n=64, params=None) -> Scenario:
    """Terrain and pile symmetric under swapping X and Y; flow runs down the diagonal."""
    params = params or ModelParams()
    X, Y = cell_centres(n, n)
    s = math.tan(math.radians(20.0))
    b = -s * (X + Y) / math.sqrt(2.0) + 2.0 * np.exp(-((X - Y) ** 2) / (0.02 * n * n)) * np.cos(X / 9.0) * np.cos(Y / 9.0)
    b = 0.5 * (b + b.T)
    h = parabolic_pile(X, Y, 0.3 * n, 0.3 * n, 0.15 * n, 2.0)
    h = 0.5 * (h + h.T)
    return Scenario("symmetric-release", make_grid(b), release(h, params.phi_s0), params)


def incline_hump(n=64, length=64.0, slope_deg=5.0, background=0.5, amplitude=1.0, params=None) -> Scenario:
    """Gaussian hump on a uniform layer over a plane dipping toward +X."""
    params = params or ModelParams()
    d = length / n
    X, Y = cell_centres(n, n, d)
    b = -math.tan(math.radians(slope_deg)) * X
    c = 0.5 * length
    sigma = 0.12 * length
    h = background + amplitude * np.exp(-((X - c) ** 2 + (Y - c) ** 2) / (2.0 * sigma**2))
    return Scenario("incline-hump", make_grid(b, d), release(h, params.phi_s0), params)


def uniform_state(n=8, cellsize=0.1, h=1.0, phi_s=0.5, vs=(1.0, 0.0), vf=(1.5, 0.0), params=None) -> Scenario:
    """Gradient-free moving layer on flat ground; only local sources act."""
    params = params or ModelParams()
    b = np.zeros((n, n))
    state = release(np.full((n, n), h), phi_s)
    state.qs = np.asarray(vs, float)[:, None, None] * state.hs
    state.qf = np.asarray(vf, float)[:, None, None] * state.hf
    return Scenario("uniform-state", make_grid(b, cellsize), state, params)


def dam_break(n=100, params=None) -> Scenario:
    """Single-phase (pure fluid) step in thickness on flat ground."""
    params = params or ModelParams()
    X, _ = cell_centres(n, 3)
    h = np.where(X < 0.5 * n, 1.0, 0.0)
    return Scenario("dam-break", make_grid(np.zeros((3, n))), release(h, 0.0), params)


def triangular_hydrograph(cells, t_peak=10.0, t_end=20.0, h_peak=1.0, phi_s=0.5, speed_peak=2.0) -> Hydrograph:
    return Hydrograph(
        cells=list(cells),
        times=np.array([0.0, t_peak, t_end]),
        h=np.array([0.0, h_peak, 0.0]),
        phi_s=np.full(3, phi_s),
        speed=np.array([0.0, speed_peak, 0.0]),
    )


def inflow_channel(nx=80, ny=24, slope_deg=20.0, width=6, params=None, **hydro) -> Scenario:
    """Inclined V-channel fed through its west edge by a triangular hydrograph."""
    params = params or ModelParams()
    X, Y = cell_centres(nx, ny)
    yc = 0.5 * ny
    b = -math.tan(math.radians(slope_deg)) * X + 0.3 * np.abs(Y - yc)
    rows = range(int(yc) - width // 2, int(yc) + width // 2)
    hydrograph = triangular_hydrograph([(0, j, "W") for j in rows], **hydro)
    return Scenario("inflow-channel", make_grid(b), MixtureState.zeros((ny, nx)), params, hydrograph=hydrograph)


def mesh_shape(cells: int) -> tuple[int, int]:
    """``(nx, ny)`` with ``nx * ny == cells`` and the most nearly square aspect."""
    ny = int(math.isqrt(cells))
    while cells % ny:
        ny -= 1
    return cells // ny, ny


def bench_incline(cells: int, slope_deg=20.0, params=None) -> Scenario:
    """Flat incline with a centred release, sized to ``cells`` cells."""
    params = params or ModelParams()
    nx, ny = mesh_shape(cells)
    if nx < 3 or ny < 3:
        raise ConfigError(f"mesh count {cells} does not factor into a grid of at least 3x3")
    X, Y = cell_centres(nx, ny)
    b = -math.tan(math.radians(slope_deg)) * X
    h = parabolic_pile(X, Y, 0.5 * nx, 0.5 * ny, 0.2 * min(nx, ny), 2.0)
    return Scenario("bench-incline", make_grid(b), release(h, params.phi_s0), params)


def write_case(scn: Scenario, directory, t_end=10.0, dt_out=5.0, out_dir="output") -> Path:
    """Write ``scn`` as DEM, release grid (or hydrograph) and par_list; returns the par_list path."""
    from .solver import SimConfig

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dem = scn.dem
    write_grid(directory / "dem.asc", dem.elevation, dem.header)
    mode = "inflow-hydrograph" if scn.hydrograph is not None else "finite-release"
    config = SimConfig(params=scn.params, scaling=scn.scaling, mode=mode, t_end=t_end, dt_out=dt_out,
                       dem=Path("dem.asc"), out_dir=Path(out_dir))
    if scn.hydrograph is not None:
        (directory / "inflow.txt").write_text(format_hydrograph(scn.hydrograph), encoding="utf-8")
        config.hydrograph = Path("inflow.txt")
    else:
        h_m = scn.scaling.thickness_m(scn.initial.h)
        write_grid(directory / "release.asc", h_m, dem.header)
        config.init = Path("release.asc")
    path = directory / "par_list.txt"
    path.write_text(format_par_list(config), encoding="utf-8")
    return path
