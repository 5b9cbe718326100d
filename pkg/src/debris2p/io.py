"""Input parsing and output writing.

File formats
------------
par_list
    UTF-8 text, one ``key = value`` per line, ``#`` starts a comment. Paths
    are relative to the par_list's directory. Required keys: ``dem``,
    ``mode``, ``t_end``, ``dt_out``, ``delta_b``, ``C_d``, ``N_R``,
    ``theta_b``, ``phi_s0``, plus ``init`` (finite-release) or
    ``hydrograph`` (inflow-hydrograph). Optional: see ``OPTIONAL_KEYS``.

hydrograph
    ``cell i j side`` lines (side one of N, S, E, W), then the header line
    ``t h phi_s speed`` followed by one row per sample: time (s), thickness
    (m), solid fraction, inward speed (m/s). ``#`` starts a comment.

snapshots
    Six ESRI ASCII grids per output time (``h``, ``phis``, ``vxs``, ``vys``,
    ``vxf``, ``vyf``) with the DEM header copied verbatim, and one
    ``fields_t<time>.csv`` with cell-centre coordinates.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, GridFormatError
from .physics import ModelParams
from .scaling import STANDARD_GRAVITY, ScalingConfig
from .solver import MixtureState, SimConfig, SimSnapshot, check_inflow_cell
from .terrain import ElevationGrid, load_dem

OUTPUT_DIR_ENV = "DEBRIS2P_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "output"

PARAM_KEYS = ("delta_b", "C_d", "N_R", "theta_b", "phi_s0")
REQUIRED_KEYS = ("dem", "mode", "t_end", "dt_out") + PARAM_KEYS
OPTIONAL_KEYS = (
    "init", "hydrograph", "out_dir", "init_vx", "init_vy", "cfl", "h_dry", "eps_h",
    "L", "H", "g", "alpha_rho", "chi", "fluid_pressure_weight", "max_steps",
)
PATH_KEYS = ("dem", "init", "hydrograph", "out_dir", "init_vx", "init_vy")
SNAPSHOT_PREFIXES = ("h", "phis", "vxs", "vys", "vxf", "vyf")
CSV_HEADER = "X,Y,h,phi_s,vx_s,vy_s,vx_f,vy_f"


def _read_pairs(path: Path):
    pairs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in REQUIRED_KEYS and key not in OPTIONAL_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in pairs:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            if not value:
                raise ConfigError(f"{path}:{lineno}: empty value for {key!r}")
            pairs[key] = value
    return pairs


def _number(pairs, key, default=None, kind=float):
    if key not in pairs:
        return default
    try:
        return kind(pairs[key])
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {pairs[key]!r} as {kind.__name__}") from None


def parse_par_list(path) -> tuple[SimConfig, ModelParams]:
    """Read and validate a par_list file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"par_list not found: {path}")
    pairs = _read_pairs(path)
    missing = [k for k in REQUIRED_KEYS if k not in pairs]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}")

    base = path.resolve().parent
    paths = {k: (base / pairs[k]) for k in PATH_KEYS if k in pairs}
    if "out_dir" not in paths:
        paths["out_dir"] = Path(os.environ.get(OUTPUT_DIR_ENV) or base / DEFAULT_OUTPUT_DIR)

    scaling = ScalingConfig(
        L=_number(pairs, "L", 1.0), H=_number(pairs, "H", 1.0), g=_number(pairs, "g", STANDARD_GRAVITY)
    )
    params = ModelParams(
        delta_b=_number(pairs, "delta_b"),
        C_d=_number(pairs, "C_d"),
        N_R=_number(pairs, "N_R"),
        theta_b=_number(pairs, "theta_b"),
        phi_s0=_number(pairs, "phi_s0"),
        alpha_rho=_number(pairs, "alpha_rho", 0.4),
        epsilon=scaling.epsilon,
        chi=_number(pairs, "chi", 1.0),
        fluid_pressure_weight=pairs.get("fluid_pressure_weight", "phi_f"),
    )
    max_steps = _number(pairs, "max_steps", None, int)
    if max_steps is not None and max_steps < 1:
        raise ConfigError("max_steps must be >= 1")
    config = SimConfig(
        params=params,
        scaling=scaling,
        mode=pairs["mode"],
        t_end=_number(pairs, "t_end"),
        dt_out=_number(pairs, "dt_out"),
        cfl=_number(pairs, "cfl", 0.1),
        h_dry=_number(pairs, "h_dry", 1e-10),
        eps_h=_number(pairs, "eps_h", 1e-6),
        dem=paths["dem"],
        init=paths.get("init"),
        hydrograph=paths.get("hydrograph"),
        out_dir=paths["out_dir"],
        init_vx=paths.get("init_vx"),
        init_vy=paths.get("init_vy"),
        max_steps=max_steps,
    )
    if config.mode == "finite-release" and config.init is None:
        raise ConfigError("missing required key 'init' (needed by mode finite-release)")
    if config.mode == "inflow-hydrograph" and config.hydrograph is None:
        raise ConfigError("missing required key 'hydrograph' (needed by mode inflow-hydrograph)")
    if (config.init_vx is None) != (config.init_vy is None):
        raise ConfigError("init_vx and init_vy must be given together")
    return config, params


def format_par_list(config: SimConfig) -> str:
    """Render ``config`` back to par_list text (absolute paths)."""
    p = config.params
    sc = config.scaling
    entries = {
        "dem": config.dem,
        "mode": config.mode,
        "init": config.init,
        "hydrograph": config.hydrograph,
        "out_dir": config.out_dir,
        "init_vx": config.init_vx,
        "init_vy": config.init_vy,
        "t_end": config.t_end,
        "dt_out": config.dt_out,
        "cfl": config.cfl,
        "h_dry": config.h_dry,
        "eps_h": config.eps_h,
        "max_steps": config.max_steps,
        "delta_b": p.delta_b,
        "C_d": p.C_d,
        "N_R": p.N_R,
        "theta_b": p.theta_b,
        "phi_s0": p.phi_s0,
        "alpha_rho": p.alpha_rho,
        "chi": p.chi,
        "fluid_pressure_weight": p.fluid_pressure_weight,
        "L": sc.L,
        "H": sc.H,
        "g": sc.g,
    }
    lines = [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in entries.items() if v is not None]
    return "\n".join(lines) + "\n"


def _load_congruent(path, dem: ElevationGrid, what: str) -> np.ndarray:
    grid = load_dem(path)
    if not dem.same_georeference(grid):
        raise GridFormatError(
            f"{what} grid {path} ({grid.ncols}x{grid.nrows}, cellsize {grid.cellsize}) does not match "
            f"the DEM ({dem.ncols}x{dem.nrows}, cellsize {dem.cellsize})"
        )
    return grid.elevation


def load_initial_state(path, dem: ElevationGrid, params: ModelParams, scaling: ScalingConfig | None = None,
                       velocity_paths=None, geom=None) -> MixtureState:
    """Finite-release initial state from a thickness grid (metres, normal to the bed).

    The released material has solid fraction ``params.phi_s0``. Velocities are
    zero unless ``velocity_paths`` gives a pair of (vx, vy) grids in m/s,
    applied to both phases; ``geom`` then supplies the Jacobian.
    """
    scaling = scaling or ScalingConfig()
    h_m = _load_congruent(path, dem, "initial thickness")
    if np.any(h_m < 0.0):
        j, i = np.argwhere(h_m < 0.0)[0]
        raise GridFormatError(f"{path}: negative initial thickness {h_m[j, i]} at cell (i={i}, j={j})")
    h = scaling.thickness(h_m)
    state = MixtureState.zeros(h.shape)
    state.hs = h * params.phi_s0
    state.hf = h * (1.0 - params.phi_s0)
    if velocity_paths is not None:
        jac = np.ones_like(h) if geom is None else geom.J
        v = np.stack([scaling.velocity(_load_congruent(p, dem, "initial velocity")) for p in velocity_paths])
        state.qs = jac * state.hs * v
        state.qf = jac * state.hf * v
    return state


@dataclass
class Hydrograph:
    """Inflow time series shared by a set of boundary cells."""

    cells: list  # [(i, j, side)]
    times: np.ndarray  # s
    h: np.ndarray  # m
    phi_s: np.ndarray
    speed: np.ndarray  # m/s, directed into the domain

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.phi_s = np.asarray(self.phi_s, dtype=float)
        self.speed = np.asarray(self.speed, dtype=float)
        n = self.times.size
        if n == 0:
            raise ConfigError("hydrograph has no samples")
        if not (self.h.size == self.phi_s.size == self.speed.size == n):
            raise ConfigError("hydrograph columns differ in length")
        if np.any(np.diff(self.times) <= 0.0):
            k = int(np.argmax(np.diff(self.times) <= 0.0))
            raise ConfigError(
                f"hydrograph times must be strictly increasing (t={self.times[k]} then t={self.times[k + 1]})"
            )
        if np.any(self.h < 0.0):
            raise ConfigError("hydrograph thickness must be >= 0")
        if np.any(self.speed < 0.0):
            raise ConfigError("hydrograph speed must be >= 0")
        if np.any((self.phi_s < 0.0) | (self.phi_s > 1.0)):
            raise ConfigError("hydrograph phi_s must lie in [0, 1]")
        if not self.cells:
            raise ConfigError("hydrograph lists no inflow cells")

    def active(self, t) -> bool:
        return bool(self.times[0] <= t <= self.times[-1])

    def at(self, t):
        """Linearly interpolated ``(h, phi_s, speed)`` at ``t`` seconds; zero inflow outside the record."""
        if not self.active(t):
            return 0.0, 0.0, 0.0
        return (
            float(np.interp(t, self.times, self.h)),
            float(np.interp(t, self.times, self.phi_s)),
            float(np.interp(t, self.times, self.speed)),
        )


def parse_hydrograph(text: str, nx: int, ny: int, source="<string>") -> Hydrograph:
    cells = []
    rows = []
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        where = f"{source}:{lineno}"
        if parts[0].lower() == "cell":
            if seen_header:
                raise ConfigError(f"{where}: cell lines must precede the sample table")
            if len(parts) != 4:
                raise ConfigError(f"{where}: expected 'cell i j side', got {line!r}")
            try:
                i, j = int(parts[1]), int(parts[2])
            except ValueError:
                raise ConfigError(f"{where}: non-integer cell index in {line!r}") from None
            side = parts[3].upper()
            try:
                check_inflow_cell(i, j, side, nx, ny)
            except ConfigError as exc:
                raise ConfigError(f"{where}: {exc}") from None
            cells.append((i, j, side))
        elif not seen_header:
            if [p.lower() for p in parts] != ["t", "h", "phi_s", "speed"]:
                raise ConfigError(f"{where}: expected header 't h phi_s speed', got {line!r}")
            seen_header = True
        else:
            if len(parts) != 4:
                raise ConfigError(f"{where}: expected 4 columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ConfigError(f"{where}: non-numeric sample {line!r}") from None
    if not seen_header:
        raise ConfigError(f"{source}: missing sample header 't h phi_s speed'")
    data = np.array(rows, dtype=float).reshape(-1, 4)
    return Hydrograph(cells, data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def load_hydrograph(path, dem: ElevationGrid) -> Hydrograph:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"hydrograph file not found: {path}")
    return parse_hydrograph(path.read_text(encoding="utf-8"), dem.ncols, dem.nrows, source=str(path))


def format_hydrograph(hydro: Hydrograph) -> str:
    lines = [f"cell {i} {j} {side}" for i, j, side in hydro.cells]
    lines.append("t h phi_s speed")
    for row in zip(hydro.times, hydro.h, hydro.phi_s, hydro.speed):
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def time_tag(t: float) -> str:
    """``181.82`` -> ``'181.82'``, ``10.0`` -> ``'10'``."""
    tag = f"{t:.6f}".rstrip("0").rstrip(".")
    return "0" if tag in ("", "-0") else tag


def _clean(values: np.ndarray) -> np.ndarray:
    # values that print as zero are written as 0.000000, never -0.000000
    return np.where(np.abs(values) < 5e-7, 0.0, values)


def format_grid(values: np.ndarray, header: str) -> str:
    rows = np.flipud(_clean(np.asarray(values, dtype=float)))
    body = "\n".join(" ".join(f"{v:.6f}" for v in row) for row in rows)
    return header + body + "\n"


def write_grid(path, values, header: str):
    with open(path, "w", newline="") as fh:
        fh.write(format_grid(values, header))


def write_snapshot(snapshot: SimSnapshot, dem: ElevationGrid, out_dir) -> list[Path]:
    """Six ESRI ASCII grids for one output time; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = time_tag(snapshot.t)
    written = []
    for prefix, values in snapshot.fields().items():
        if values.shape != dem.shape:
            raise GridFormatError(f"snapshot field {prefix} has shape {values.shape}, DEM is {dem.shape}")
        path = out_dir / f"{prefix}_t{tag}.asc"
        write_grid(path, values, dem.header)
        written.append(path)
    return written


def write_contour_csv(snapshot: SimSnapshot, dem: ElevationGrid, out_dir) -> Path:
    """One row per cell with cell-centre coordinates, south row first."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ny, nx = dem.shape
    X, Y = np.meshgrid(dem.xll + (np.arange(nx) + 0.5) * dem.cellsize, dem.yll + (np.arange(ny) + 0.5) * dem.cellsize)
    cols = [X, Y] + [_clean(v) for v in snapshot.fields().values()]
    table = np.column_stack([c.reshape(-1) for c in cols])
    path = out_dir / f"fields_t{time_tag(snapshot.t)}.csv"
    np.savetxt(path, table, fmt="%.6f", delimiter=",", header=CSV_HEADER, comments="")
    return path


def write_run_report(report, path, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = report.as_dict()
    payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")
    return path
