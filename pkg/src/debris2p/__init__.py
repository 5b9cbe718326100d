"""Two-phase depth-averaged debris-flow simulation on DEM terrain."""

from .exceptions import ConfigError, Debris2pError, GridFormatError, KernelError, NumericalError
from .parallel import BackendConfig, par_map, reduce_max
from .physics import ModelParams
from .scaling import ScalingConfig
from .solver import MixtureState, RunReport, SimConfig, SimSnapshot, Solver, run_simulation
from .terrain import ElevationGrid, TerrainGeometry, compute_geometry, load_dem

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "ConfigError",
    "Debris2pError",
    "ElevationGrid",
    "GridFormatError",
    "KernelError",
    "MixtureState",
    "ModelParams",
    "NumericalError",
    "RunReport",
    "ScalingConfig",
    "SimConfig",
    "SimSnapshot",
    "Solver",
    "TerrainGeometry",
    "compute_geometry",
    "load_dem",
    "par_map",
    "reduce_max",
    "run_simulation",
]
