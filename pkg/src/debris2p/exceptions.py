"""Exception types shared across the package."""


class Debris2pError(Exception):
    """Base class for all package errors."""


class ConfigError(Debris2pError, ValueError):
    """Invalid parameter file or configuration value."""


class GridFormatError(Debris2pError, ValueError):
    """Malformed ESRI ASCII grid or auxiliary input file."""


class NumericalError(Debris2pError, RuntimeError):
    """The time integration produced an unusable state."""


class KernelError(Debris2pError, RuntimeError):
    """A data-parallel kernel raised while processing a work unit."""
