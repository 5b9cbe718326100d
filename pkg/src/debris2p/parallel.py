"""Data-parallel execution backend and deterministic max-reduction.

Work is split into fixed-size units that depend only on ``chunk``, never on
``lanes``. Kernels read shared immutable inputs and write only their own
unit, so every lane count produces bitwise-identical output.
"""

from __future__ import annotations

import atexit
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, Debris2pError, KernelError

BACKEND_KINDS = ("serial", "parallel")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "serial"
    lanes: int = 1
    chunk: int = 4096  # cells per work unit
    deterministic_reduction: bool = True

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.lanes < 1:
            raise ConfigError("lanes must be >= 1")
        if self.chunk < 1:
            raise ConfigError("chunk must be >= 1")

    @classmethod
    def parallel(cls, lanes=None, chunk=4096):
        return cls("parallel", lanes or os.cpu_count() or 1, chunk)

    @property
    def workers(self) -> int:
        return 1 if self.kind == "serial" else self.lanes


_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def _pool(workers: int) -> ThreadPoolExecutor:
    with _pools_lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="debris2p")
            _pools[workers] = pool
        return pool


@atexit.register
def _shutdown_pools():
    for pool in _pools.values():
        pool.shutdown(wait=False)


def work_units(n: int, unit: int):
    """Fixed partition of ``range(n)`` into ``[lo, hi)`` units of size ``unit``."""
    unit = max(1, int(unit))
    return [(lo, min(lo + unit, n)) for lo in range(0, n, unit)]


def run_units(kernel, units, backend: BackendConfig):
    """Call ``kernel(lo, hi)`` on every unit; results are returned in unit order."""

    def call(bounds):
        lo, hi = bounds
        try:
            return kernel(lo, hi)
        except Debris2pError:
            raise
        except Exception as exc:
            raise KernelError(f"kernel failed on cells [{lo}, {hi}): {exc}") from exc

    if backend.workers == 1 or len(units) == 1:
        return [call(u) for u in units]
    return list(_pool(backend.workers).map(call, units))


def par_map(kernel, n: int, backend: BackendConfig | None = None):
    """Apply a block kernel over ``range(n)`` and concatenate the results.

    ``kernel(lo, hi)`` must return an array whose leading axis has length
    ``hi - lo`` (the values for cells ``lo..hi-1``).
    """
    backend = backend or BackendConfig()
    if n == 0:
        return np.empty(0)
    blocks = run_units(kernel, work_units(n, backend.chunk), backend)
    return np.concatenate([np.asarray(b) for b in blocks], axis=0)


def reduce_max(values, backend: BackendConfig | None = None):
    """Global maximum via unit-local maxima followed by one pass over them."""
    backend = backend or BackendConfig()
    flat = np.asarray(values).reshape(-1)
    if flat.size == 0:
        raise ValueError("reduce_max of an empty field")
    partial = run_units(lambda lo, hi: flat[lo:hi].max(), work_units(flat.size, backend.chunk), backend)
    return np.max(np.asarray(partial))
