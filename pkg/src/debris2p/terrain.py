"""DEM ingestion and terrain-fitted basal geometry.

Arrays are indexed ``[j, i]`` with ``i`` increasing east and ``j`` increasing
north, so row 0 is the southernmost row (the reverse of the file order).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import GridFormatError
from .scaling import ScalingConfig

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass
class ElevationGrid:
    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    elevation: np.ndarray  # (nrows, ncols), south-to-north
    header: str = field(default="", repr=False)  # raw header text, reused verbatim on output

    def __post_init__(self):
        if self.ncols < 2 or self.nrows < 2:
            raise GridFormatError(f"grid must be at least 2x2, got {self.ncols}x{self.nrows}")
        if not self.cellsize > 0:
            raise GridFormatError(f"cellsize must be positive, got {self.cellsize}")
        self.elevation = np.asarray(self.elevation, dtype=float)
        if self.elevation.shape != (self.nrows, self.ncols):
            raise GridFormatError(
                f"elevation shape {self.elevation.shape} does not match "
                f"nrows x ncols = {self.nrows} x {self.ncols}"
            )
        if not self.header:
            self.header = format_header(self)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    def same_georeference(self, other: "ElevationGrid") -> bool:
        return (
            self.ncols == other.ncols
            and self.nrows == other.nrows
            and np.isclose(self.xll, other.xll)
            and np.isclose(self.yll, other.yll)
            and np.isclose(self.cellsize, other.cellsize)
        )


def format_header(grid: ElevationGrid) -> str:
    return (
        f"ncols {grid.ncols}\n"
        f"nrows {grid.nrows}\n"
        f"xllcorner {grid.xll!r}\n"
        f"yllcorner {grid.yll!r}\n"
        f"cellsize {grid.cellsize!r}\n"
        f"NODATA_value {grid.nodata!r}\n"
    )


def parse_ascii_grid(text: str, source: str = "<string>", allow_nodata: bool = False) -> ElevationGrid:
    """Parse ESRI ASCII grid text.

    The six header lines must be ``ncols``, ``nrows``, ``xllcorner``,
    ``yllcorner``, ``cellsize`` and ``NODATA_value`` (keys are matched
    case-insensitively). The first data row is the northernmost one.
    """
    lines = text.splitlines(keepends=True)
    header_lines = []
    values = {}
    pos = 0
    while len(header_lines) < len(HEADER_KEYS):
        if pos >= len(lines):
            raise GridFormatError(f"{source}: truncated header")
        line = lines[pos]
        pos += 1
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GridFormatError(f"{source}: malformed header line {line.strip()!r}")
        key = parts[0].lower()
        expected = HEADER_KEYS[len(header_lines)]
        if key != expected:
            raise GridFormatError(f"{source}: expected header key {expected!r}, got {parts[0]!r}")
        try:
            values[key] = float(parts[1])
        except ValueError:
            raise GridFormatError(f"{source}: non-numeric header value in {line.strip()!r}") from None
        header_lines.append(line if line.endswith(("\n", "\r")) else line + "\n")

    ncols, nrows = values["ncols"], values["nrows"]
    if ncols != int(ncols) or nrows != int(nrows):
        raise GridFormatError(f"{source}: ncols/nrows must be integers")
    ncols, nrows = int(ncols), int(nrows)
    if values["cellsize"] <= 0:
        raise GridFormatError(f"{source}: non-positive cellsize {values['cellsize']}")

    try:
        data = np.array("".join(lines[pos:]).split(), dtype=float)
    except ValueError:
        raise GridFormatError(f"{source}: non-numeric grid value") from None
    if data.size != ncols * nrows:
        raise GridFormatError(
            f"{source}: value count mismatch (expected {ncols * nrows}, found {data.size})"
        )
    nodata = values["nodata_value"]
    elevation = np.flipud(data.reshape(nrows, ncols))
    if not allow_nodata and np.any(elevation == nodata):
        j, i = np.argwhere(elevation == nodata)[0]
        raise GridFormatError(f"{source}: NODATA inside domain at cell (i={i}, j={j})")

    return ElevationGrid(
        ncols=ncols,
        nrows=nrows,
        xll=values["xllcorner"],
        yll=values["yllcorner"],
        cellsize=values["cellsize"],
        nodata=nodata,
        elevation=np.ascontiguousarray(elevation),
        header="".join(header_lines),
    )


def load_dem(path) -> ElevationGrid:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"DEM file not found: {path}")
    with open(path, newline="") as fh:
        return parse_ascii_grid(fh.read(), source=str(path))


@dataclass
class TerrainGeometry:
    """Per-cell basal geometry of the terrain-fitted coordinate system.

    The basal tangent vectors are ``(1, 0, b_xi)`` and ``(0, 1, b_eta)`` so the
    xi/eta axes project onto X/Y. ``A`` is the upper-left 2x2 block of the
    inverse transformation matrix, stored as ``A[a, b] = A_{a+1, b+1}``.
    Lengths are scaled by ``L``.
    """

    b_xi: np.ndarray
    b_eta: np.ndarray
    n: np.ndarray  # (3, ...)
    c: np.ndarray
    J: np.ndarray
    A: np.ndarray  # (2, 2, ...)
    dn_dxi: np.ndarray  # (3, ...)
    dn_deta: np.ndarray  # (3, ...)
    dx: float = 1.0
    dy: float = 1.0

    @property
    def shape(self):
        return self.c.shape

    @classmethod
    def from_slopes(cls, b_xi, b_eta, dn_dxi=None, dn_deta=None, dx=1.0, dy=1.0):
        b_xi = np.asarray(b_xi, dtype=float)
        b_eta = np.asarray(b_eta, dtype=float)
        norm = np.sqrt(1.0 + b_xi * b_xi + b_eta * b_eta)
        c = 1.0 / norm
        n = np.stack([-b_xi * c, -b_eta * c, c])
        c2 = c * c
        off = -c2 * (b_xi * b_eta)
        A = np.array([[c2 * (1.0 + b_eta * b_eta), off], [off, c2 * (1.0 + b_xi * b_xi)]])
        if dn_dxi is None:
            dn_dxi = np.zeros_like(n)
        if dn_deta is None:
            dn_deta = np.zeros_like(n)
        return cls(b_xi, b_eta, n, c, norm, A, np.asarray(dn_dxi, float), np.asarray(dn_deta, float), dx, dy)

    @classmethod
    def flat(cls, shape=(), dx=1.0, dy=1.0):
        zeros = np.zeros(shape)
        return cls.from_slopes(zeros, zeros, dx=dx, dy=dy)

    def omega(self) -> np.ndarray:
        """Basal transformation matrix, columns (s_xi, s_eta, n), shape (3, 3, ...)."""
        one = np.ones_like(self.c)
        zero = np.zeros_like(self.c)
        s_xi = np.stack([one, zero, self.b_xi])
        s_eta = np.stack([zero, one, self.b_eta])
        return np.stack([s_xi, s_eta, self.n], axis=1)

    def omega_inv(self) -> np.ndarray:
        """Closed-form inverse of :meth:`omega`, shape (3, 3, ...)."""
        c2 = self.c * self.c
        bx, by = self.b_xi, self.b_eta
        row1 = np.stack([self.A[0, 0], self.A[0, 1], c2 * bx])
        row2 = np.stack([self.A[1, 0], self.A[1, 1], c2 * by])
        return np.stack([row1, row2, self.n])

    def _map(self, fn):
        """Apply ``fn`` to every field; ``fn`` sees the spatial axes last."""
        names = ("b_xi", "b_eta", "n", "c", "J", "A", "dn_dxi", "dn_deta")
        return replace(self, **{k: fn(getattr(self, k)) for k in names})

    def padded(self, ng: int) -> "TerrainGeometry":
        """Copy with ``ng`` edge-replicated ghost layers on every side."""

        def pad(a):
            widths = [(0, 0)] * (a.ndim - 2) + [(ng, ng), (ng, ng)]
            return np.pad(a, widths, mode="edge")

        return self._map(pad)

    def window(self, index) -> "TerrainGeometry":
        """View restricted to ``index`` (a 2-tuple of slices) over the spatial axes."""
        return self._map(lambda a: a[(Ellipsis,) + tuple(index)])


def _gradient(f, spacing, axis):
    edge_order = 2 if f.shape[axis] >= 3 else 1
    return np.gradient(f, spacing, axis=axis, edge_order=edge_order)


def geometry_from_elevation(b, dx, dy=None) -> TerrainGeometry:
    """Geometry of the surface ``b[j, i]`` sampled with spacings ``dx``, ``dy``.

    ``b`` and the spacings must share one length unit; derivative fields are
    per that unit.
    """
    dy = dx if dy is None else dy
    b = np.asarray(b, dtype=float)
    b_xi = _gradient(b, dx, axis=1)
    b_eta = _gradient(b, dy, axis=0)
    geom = TerrainGeometry.from_slopes(b_xi, b_eta, dx=dx, dy=dy)
    geom.dn_dxi = np.stack([_gradient(comp, dx, axis=1) for comp in geom.n])
    geom.dn_deta = np.stack([_gradient(comp, dy, axis=0) for comp in geom.n])
    return geom


def compute_geometry(grid: ElevationGrid, scaling: ScalingConfig | None = None) -> TerrainGeometry:
    scaling = scaling or ScalingConfig()
    dx = scaling.length(grid.cellsize)
    return geometry_from_elevation(scaling.length(grid.elevation), dx, dx)
