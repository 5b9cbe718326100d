import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from debris2p.exceptions import GridFormatError
from debris2p.scaling import ScalingConfig
from debris2p.terrain import (
    ElevationGrid,
    TerrainGeometry,
    compute_geometry,
    geometry_from_elevation,
    load_dem,
    parse_ascii_grid,
)

SMALL = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2\n3 4\n"


def smooth_surface(nx=40, ny=30, seed=0, dx=1.0):
    rng = np.random.default_rng(seed)
    x = np.arange(nx) * dx
    y = np.arange(ny) * dx
    X, Y = np.meshgrid(x, y)
    b = np.zeros_like(X)
    for _ in range(4):
        kx, ky = rng.uniform(0.02, 0.2, 2)
        ph = rng.uniform(0, 2 * np.pi, 2)
        b += rng.uniform(0.5, 3.0) * np.sin(kx * X + ph[0]) * np.cos(ky * Y + ph[1])
    return b


class TestLoadDem:
    def test_row_order_south_to_north(self, tmp_path):
        path = tmp_path / "dem.asc"
        path.write_text(SMALL)
        grid = load_dem(path)
        assert grid.elevation[0, 0] == 3.0
        assert grid.elevation[1, 1] == 2.0
        assert (grid.ncols, grid.nrows, grid.cellsize) == (2, 2, 10.0)

    def test_nodata_inside_domain(self):
        with pytest.raises(GridFormatError, match="NODATA inside domain"):
            parse_ascii_grid(SMALL.replace("\n3 4", "\n-9999 4"))

    def test_value_count_mismatch(self):
        with pytest.raises(GridFormatError, match="value count mismatch"):
            parse_ascii_grid(SMALL.replace("\n3 4", "\n3"))

    def test_malformed_header(self):
        with pytest.raises(GridFormatError, match="header"):
            parse_ascii_grid(SMALL.replace("cellsize 10", "cellsize"))
        with pytest.raises(GridFormatError, match="header key"):
            parse_ascii_grid(SMALL.replace("nrows", "nrow"))

    def test_truncated_header(self):
        with pytest.raises(GridFormatError, match="truncated header"):
            parse_ascii_grid("ncols 2\nnrows 2\n")

    def test_non_positive_cellsize(self):
        with pytest.raises(GridFormatError, match="non-positive cellsize"):
            parse_ascii_grid(SMALL.replace("cellsize 10", "cellsize 0"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.asc"):
            load_dem(tmp_path / "nope.asc")

    def test_keys_case_insensitive_and_header_kept(self):
        text = SMALL.replace("ncols", "NCOLS").replace("NODATA_value", "nodata_value")
        grid = parse_ascii_grid(text)
        assert grid.header == text[: text.index("1 2")]

    def test_crlf_header_kept_verbatim(self):
        text = SMALL.replace("\n", "\r\n")
        grid = parse_ascii_grid(text)
        assert grid.header.endswith("-9999\r\n")

    def test_minimum_size(self):
        with pytest.raises(GridFormatError):
            ElevationGrid(1, 2, 0, 0, 1, -9999, np.zeros((2, 1)))


class TestGeometry:
    def test_flat(self):
        grid = ElevationGrid(5, 4, 0, 0, 10, -9999, np.full((4, 5), 5.0))
        g = compute_geometry(grid)
        np.testing.assert_allclose(g.n[0], 0.0, atol=1e-15)
        np.testing.assert_allclose(g.n[1], 0.0, atol=1e-15)
        np.testing.assert_allclose(g.n[2], 1.0)
        np.testing.assert_allclose(g.c, 1.0)
        np.testing.assert_allclose(g.J, 1.0)
        np.testing.assert_allclose(g.A, np.broadcast_to(np.eye(2)[:, :, None, None], g.A.shape))
        assert np.abs(g.dn_dxi).max() < 1e-15 and np.abs(g.dn_deta).max() < 1e-15

    def test_inclined_plane(self):
        X = np.tile(np.arange(6) * 2.0, (4, 1))
        grid = ElevationGrid(6, 4, 0, 0, 2.0, -9999, X * math.tan(math.radians(30)))
        g = compute_geometry(grid)
        np.testing.assert_allclose(g.n[0], -0.5, atol=1e-4)
        np.testing.assert_allclose(g.n[1], 0.0, atol=1e-12)
        np.testing.assert_allclose(g.n[2], 0.8660, atol=1e-4)
        np.testing.assert_allclose(g.c, 0.8660, atol=1e-4)
        np.testing.assert_allclose(g.J, 1.1547, atol=1e-4)

    def test_omega_times_inverse_is_identity(self):
        g = geometry_from_elevation(smooth_surface(), 1.0)
        omega = np.moveaxis(g.omega(), (0, 1), (-2, -1))
        inv = np.moveaxis(g.omega_inv(), (0, 1), (-2, -1))
        err = np.abs(omega @ inv - np.eye(3)).max()
        assert err < 1e-12

    def test_jacobian_is_determinant(self):
        g = geometry_from_elevation(smooth_surface(seed=3), 1.0)
        det = np.linalg.det(np.moveaxis(g.omega(), (0, 1), (-2, -1)))
        np.testing.assert_allclose(det, g.J, rtol=1e-12)

    def test_scaling_applies_to_lengths(self):
        b = smooth_surface(seed=5, dx=4.0)
        grid = ElevationGrid(b.shape[1], b.shape[0], 0, 0, 4.0, -9999, b)
        g1 = compute_geometry(grid, ScalingConfig(L=1.0))
        g2 = compute_geometry(grid, ScalingConfig(L=2.0))
        np.testing.assert_allclose(g1.n, g2.n, atol=1e-14)
        np.testing.assert_allclose(g2.dn_dxi, 2.0 * g1.dn_dxi, atol=1e-14)
        assert g2.dx == 2.0

    def test_padded_and_window(self):
        g = TerrainGeometry.flat((4, 5))
        p = g.padded(3)
        assert p.c.shape == (10, 11) and p.A.shape == (2, 2, 10, 11)
        w = p.window((slice(3, 7), slice(3, 8)))
        assert w.n.shape == (3, 4, 5)


elevations = st.integers(min_value=0, max_value=2**31 - 1).map(lambda s: smooth_surface(12, 10, seed=s))


class TestGeometryProperties:
    @given(elevations, st.floats(0.5, 20.0))
    def test_unit_normal_and_jacobian(self, b, dx):
        g = geometry_from_elevation(b, dx)
        assert np.abs(np.sqrt((g.n**2).sum(axis=0)) - 1.0).max() < 1e-12
        assert np.all(g.n[2] > 0)
        assert np.abs(g.J * g.c - 1.0).max() < 1e-12

    @given(elevations, st.floats(-1000.0, 1000.0))
    def test_translation_invariance(self, b, shift):
        g1 = geometry_from_elevation(b, 1.0)
        g2 = geometry_from_elevation(b + shift, 1.0)
        for name in ("n", "J", "A", "dn_dxi", "dn_deta"):
            np.testing.assert_allclose(getattr(g2, name), getattr(g1, name), atol=1e-9)

    @given(st.integers(0, 2**31 - 1))
    def test_rotation_equivariance(self, seed):
        b = smooth_surface(11, 11, seed=seed)
        g = geometry_from_elevation(b, 1.0)
        r = geometry_from_elevation(np.rot90(b), 1.0)
        rot = np.rot90
        # np.rot90 turns the (east, north) frame by -90 degrees: v' = (v_Y, -v_X)
        assert np.abs(r.n[0] - rot(g.n[1])).max() < 1e-12
        assert np.abs(r.n[1] + rot(g.n[0])).max() < 1e-12
        assert np.abs(r.n[2] - rot(g.n[2])).max() < 1e-12
        assert np.abs(r.J - rot(g.J)).max() < 1e-12
        assert np.abs(r.A[0, 0] - rot(g.A[1, 1])).max() < 1e-12
        assert np.abs(r.A[0, 1] + rot(g.A[0, 1])).max() < 1e-12
