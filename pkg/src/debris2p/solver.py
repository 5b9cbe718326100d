"""Second-order central finite-volume solver for the grain-fluid mixture.

The conserved variables live on a padded array ``U`` of shape
``(6, ny + 2*NG, nx + 2*NG)`` holding ``(J hs, J hf, qs_X, qs_Y, qf_X, qf_Y)``.
Space is discretized with a semi-discrete central flux on Minmod-limited
piecewise-linear reconstructions; time with the two-stage modified Euler
(Heun) method. Coulomb friction is applied after each stage with a cap that
can stop, but never reverse, the solid.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import physics
from .exceptions import ConfigError, NumericalError
from .parallel import BackendConfig, reduce_max, run_units, work_units
from .physics import ModelParams
from .scaling import ScalingConfig
from .terrain import TerrainGeometry

logger = logging.getLogger(__name__)

NG = 3  # ghost layers per side
FIELDS = ("J*hs", "J*hf", "qs_X", "qs_Y", "qf_X", "qf_Y")
MODES = ("finite-release", "inflow-hydrograph")
MODE_ALIASES = {"i": "finite-release", "mode-i": "finite-release", "ii": "inflow-hydrograph",
                "mode-ii": "inflow-hydrograph"}
MAX_CFL = 0.125
NEGATIVE_TOL = 1e-12
ENGINES = ("compiled", "numpy")


@dataclass
class SimConfig:
    params: ModelParams
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    mode: str = "finite-release"
    t_end: float = 1.0  # seconds
    dt_out: float = 1.0  # seconds
    cfl: float = 0.1
    h_dry: float = 1e-10  # scaled
    eps_h: float = 1e-6  # scaled
    dem: Path | None = None
    init: Path | None = None
    hydrograph: Path | None = None
    out_dir: Path | None = None
    init_vx: Path | None = None
    init_vy: Path | None = None
    max_steps: int | None = None

    def __post_init__(self):
        mode = MODE_ALIASES.get(str(self.mode).lower(), str(self.mode).lower())
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.mode = mode
        if not 0.0 < self.cfl <= MAX_CFL:
            raise ConfigError(f"cfl exceeds {MAX_CFL}" if self.cfl > MAX_CFL else "cfl must be > 0")
        if not self.t_end > 0:
            raise ConfigError("t_end must be > 0")
        if not self.dt_out > 0:
            raise ConfigError("dt_out must be > 0")
        if not (self.h_dry >= 0 and self.eps_h > 0):
            raise ConfigError("h_dry must be >= 0 and eps_h > 0")


@dataclass
class MixtureState:
    """Scaled per-cell state: phase thicknesses and momenta ``J h^k v^k``."""

    hs: np.ndarray
    hf: np.ndarray
    qs: np.ndarray  # (2, ny, nx)
    qf: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape), np.zeros((2,) + tuple(shape)), np.zeros((2,) + tuple(shape)))

    @property
    def h(self):
        return self.hs + self.hf

    @property
    def phi_s(self):
        return physics.solid_fraction(self.hs, self.hf)


@dataclass
class SimSnapshot:
    """Output fields in physical units (metres, m/s)."""

    t: float
    step_index: int
    h_total: np.ndarray
    phi_s: np.ndarray
    vX_s: np.ndarray
    vY_s: np.ndarray
    vX_f: np.ndarray
    vY_f: np.ndarray

    def fields(self):
        return {
            "h": self.h_total,
            "phis": self.phi_s,
            "vxs": self.vX_s,
            "vys": self.vY_s,
            "vxf": self.vX_f,
            "vyf": self.vY_f,
        }


@dataclass
class RunReport:
    """Step count, timing and per-phase volume budget (m^3, [solid, fluid])."""

    steps: int = 0
    wall_time: float = 0.0
    initial: np.ndarray = field(default_factory=lambda: np.zeros(2))
    injected: np.ndarray = field(default_factory=lambda: np.zeros(2))
    outflow: np.ndarray = field(default_factory=lambda: np.zeros(2))
    final: np.ndarray = field(default_factory=lambda: np.zeros(2))
    clipped: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def mass_audit(self) -> np.ndarray:
        """initial + injected - outflow - final, per phase."""
        return self.initial + self.injected - self.outflow - self.final

    @property
    def relative_drift(self) -> np.ndarray:
        scale = np.maximum(self.initial + self.injected, np.finfo(float).tiny)
        return np.abs(self.mass_audit) / scale

    def as_dict(self):
        return {
            "steps": self.steps,
            "wall_time_s": self.wall_time,
            "initial_m3": self.initial.tolist(),
            "injected_m3": self.injected.tolist(),
            "outflow_m3": self.outflow.tolist(),
            "final_m3": self.final.tolist(),
            "clipped_m3": self.clipped.tolist(),
            "mass_audit_m3": self.mass_audit.tolist(),
            "relative_drift": self.relative_drift.tolist(),
        }


def limited_slope(a, b):
    """Minmod: the smaller-magnitude argument when signs agree, else 0."""
    return np.maximum(np.minimum(a, b), 0.0) + np.minimum(np.maximum(a, b), 0.0)


def compute_dt(lam_max, dmin, cfl, remaining, source_cap=math.inf):
    """CFL step, truncated to land exactly on the next output time.

    A completely dry domain (``lam_max == 0``) jumps straight to the next
    output time.
    """
    if not lam_max > 0.0:
        return remaining
    dt = min(cfl * dmin / lam_max, source_cap)
    return remaining if dt >= remaining else dt


def source_dt_limit(params: ModelParams, dmin):
    """Step bound keeping the explicit drag/friction and viscous terms stable."""
    rate = params.C_d + params.fluid_friction_rate
    cap = math.inf if rate == 0.0 else 1.0 / rate
    return min(cap, dmin * dmin * params.N_R / (24.0 * params.epsilon))


def phase_velocity(w, q, J, eps_h):
    """Desingularized ``q / (J h)`` with ``h = w / J``."""
    h = w / J
    hm = np.maximum(h, eps_h)
    return q * (2.0 * h / (h * h + hm * hm)) / J


def regularize_state(U, J, h_dry=1e-10, tol=NEGATIVE_TOL):
    """Clip round-off negatives and zero momentum of dry phases, in place.

    ``U`` and ``J`` must cover the same cells. Returns the clipped amount per
    phase as a sum of ``J |h|``. Raises :class:`NumericalError` if a thickness
    is below ``-tol``.
    """
    clipped = np.zeros(2)
    for k, qsl in ((0, slice(2, 4)), (1, slice(4, 6))):
        w = U[k]
        neg = w < 0.0
        if neg.any():
            h = w / J
            worst = np.unravel_index(np.argmin(h), h.shape)
            if h[worst] < -tol:
                raise NumericalError(
                    f"negative thickness {h[worst]:.3e} in field {FIELDS[k]} at cell (i={worst[1]}, j={worst[0]})"
                )
            clipped[k] = -w[neg].sum()
            w[neg] = 0.0
        dry = w < h_dry * J
        U[qsl][:, dry] = 0.0
    return clipped


def apply_boundaries(U, geom_p: TerrainGeometry, hydrograph=None, t_s=0.0, scaling=None):
    """Fill the ghost layers of ``U`` in place.

    Every side is open (zero-gradient copy). While ``hydrograph`` is active
    at ``t_s`` seconds, the ghost columns behind each listed inflow cell carry
    the interpolated inflow thickness, concentration and inward speed.
    """
    U[:, :, :NG] = U[:, :, NG:NG + 1]
    U[:, :, -NG:] = U[:, :, -NG - 1:-NG]
    U[:, :NG, :] = U[:, NG:NG + 1, :]
    U[:, -NG:, :] = U[:, -NG - 1:-NG, :]
    if hydrograph is None or not hydrograph.active(t_s):
        return U
    scaling = scaling or ScalingConfig()
    h_m, phi, speed = hydrograph.at(t_s)
    h = scaling.thickness(h_m)
    u = scaling.velocity(speed)
    rows, cols, dirs = inflow_ghost_index(hydrograph, U.shape[1] - 2 * NG, U.shape[2] - 2 * NG)
    jac = geom_p.J[rows, cols]
    ws = jac * (h * phi)
    wf = jac * (h * (1.0 - phi))
    vx, vy = dirs[0] * u, dirs[1] * u
    U[0, rows, cols] = ws
    U[1, rows, cols] = wf
    U[2, rows, cols] = ws * vx
    U[3, rows, cols] = ws * vy
    U[4, rows, cols] = wf * vx
    U[5, rows, cols] = wf * vy
    return U


_INWARD = {"E": (-1.0, 0.0), "W": (1.0, 0.0), "N": (0.0, -1.0), "S": (0.0, 1.0)}


def check_inflow_cell(i, j, side, nx, ny):
    on_side = {"E": i == nx - 1, "W": i == 0, "N": j == ny - 1, "S": j == 0}
    if side not in on_side:
        raise ConfigError(f"unknown boundary side {side!r}")
    if not (0 <= i < nx and 0 <= j < ny) or not on_side[side]:
        raise ConfigError(f"inflow cell (i={i}, j={j}) is not on the {side} boundary of a {nx}x{ny} grid")


def inflow_ghost_index(hydrograph, nx, ny):
    """Padded (rows, cols) of the ghost cells fed by each inflow cell, and inward unit vectors."""
    rows, cols, dx, dy = [], [], [], []
    for i, j, side in hydrograph.cells:
        check_inflow_cell(i, j, side, nx, ny)
        for k in range(NG):
            if side == "E":
                r, c = j + NG, nx + NG + k
            elif side == "W":
                r, c = j + NG, k
            elif side == "N":
                r, c = ny + NG + k, i + NG
            else:
                r, c = k, i + NG
            rows.append(r)
            cols.append(c)
            dx.append(_INWARD[side][0])
            dy.append(_INWARD[side][1])
    return np.array(rows, dtype=int), np.array(cols, dtype=int), np.array([dx, dy])


def row_units(ny, nx, chunk):
    """Row blocks of about ``chunk`` cells, each at least 3 rows tall.

    The partition depends only on the grid and ``chunk``, so results do not
    change with the number of lanes.
    """
    units = work_units(ny, max(3, chunk // nx))
    if len(units) > 1 and units[-1][1] - units[-1][0] < 3:
        units[-2:] = [(units[-2][0], units[-1][1])]
    return units


def _along(axis, sl):
    """Index tuple applying ``sl`` on spatial ``axis`` (0 = eta/rows, 1 = xi/cols)."""
    return (Ellipsis, sl, slice(None)) if axis == 0 else (Ellipsis, sl)


def _reconstruct(f, axis, n):
    """Minmod face values at the ``n + 1`` faces around ``n`` interior cells.

    ``f`` carries ``NG`` ghost cells on each side along ``axis``. Returns
    ``(minus, plus)``: the limited extrapolations from the cell on the low
    and high side of each face.
    """
    d = np.diff(f, axis=axis)
    slope = limited_slope(d[_along(axis, slice(NG - 2, NG + n))], d[_along(axis, slice(NG - 1, NG + n + 1))])
    minus = f[_along(axis, slice(NG - 1, NG + n))] + 0.5 * slope[_along(axis, slice(0, n + 1))]
    plus = f[_along(axis, slice(NG, NG + n + 1))] - 0.5 * slope[_along(axis, slice(1, n + 2))]
    return minus, plus


def _extrapolate_edges(f, axes_edges, order):
    """Copy of ``f`` whose first ghost layer at each global edge is extrapolated.

    Central differences on the result equal one-sided differences at the
    first interior ring. ``axes_edges`` maps axis -> (low_is_edge,
    high_is_edge, n_interior).
    """
    f = f.copy()
    for axis, (lo, hi, n) in axes_edges.items():
        idx = lambda k: _along(axis, k)  # noqa: E731
        if lo:
            a, b, c = f[idx(NG)], f[idx(NG + 1)], f[idx(NG + 2)]
            f[idx(NG - 1)] = 2.0 * a - b if order == 1 else 3.0 * a - 3.0 * b + c
        if hi:
            e = NG + n - 1
            a, b, c = f[idx(e)], f[idx(e - 1)], f[idx(e - 2)]
            f[idx(e + 1)] = 2.0 * a - b if order == 1 else 3.0 * a - 3.0 * b + c
    return f


def advect_scalar(f, velocity, dx, dy, dt, steps=1):
    """Transport a passive scalar with the scheme's reconstruction, flux and stepping.

    Diagnostic mode: sources are off, ``velocity = (u, v)`` is uniform and
    frozen, and ghost cells copy the edge values. Returns the advanced field.
    """
    u, v = (float(c) for c in velocity)
    ny, nx = f.shape

    def rhs(g):
        p = np.pad(g, NG, mode="edge")
        xm, xp = _reconstruct(p[NG:NG + ny], 1, nx)
        ym, yp = _reconstruct(p[:, NG:NG + nx], 0, ny)
        Fx = 0.5 * u * (xm + xp) - 0.5 * abs(u) * (xp - xm)
        Fy = 0.5 * v * (ym + yp) - 0.5 * abs(v) * (yp - ym)
        return -np.diff(Fx, axis=1) / dx - np.diff(Fy, axis=0) / dy

    f = np.asarray(f, dtype=float)
    for _ in range(steps):
        f1 = f + dt * rhs(f)
        f = 0.5 * f + 0.5 * (f1 + dt * rhs(f1))
    return f


class Solver:
    """Time integrator bound to one terrain, parameter set and backend."""

    def __init__(
        self,
        geom: TerrainGeometry,
        params: ModelParams,
        *,
        cfl=0.1,
        h_dry=1e-10,
        eps_h=1e-6,
        backend: BackendConfig | None = None,
        hydrograph=None,
        scaling: ScalingConfig | None = None,
        max_dt=math.inf,
        engine="compiled",
    ):
        ny, nx = geom.shape
        if engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {engine!r}")
        if nx < 3 or ny < 3:
            raise ConfigError(f"solver needs at least 3x3 cells, got {nx}x{ny}")
        if not 0.0 < cfl <= MAX_CFL:
            raise ConfigError(f"cfl exceeds {MAX_CFL}" if cfl > MAX_CFL else "cfl must be > 0")
        self.geom = geom
        self.gp = geom.padded(NG)
        self.params = params
        self.cfl = cfl
        self.h_dry = h_dry
        self.eps_h = eps_h
        self.backend = backend or BackendConfig()
        self.hydrograph = hydrograph
        self.scaling = scaling or ScalingConfig()
        self.ny, self.nx = ny, nx
        self.dx, self.dy = geom.dx, geom.dy
        self.cell_area = self.dx * self.dy
        self.dmin = min(self.dx, self.dy)
        self.dt_cap = min(max_dt, source_dt_limit(params, self.dmin))
        if hydrograph is not None:
            for i, j, side in hydrograph.cells:
                check_inflow_cell(i, j, side, nx, ny)
        self.units = row_units(ny, nx, self.backend.chunk)
        self._R = np.zeros((6, ny, nx))
        self._speed = np.zeros((ny, nx))
        self._geo_cache = {}
        self.engine = engine
        self._prm = np.array([
            params.alpha_rho, params.epsilon, params.curvature_factor, params.C_d,
            params.fluid_friction_rate, params.N_R, eps_h, h_dry,
            1.0 if params.fluid_pressure_weight == "phi_f" else 0.0,
        ])

    # -- state conversion ------------------------------------------------------------

    @property
    def interior(self):
        return (slice(NG, NG + self.ny), slice(NG, NG + self.nx))

    def conserved(self, state: MixtureState) -> np.ndarray:
        J = self.geom.J
        U = np.zeros((6, self.ny + 2 * NG, self.nx + 2 * NG))
        inner = (slice(None),) + self.interior
        U[inner] = np.concatenate(
            [(J * state.hs)[None], (J * state.hf)[None], state.qs, state.qf]
        )
        regularize_state(U[inner], J, self.h_dry)
        return U

    def velocities(self, U):
        """Interior desingularized velocities ``(vs, vf)``, each (2, ny, nx)."""
        Ui = U[(slice(None),) + self.interior]
        J = self.geom.J
        vs = phase_velocity(Ui[0], Ui[2:4], J, self.eps_h)
        vf = phase_velocity(Ui[1], Ui[4:6], J, self.eps_h)
        return vs, vf

    def state(self, U) -> MixtureState:
        Ui = U[(slice(None),) + self.interior]
        J = self.geom.J
        return MixtureState(Ui[0] / J, Ui[1] / J, Ui[2:4].copy(), Ui[4:6].copy())

    def phase_volumes(self, U) -> np.ndarray:
        """Scaled volume ``sum(J h) dxi deta`` per phase."""
        Ui = U[(slice(None),) + self.interior]
        return np.array([Ui[0].sum(), Ui[1].sum()]) * self.cell_area

    def snapshot(self, U, t_s, step) -> SimSnapshot:
        st = self.state(U)
        vs, vf = self.velocities(U)
        sc = self.scaling
        return SimSnapshot(
            t=t_s,
            step_index=step,
            h_total=sc.thickness_m(st.h),
            phi_s=np.where(st.h > self.h_dry, st.phi_s, 0.0),
            vX_s=sc.velocity_ms(vs[0]),
            vY_s=sc.velocity_ms(vs[1]),
            vX_f=sc.velocity_ms(vf[0]),
            vY_f=sc.velocity_ms(vf[1]),
        )

    def fill_ghosts(self, U, t_s):
        return apply_boundaries(U, self.gp, self.hydrograph, t_s, self.scaling)

    # -- spatial operator ------------------------------------------------------------

    def _block_geometry(self, j0, j1):
        key = (j0, j1)
        cached = self._geo_cache.get(key)
        if cached is None:
            m = j1 - j0
            rows = slice(j0, j1 + 2 * NG)
            g = self.gp.window((rows, slice(None)))
            ri, ci = slice(NG, NG + m), slice(NG, NG + self.nx)
            cached = {
                "block": g,
                "cells": g.window((ri, ci)),
                # low/high side cells of xi faces and eta faces
                "x-": g.window((ri, slice(NG - 1, NG + self.nx))),
                "x+": g.window((ri, slice(NG, NG + self.nx + 1))),
                "y-": g.window((slice(NG - 1, NG + m), ci)),
                "y+": g.window((slice(NG, NG + m + 1), ci)),
            }
            self._geo_cache[key] = cached
        return cached

    def _face_side(self, w, g: TerrainGeometry, axis):
        """Conserved values, fluxes and signal speed on one side of a set of faces."""
        ws, wf, vsx, vsy, vfx, vfy = w
        p = self.params
        J = g.J
        hs = ws / J
        hf = wf / J
        h = hs + hf
        terms_ns = g.c * (1.0 - p.alpha_rho) * hs / 2.0
        terms_pf = g.c * h / 2.0
        if axis == 1:
            vns, vts, vnf, vtf = vsx, vsy, vfx, vfy
            a_nn, a_nt = g.A[0, 0], g.A[0, 1]
        else:
            vns, vts, vnf, vtf = vsy, vsx, vfy, vfx
            a_nn, a_nt = g.A[1, 1], g.A[1, 0]
        ms, mns, mts = physics.directional_flux(ws, vns, vts, J, h, a_nn, a_nt, terms_ns, p.epsilon)
        mf, mnf, mtf = physics.directional_flux(wf, vnf, vtf, J, h, a_nn, a_nt, terms_pf, p.epsilon)
        cons = (ws, wf, ws * vns, ws * vts, wf * vnf, wf * vtf)
        flux = (ms, mf, mns, mts, mnf, mtf)
        speed = np.maximum(np.abs(vns), np.abs(vnf)) + physics.pressure_wave_speed(hs, hf, g.c, p)
        speed = np.where(h > self.h_dry, speed, 0.0)
        return cons, flux, speed

    def _numerical_flux(self, prim, geo, axis, n):
        """Central numerical flux through the faces normal to ``axis``.

        Returns the six flux components ordered (mass_s, mass_f, mom_s_n,
        mom_s_t, mom_f_n, mom_f_t) and the local speeds.
        """
        recon = [_reconstruct(f, axis, n) for f in prim]
        minus = [r[0] for r in recon]
        plus = [r[1] for r in recon]
        tag = "x" if axis == 1 else "y"
        um, fm, am = self._face_side(minus, geo[tag + "-"], axis)
        up, fp, ap = self._face_side(plus, geo[tag + "+"], axis)
        a = np.maximum(am, ap)
        H = [0.5 * (fm[k] + fp[k]) - 0.5 * a * (up[k] - um[k]) for k in range(6)]
        return H, a

    def _rhs_block(self, U, j0, j1):
        """Right-hand side for interior rows ``[j0, j1)``; writes ``self._R`` and ``self._speed``.

        Returns the (inflow, outflow) boundary volume rates of both phases.
        """
        if self.engine == "compiled":
            from .kernels import rhs_rows

            g = self.gp
            rates = np.zeros((2, 2))
            rhs_rows(U, g.J, g.c, g.A, g.n, g.dn_dxi, g.dn_deta, j0, j1, self.ny,
                     self.dx, self.dy, self._prm, self._R, self._speed, rates)
            return rates[0], rates[1]
        return self._rhs_block_numpy(U, j0, j1)

    def _rhs_block_numpy(self, U, j0, j1):
        """Vectorized reference for :meth:`_rhs_block`."""
        p = self.params
        nx, ny = self.nx, self.ny
        m = j1 - j0
        geo = self._block_geometry(j0, j1)
        g = geo["block"]
        Ub = U[:, j0:j1 + 2 * NG, :]
        J = g.J
        vsx, vsy = phase_velocity(Ub[0], Ub[2:4], J, self.eps_h)
        vfx, vfy = phase_velocity(Ub[1], Ub[4:6], J, self.eps_h)
        ri, ci = slice(NG, NG + m), slice(NG, NG + nx)
        prim = (Ub[0], Ub[1], vsx, vsy, vfx, vfy)

        Hx, ax = self._numerical_flux([f[ri, :] for f in prim], geo, axis=1, n=nx)
        Hy, ay = self._numerical_flux([f[:, ci] for f in prim], geo, axis=0, n=m)
        div_x = [(h[:, 1:] - h[:, :-1]) / self.dx for h in Hx]
        div_y = [(h[1:, :] - h[:-1, :]) / self.dy for h in Hy]
        # back to (mass_s, mass_f, qs_X, qs_Y, qf_X, qf_Y)
        div = [
            div_x[0] + div_y[0],
            div_x[1] + div_y[1],
            div_x[2] + div_y[3],
            div_x[3] + div_y[2],
            div_x[4] + div_y[5],
            div_x[5] + div_y[4],
        ]

        # cell-centred sources
        gc = geo["cells"]
        edges = {1: (True, True, nx), 0: (j0 == 0, j1 == ny, m)}
        hs_b = Ub[0] / J
        hf_b = Ub[1] / J
        h_b = hs_b + hf_b
        P = _extrapolate_edges(J * h_b * (g.c * h_b / 2.0), edges, order=2)
        grad_p = (
            (P[ri, NG + 1:NG + nx + 1] - P[ri, NG - 1:NG + nx - 1]) / (2.0 * self.dx),
            (P[NG + 1:NG + m + 1, ci] - P[NG - 1:NG + m - 1, ci]) / (2.0 * self.dy),
        )
        vis = self._viscous_divergence(vfx, vfy, J, h_b, g.A, edges, m)

        hs, hf = hs_b[ri, ci], hf_b[ri, ci]
        vs = np.stack([vsx[ri, ci], vsy[ri, ci]])
        vf = np.stack([vfx[ri, ci], vfy[ri, ci]])
        terms = physics.hydrostatic_terms(
            hs, hf, gc.c, p,
            physics.curvature_accel(gc, vs[0], vs[1]),
            physics.curvature_accel(gc, vf[0], vf[1]),
        )
        s_s, s_f = physics.momentum_sources(hs, hf, vs, vf, gc, p, terms, grad_p, vis, include_coulomb=False)
        R = self._R[:, j0:j1, :]
        R[0] = -div[0]
        R[1] = -div[1]
        R[2] = s_s[0] - div[2]
        R[3] = s_s[1] - div[3]
        R[4] = s_f[0] - div[4]
        R[5] = s_f[1] - div[5]

        lam_x, lam_y = physics.wave_speed_bound(hs, hf, vs, vf, gc.c, p, self.h_dry)
        speed = np.maximum(np.maximum(lam_x, lam_y), np.maximum(ax[:, :-1], ax[:, 1:]))
        self._speed[j0:j1] = np.maximum(speed, np.maximum(ay[:-1, :], ay[1:, :]))

        # boundary volume rates (positive = into the domain)
        inflow = np.zeros(2)
        outflow = np.zeros(2)
        faces = [(Hx[k][:, 0], Hx[k][:, -1], self.dy) for k in range(2)]
        for k in range(2):
            lo, hi, length = faces[k]
            inflow[k] += (np.maximum(lo, 0.0).sum() + np.maximum(-hi, 0.0).sum()) * length
            outflow[k] += (np.maximum(-lo, 0.0).sum() + np.maximum(hi, 0.0).sum()) * length
            if j0 == 0:
                lo = Hy[k][0, :]
                inflow[k] += np.maximum(lo, 0.0).sum() * self.dx
                outflow[k] += np.maximum(-lo, 0.0).sum() * self.dx
            if j1 == ny:
                hi = Hy[k][-1, :]
                inflow[k] += np.maximum(-hi, 0.0).sum() * self.dx
                outflow[k] += np.maximum(hi, 0.0).sum() * self.dx
        return inflow, outflow

    def _viscous_divergence(self, vx, vy, J, h, A, edges, m):
        """Raw fluid viscous divergences (X, Y) on the block's interior cells."""
        nx = self.nx
        vx = _extrapolate_edges(vx, edges, order=1)
        vy = _extrapolate_edges(vy, edges, order=1)
        # limited gradients on interior cells plus one surrounding ring
        er = slice(NG - 1, NG + m + 1)
        ec = slice(NG - 1, NG + nx + 1)

        def lim_grad(f):
            fx = limited_slope(f[er, NG - 1:NG + nx + 1] - f[er, NG - 2:NG + nx],
                               f[er, NG:NG + nx + 2] - f[er, NG - 1:NG + nx + 1]) / self.dx
            fy = limited_slope(f[NG - 1:NG + m + 1, ec] - f[NG - 2:NG + m, ec],
                               f[NG:NG + m + 2, ec] - f[NG - 1:NG + m + 1, ec]) / self.dy
            return fx, fy

        ax, ay = lim_grad(vx)
        bx, by = lim_grad(vy)
        jh = J[er, ec] * h[er, ec]
        A11, A12, A21, A22 = A[0, 0][er, ec], A[0, 1][er, ec], A[1, 0][er, ec], A[1, 1][er, ec]
        T1 = jh * (A11 * ax + A21 * ay)
        T2 = jh * ((A12 * ax + A21 * by) + (A22 * ay + A11 * bx))
        T3 = jh * (A12 * bx + A22 * by)
        # shift so NG-1 indexes the ghost ring again, then extrapolate it
        pad = ((NG - 1, NG - 1), (NG - 1, NG - 1))
        T = [_extrapolate_edges(np.pad(t, pad), edges, order=2) for t in (T1, T2, T3)]
        ri, ci = slice(NG, NG + m), slice(NG, NG + nx)

        def dxi(t):
            return (t[ri, NG + 1:NG + nx + 1] - t[ri, NG - 1:NG + nx - 1]) / (2.0 * self.dx)

        def deta(t):
            return (t[NG + 1:NG + m + 1, ci] - t[NG - 1:NG + m - 1, ci]) / (2.0 * self.dy)

        return np.stack([2.0 * dxi(T[0]) + deta(T[1]), 2.0 * deta(T[2]) + dxi(T[1])])

    def rhs(self, U):
        """Evaluate the spatial operator on every interior cell.

        Ghost layers of ``U`` must be filled. Returns ``(R, lam_max,
        inflow_rate, outflow_rate)``; ``R`` is a view reused on the next call.
        """
        parts = run_units(lambda lo, hi: self._rhs_block(U, lo, hi), self.units, self.backend)
        inflow = np.zeros(2)
        outflow = np.zeros(2)
        for i_rate, o_rate in parts:
            inflow += i_rate
            outflow += o_rate
        return self._R, reduce_max(self._speed, self.backend), inflow, outflow

    # -- time stepping ---------------------------------------------------------------

    def _friction_block(self, U_new, U_in, dt, j0, j1):
        """Capped Coulomb friction on rows ``[j0, j1)`` of ``U_new`` (interior-indexed views)."""
        p = self.params
        g = self._block_geometry(j0, j1)["cells"]
        J = g.J
        w_in = U_in[0, j0:j1]
        hs_in = w_in / J
        vs_in = phase_velocity(w_in, U_in[2:4, j0:j1], J, self.eps_h)
        kappa = physics.curvature_accel(g, vs_in[0], vs_in[1])
        pbs = physics.hydrostatic_terms(hs_in, U_in[1, j0:j1] / J, g.c, p, kappa).p_b_s
        q = U_new[2:4, j0:j1]
        v = phase_velocity(U_new[0, j0:j1], q, J, self.eps_h)
        vh = np.sqrt(v[0] * v[0] + v[1] * v[1])
        impulse = dt * J * pbs * p.tan_delta * vh / np.maximum(physics.speed3(g, v[0], v[1]), physics.SPEED_FLOOR)
        qn = np.sqrt(q[0] * q[0] + q[1] * q[1])
        keep = np.divide(qn - impulse, qn, out=np.zeros_like(qn), where=qn > impulse)
        q *= keep

    def _stage(self, U_base, U_in, R, dt, out, j0, j1, average_with=None):
        """``out = U_base + dt R`` on rows ``[j0, j1)``, then friction and (optional) averaging.

        Returns the clipped ``J |h|`` per phase.
        """
        if self.engine == "numpy":
            return self._stage_numpy(U_base, U_in, R, dt, out, j0, j1, average_with)
        from .kernels import stage_rows

        g = self.gp
        res = np.zeros(6)
        avg = out if average_with is None else average_with
        stage_rows(U_base, U_in, R, dt, out, avg, average_with is not None, g.J, g.c, g.n,
                   g.dn_dxi, g.dn_deta, j0, j1, self._prm, self.params.tan_delta,
                   physics.SPEED_FLOOR, res)
        if res[2] < -NEGATIVE_TOL:
            k, i, j = int(res[3]), int(res[4]), int(res[5])
            raise NumericalError(f"negative thickness {res[2]:.3e} in field {FIELDS[k]} at cell (i={i}, j={j})")
        return res[:2].copy()

    def _stage_numpy(self, U_base, U_in, R, dt, out, j0, j1, average_with=None):
        inner_cols = slice(NG, NG + self.nx)
        rows = slice(NG + j0, NG + j1)
        o = out[:, rows, inner_cols]
        o[...] = U_base[:, rows, inner_cols] + dt * R[:, j0:j1]
        self._friction_block(
            out[:, NG:NG + self.ny, inner_cols], U_in[:, NG:NG + self.ny, inner_cols], dt, j0, j1
        )
        if average_with is not None:
            o[...] = 0.5 * average_with[:, rows, inner_cols] + 0.5 * o
        J = self._block_geometry(j0, j1)["cells"].J
        return regularize_state(o, J, self.h_dry)

    def advance(self, U, t_s, dt=None, remaining=math.inf):
        """One modified-Euler step from ``t_s`` (seconds).

        If ``dt`` (scaled) is None it is chosen by the CFL rule, capped at
        ``remaining``. Returns ``(U_next, dt, budget)`` where ``budget`` holds the
        scaled inflow, outflow and clipped volumes of the step.
        """
        units, be = self.units, self.backend
        self.fill_ghosts(U, t_s)
        R1, lam_max, in1, out1 = self.rhs(U)
        if dt is None:
            dt = compute_dt(lam_max, self.dmin, self.cfl, remaining, self.dt_cap)
            if not math.isfinite(dt):  # dry domain with no output time ahead
                dt = self.dt_cap
        self.last_lam_max = lam_max
        U1 = U.copy()
        clip1 = sum(run_units(lambda lo, hi: self._stage(U, U, R1, dt, U1, lo, hi), units, be))
        self.fill_ghosts(U1, t_s + self.scaling.time_s(dt))
        R2, _, in2, out2 = self.rhs(U1)
        U2 = U1.copy()
        clip2 = sum(run_units(lambda lo, hi: self._stage(U1, U1, R2, dt, U2, lo, hi, average_with=U), units, be))
        self._check_finite(U2)
        area = self.cell_area
        budget = {
            "inflow": 0.5 * dt * (in1 + in2),
            "outflow": 0.5 * dt * (out1 + out2),
            "clipped": (0.5 * clip1 + clip2) * area,
        }
        return U2, dt, budget

    def _check_finite(self, U):
        Ui = U[(slice(None),) + self.interior]
        if not np.isfinite(Ui).all():
            k, j, i = np.argwhere(~np.isfinite(Ui))[0]
            raise NumericalError(f"non-finite value in field {FIELDS[k]} at cell (i={i}, j={j})")


def run_simulation(
    config: SimConfig,
    geom: TerrainGeometry,
    initial: MixtureState,
    hydrograph=None,
    backend: BackendConfig | None = None,
    on_snapshot=None,
    keep_snapshots=True,
    step_limit=None,
    engine="compiled",
):
    """Integrate from t = 0 to ``config.t_end`` seconds.

    A snapshot is emitted at t = 0, every multiple of ``dt_out`` and at
    ``t_end``; each is passed to ``on_snapshot`` and, with
    ``keep_snapshots``, collected in the returned list. With ``step_limit``
    the run stops early after that many steps, emitting a final snapshot at
    the time reached. Returns ``(snapshots, RunReport)``.
    """
    solver = Solver(
        geom,
        config.params,
        cfl=config.cfl,
        h_dry=config.h_dry,
        eps_h=config.eps_h,
        backend=backend,
        hydrograph=hydrograph,
        scaling=config.scaling,
        engine=engine,
    )
    sc = config.scaling
    U = solver.conserved(initial)
    report = RunReport()
    report.initial = sc.volume_m3(solver.phase_volumes(U))
    snapshots = []

    def emit(t_s, step):
        snap = solver.snapshot(U, t_s, step)
        if on_snapshot is not None:
            on_snapshot(snap)
        if keep_snapshots:
            snapshots.append(snap)

    out_times = _output_times(config.t_end, config.dt_out)
    t_scaled = 0.0
    step = 0
    started = time.perf_counter()
    emit(0.0, 0)
    for t_out in out_times:
        target = sc.time(t_out)
        while t_scaled < target:
            if step_limit is not None and step >= step_limit:
                break
            if config.max_steps is not None and step >= config.max_steps:
                raise NumericalError(f"max_steps={config.max_steps} reached at t={sc.time_s(t_scaled):.6g} s")
            remaining = target - t_scaled
            U, dt, budget = solver.advance(U, sc.time_s(t_scaled), remaining=remaining)
            t_scaled = target if dt >= remaining else t_scaled + dt
            step += 1
            report.injected += sc.volume_m3(budget["inflow"])
            report.outflow += sc.volume_m3(budget["outflow"])
            report.clipped += sc.volume_m3(budget["clipped"])
        if t_scaled < target:
            emit(sc.time_s(t_scaled), step)
            break
        emit(t_out, step)
        logger.info("t = %.6g s, step %d", t_out, step)
    report.wall_time = time.perf_counter() - started
    report.steps = step
    report.final = sc.volume_m3(solver.phase_volumes(U))
    return snapshots, report


def _output_times(t_end, dt_out):
    n = int(math.floor(t_end / dt_out + 1e-9))
    times = [k * dt_out for k in range(1, n + 1)]
    if not times or t_end - times[-1] > 1e-9 * max(1.0, t_end):
        times.append(t_end)
    return times
