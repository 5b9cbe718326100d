"""Pointwise closure of the depth-averaged grain-fluid mixture equations.

Every function here is pure and vectorized: arguments may be scalars or
arrays of a common shape. Vector quantities carry their components on the
leading axis. All variables are dimensionless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

# floor on |v| inside the Coulomb direction v/|v|
SPEED_FLOOR = 1e-8

FLUID_PRESSURE_WEIGHTS = ("phi_f", "phi_s")


@dataclass(frozen=True)
class ModelParams:
    """Material and model constants. Defaults reproduce the application set."""

    delta_b: float = 16.0  # basal friction angle, degrees
    C_d: float = 6.0  # interphase drag coefficient
    N_R: float = 268.0  # viscosity number
    theta_b: float = 5.0  # fluid basal friction coefficient
    phi_s0: float = 0.5  # solid fraction of released / inflowing material
    alpha_rho: float = 0.4  # rho_f / rho_s
    epsilon: float = 1.0  # aspect ratio H / L
    chi: float = 1.0  # exponent on epsilon in the curvature correction
    # Weight on the fluid-side pressure-gradient source. "phi_f" is the form
    # the model equations are usually printed with; "phi_s" makes it the exact
    # reaction of the solid buoyancy term.
    fluid_pressure_weight: str = "phi_f"

    def __post_init__(self):
        checks = [
            (0.0 <= self.delta_b < 90.0, "delta_b must lie in [0, 90) degrees"),
            (self.C_d >= 0.0, "C_d must be >= 0"),
            (self.N_R > 0.0, "N_R must be > 0"),
            (self.theta_b >= 0.0, "theta_b must be >= 0"),
            (0.0 <= self.phi_s0 <= 1.0, "phi_s0 must lie in [0, 1]"),
            (0.0 < self.alpha_rho <= 1.0, "alpha_rho must lie in (0, 1]"),
            (self.epsilon > 0.0, "epsilon must be > 0"),
            (math.isfinite(self.chi), "chi must be finite"),
            (self.fluid_pressure_weight in FLUID_PRESSURE_WEIGHTS,
             f"fluid_pressure_weight must be one of {FLUID_PRESSURE_WEIGHTS}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @property
    def tan_delta(self) -> float:
        return math.tan(math.radians(self.delta_b))

    @property
    def curvature_factor(self) -> float:
        return self.epsilon ** self.chi

    @property
    def fluid_friction_rate(self) -> float:
        return self.theta_b / (self.epsilon * self.N_R)


@dataclass
class PhaseTerms:
    N_bar_s: np.ndarray
    p_bar_f: np.ndarray
    p_b_s: np.ndarray
    p_b_f: np.ndarray
    kappa_s: np.ndarray
    kappa_f: np.ndarray


def solid_fraction(hs, hf):
    """``hs / h`` with 0 where the mixture has no thickness."""
    hs = np.asarray(hs, dtype=float)
    h = hs + hf
    return np.divide(hs, h, out=np.zeros(np.broadcast(hs, h).shape), where=h > 0.0)


def hydrostatic_terms(hs, hf, c, params: ModelParams, kappa_s=0.0, kappa_f=0.0) -> PhaseTerms:
    """Depth-averaged and basal pressures of both phases.

    Basal pressures are clamped at zero so strong convex curvature cannot
    turn basal friction into a driving force.
    """
    hs = np.asarray(hs, dtype=float)
    hf = np.asarray(hf, dtype=float)
    a = params.alpha_rho
    h = hs + hf
    curv = params.curvature_factor
    return PhaseTerms(
        N_bar_s=c * (1.0 - a) * hs / 2.0,
        p_bar_f=c * h / 2.0,
        p_b_s=np.maximum(hs * (c * (1.0 - a) - curv * kappa_s), 0.0),
        p_b_f=np.maximum(hf * (c - curv * kappa_f), 0.0),
        kappa_s=np.asarray(kappa_s, dtype=float),
        kappa_f=np.asarray(kappa_f, dtype=float),
    )


def normal_velocity(geom, vx, vy):
    """Z-component that keeps (vx, vy, vz) tangent to the bed."""
    n = geom.n
    return -(n[0] * vx + n[1] * vy) / n[2]


def curvature_accel(geom, vx, vy):
    """Centripetal acceleration from bed curvature for velocity (vx, vy).

    With projection-aligned axes the xi/eta velocity components equal the
    X/Y ones.
    """
    vz = normal_velocity(geom, vx, vy)
    dxi, deta = geom.dn_dxi, geom.dn_deta
    return (
        vx * (dxi[0] * vx + deta[0] * vy)
        + vy * (dxi[1] * vx + deta[1] * vy)
    ) + vz * (dxi[2] * vx + deta[2] * vy)


def speed3(geom, vx, vy):
    vz = normal_velocity(geom, vx, vy)
    return np.sqrt((vx * vx + vy * vy) + vz * vz)


def directional_flux(jhk, vn, vt, jac, h, a_nn, a_nt, pressure, eps):
    """Mass and momentum flux of one phase through a face with normal ``n``.

    ``vn`` is the velocity component along the face normal, ``vt`` the other
    horizontal component; ``a_nn``/``a_nt`` the matching inverse-transform
    entries. Returns ``(mass, mom_n, mom_t)``.
    """
    mass = jhk * vn
    p = eps * jac * h * pressure
    return mass, mass * vn + p * a_nn, mass * vt + p * a_nt


def phase_fluxes(hk, h, vx, vy, geom, pressure, eps=1.0):
    """Momentum fluxes ``F`` (xi direction) and ``G`` (eta direction).

    ``pressure`` is ``N_bar_s`` for the solid phase and ``p_bar_f`` for the
    fluid phase. Both results have shape ``(2, ...)`` = (X, Y) components.
    """
    jhk = geom.J * hk
    A = geom.A
    _, fx, fy = directional_flux(jhk, vx, vy, geom.J, h, A[0, 0], A[0, 1], pressure, eps)
    _, gy, gx = directional_flux(jhk, vy, vx, geom.J, h, A[1, 1], A[1, 0], pressure, eps)
    return np.stack(np.broadcast_arrays(fx, fy)), np.stack(np.broadcast_arrays(gx, gy))


def mass_fluxes(hk, vx, vy, geom):
    jhk = geom.J * hk
    return jhk * vx, jhk * vy


def pressure_gradient_source(geom, grad_xi, grad_eta):
    """``A^T`` applied to the gradient of ``J h p_bar_f``; shape (2, ...)."""
    A = geom.A
    return np.stack(
        np.broadcast_arrays(A[0, 0] * grad_xi + A[1, 0] * grad_eta, A[0, 1] * grad_xi + A[1, 1] * grad_eta)
    )


def drag_force(hs, hf, vs, vf, geom, params: ModelParams):
    """Shared drag factor ``J c_D phi_s phi_f h (v_f - v_s)``.

    The solid receives ``alpha * D`` and the fluid ``-D``, so the pair
    cancels exactly in the density-weighted mixture momentum.
    """
    hs = np.asarray(hs, dtype=float)
    h = hs + hf
    phi_s = solid_fraction(hs, hf)
    phi_f = solid_fraction(hf, hs)
    coef = geom.J * params.C_d * phi_s * phi_f * h
    return coef * (np.asarray(vf) - np.asarray(vs))


def coulomb_friction(p_b_s, vx, vy, geom, params: ModelParams):
    """Basal Coulomb friction on the solid, opposing its tangential motion."""
    mag = -geom.J * p_b_s * params.tan_delta / np.maximum(speed3(geom, vx, vy), SPEED_FLOOR)
    return np.stack(np.broadcast_arrays(mag * vx, mag * vy))


def source_terms(hs, hf, vs, vf, geom, params: ModelParams, terms: PhaseTerms, grad_p, vis=None):
    """Individual momentum source terms of both phases, keyed by name.

    ``grad_p`` is (d/dxi, d/deta) of ``J h p_bar_f``; ``vis`` the two raw
    viscous divergences (before the ``eps phi_f / N_R`` factor).
    """
    hs = np.asarray(hs, dtype=float)
    hf = np.asarray(hf, dtype=float)
    vs = np.asarray(vs, dtype=float)
    vf = np.asarray(vf, dtype=float)
    eps = params.epsilon
    a = params.alpha_rho
    h = hs + hf
    phi_s = solid_fraction(hs, hf)
    phi_f = solid_fraction(hf, hs)
    nxy = geom.n[:2]
    jac = geom.J

    dp = pressure_gradient_source(geom, grad_p[0], grad_p[1])
    drag = drag_force(hs, hf, vs, vf, geom, params)
    weight = phi_f if params.fluid_pressure_weight == "phi_f" else phi_s

    out = {
        "n_s": jac * terms.p_b_s * nxy,
        "d_s": coulomb_friction(terms.p_b_s, vs[0], vs[1], geom, params),
        "f_s": -eps * a * phi_s * dp,
        "v_s": a * drag,
        "n_f": jac * terms.p_b_f * nxy,
        "d_f": -(jac * phi_f * h * params.fluid_friction_rate) * vf,
        "f_f": eps * weight * dp,
        "v_f": -drag,
    }
    if vis is None:
        out["vis_f"] = np.zeros_like(out["v_f"])
    else:
        out["vis_f"] = (eps * phi_f / params.N_R) * np.asarray(vis)
    return out


def momentum_sources(hs, hf, vs, vf, geom, params, terms, grad_p, vis=None, include_coulomb=True):
    """Summed momentum sources ``(S_s, S_f)``, each of shape (2, ...)."""
    t = source_terms(hs, hf, vs, vf, geom, params, terms, grad_p, vis)
    s_s = t["n_s"] + t["f_s"] + t["v_s"]
    if include_coulomb:
        s_s = s_s + t["d_s"]
    s_f = t["n_f"] + t["f_f"] + t["d_f"] + t["v_f"] + t["vis_f"]
    return s_s, s_f


def pressure_wave_speed(hs, hf, c, params: ModelParams):
    """Gravity-wave part of the signal speed.

    Spectral radius of the pressure Jacobian of the coupled fluxes,
    ``d(h N_bar_s, h p_bar_f) / d(hs, hf)``. Reduces to ``sqrt(eps c h)`` for
    a pure fluid and exceeds it whenever solid is present.
    """
    hs = np.asarray(hs, dtype=float)
    h = hs + hf
    k = 1.0 - params.alpha_rho
    m11 = k * (h + hs) / 2.0
    m12 = k * hs / 2.0
    tr = m11 + h
    det = h * (m11 - m12)
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    mu = (tr + disc) / 2.0
    return np.sqrt(params.epsilon * c * mu)


def wave_speed_bound(hs, hf, vs, vf, c, params: ModelParams, h_dry=0.0):
    """Upper bounds ``(lam_xi, lam_eta)`` on local signal speeds; 0 on dry cells."""
    hs = np.asarray(hs, dtype=float)
    hf = np.asarray(hf, dtype=float)
    vs = np.asarray(vs, dtype=float)
    vf = np.asarray(vf, dtype=float)
    wet = (hs + hf) > h_dry
    cw = pressure_wave_speed(hs, hf, c, params)
    lam_xi = np.maximum(np.abs(vs[0]), np.abs(vf[0])) + cw
    lam_eta = np.maximum(np.abs(vs[1]), np.abs(vf[1])) + cw
    return np.where(wet, lam_xi, 0.0), np.where(wet, lam_eta, 0.0)
