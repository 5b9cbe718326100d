"""Property checks on synthetic scenarios.

Each check returns a :class:`CheckResult` carrying the measured value and the
tolerance it is judged against.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import scenarios
from .parallel import BackendConfig
from .physics import ModelParams
from .solver import SimConfig, Solver, run_simulation


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    detail: dict = field(default_factory=dict)
    higher_is_better: bool = False

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value >= self.tolerance if self.higher_is_better else self.value < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        op = ">=" if self.higher_is_better else "<"
        return f"{status} {self.name}: {self.value:.3e} (require {op} {self.tolerance:.0e})"


def run_steps(scn: scenarios.Scenario, steps: int, backend=None, engine="compiled", t_end=1e9, dt_out=None):
    """Run ``scn`` for exactly ``steps`` steps (unless ``t_end`` comes first)."""
    config = SimConfig(params=scn.params, scaling=scn.scaling, t_end=t_end, dt_out=dt_out or t_end)
    return run_simulation(
        config, scn.geom, scn.initial, hydrograph=scn.hydrograph, backend=backend, step_limit=steps, engine=engine
    )


def solver_for(scn: scenarios.Scenario, backend=None, engine="compiled", **kwargs) -> Solver:
    return Solver(scn.geom, scn.params, backend=backend, hydrograph=scn.hydrograph, scaling=scn.scaling,
                  engine=engine, **kwargs)


def conservation(n=200, steps=1000, backend=None) -> CheckResult:
    """Closed-bowl release: relative per-phase mass drift after ``steps`` steps."""
    scn = scenarios.closed_bowl(n)
    started = time.perf_counter()
    _, report = run_steps(scn, steps, backend)
    wall = time.perf_counter() - started
    drift = float(np.max(report.relative_drift))
    return CheckResult(
        "conservation", drift, 1e-10,
        {"steps": report.steps, "wall_time_s": wall, "outflow_m3": report.outflow.tolist(),
         "mass_audit_m3": report.mass_audit.tolist(), "clipped_m3": report.clipped.tolist(),
         "cells": n * n},
    )


def quiescence(n=32, steps=1000, backend=None) -> CheckResult:
    """Still pond on flat ground: largest speed (m/s) reached in ``steps`` steps."""
    scn = scenarios.flat_pond(n)
    solver = solver_for(scn, backend)
    U = solver.conserved(scn.initial)
    peak = 0.0
    for _ in range(steps):
        U, _, _ = solver.advance(U, 0.0)
        vs, vf = solver.velocities(U)
        peak = max(peak, float(np.abs(vs).max()), float(np.abs(vf).max()))
    peak_ms = scn.scaling.velocity_ms(peak)
    return CheckResult("quiescence", peak_ms, 1e-12, {"steps": steps})


def transpose_asymmetry(U, ng=3) -> float:
    """Largest mismatch between the state and its X/Y mirror image."""
    Ui = U[:, ng:-ng, ng:-ng]
    pairs = [(0, 0), (1, 1), (2, 3), (3, 2), (4, 5), (5, 4)]
    return max(float(np.abs(Ui[a] - Ui[b].T).max()) for a, b in pairs)


def symmetry(n=64, steps=100, backend=None) -> CheckResult:
    """Diagonal release on mirror-symmetric terrain: asymmetry after ``steps`` steps."""
    scn = scenarios.symmetric_release(n)
    solver = solver_for(scn, backend)
    U = solver.conserved(scn.initial)
    worst = 0.0
    for _ in range(steps):
        U, _, _ = solver.advance(U, 0.0)
        worst = max(worst, transpose_asymmetry(U))
    return CheckResult("symmetry", worst, 1e-12, {"steps": steps})


def inflow_bookkeeping(t_end=30.0, backend=None) -> CheckResult:
    """Hydrograph-fed channel: |initial + injected - outflow - final| / injected."""
    scn = scenarios.inflow_channel()
    config = SimConfig(params=scn.params, scaling=scn.scaling, mode="inflow-hydrograph", t_end=t_end,
                       dt_out=t_end / 4)
    _, report = run_simulation(config, scn.geom, scn.initial, hydrograph=scn.hydrograph, backend=backend)
    rel = float(np.max(np.abs(report.mass_audit) / np.maximum(report.injected, np.finfo(float).tiny)))
    return CheckResult(
        "inflow-bookkeeping", rel, 1e-6,
        {"steps": report.steps, "injected_m3": report.injected.tolist(), "outflow_m3": report.outflow.tolist(),
         "final_m3": report.final.tolist(), "clipped_m3": report.clipped.tolist()},
    )


SUITES = {
    "conservation": ("conservation", "quiescence"),
    "symmetry": ("symmetry",),
    "inflow": ("inflow-bookkeeping",),
}
SUITES["all"] = SUITES["conservation"] + SUITES["symmetry"] + SUITES["inflow"]

CHECKS = {
    "conservation": conservation,
    "quiescence": quiescence,
    "symmetry": symmetry,
    "inflow-bookkeeping": inflow_bookkeeping,
}


def restrict(U, factor):
    """Block averages of the interior fields over ``factor x factor`` cells."""
    k, ny, nx = U.shape
    return U.reshape(k, ny // factor, factor, nx // factor, factor).mean(axis=(2, 4))


def convergence_order(n0=32, levels=3, t_end_s=2.0, params=None, backend=None):
    """L1 self-convergence order of the incline-hump release.

    Runs grids ``n0 * 2**k`` to the same time and compares successive
    solutions after averaging the finer one onto the coarser grid. Returns
    ``(orders, errors, wall_time)``.
    """
    params = params or ModelParams()
    finals = []
    started = time.perf_counter()
    for k in range(levels):
        scn = scenarios.incline_hump(n0 * 2**k, params=params)
        solver = solver_for(scn, backend)
        U = solver.conserved(scn.initial)
        target = scn.scaling.time(t_end_s)
        t = 0.0
        while t < target:
            U, dt, _ = solver.advance(U, 0.0, remaining=target - t)
            t = target if dt >= target - t else t + dt
        finals.append(U[:, 3:-3, 3:-3].copy())
    errors = []
    for k in range(levels - 1):
        coarse, fine = finals[k], finals[k + 1]
        cell = (64.0 / coarse.shape[-1]) ** 2
        errors.append(float(np.abs(restrict(fine, 2) - coarse)[:2].sum() * cell))
    orders = [math.log2(errors[k] / errors[k + 1]) for k in range(len(errors) - 1)]
    return orders, errors, time.perf_counter() - started


def source_oracle(t_end=1.0, backend=None, params=None, **state):
    """Uniform moving layer vs a tight single-cell ODE integration of drag and friction.

    Returns ``(relative_error, solver_velocities, oracle_velocities)`` at
    scaled time ``t_end``; velocities ordered ``(vs_x, vs_y, vf_x, vf_y)``.
    """
    from scipy.integrate import solve_ivp

    params = params or ModelParams()
    scn = scenarios.uniform_state(params=params, **state)
    solver = solver_for(scn, backend)
    U = solver.conserved(scn.initial)
    t = 0.0
    while t < t_end:
        U, dt, _ = solver.advance(U, 0.0, remaining=t_end - t)
        t = t_end if dt >= t_end - t else t + dt
    vs, vf = solver.velocities(U)
    got = np.array([vs[0].mean(), vs[1].mean(), vf[0].mean(), vf[1].mean()])

    hs = float(scn.initial.hs[0, 0])
    hf = float(scn.initial.hf[0, 0])
    h = hs + hf
    a = params.alpha_rho
    drag = params.C_d * (hs / h) * (hf / h) * h
    pbs = hs * (1.0 - a)

    def rhs(_, y):
        us, uf = y[:2], y[2:]
        d = drag * (uf - us)
        speed = math.hypot(us[0], us[1])
        fric = -pbs * params.tan_delta * us / speed if speed > 0 else np.zeros(2)
        dus = (a * d + fric) / hs
        duf = (-d - (hf / h) * h * params.fluid_friction_rate * uf) / hf
        return np.concatenate([dus, duf])

    y0 = np.concatenate([scn.initial.qs[:, 0, 0] / hs, scn.initial.qf[:, 0, 0] / hf])
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    want = sol.y[:, -1]
    rel = float(np.max(np.abs(got - want)) / np.max(np.abs(want)))
    return rel, got, want


def bench_backend(kind, lanes):
    return BackendConfig(kind, lanes) if kind == "parallel" else BackendConfig()
