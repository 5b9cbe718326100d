"""Command-line interface: ``run``, ``bench`` and ``validate``.

Exit codes: 0 success, 2 configuration or input-format error, 3 file I/O
error, 4 numerical abort, 5 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io, scenarios, validation
from .exceptions import ConfigError, GridFormatError, KernelError, NumericalError
from .parallel import BackendConfig
from .solver import MixtureState, Solver, run_simulation
from .terrain import compute_geometry, load_dem

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4
EXIT_VALIDATION = 5

DEFAULT_MESHES = (10_000, 50_000, 100_000, 250_000, 500_000, 1_000_000)
BENCH_FIELDS = ("mesh_count", "backend", "lanes", "wall_s", "speedup")

logger = logging.getLogger("debris2p")


def _backend(args) -> BackendConfig:
    if args.backend == "parallel":
        return BackendConfig("parallel", args.lanes or os.cpu_count() or 1, args.chunk)
    return BackendConfig("serial", 1, args.chunk)


def cmd_run(args) -> int:
    config, params = io.parse_par_list(args.par_list)
    dem = load_dem(config.dem)
    geom = compute_geometry(dem, config.scaling)
    hydrograph = None
    if config.mode == "inflow-hydrograph":
        hydrograph = io.load_hydrograph(config.hydrograph, dem)
    if config.init is not None:
        velocity = (config.init_vx, config.init_vy) if config.init_vx is not None else None
        initial = io.load_initial_state(config.init, dem, params, config.scaling, velocity, geom)
    else:
        initial = MixtureState.zeros(dem.shape)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def on_snapshot(snap):
        io.write_snapshot(snap, dem, out_dir)
        io.write_contour_csv(snap, dem, out_dir)
        if args.figures:
            from .plotting import plot_snapshot

            plot_snapshot(snap, dem, out_dir / f"h_t{io.time_tag(snap.t)}.png")
        logger.info("wrote snapshot t=%s s (step %d)", io.time_tag(snap.t), snap.step_index)

    backend = _backend(args)
    _, report = run_simulation(config, geom, initial, hydrograph=hydrograph, backend=backend,
                               on_snapshot=on_snapshot, keep_snapshots=False)
    io.write_run_report(report, out_dir / "run_report.json", backend=backend.kind, lanes=backend.workers,
                        mode=config.mode)
    print(f"steps: {report.steps}")
    print(f"wall time: {report.wall_time:.3f} s")
    print(f"mass audit (m^3, solid/fluid): {report.mass_audit[0]:.6e} {report.mass_audit[1]:.6e}")
    print(f"clipped (m^3, solid/fluid): {report.clipped[0]:.6e} {report.clipped[1]:.6e}")
    print(f"output: {out_dir}")
    return EXIT_OK


def compute_speedups(rows):
    """Fill ``speedup`` = serial wall time / row wall time for the same mesh count."""
    serial = {r["mesh_count"]: r["wall_s"] for r in rows if r["backend"] == "serial"}
    for r in rows:
        ref = serial.get(r["mesh_count"])
        r["speedup"] = ref / r["wall_s"] if ref is not None and r["wall_s"] > 0 else float("nan")
    return rows


def time_steps(scn, backend, steps, repeats, dt) -> float:
    """Mean wall time of ``steps`` fixed-``dt`` steps over ``repeats`` runs (no I/O)."""
    solver = Solver(scn.geom, scn.params, backend=backend, scaling=scn.scaling)
    U0 = solver.conserved(scn.initial)
    solver.advance(U0.copy(), 0.0, dt=dt)  # warm-up, excluded from timing
    times = []
    for _ in range(repeats):
        U = U0.copy()
        started = time.perf_counter()
        for _ in range(steps):
            U, _, _ = solver.advance(U, 0.0, dt=dt)
        times.append(time.perf_counter() - started)
    return float(np.mean(times))


def write_bench_csv(rows, path, note=""):
    with open(path, "w", newline="") as fh:
        if note:
            fh.write(f"# {note}\n")
        writer = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (f"{r[k]:.6f}" if isinstance(r[k], float) else r[k]) for k in BENCH_FIELDS})


def cmd_bench(args) -> int:
    meshes = [int(m) for m in args.meshes.split(",")] if args.meshes else list(DEFAULT_MESHES)
    lanes = args.lanes or os.cpu_count() or 1
    backends = [("serial", 1)] + ([("parallel", lanes)] if not args.serial_only else [])
    rows = []
    for mesh in meshes:
        scn = scenarios.bench_incline(mesh)
        for kind, n_lanes in backends:
            backend = BackendConfig(kind, n_lanes, args.chunk)
            wall = time_steps(scn, backend, args.steps, args.repeats, args.dt)
            rows.append({"mesh_count": mesh, "backend": kind, "lanes": backend.workers, "wall_s": wall})
            print(f"{mesh:>9d} cells  {kind:<8s} lanes={backend.workers:<3d} {wall:10.3f} s", flush=True)
    compute_speedups(rows)
    out = Path(args.out or os.environ.get(io.OUTPUT_DIR_ENV) or "bench")
    out.mkdir(parents=True, exist_ok=True)
    note = f"fixed dt={args.dt} (scaled), steps={args.steps}, repeats={args.repeats}, mean wall time, no file I/O"
    write_bench_csv(rows, out / "bench.csv", note)
    from .plotting import plot_bench

    plot_bench(rows, out / "bench.png")
    print(f"wrote {out / 'bench.csv'} and {out / 'bench.png'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    names = validation.SUITES[args.suite]
    backend = _backend(args)
    failed = []
    for name in names:
        result = validation.CHECKS[name](backend=backend)
        print(result.line(), flush=True)
        if not result.passed:
            failed.append(name)
    if failed:
        print(f"failed checks: {', '.join(failed)}")
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="debris2p", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def backend_flags(p):
        p.add_argument("--backend", choices=("serial", "parallel"), default="serial")
        p.add_argument("--lanes", type=int, default=None, help="worker threads (parallel backend)")
        p.add_argument("--chunk", type=int, default=4096, help="cells per work unit")

    p_run = sub.add_parser("run", help="run a simulation from a par_list file")
    p_run.add_argument("par_list")
    backend_flags(p_run)
    p_run.add_argument("--figures", action="store_true", help="also write a thickness map PNG per snapshot")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="time fixed-step runs over a range of mesh counts")
    p_bench.add_argument("--meshes", default=None, help="comma-separated mesh counts")
    p_bench.add_argument("--steps", type=int, default=10_000)
    p_bench.add_argument("--repeats", type=int, default=3)
    p_bench.add_argument("--lanes", type=int, default=None)
    p_bench.add_argument("--chunk", type=int, default=4096)
    p_bench.add_argument("--dt", type=float, default=1e-3, help="fixed scaled time step")
    p_bench.add_argument("--serial-only", action="store_true")
    p_bench.add_argument("--out", default=None, help="output directory")
    p_bench.set_defaults(func=cmd_bench)

    p_val = sub.add_parser("validate", help="run built-in property checks")
    p_val.add_argument("--suite", choices=tuple(validation.SUITES), default="all")
    backend_flags(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if getattr(args, "lanes", None) is not None and args.lanes < 1:
            raise ConfigError("--lanes must be >= 1")
        return args.func(args)
    except (ConfigError, GridFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, KernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
