"""Command-line entry point: ``liouvtraj --config run.cfg --mode both``.

Exit status is 0 on success, 1 for configuration errors and 2 for
numerical failures.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
import warnings
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
COMPARISON_HEADER = ["t", "rel_xi_peak", "rel_sigma_xi", "rel_sigma_eta"]
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="liouvtraj",
        description="Liouville-space trajectory propagation of a damped oscillator density matrix.",
    )
    ap.add_argument("--config", metavar="PATH", help="flat 'section.key = value' config file")
    ap.add_argument(
        "--set",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        dest="overrides",
        help="override one config key (repeatable)",
    )
    ap.add_argument("--mode", choices=("trajectory", "oracle", "both"), default="trajectory")
    ap.add_argument("--out-dir", metavar="PATH", help="output directory (overrides output.out_dir)")
    ap.add_argument("--seed", type=int, default=0, help="reserved; the dynamics is deterministic")
    ap.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
    ap.add_argument("--quiet", action="store_true", help="suppress progress output")
    return ap


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # noqa: BLE001
        return "unknown"


def _sample_times(cfg, n_steps):
    dt = cfg.stepping.dt_over_tau * cfg.params().tau
    every = cfg.output.record_every_steps
    steps = list(range(0, n_steps + 1, every))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return [k * dt for k in steps]


def run(cfg, mode: str, quiet: bool = True, seed: int = 0, threads=None) -> int:
    """Execute ``mode`` for a validated config and write all outputs."""
    from .errors import LiouvTrajError, NonGaussianWarning
    from .observables import (
        SNAPSHOT_HEADER,
        TIMESERIES_HEADER,
        TRAJECTORY_HEADER,
        record_rows,
        snapshot_rows,
        write_csv,
    )
    from .simulate import RunFailure, relative_differences, run_oracle, run_trajectory

    out = Path(cfg.output.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: config: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def log(msg):
        if not quiet:
            print(msg, file=sys.stderr, flush=True)

    p, ic = cfg.params(), cfg.initial_condition()
    ctl = cfg.step_control()
    t_end = cfg.stepping.t_end_over_tau * p.tau
    n_steps = int(round(t_end / ctl.dt))
    every = max(1, n_steps // 20)

    def progress(ens):
        if ens.step_count % every == 0:
            log(f"trajectory: step {ens.step_count}/{n_steps} t/tau={ens.t / p.tau:.4f}")

    started = time.perf_counter()
    traj = oracle_records = None
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NonGaussianWarning)
            if mode in ("trajectory", "both"):
                traj = run_trajectory(
                    p,
                    ic,
                    cfg.grid_spec(),
                    ctl,
                    cfg.remesh_policy(),
                    t_end,
                    economy=cfg.remesh.economy_mode,
                    record_every=cfg.output.record_every_steps,
                    snapshot_every=cfg.output.snapshot_every_steps,
                    progress=progress,
                )
                write_csv(out / "timeseries.csv", TIMESERIES_HEADER, record_rows(traj.records))
                write_csv(out / "trajectories.csv", TRAJECTORY_HEADER, traj.diagonal)
                for n, ens in traj.snapshots:
                    write_csv(out / f"snapshot_{n}.csv", SNAPSHOT_HEADER, snapshot_rows(ens))
        n_warn = sum(issubclass(w.category, NonGaussianWarning) for w in caught)
        if n_warn:
            log(f"warning: {n_warn} recorded states deviate from a Gaussian; widths are approximate")
        if mode in ("oracle", "both") or cfg.oracle.enabled:
            times = [r.t for r in traj.records] if traj else _sample_times(cfg, n_steps)
            log(f"oracle: {cfg.oracle.nx}x{cfg.oracle.ny} grid, {len(times)} samples")
            oracle_records = run_oracle(p, ic, times, cfg.oracle.nx, cfg.oracle.box_over_sigma0)
            name = "timeseries.csv" if traj is None else "oracle_timeseries.csv"
            write_csv(out / name, TIMESERIES_HEADER, record_rows(oracle_records))
        if traj is not None and oracle_records is not None:
            rows = relative_differences(traj.records, oracle_records, p.sigma0)
            write_csv(out / "comparison.csv", COMPARISON_HEADER, rows)
    except RunFailure as exc:
        print(f"error: {exc.module}: step {exc.step_count}: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERIC
    except LiouvTrajError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    manifest = {
        "config": cfg.flat(),
        "mode": mode,
        "seed": seed,
        "threads": threads,
        "version": _version(),
        "python": platform.python_version(),
        "wall_time_s": time.perf_counter() - started,
        "derived": {
            "tau": p.tau,
            "sigma0": p.sigma0,
            "lambda": p.lam,
            "dt": ctl.dt,
            "n_steps": n_steps,
        },
    }
    with open(out / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    log(f"wrote outputs to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: config: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    from .config import parse_config
    from .errors import ConfigError

    overrides = list(args.overrides)
    if args.out_dir:
        overrides.append(f"output.out_dir={args.out_dir}")
    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: config: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.mode, quiet=args.quiet, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
