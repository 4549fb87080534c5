"""Run loops for the trajectory engine and the Eulerian oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import StepControl, step
from .errors import LiouvTrajError
from .model import Ensemble, GridSpec, InitialCondition, PhysicalParams, init_ensemble
from .observables import MomentRecord, diagonal_rows, moment_record
from .oracle import make_oracle_grid, oracle_advance, oracle_moments
from .remesh import RemeshPolicy, remesh, should_remesh


class RunFailure(LiouvTrajError):
    """A numerical failure tagged with the module and step where it happened."""

    def __init__(self, module, step_count, cause):
        self.module = module
        self.step_count = step_count
        self.cause = cause
        super().__init__(f"{module} failed at step {step_count}: {type(cause).__name__}: {cause}")


@dataclass
class TrajectoryRun:
    records: list = field(default_factory=list)
    diagonal: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final: Ensemble | None = None


def run_trajectory(
    params: PhysicalParams,
    ic: InitialCondition,
    grid: GridSpec,
    ctl: StepControl,
    policy: RemeshPolicy,
    t_end: float,
    economy: bool = True,
    record_every: int = 1,
    snapshot_every: int = 0,
    keep_snapshots: bool = False,
    progress=None,
) -> TrajectoryRun:
    """Propagate the ensemble to ``t_end`` recording moments and diagonal rows."""
    ens = init_ensemble(params, ic, grid, economy=economy, eta_guard=policy.eta_guard)
    run = TrajectoryRun()
    run.records.append(moment_record(ens))
    run.diagonal.extend(diagonal_rows(ens))
    if snapshot_every:
        run.snapshots.append((0, ens))
    n_steps = int(round(t_end / ctl.dt)) if ctl.dt > 0 else 0
    for _ in range(n_steps):
        try:
            ens = step(ens, ctl)
        except Exception as exc:  # noqa: BLE001 - re-tagged for the CLI
            raise RunFailure("dynamics", ens.step_count + 1, exc) from exc
        recording = ens.step_count % record_every == 0 or ens.step_count == n_steps
        if should_remesh(ens, policy):
            try:
                new = remesh(ens, policy, ctl.fit)
            except Exception as exc:  # noqa: BLE001
                raise RunFailure("remesh", ens.step_count, exc) from exc
            if recording and new.traj_epoch != ens.traj_epoch:
                # close the retiring trajectories at this time
                run.diagonal.extend(diagonal_rows(ens))
            ens = new
        if recording:
            run.diagonal.extend(diagonal_rows(ens))
            try:
                run.records.append(moment_record(ens))
            except Exception as exc:  # noqa: BLE001
                raise RunFailure("observables", ens.step_count, exc) from exc
            if progress is not None:
                progress(ens)
        if snapshot_every and ens.step_count % snapshot_every == 0:
            run.snapshots.append((ens.step_count, ens))
    run.final = ens
    return run


def run_oracle(params: PhysicalParams, ic: InitialCondition, times, n=81, box=6.0) -> list:
    """Eulerian oracle moments at the requested times (ascending, starting at 0)."""
    grid = make_oracle_grid(params, ic, n, box)
    out = []
    for i, t in enumerate(times):
        try:
            grid = oracle_advance(grid, params, t)
        except Exception as exc:  # noqa: BLE001
            raise RunFailure("oracle", i, exc) from exc
        out.append(MomentRecord(t, *oracle_moments(grid)))
    return out


def relative_differences(traj: list, ref: list, length_floor: float) -> list:
    """Per-time relative differences (t, d_xi_peak, d_sigma_xi, d_sigma_eta).

    The peak difference is normalised by max(|ref peak|, length_floor) since the
    peak passes through zero.
    """
    rows = []
    for a, b in zip(traj, ref):
        rows.append(
            (
                b.t,
                abs(a.xi_peak - b.xi_peak) / max(abs(b.xi_peak), length_floor),
                abs(a.sigma_xi - b.sigma_xi) / b.sigma_xi,
                abs(a.sigma_eta - b.sigma_eta) / b.sigma_eta,
            )
        )
    return rows


def half_time(ts, values, target) -> float:
    """First time at which ``values`` covers half the distance from values[0] to target."""
    values = np.asarray(values)
    ts = np.asarray(ts)
    d = (values - values[0]) / (target - values[0])
    above = np.flatnonzero(d >= 0.5)
    if len(above) == 0:
        return np.inf
    i = above[0]
    if i == 0:
        return float(ts[0])
    # linear interpolation between the bracketing samples
    f = (0.5 - d[i - 1]) / (d[i] - d[i - 1])
    return float(ts[i - 1] + f * (ts[i] - ts[i - 1]))
