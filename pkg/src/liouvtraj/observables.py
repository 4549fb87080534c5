"""Trace, purity, Gaussian widths and trajectory tables for an ensemble."""
from __future__ import annotations

import csv
import warnings
from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import MissingDiagonal, NonGaussianWarning
from .model import SQRT2, Ensemble

TIMESERIES_HEADER = ["t", "xi_peak", "sigma_xi", "sigma_eta", "trace", "purity"]
TRAJECTORY_HEADER = ["traj_id", "t", "xi", "eta", "g", "v_xi", "v_eta"]
SNAPSHOT_HEADER = ["xi", "eta", "g", "A", "v_xi", "v_eta", "q_pot"]


@dataclass
class MomentRecord:
    t: float
    xi_peak: float
    sigma_xi: float
    sigma_eta: float
    trace: float
    purity: float


def _diagonal(ens: Ensemble):
    r = ens.diag_row
    if not np.all(ens.eta[r] == 0.0):
        raise MissingDiagonal("ensemble row %d is not on eta = 0" % r)
    return ens.xi[r], ens.g[r], ens.alive[r]


def trace(ens: Ensemble) -> float:
    """(1/sqrt 2) int exp(g(xi, 0)) dxi by the trapezoid rule on the diagonal points."""
    xi, g, alive = _diagonal(ens)
    f = np.exp(np.where(alive, g, -np.inf))
    order = np.argsort(xi, kind="stable")
    return float(np.trapezoid(f[order], xi[order]) / SQRT2)


def _cell_areas(ens: Ensemble):
    """Trapezoid weights times the local Jacobian of the logical grid."""
    xi, eta = ens.xi, ens.eta
    dxi_i, dxi_j = np.gradient(xi)
    deta_i, deta_j = np.gradient(eta)
    jac = np.abs(dxi_j * deta_i - dxi_i * deta_j)
    w_r = np.ones(xi.shape[0])
    w_r[[0, -1]] = 0.5
    w_c = np.ones(xi.shape[1])
    w_c[[0, -1]] = 0.5
    return jac * w_r[:, None] * w_c[None, :]


def purity(ens: Ensemble) -> float:
    """Tr rho^2 = int int exp(2g) dxi deta over the (full) grid."""
    full = ens.full()
    f = np.exp(np.where(full.alive, 2.0 * full.g, -np.inf))
    return float(np.sum(f * _cell_areas(full)))


@dataclass
class WidthFit:
    xi_peak: float
    sigma_xi: float
    sigma_eta: float
    residual: float

    def __iter__(self):
        return iter((self.xi_peak, self.sigma_xi, self.sigma_eta))


def gaussian_widths(ens: Ensemble, weighted: bool = True, tol: float = 0.1) -> WidthFit:
    """Fit g ~ c - (xi - xbar)^2/(2 s_xi^2) - eta^2/(2 s_eta^2).

    The fit is weighted by exp(g) unless ``weighted`` is False.  A weighted
    RMS residual above ``tol`` raises a NonGaussianWarning.
    """
    full = ens.full()
    m = full.alive.ravel()
    xi = full.xi.ravel()[m]
    eta = full.eta.ravel()[m]
    g = full.g.ravel()[m]
    xc = xi[np.argmax(g)]
    u = xi - xc
    X = np.column_stack([np.ones_like(u), u, u * u, eta * eta])
    if weighted:
        w = np.exp(g - g.max())
    else:
        w = np.ones_like(g)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], g * sw, rcond=None)
    c0, c1, c2, c3 = coef
    resid = float(np.sqrt(np.sum(w * (X @ coef - g) ** 2) / np.sum(w)))
    if resid > tol:
        warnings.warn(f"Gaussian width fit residual {resid:.3g}", NonGaussianWarning)
    with np.errstate(invalid="ignore", divide="ignore"):
        sxi = np.sqrt(-0.5 / c2)
        seta = np.sqrt(-0.5 / c3)
        peak = xc - c1 / (2.0 * c2)
    return WidthFit(float(peak), float(sxi), float(seta), resid)


def moment_record(ens: Ensemble) -> MomentRecord:
    wf = gaussian_widths(ens)
    return MomentRecord(ens.t, wf.xi_peak, wf.sigma_xi, wf.sigma_eta, trace(ens), purity(ens))


def diagonal_rows(ens: Ensemble) -> list:
    """(traj_id, t, xi, eta, g, v_xi, v_eta) rows for the diagonal points.

    Identities survive remeshes that keep the diagonal points and restart
    when the diagonal is regenerated: id = traj_epoch * n_xi + column.
    """
    r = ens.diag_row
    base = ens.traj_epoch * ens.n_xi
    return [
        (base + c, ens.t, ens.xi[r, c], ens.eta[r, c], ens.g[r, c], ens.v_xi[r, c], ens.v_eta[r, c])
        for c in range(ens.n_xi)
    ]


def diagonal_trajectories(history) -> list:
    rows = []
    for ens in history:
        rows.extend(diagonal_rows(ens))
    return rows


def trajectories_by_id(rows) -> dict:
    out = {}
    for traj_id, t, xi, *_ in rows:
        out.setdefault(traj_id, []).append((t, xi))
    return {k: np.array(v) for k, v in out.items()}


def crossing_violations(rows, n_xi: int) -> int:
    """Count recorded (time, remesh segment) groups whose diagonal points are out of xi order."""
    by_time = {}
    for traj_id, t, xi, *_ in rows:
        by_time.setdefault((t, traj_id // n_xi), []).append((traj_id, xi))
    bad = 0
    for pts in by_time.values():
        pts.sort()
        xs = np.array([x for _, x in pts])
        bad += int(np.any(np.diff(xs) <= 0))
    return bad


def snapshot_rows(ens: Ensemble) -> list:
    full = ens.full()
    m = full.alive.ravel()
    cols = [getattr(full, n).ravel()[m] for n in SNAPSHOT_HEADER]
    return list(zip(*cols))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def record_rows(records) -> list:
    return [astuple(r) for r in records]
