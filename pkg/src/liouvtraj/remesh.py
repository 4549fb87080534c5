"""Grid regeneration and eta-parity enforcement."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .dynamics import FitSettings, _FieldFitter
from .errors import InsufficientPoints, NoMirror
from .model import FIELD_PARITY, Ensemble, uniform_grid
from .mwls import EVEN, ODD, basis_size
from .observables import gaussian_widths


@dataclass(frozen=True)
class RemeshPolicy:
    """When and onto what grid to remesh.

    ``interval_steps=0`` disables the periodic trigger and
    ``distortion_threshold=inf`` the distortion trigger.  With
    ``track_widths`` the new half-widths are ``domain`` times the current
    fitted Gaussian widths; otherwise ``domain`` is absolute.

    Fields are transferred with MWLS fits of total degree ``degree`` on
    stencils of at least ``stencil_min`` points.  A low degree on a wide
    stencil acts as a low-pass filter that removes the grid-scale noise
    the log-amplitude dynamics amplifies near the grid edges, while still
    reproducing polynomial fields exactly.  ``degree=0`` reuses the
    dynamics fit settings.
    """

    interval_steps: int = 1
    distortion_threshold: float = 2.0
    domain: tuple = (5.0, 5.0)
    track_widths: bool = True
    dead_fraction: float = 0.05
    eta_guard: float = 3.0
    degree: int = 2
    stencil_min: int = 24
    bandwidth_factor: float = 2.0
    keep_diagonal: bool = True

    def __post_init__(self):
        if self.interval_steps < 0:
            raise ValueError("interval_steps must be >= 0")
        if not self.distortion_threshold > 1:
            raise ValueError("distortion_threshold must exceed 1")
        if self.degree == 1 or self.degree < 0:
            raise ValueError("degree must be 0 (dynamics settings) or >= 2")

    def fit_settings(self, fit: FitSettings) -> FitSettings:
        if self.degree == 0:
            return fit
        return dataclasses.replace(
            fit,
            degree_g=self.degree,
            degree_v=self.degree,
            stencil_min=self.stencil_min,
            bandwidth_factor=self.bandwidth_factor,
        )

    @classmethod
    def never(cls):
        return cls(interval_steps=0, distortion_threshold=np.inf, dead_fraction=1.0)


def _max_stretch(ens: Ensemble) -> float:
    """Largest ratio of a logical-neighbour distance to the grid spacing at creation."""
    full = ens.full()
    h_xi, h_eta = ens.spacing
    ok = full.alive
    ratio = 0.0
    d = np.hypot(np.diff(full.xi, axis=1), np.diff(full.eta, axis=1))
    m = ok[:, 1:] & ok[:, :-1]
    if m.any():
        ratio = max(ratio, d[m].max() / h_xi)
    d = np.hypot(np.diff(full.xi, axis=0), np.diff(full.eta, axis=0))
    m = ok[1:] & ok[:-1]
    if m.any():
        ratio = max(ratio, d[m].max() / h_eta)
    return ratio


def _diagonal_usable(ens: Ensemble, threshold: float) -> bool:
    """Diagonal points alive, ordered and not too unevenly spaced."""
    r = ens.diag_row
    if not ens.alive[r].all():
        return False
    d = np.diff(ens.xi[r])
    return bool(np.all(d > 0) and d.max() <= threshold * d.min())


def should_remesh(ens: Ensemble, policy: RemeshPolicy) -> bool:
    if ens.step_count < 1:
        return False
    if policy.interval_steps and ens.step_count % policy.interval_steps == 0:
        return True
    if 1.0 - ens.alive.mean() > policy.dead_fraction:
        return True
    return bool(_max_stretch(ens) > policy.distortion_threshold)


def enforce_parity(ens: Ensemble) -> Ensemble:
    """Project every field onto its eta-parity class.

    Full grids are (anti)symmetrized over mirror pairs; in economy mode only
    the diagonal constraints apply.  On eta = 0, A, v_eta and q_pot are zero.
    """
    out = ens.copy()
    if not ens.economy:
        if not (
            np.allclose(ens.xi, ens.xi[::-1], rtol=0, atol=1e-9)
            and np.allclose(ens.eta, -ens.eta[::-1], rtol=0, atol=1e-9)
        ):
            raise NoMirror("grid is not symmetric under eta -> -eta")
        for name, parity in FIELD_PARITY.items():
            a = getattr(ens, name)
            setattr(out, name, (a + parity * a[::-1]) / 2)
        out.alive = ens.alive & ens.alive[::-1]
    r = out.diag_row
    for name, parity in FIELD_PARITY.items():
        if parity < 0:
            getattr(out, name)[r] = 0.0
    return out


def remesh(ens: Ensemble, policy: RemeshPolicy, fit: FitSettings = FitSettings()) -> Ensemble:
    """Fresh uniform grid with fields interpolated by MWLS from the old points."""
    fit = policy.fit_settings(fit)
    n_live = int(ens.full().alive.sum())
    need = max(fit.stencil_size(fit.degree_g, EVEN), fit.stencil_size(fit.degree_v, ODD))
    if n_live < need:
        raise InsufficientPoints(f"{n_live} alive points, remesh needs {need}")
    wf = gaussian_widths(ens)
    w_xi, w_eta = policy.domain
    if policy.track_widths:
        w_xi, w_eta = w_xi * wf.sigma_xi, w_eta * wf.sigma_eta
    xi, eta, spacing = uniform_grid(wf.xi_peak, w_xi, w_eta, ens.n_xi, ens.n_eta, ens.economy)
    keep = policy.keep_diagonal and _diagonal_usable(ens, policy.distortion_threshold)
    if keep:
        cols = ens.xi[ens.diag_row]
        xi = np.broadcast_to(cols, xi.shape).copy()
        spacing = (float(np.mean(np.diff(cols))), spacing[1])

    ff = _FieldFitter(ens, fit)
    targets = np.column_stack([xi.ravel(), eta.ravel()])
    new = {"xi": xi, "eta": eta}
    plan = {
        "g": (fit.degree_g, EVEN),
        "v_xi": (fit.degree_v, EVEN),
        "v_eta": (fit.degree_v, ODD),
        "A": (fit.degree_v, ODD),
        "q_pot": (fit.degree_v, ODD),
    }
    for name, (deg, parity) in plan.items():
        res = ff.fit_field(ff.values(name), deg, parity, centers=targets)
        new[name] = res.coeffs[:, 0, 0].reshape(xi.shape)

    out = dataclasses.replace(
        ens,
        alive=np.ones(xi.shape, dtype=bool),
        remesh_count=ens.remesh_count + 1,
        traj_epoch=ens.traj_epoch + (0 if keep else 1),
        spacing=spacing,
        eta_limit=policy.eta_guard * w_eta,
        **new,
    )
    return enforce_parity(out)
