"""Quantum potential, trajectory equations of motion and the ensemble stepper.

Along a trajectory in the rotated frame

    d2xi/dt2  = -w^2 xi  + s Q_eta / m - 2 gamma dxi/dt
    d2eta/dt2 = -w^2 eta + s Q_xi  / m + 2 gamma deta/dt
    dg/dt     = -div(v)/2 + gamma - (2 gamma / lambda^2) eta^2
    dA/dt     = -m v_xi v_eta + 2 m gamma v_xi eta + k xi eta - Q

with Q = (hbar^2/m)(g_xi,eta + g_xi g_eta), w the effective frequency and
s = +1 the sign obtained from the Euler-Lagrange equations of the
Lagrangian.  ``eom_sign=-1`` flips the quantum force for comparison runs.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np

from . import mwls
from .errors import StencilCollapse
from .model import Ensemble, PhysicalParams
from .mwls import EVEN, ODD, StencilIndex, basis_size, fit_batch, local_spacing


class Scheme(enum.Enum):
    RK4_FROZEN_FIELDS = "RK4_FROZEN_FIELDS"
    HEUN = "HEUN"


TWO_STAGE_G_DEGREE = 3
TWO_STAGE_Q_DEGREE = 2


@dataclass(frozen=True)
class FitSettings:
    degree_g: int = 4
    degree_v: int = 3
    two_stage: bool = True
    stencil_min: int = 12
    bandwidth_factor: float = 1.5
    max_attempts: int = 3

    def stencil_size(self, degree, parity):
        return max(2 * basis_size(degree, parity), self.stencil_min)


@dataclass(frozen=True)
class StepControl:
    dt: float
    scheme: Scheme = Scheme.RK4_FROZEN_FIELDS
    semiclassical: bool = False
    refit_substeps: bool = True
    eom_sign: int = 1
    fit: FitSettings = FitSettings()
    collapse_fraction: float = 0.10

    def __post_init__(self):
        if not self.dt >= 0:
            raise ValueError("dt must be non-negative")
        if self.eom_sign not in (1, -1):
            raise ValueError("eom_sign must be +1 or -1")


@dataclass
class FieldDerivatives:
    g_x: np.ndarray
    g_e: np.ndarray
    g_xe: np.ndarray
    q: np.ndarray
    q_x: np.ndarray
    q_e: np.ndarray
    div_v: np.ndarray
    singular_fraction: float = 0.0

    @classmethod
    def zeros(cls, shape):
        z = np.zeros(shape)
        return cls(*(z.copy() for _ in range(7)))


def quantum_potential(g_fit, p: PhysicalParams) -> float:
    """Q at the center of a local fit of g (degree >= 2)."""
    gx = g_fit.derivative((1, 0))
    ge = g_fit.derivative((0, 1))
    gxe = g_fit.derivative((1, 1))
    return p.hbar**2 / p.m * (gxe + gx * ge)


def accelerations(pt, d, p: PhysicalParams, ctl: StepControl):
    """(a_xi, a_eta) for a point; ``d`` supplies q_x and q_e at the point."""
    w2 = p.omega_eff_sq
    qx, qe = (0.0, 0.0) if ctl.semiclassical else (d.q_x, d.q_e)
    s = ctl.eom_sign
    a_xi = -w2 * pt.xi + s * qe / p.m - 2.0 * p.gamma * pt.v_xi
    a_eta = -w2 * pt.eta + s * qx / p.m + 2.0 * p.gamma * pt.v_eta
    return a_xi, a_eta


def g_rate(pt, d, p: PhysicalParams):
    return -0.5 * d.div_v + p.gamma - p.decoherence_rate * pt.eta**2


def action_rate(pt, d, p: PhysicalParams):
    """Lagrangian along the trajectory; ``d.q`` is the quantum potential."""
    return (
        -p.m * pt.v_xi * pt.v_eta
        + 2.0 * p.m * p.gamma * pt.v_xi * pt.eta
        + p.k * pt.xi * pt.eta
        - d.q
    )


class _FieldFitter:
    """MWLS fits of one ensemble snapshot, evaluated at the owned points."""

    def __init__(self, ens: Ensemble, fit: FitSettings):
        self.fit = fit
        full = ens.full()
        live = full.alive.ravel()
        self.cloud = np.column_stack([full.xi.ravel()[live], full.eta.ravel()[live]])
        self.full = full
        self.live = live
        # neighbour search in units of the nominal grid spacing
        self.scale = np.asarray(ens.spacing, dtype=float)
        self.index = StencilIndex(self.cloud / self.scale)
        own = ens.alive.ravel()
        self.own = own
        self.centers = np.column_stack([ens.xi.ravel()[own], ens.eta.ravel()[own]])
        self.economy = ens.economy
        self.n_singular = 0
        self.n_fits = 0
        self._stencils = {}

    def values(self, name):
        return getattr(self.full, name).ravel()[self.live]

    def to_cloud(self, owned_values, parity):
        """Spread values known at the owned points over the whole cloud."""
        a = owned_values
        if self.economy:
            a = np.concatenate([parity * a[:0:-1], a], axis=0)
        return a.ravel()[self.live]

    def _stencil(self, centers, n, key):
        if key is None or (key, n) not in self._stencils:
            idx, dist = self.index.query(centers / self.scale, n)
            bw = self.fit.bandwidth_factor * local_spacing(dist)
            if key is None:
                return idx, bw
            self._stencils[key, n] = idx, bw
        return self._stencils[key, n]

    def fit_field(self, values, degree, parity, centers=None):
        key = ("own", degree) if centers is None else None
        centers = self.centers if centers is None else centers
        n = min(self.fit.stencil_size(degree, parity), len(self.cloud))
        idx, bw = self._stencil(centers, n, key)
        res = fit_batch(self.cloud, values, centers, idx, degree, parity, bw, self.scale)
        bad = np.flatnonzero(res.singular)
        for _ in range(self.fit.max_attempts):
            if len(bad) == 0:
                break
            n = min(n + 4, len(self.cloud))
            idx, dist = self.index.query(centers[bad] / self.scale, n)
            bw = self.fit.bandwidth_factor * local_spacing(dist)
            retry = fit_batch(
                self.cloud, values, centers[bad], idx, degree, parity, bw, self.scale
            )
            res.coeffs[bad] = retry.coeffs
            res.condition[bad] = retry.condition
            bad = bad[retry.singular]
        self.n_singular += len(bad)
        self.n_fits += len(centers)
        return res


def field_derivatives(ens: Ensemble, p: PhysicalParams, ctl: StepControl) -> FieldDerivatives:
    """Fit g and the velocity fields of ``ens`` and return derivatives at its points."""
    fs = ctl.fit
    ff = _FieldFitter(ens, fs)
    shape = ens.xi.shape
    out = FieldDerivatives.zeros(shape)
    own = ff.own.reshape(shape)
    c = p.hbar**2 / p.m

    vx = ff.fit_field(ff.values("v_xi"), fs.degree_v, EVEN)
    ve = ff.fit_field(ff.values("v_eta"), fs.degree_v, ODD)
    out.div_v[own] = vx.derivative((1, 0)) + ve.derivative((0, 1))

    if not ctl.semiclassical:
        # an even basis of degree 3 adds the u * s term behind g_xi_eta; the
        # Q fit stays at degree 2, since degree 3 there is unstable at gamma = 0
        deg_g = TWO_STAGE_G_DEGREE if fs.two_stage else fs.degree_g
        gf = ff.fit_field(ff.values("g"), deg_g, EVEN)
        gx, ge, gxe = gf.derivative((1, 0)), gf.derivative((0, 1)), gf.derivative((1, 1))
        out.g_x[own], out.g_e[own], out.g_xe[own] = gx, ge, gxe
        out.q[own] = c * (gxe + gx * ge)
        if fs.two_stage:
            # pointwise Q, then a second fit for its gradient
            qf = ff.fit_field(ff.to_cloud(out.q, -1), TWO_STAGE_Q_DEGREE, ODD)
            out.q_x[own] = qf.derivative((1, 0))
            out.q_e[own] = qf.derivative((0, 1))
        else:
            gxx, gee = gf.derivative((2, 0)), gf.derivative((0, 2))
            gxxe, gxee = gf.derivative((2, 1)), gf.derivative((1, 2))
            out.q_x[own] = c * (gxxe + gxx * ge + gx * gxe)
            out.q_e[own] = c * (gxee + gxe * ge + gx * gee)

    out.singular_fraction = ff.n_singular / max(ff.n_fits, 1)
    if out.singular_fraction > ctl.collapse_fraction and not ctl.semiclassical:
        raise StencilCollapse(
            f"{100 * out.singular_fraction:.1f}% of local fits are singular at t={ens.t:.6g}"
        )
    return out


_STATE = ("xi", "eta", "v_xi", "v_eta", "g", "A")


def _rates(y: dict, d: FieldDerivatives, p: PhysicalParams, ctl: StepControl) -> dict:
    pt = _View(y)
    a_xi, a_eta = accelerations(pt, d, p, ctl)
    q = d if not ctl.semiclassical else dataclasses.replace(d, q=0.0 * d.q)
    return {
        "xi": y["v_xi"],
        "eta": y["v_eta"],
        "v_xi": a_xi,
        "v_eta": a_eta,
        "g": g_rate(pt, d, p),
        "A": action_rate(pt, q, p),
    }


class _View:
    """Attribute access to a dict of arrays, so scalar-point helpers vectorize."""

    def __init__(self, y):
        self.__dict__.update(y)


def _axpy(y, k, h, mask):
    return {n: np.where(mask, y[n] + h * k[n], y[n]) for n in _STATE}


def _with_state(ens: Ensemble, y: dict) -> Ensemble:
    return dataclasses.replace(ens, **y)


def step(ens: Ensemble, ctl: StepControl) -> Ensemble:
    """Advance every alive point by ``ctl.dt``."""
    p = ens.params
    if ctl.dt > p.tau / 200.0 * (1 + 1e-12):
        raise ValueError(f"dt={ctl.dt:g} exceeds the tau/200 guard")
    h = ctl.dt
    mask = ens.alive
    y0 = {n: getattr(ens, n) for n in _STATE}

    def derivs(y):
        return field_derivatives(_with_state(ens, y), p, ctl)

    d0 = derivs(y0)
    if ctl.scheme is Scheme.RK4_FROZEN_FIELDS:
        k1 = _rates(y0, d0, p, ctl)
        y1 = _axpy(y0, k1, h / 2, mask)
        k2 = _rates(y1, derivs(y1) if ctl.refit_substeps else d0, p, ctl)
        y2 = _axpy(y0, k2, h / 2, mask)
        k3 = _rates(y2, derivs(y2) if ctl.refit_substeps else d0, p, ctl)
        y3 = _axpy(y0, k3, h, mask)
        k4 = _rates(y3, derivs(y3) if ctl.refit_substeps else d0, p, ctl)
        y_new = {
            n: np.where(mask, y0[n] + h / 6 * (k1[n] + 2 * k2[n] + 2 * k3[n] + k4[n]), y0[n])
            for n in _STATE
        }
    else:
        k1 = _rates(y0, d0, p, ctl)
        y1 = _axpy(y0, k1, h, mask)
        k2 = _rates(y1, derivs(y1) if ctl.refit_substeps else d0, p, ctl)
        y_new = {n: np.where(mask, y0[n] + h / 2 * (k1[n] + k2[n]), y0[n]) for n in _STATE}

    q_pot = np.where(mask, 0.0 if ctl.semiclassical else d0.q, ens.q_pot)
    alive = mask & (np.abs(y_new["eta"]) <= ens.eta_limit)
    return dataclasses.replace(
        ens,
        q_pot=q_pot,
        alive=alive,
        t=ens.t + h,
        step_count=ens.step_count + 1,
        **y_new,
    )
