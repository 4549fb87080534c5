"""Independent references for the trajectory engine.

* ``OracleGrid`` / ``oracle_step``: the Caldeira-Leggett master equation
  integrated directly on a fixed (x, y) grid, with fourth-order centered
  differences and an integrating-factor RK4 in time.
* ``gaussian_moment_oracle``: closed ODEs for the parameters of a Gaussian
  density matrix under the same equation.
* ``semiclassical_xi`` and ``equilibrium_widths``: closed forms.

The master equation used here is

    d rho/dt = (i hbar/2m)(d_xx - d_yy) rho - (i/hbar)(V(x) - V(y)) rho
               - gamma (x - y)(d_x - d_y) rho - (gamma/lambda^2)(x - y)^2 rho

with V = k x^2 / 2.  The decoherence coefficient gamma/lambda^2 is the one
that makes the log-amplitude equation of the trajectory engine carry the
sink (2 gamma/lambda^2) eta^2 (since (x - y)^2 = 2 eta^2).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import StabilityViolation
from .model import SQRT2, InitialCondition, PhysicalParams, rotate_to_xieta

# RK4 stability interval on the imaginary axis is 2*sqrt(2); keep a margin
RK4_IMAG_LIMIT = 2.5

# max modulus of the symbols of the 4th-order first/second difference stencils, times h, h^2
_D1_MAX = 1.3722
_D2_MAX = 16.0 / 3.0


def semiclassical_xi(p: PhysicalParams, xi0: float, t):
    """Damped oscillator xi'' = -w^2 xi - 2 gamma xi' started at rest."""
    t = np.asarray(t, dtype=float)
    g = p.gamma
    w2 = p.omega_eff_sq
    disc = w2 - g * g
    scale = max(w2, g * g)
    if abs(disc) <= 1e-12 * scale:
        return xi0 * np.exp(-g * t) * (1.0 + g * t)
    if disc > 0:
        wd = np.sqrt(disc)
        return xi0 * np.exp(-g * t) * (np.cos(wd * t) + g / wd * np.sin(wd * t))
    r = np.sqrt(-disc)
    return xi0 * np.exp(-g * t) * (np.cosh(r * t) + g / r * np.sinh(r * t))


def equilibrium_widths(p: PhysicalParams):
    """(sigma_xi_eq, sigma_eta_eq) of the thermal oscillator density matrix."""
    x = p.hbar * p.omega * p.beta / 2.0
    s0 = p.sigma0
    return s0 * np.sqrt(1.0 / np.tanh(x)), s0 * np.sqrt(np.tanh(x))


# ---------------------------------------------------------------------------
# Gaussian moment equations
#
# rho = exp(g + i S), S = A/hbar, with
#   g = c0 + c1 xi - a xi^2 - b eta^2,   S = eta (p + e xi).
# Substituting into the master equation written in (xi, eta) gives the ODEs
# below; the widths follow as sigma_xi^2 = 1/(2a), sigma_eta^2 = 1/(2b) and
# the peak as c1/(2a).


def _moment_rhs(t, y, p: PhysicalParams):
    c0, c1, a, b, pp, e = y
    r = p.hbar / p.m
    D = p.decoherence_rate
    return [
        r * (e + c1 * pp),
        r * (c1 * e - 2.0 * a * pp),
        2.0 * r * a * e,
        2.0 * r * b * e - 4.0 * p.gamma * b + D,
        r * (2.0 * b * c1 + e * pp) - 2.0 * p.gamma * pp,
        r * (e * e - 4.0 * a * b) + p.k / p.hbar - 2.0 * p.gamma * e,
    ]


@dataclass
class MomentSeries:
    t: np.ndarray
    xi_peak: np.ndarray
    sigma_xi: np.ndarray
    sigma_eta: np.ndarray
    trace: np.ndarray
    purity: np.ndarray


def gaussian_moment_oracle(p: PhysicalParams, ic: InitialCondition, t_end: float, dt: float):
    """Moment time series sampled every ``dt`` on [0, t_end]."""
    s2 = ic.sigma_init**2
    y0 = [
        ic.g0_value - ic.xi0**2 / (2 * s2),
        ic.xi0 / s2,
        1.0 / (2 * s2),
        1.0 / (2 * s2),
        0.0,
        0.0,
    ]
    n = int(round(t_end / dt))
    ts = np.linspace(0.0, n * dt, n + 1)
    sol = solve_ivp(
        _moment_rhs, (0.0, ts[-1]), y0, t_eval=ts, args=(p,), method="DOP853",
        rtol=1e-11, atol=1e-12,
    )
    c0, c1, a, b, _, _ = sol.y
    sxi = np.sqrt(0.5 / a)
    seta = np.sqrt(0.5 / b)
    peak = c1 / (2 * a)
    # trace = (1/sqrt2) int exp(g(xi,0)) dxi ; purity = int int exp(2g)
    gmax = c0 + c1**2 / (4 * a)
    trace = np.exp(gmax) * np.sqrt(np.pi / a) / SQRT2
    purity = np.exp(2 * gmax) * np.pi / (2 * np.sqrt(a * b))
    return MomentSeries(sol.t, peak, sxi, seta, trace, purity)


# ---------------------------------------------------------------------------
# Eulerian grid


@dataclass
class OracleGrid:
    x: np.ndarray  # 1-D grid coordinates, shared by x and y
    rho: np.ndarray  # complex, indexed rho[ix, iy]
    t: float = 0.0
    absorb_rate: float = 0.0  # peak damping rate of the corner absorbing layer
    absorb_fraction: float = 0.1

    @property
    def nx(self):
        return len(self.x)

    @property
    def ny(self):
        return len(self.x)

    @property
    def h(self):
        return self.x[1] - self.x[0]

    @property
    def bounds(self):
        return (self.x[0], self.x[-1])

    def mesh(self):
        return np.meshgrid(self.x, self.x, indexing="ij")

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.T.conj())))


def make_oracle_grid(
    p: PhysicalParams,
    ic: InitialCondition,
    n: int = 81,
    box: float = 6.0,
    absorb_rate: float | None = None,
) -> OracleGrid:
    """Sample the initial Gaussian on an n x n grid over [-box, box]^2 (in sigma0 units)."""
    L = box * p.sigma0
    x = np.linspace(-L, L, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    xi, eta = rotate_to_xieta(X, Y)
    rho = np.exp(ic.g(xi, eta)).astype(complex)
    if absorb_rate is None:
        absorb_rate = 20.0 / p.tau
    return OracleGrid(x, rho, 0.0, absorb_rate)


def _d1(f, axis, h):
    f = np.moveaxis(f, axis, 0)
    pad = np.zeros((f.shape[0] + 4,) + f.shape[1:], dtype=f.dtype)
    pad[2:-2] = f
    out = (-pad[4:] + 8 * pad[3:-1] - 8 * pad[1:-3] + pad[:-4]) / (12 * h)
    return np.moveaxis(out, 0, axis)


def _d2(f, axis, h):
    f = np.moveaxis(f, axis, 0)
    pad = np.zeros((f.shape[0] + 4,) + f.shape[1:], dtype=f.dtype)
    pad[2:-2] = f
    out = (-pad[4:] + 16 * pad[3:-1] - 30 * pad[2:-2] + 16 * pad[1:-3] - pad[:-4]) / (12 * h * h)
    return np.moveaxis(out, 0, axis)


def _absorber(grid: OracleGrid):
    """Smooth damping profile in the outer band of |x - y|; zero near the diagonal."""
    X, Y = grid.mesh()
    s = np.abs(X - Y)
    smax = 2 * grid.x[-1]
    s0 = (1 - grid.absorb_fraction) * smax
    ramp = np.clip((s - s0) / (smax - s0), 0.0, 1.0)
    return grid.absorb_rate * np.sin(0.5 * np.pi * ramp) ** 2


def stable_dt(grid: OracleGrid, p: PhysicalParams) -> float:
    """Largest dt inside the estimated RK4 stability region for the explicit part."""
    h = grid.h
    kinetic = p.hbar / (2 * p.m) * _D2_MAX / h**2
    advect = p.gamma * 2 * grid.x[-1] * 2 * _D1_MAX / h
    return RK4_IMAG_LIMIT / (kinetic + advect)


class _Operator:
    """Split master-equation generator: diagonal part exact, derivatives explicit."""

    def __init__(self, grid: OracleGrid, p: PhysicalParams):
        X, Y = grid.mesh()
        self.h = grid.h
        self.p = p
        self.xmy = X - Y
        V = 0.5 * p.k
        self.diag = (
            -1j / p.hbar * V * (X**2 - Y**2)
            - p.gamma / p.lam**2 * self.xmy**2
            - _absorber(grid)
        )

    def explicit(self, rho):
        p, h = self.p, self.h
        kin = 1j * p.hbar / (2 * p.m) * (_d2(rho, 0, h) - _d2(rho, 1, h))
        if p.gamma == 0:
            return kin
        fric = -p.gamma * self.xmy * (_d1(rho, 0, h) - _d1(rho, 1, h))
        return kin + fric


def oracle_step(grid: OracleGrid, p: PhysicalParams, dt: float, _op=None) -> OracleGrid:
    """One Lawson (integrating-factor) RK4 step of the master equation."""
    if dt > stable_dt(grid, p):
        raise StabilityViolation(
            f"dt={dt:g} exceeds the explicit stability estimate {stable_dt(grid, p):g}"
        )
    op = _op or _Operator(grid, p)
    E2 = np.exp(op.diag * dt / 2)
    E = E2 * E2
    u = grid.rho
    F = op.explicit
    k1 = F(u)
    k2 = F(E2 * (u + dt / 2 * k1))
    k3 = F(E2 * u + dt / 2 * k2)
    k4 = F(E * u + dt * E2 * k3)
    rho = E * u + dt / 6 * (E * k1 + 2 * E2 * (k2 + k3) + k4)
    return dataclasses.replace(grid, rho=rho, t=grid.t + dt)


def oracle_advance(grid: OracleGrid, p: PhysicalParams, t_target: float, dt_max=None):
    """Step to ``t_target`` with equal substeps no larger than ``dt_max``."""
    span = t_target - grid.t
    if span <= 0:
        return grid
    dt_max = dt_max or 0.9 * stable_dt(grid, p)
    n = int(np.ceil(span / dt_max - 1e-9))
    dt = span / n
    op = _Operator(grid, p)
    for _ in range(n):
        grid = oracle_step(grid, p, dt, op)
    grid.t = t_target
    return grid


def oracle_moments(grid: OracleGrid):
    """(xi_peak, sigma_xi, sigma_eta, trace, purity) of a grid density matrix.

    Widths are |rho|-weighted moments in the rotated frame, which for a
    Gaussian exp(g) equal the Gaussian coefficients.
    """
    X, Y = grid.mesh()
    xi, eta = rotate_to_xieta(X, Y)
    w = np.abs(grid.rho)
    tot = w.sum()
    xbar = (w * xi).sum() / tot
    sxi = np.sqrt((w * (xi - xbar) ** 2).sum() / tot)
    seta = np.sqrt((w * eta**2).sum() / tot)
    h = grid.h
    trace = float(np.real(np.trace(grid.rho)) * h)
    purity = float((w**2).sum() * h * h)
    return float(xbar), float(sxi), float(seta), trace, purity
