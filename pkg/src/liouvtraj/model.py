"""Physical parameters, rotated-frame transforms and the trajectory ensemble.

The density matrix is carried as rho(xi, eta) = exp(g + i A / hbar) in the
rotated frame xi = (x + y)/sqrt(2), eta = (y - x)/sqrt(2).  The ensemble is a
logically rectangular grid of Lagrangian points stored as 2-D arrays with
rows ordered by ascending eta.  In economy mode only the rows with eta >= 0
are stored (row 0 is the diagonal); the lower half follows from parity.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)

# fields carried by every trajectory point, with their parity under eta -> -eta
FIELD_PARITY = {
    "xi": +1,
    "eta": -1,
    "g": +1,
    "A": -1,
    "v_xi": +1,
    "v_eta": -1,
    "q_pot": -1,
}


def rotate_to_xieta(x, y):
    return (x + y) / SQRT2, (y - x) / SQRT2


def rotate_to_xy(xi, eta):
    return (xi - eta) / SQRT2, (xi + eta) / SQRT2


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants plus derived scales.

    ``omega`` is the frequency entering the unit system (sigma0, tau).  When
    ``renormalize`` is set the dynamics uses the bath-shifted frequency
    omega_eff**2 = omega**2 - 2*gamma*omega/pi, otherwise omega itself.
    """

    m: float = 1.0
    omega: float = 1.0
    gamma: float = 0.0
    kT: float = 2.5
    hbar: float = 1.0
    renormalize: bool = False

    def __post_init__(self):
        for name in ("m", "omega", "kT", "hbar"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.renormalize and self.omega_eff_sq <= 0:
            raise ValueError(
                "renormalized frequency squared omega^2 - 2 gamma omega / pi "
                f"= {self.omega_eff_sq:g} is not positive"
            )

    @property
    def lam(self) -> float:
        """Thermal de Broglie length hbar / sqrt(2 m kT)."""
        return self.hbar / np.sqrt(2.0 * self.m * self.kT)

    @property
    def sigma0(self) -> float:
        return np.sqrt(self.hbar / (self.m * self.omega))

    @property
    def tau(self) -> float:
        return 2.0 * np.pi / self.omega

    @property
    def beta(self) -> float:
        return 1.0 / self.kT

    @property
    def omega_eff_sq(self) -> float:
        if self.renormalize:
            return self.omega**2 - 2.0 * self.gamma * self.omega / np.pi
        return self.omega**2

    @property
    def omega_eff(self) -> float:
        return np.sqrt(self.omega_eff_sq)

    @property
    def omega_tilde(self) -> float:
        """Renormalized frequency, regardless of whether the dynamics uses it."""
        return np.sqrt(self.omega**2 - 2.0 * self.gamma * self.omega / np.pi)

    @property
    def k(self) -> float:
        return self.m * self.omega_eff_sq

    @property
    def decoherence_rate(self) -> float:
        """Coefficient D of the -D eta^2 sink in the log-amplitude equation."""
        return 2.0 * self.gamma / self.lam**2


def derived_params(raw: dict) -> PhysicalParams:
    keys = {"m", "omega", "gamma", "kT", "hbar", "renormalize"}
    unknown = set(raw) - keys
    if unknown:
        raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
    return PhysicalParams(**raw)


@dataclass(frozen=True)
class InitialCondition:
    """Displaced Gaussian g = g0 - ((xi - xi0)^2 + eta^2) / (2 sigma_init^2).

    ``g0=None`` selects the value giving unit trace.
    """

    xi0: float = 2.0
    sigma_init: float = 1.0
    g0: float | None = None

    def __post_init__(self):
        if not self.sigma_init > 0:
            raise ValueError("sigma_init must be positive")

    @property
    def g0_value(self) -> float:
        if self.g0 is not None:
            return self.g0
        return -np.log(np.sqrt(np.pi) * self.sigma_init)

    def g(self, xi, eta):
        s2 = self.sigma_init**2
        return self.g0_value - ((xi - self.xi0) ** 2 + eta**2) / (2.0 * s2)


@dataclass(frozen=True)
class GridSpec:
    n_xi: int = 41
    n_eta: int = 41
    w_xi: float = 5.0
    w_eta: float = 5.0

    def __post_init__(self):
        for n in (self.n_xi, self.n_eta):
            if n < 5 or n % 2 == 0:
                raise ValueError(f"grid dimensions must be odd and >= 5, got {n}")
        if not (self.w_xi > 0 and self.w_eta > 0):
            raise ValueError("grid half-widths must be positive")


@dataclass
class TrajectoryPoint:
    xi: float
    eta: float
    g: float
    A: float
    v_xi: float
    v_eta: float
    q_pot: float
    alive: bool = True


@dataclass
class Ensemble:
    """Lagrangian grid of trajectory points, stored field-by-field.

    Every field array has shape (rows, n_xi).  ``economy=True`` means the
    rows hold eta >= 0 only, with row 0 on the diagonal.
    """

    params: PhysicalParams
    xi: np.ndarray
    eta: np.ndarray
    g: np.ndarray
    A: np.ndarray
    v_xi: np.ndarray
    v_eta: np.ndarray
    q_pot: np.ndarray
    alive: np.ndarray
    economy: bool = True
    t: float = 0.0
    step_count: int = 0
    remesh_count: int = 0
    traj_epoch: int = 0  # bumped whenever the diagonal points are replaced
    spacing: tuple = (1.0, 1.0)
    eta_limit: float = np.inf

    @property
    def n_xi(self) -> int:
        return self.xi.shape[1]

    @property
    def n_rows(self) -> int:
        return self.xi.shape[0]

    @property
    def n_eta(self) -> int:
        return 2 * self.n_rows - 1 if self.economy else self.n_rows

    @property
    def diag_row(self) -> int:
        return 0 if self.economy else self.n_rows // 2

    def copy(self) -> "Ensemble":
        arrays = {name: getattr(self, name).copy() for name in FIELD_PARITY}
        return dataclasses.replace(self, alive=self.alive.copy(), **arrays)

    def full(self) -> "Ensemble":
        """Full-grid view; mirrors the upper half in economy mode."""
        if not self.economy:
            return self
        arrays = {}
        for name, parity in FIELD_PARITY.items():
            a = getattr(self, name)
            arrays[name] = np.concatenate([parity * a[:0:-1], a], axis=0)
        alive = np.concatenate([self.alive[:0:-1], self.alive], axis=0)
        return dataclasses.replace(self, economy=False, alive=alive, **arrays)

    def upper(self) -> "Ensemble":
        """Economy view holding eta >= 0 rows only."""
        if self.economy:
            return self
        r = self.diag_row
        arrays = {name: getattr(self, name)[r:].copy() for name in FIELD_PARITY}
        return dataclasses.replace(
            self, economy=True, alive=self.alive[r:].copy(), **arrays
        )

    def point(self, row: int, col: int) -> TrajectoryPoint:
        vals = {name: float(getattr(self, name)[row, col]) for name in FIELD_PARITY}
        return TrajectoryPoint(alive=bool(self.alive[row, col]), **vals)

    def points(self) -> list:
        return [self.point(r, c) for r in range(self.n_rows) for c in range(self.n_xi)]


def uniform_grid(xi_center, w_xi, w_eta, n_xi, n_eta, economy):
    xi_1d = np.linspace(xi_center - w_xi, xi_center + w_xi, n_xi)
    half = n_eta // 2
    eta_1d = w_eta * np.arange(-half, half + 1) / half
    if economy:
        eta_1d = eta_1d[half:]
    eta, xi = np.meshgrid(eta_1d, xi_1d, indexing="ij")
    spacing = (2.0 * w_xi / (n_xi - 1), w_eta / half)
    return xi, eta, spacing


def init_ensemble(
    params: PhysicalParams,
    ic: InitialCondition,
    grid: GridSpec = GridSpec(),
    economy: bool = True,
    eta_guard: float = 3.0,
) -> Ensemble:
    xi, eta, spacing = uniform_grid(
        ic.xi0, grid.w_xi, grid.w_eta, grid.n_xi, grid.n_eta, economy
    )
    zeros = np.zeros_like(xi)
    return Ensemble(
        params=params,
        xi=xi,
        eta=eta,
        g=ic.g(xi, eta),
        A=zeros.copy(),
        v_xi=zeros.copy(),
        # zero canonical momentum: only the dissipative drift 2 gamma eta remains
        v_eta=2.0 * params.gamma * eta,
        q_pot=zeros.copy(),
        alive=np.ones(xi.shape, dtype=bool),
        economy=economy,
        spacing=spacing,
        eta_limit=eta_guard * grid.w_eta,
    )
