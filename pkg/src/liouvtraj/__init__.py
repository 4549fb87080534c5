"""Liouville-space Bohmian trajectories for a dissipative harmonic oscillator."""
from .config import RunConfig, parse_config
from .dynamics import FitSettings, Scheme, StepControl, field_derivatives, quantum_potential, step
from .errors import (
    ConfigError,
    InsufficientPoints,
    LiouvTrajError,
    MissingDiagonal,
    NoMirror,
    NonGaussianWarning,
    OrderTooHigh,
    ParseError,
    RangeError,
    SingularFit,
    StabilityViolation,
    StencilCollapse,
    UnknownKey,
)
from .model import Ensemble, GridSpec, InitialCondition, PhysicalParams, init_ensemble
from .mwls import EVEN, NONE, ODD, ParityClass, fit_local, select_stencil
from .observables import gaussian_widths, purity, trace
from .oracle import gaussian_moment_oracle, make_oracle_grid, oracle_step, semiclassical_xi
from .remesh import RemeshPolicy, enforce_parity, remesh
from .simulate import run_oracle, run_trajectory

__all__ = [name for name in dir() if not name.startswith("_")]
