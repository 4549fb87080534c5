"""Flat ``section.key = value`` run configuration.

All physical inputs are dimensionless: lengths in units of sigma0,
times in units of the oscillator period tau, energies in hbar*omega.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .dynamics import FitSettings, Scheme, StepControl
from .errors import ParseError, RangeError, UnknownKey
from .model import GridSpec, InitialCondition, PhysicalParams
from .remesh import RemeshPolicy


@dataclass
class Physical:
    mass: float = 1.0
    omega: float = 1.0
    gamma_over_omega: float = 1.0
    kT_over_hbar_omega: float = 2.5
    hbar: float = 1.0
    renormalize: bool = False


@dataclass
class Initial:
    xi0_over_sigma0: float = 2.0
    sigma_init_over_sigma0: float = 1.0


@dataclass
class Grid:
    n_xi: int = 41
    n_eta: int = 41
    half_width_xi_over_sigma0: float = 5.0
    half_width_eta_over_sigma0: float = 5.0


@dataclass
class Stepping:
    dt_over_tau: float = 0.0025
    t_end_over_tau: float = 3.0
    scheme: str = "RK4_FROZEN_FIELDS"
    semiclassical: bool = False
    refit_substeps: bool = True
    eom_sign: int = 1


@dataclass
class Mwls:
    degree_g: int = 4
    degree_v: int = 3
    stencil_min: int = 12
    bandwidth_factor: float = 1.5
    two_stage: bool = True


@dataclass
class Remesh:
    interval_steps: int = 1
    distortion_threshold: float = 2.0
    economy_mode: bool = True
    track_widths: bool = True
    keep_diagonal: bool = True
    degree: int = 2
    stencil_min: int = 24
    bandwidth_factor: float = 2.0


@dataclass
class Oracle:
    enabled: bool = False
    nx: int = 81
    ny: int = 81
    box_over_sigma0: float = 6.0


@dataclass
class Output:
    out_dir: str = "out"
    snapshot_every_steps: int = 0
    record_every_steps: int = 1


@dataclass
class RunConfig:
    physical: Physical = field(default_factory=Physical)
    initial: Initial = field(default_factory=Initial)
    grid: Grid = field(default_factory=Grid)
    stepping: Stepping = field(default_factory=Stepping)
    mwls: Mwls = field(default_factory=Mwls)
    remesh: Remesh = field(default_factory=Remesh)
    oracle: Oracle = field(default_factory=Oracle)
    output: Output = field(default_factory=Output)

    def flat(self) -> dict:
        out = {}
        for sec in fields(self):
            section = getattr(self, sec.name)
            for f in fields(section):
                out[f"{sec.name}.{f.name}"] = getattr(section, f.name)
        return out

    # ------------------------------------------------------------------
    # conversion to library objects

    def params(self) -> PhysicalParams:
        ph = self.physical
        return PhysicalParams(
            m=ph.mass,
            omega=ph.omega,
            gamma=ph.gamma_over_omega * ph.omega,
            kT=ph.kT_over_hbar_omega * ph.hbar * ph.omega,
            hbar=ph.hbar,
            renormalize=ph.renormalize,
        )

    def initial_condition(self) -> InitialCondition:
        s0 = self.params().sigma0
        return InitialCondition(
            xi0=self.initial.xi0_over_sigma0 * s0,
            sigma_init=self.initial.sigma_init_over_sigma0 * s0,
        )

    def grid_spec(self) -> GridSpec:
        s0 = self.params().sigma0
        g = self.grid
        return GridSpec(
            g.n_xi, g.n_eta, g.half_width_xi_over_sigma0 * s0, g.half_width_eta_over_sigma0 * s0
        )

    def step_control(self) -> StepControl:
        st, mw = self.stepping, self.mwls
        return StepControl(
            dt=st.dt_over_tau * self.params().tau,
            scheme=Scheme(st.scheme),
            semiclassical=st.semiclassical,
            refit_substeps=st.refit_substeps,
            eom_sign=st.eom_sign,
            fit=FitSettings(
                degree_g=mw.degree_g,
                degree_v=mw.degree_v,
                two_stage=mw.two_stage,
                stencil_min=mw.stencil_min,
                bandwidth_factor=mw.bandwidth_factor,
            ),
        )

    def remesh_policy(self) -> RemeshPolicy:
        """Remesh settings; semiclassical runs follow the original points throughout."""
        r, g = self.remesh, self.grid
        if self.stepping.semiclassical:
            return RemeshPolicy.never()
        s0 = self.params().sigma0
        if r.track_widths:
            # half-widths in units of the current fitted widths
            s_init = self.initial.sigma_init_over_sigma0
            domain = (g.half_width_xi_over_sigma0 / s_init, g.half_width_eta_over_sigma0 / s_init)
        else:
            domain = (g.half_width_xi_over_sigma0 * s0, g.half_width_eta_over_sigma0 * s0)
        return RemeshPolicy(
            interval_steps=r.interval_steps,
            distortion_threshold=r.distortion_threshold,
            domain=domain,
            track_widths=r.track_widths,
            degree=r.degree,
            stencil_min=r.stencil_min,
            bandwidth_factor=r.bandwidth_factor,
            keep_diagonal=r.keep_diagonal,
        )


def _coerce(text: str, typ, key: str, line=None, column=None):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1]
    try:
        if typ is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise ParseError(f"cannot read {text!r} as {typ.__name__} for {key}", line, column)


def _field_types(cfg: RunConfig) -> dict:
    types = {}
    for sec in fields(cfg):
        for f in fields(getattr(cfg, sec.name)):
            types[f"{sec.name}.{f.name}"] = {"float": float, "int": int, "bool": bool, "str": str}[
                f.type
            ]
    return types


def set_value(cfg: RunConfig, key: str, raw: str, line=None, column=None):
    types = _field_types(cfg)
    if key not in types:
        raise UnknownKey(f"unknown configuration key {key!r}")
    section, name = key.split(".")
    setattr(getattr(cfg, section), name, _coerce(raw, types[key], key, line, column))


def parse_text(text: str, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ParseError("expected 'key = value'", lineno, col)
        key, value = body.split("=", 1)
        key = key.strip()
        if not key or " " in key or key.count(".") != 1:
            raise ParseError(f"malformed key {key!r}", lineno, body.index(key[:1] or "=") + 1)
        set_value(cfg, key, value, lineno, body.index("=") + 2)
    return cfg


def parse_config(path=None, overrides=()) -> RunConfig:
    """Read a config file (optional) then apply ``KEY=VALUE`` overrides.

    A ``run_manifest.json`` written by a previous run is also accepted.
    """
    cfg = RunConfig()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if str(path).endswith(".json"):
            try:
                flat = json.loads(text)["config"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"not a run manifest: {exc}")
            for key, value in flat.items():
                set_value(cfg, key, str(value))
        else:
            cfg = parse_text(text, cfg)
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        set_value(cfg, key.strip(), value)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    def need(cond, msg):
        if not cond:
            raise RangeError(msg)

    ph, st = cfg.physical, cfg.stepping
    for key in ("mass", "omega", "kT_over_hbar_omega", "hbar"):
        need(getattr(ph, key) > 0, f"physical.{key} must be positive")
    need(ph.gamma_over_omega >= 0, "physical.gamma_over_omega must be non-negative")
    if ph.renormalize:
        need(
            ph.omega - 2 * ph.gamma_over_omega * ph.omega / 3.141592653589793 > 0,
            "renormalized frequency squared is not positive",
        )
    need(cfg.initial.sigma_init_over_sigma0 > 0, "initial.sigma_init_over_sigma0 must be positive")
    for key in ("n_xi", "n_eta"):
        n = getattr(cfg.grid, key)
        need(n >= 5 and n % 2 == 1, f"grid.{key} must be an odd integer >= 5")
    need(cfg.grid.half_width_xi_over_sigma0 > 0, "grid half-widths must be positive")
    need(cfg.grid.half_width_eta_over_sigma0 > 0, "grid half-widths must be positive")
    need(0 < st.dt_over_tau <= 1 / 200, "stepping.dt_over_tau must lie in (0, 1/200]")
    need(st.t_end_over_tau >= 0, "stepping.t_end_over_tau must be non-negative")
    need(st.scheme in Scheme.__members__, f"stepping.scheme must be one of {list(Scheme.__members__)}")
    need(st.eom_sign in (1, -1), "stepping.eom_sign must be +1 or -1")
    mw = cfg.mwls
    need(mw.degree_g >= 2 and mw.degree_v >= 1, "mwls degrees too small")
    need(mw.stencil_min >= 1 and mw.bandwidth_factor > 0, "mwls settings must be positive")
    need(cfg.remesh.interval_steps >= 0, "remesh.interval_steps must be >= 0")
    need(cfg.remesh.distortion_threshold > 1, "remesh.distortion_threshold must exceed 1")
    need(cfg.remesh.degree == 0 or cfg.remesh.degree >= 2, "remesh.degree must be 0 or >= 2")
    need(cfg.remesh.stencil_min >= 1, "remesh.stencil_min must be positive")
    need(cfg.remesh.bandwidth_factor > 0, "remesh.bandwidth_factor must be positive")
    o = cfg.oracle
    need(o.nx == o.ny and o.nx >= 9, "oracle.nx and oracle.ny must be equal and >= 9")
    need(o.box_over_sigma0 > 0, "oracle.box_over_sigma0 must be positive")
    need(cfg.output.snapshot_every_steps >= 0, "output.snapshot_every_steps must be >= 0")
    need(cfg.output.record_every_steps >= 1, "output.record_every_steps must be >= 1")
    need(bool(cfg.output.out_dir), "output.out_dir must be set")
