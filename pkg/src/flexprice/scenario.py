"""Scenario files: schema, validation, defaults, and execution.

A scenario is a JSON document with the sections ``plant``, ``controller``,
``signals``, ``sim`` and ``output``.  Unknown keys are rejected and every
default is written back into the effective configuration, so a run
directory always holds the exact input needed to reproduce it.
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from flexprice import control_adaptive as ca
from flexprice import control_optimal as co
from flexprice import flexfn, linff
from flexprice.simkit import plants, signals
from flexprice.simkit.runner import SimConfig, run_scenario

BUNDLED = ("fig3", "fig4", "fig5", "fig6", "fig6_jump", "fig6_daily")


class ScenarioError(ValueError):
    """Scenario failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class LinearBlock(_Strict):
    eta1: float
    eta2: float
    eta3: float
    lambda1: float
    lambda2: float
    capacity: float
    flexible_share: float = 1.0

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self

    def build(self) -> linff.LinearParams:
        return linff.LinearParams(**self.model_dump())


class NonlinearBlock(_Strict):
    capacity: float
    flexible_share: float
    beta: list[float]
    alpha: list[float]
    k: float = 1.0
    sigma_x: float = 0.0
    sigma_y: float = 0.0

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self

    def build(self) -> flexfn.FlexParams:
        return flexfn.FlexParams(**self.model_dump())


class Jump(_Strict):
    time: float
    factor: float = Field(gt=0)


class PlantBlock(_Strict):
    kind: Literal["linearized", "nonlinear"] = "linearized"
    linear: Optional[LinearBlock] = None
    nonlinear: Optional[NonlinearBlock] = None
    mode: Literal["time-varying", "frozen"] = "time-varying"
    frozen_baseline: Optional[float] = Field(default=None, ge=0, le=1)
    jumps: list[Jump] = []
    jump_scales_d: bool = True
    x0: float = Field(default=0.5, ge=0, le=1)


class _Signal(_Strict):
    """Signal specs check their own structure and that values stay in [0, 1]."""

    @model_validator(mode="after")
    def _check(self):
        sig = signals.build(self.model_dump())
        lo, hi = signals.value_range(sig)
        if lo < 0 or hi > 1:
            raise ValueError(f"signal values leave [0, 1] (range [{lo:g}, {hi:g}])")
        return self


class ConstantSignal(_Signal):
    kind: Literal["constant"]
    value: float


class PiecewiseSignal(_Signal):
    kind: Literal["piecewise-constant"]
    levels: list[float]
    breakpoints: list[float]


class SinusoidSignal(_Signal):
    kind: Literal["sinusoid"]
    offset: float
    amplitude: float
    period: float
    phase: float = 0.0


class TableSignal(_Signal):
    kind: Literal["table"]
    times: list[float]
    values: list[float]
    interp: Literal["hold", "linear"] = "hold"


SignalSpec = Annotated[
    Union[ConstantSignal, PiecewiseSignal, SinusoidSignal, TableSignal],
    Field(discriminator="kind"),
]


class SignalsBlock(_Strict):
    baseline: SignalSpec
    reference: SignalSpec


class ExactController(_Strict):
    kind: Literal["exact", "clamped"]
    model: Optional[LinearBlock] = None


class IntervalController(_Strict):
    kind: Literal["interval-optimal"]
    model: Optional[LinearBlock] = None
    interval: float = Field(default=1.0, gt=0)
    n_sub: int = Field(default=16, ge=1)
    u_resolution: float = Field(default=1e-6, gt=0, lt=1)
    coarse_points: int = Field(default=21, ge=3)


class ProjectionBlock(_Strict):
    min: float = 0.0
    max: float = 1.0 / 3.0
    epsilon: float = 0.03

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self

    def build(self) -> ca.ProjectionSpec:
        return ca.ProjectionSpec(self.min, self.max, self.epsilon)


class AdaptiveController(_Strict):
    kind: Literal["adaptive"]
    lam: float = Field(default=-1.0, lt=0, alias="lambda")
    gamma_alpha: float = Field(default=10.0, gt=0)
    gamma_beta: float = Field(default=10.0, gt=0)
    gamma_zeta: float = Field(default=10.0, gt=0)
    alpha: ProjectionBlock = ProjectionBlock()
    beta: ProjectionBlock = ProjectionBlock()
    zeta: ProjectionBlock = ProjectionBlock()
    alpha0: Optional[float] = None
    beta0: Optional[float] = None
    zeta0: Optional[float] = None
    y0: float = 0.0
    sign_b: Literal[-1, 1] = -1
    state_source: Literal["direct", "reconstructed"] = "direct"
    x0_estimate: float = Field(default=0.5, ge=0, le=1)

    @model_validator(mode="after")
    def _defaults(self):
        for name in ("alpha", "beta", "zeta"):
            spec = getattr(self, name).build()
            init = getattr(self, name + "0")
            if init is None:
                setattr(self, name + "0", spec.midpoint)
            elif not spec.contains(init):
                raise ValueError(f"{name}0={init} outside [{spec.theta_min}, {spec.theta_max}]")
        return self


ControllerSpec = Annotated[
    Union[ExactController, IntervalController, AdaptiveController],
    Field(discriminator="kind"),
]


class SimBlock(_Strict):
    dt: float = Field(default=1e-3, gt=0)
    horizon: float = Field(default=24.0, gt=0)
    integrator: Literal["euler", "rk4", "euler-maruyama"] = "rk4"
    seed: int = Field(default=0, ge=0, lt=2**64)
    abort_on_error: bool = False


class OutputBlock(_Strict):
    trajectory: str = "trajectory.csv"
    summary: str = "summary.json"
    config: str = "effective_config.json"


class Scenario(_Strict):
    name: str = "scenario"
    description: str = ""
    plant: PlantBlock
    controller: ControllerSpec
    signals: SignalsBlock
    sim: SimBlock = SimBlock()
    output: OutputBlock = OutputBlock()

    @model_validator(mode="after")
    def _cross(self):
        errors = []
        p, c, s = self.plant, self.controller, self.sim
        if s.dt > s.horizon:
            errors.append(f"sim.dt={s.dt} exceeds sim.horizon={s.horizon}")
        if p.kind == "linearized" and p.linear is None:
            errors.append("plant.linear is required for a linearized plant")
        if p.kind == "nonlinear":
            if p.nonlinear is None:
                errors.append("plant.nonlinear is required for a nonlinear plant")
            if p.mode != "time-varying" or p.jumps:
                errors.append("plant.mode/jumps apply to linearized plants only")
            if c.kind != "adaptive" and c.model is None:
                errors.append("controller.model is required with a nonlinear plant")
        if s.integrator == "euler-maruyama" and not (
            p.kind == "nonlinear" and p.nonlinear is not None and p.nonlinear.sigma_x > 0
        ):
            errors.append("euler-maruyama requires a nonlinear plant with sigma_x > 0")
        if errors:
            raise ValueError("; ".join(errors))
        if p.kind == "linearized" and p.mode == "frozen" and p.frozen_baseline is None:
            p.frozen_baseline = signals.build(self.signals.baseline.model_dump())(0.0)
        if c.kind != "adaptive" and c.model is None:
            c.model = p.linear.model_copy()
        return self

    def effective(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)


def _flatten(exc: ValidationError):
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        msg = err["msg"].removeprefix("Value error, ")
        for part in msg.split("; "):
            out.append(f"{loc}: {part}" if loc else part)
    return out


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("flexprice") / "scenarios" / f"{name}.json"))


def read(source) -> dict:
    """Raw scenario mapping from a path, a bundled name, or a mapping."""
    if isinstance(source, dict):
        return copy.deepcopy(source)
    path = Path(source)
    if not path.exists() and str(source) in BUNDLED:
        path = bundled_path(str(source))
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"parse error in {path}: {exc}"]) from exc


def load(source) -> Scenario:
    data = read(source)
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_flatten(exc)) from None


def set_path(data: dict, path: str, value):
    """Set a dotted ``path`` inside a nested mapping; the parent must exist."""
    keys = path.split(".")
    node = data
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise KeyError(f"unknown parameter path {path!r}")
        node = node[key]
    if not isinstance(node, dict):
        raise KeyError(f"unknown parameter path {path!r}")
    node[keys[-1]] = value


def with_overrides(spec: Scenario, overrides: dict) -> Scenario:
    data = spec.effective()
    for path, value in overrides.items():
        set_path(data, path, value)
    return load(data)


def build(spec: Scenario):
    """Instantiate ``(SimConfig, plant, controller, baseline, reference, x0)``."""
    s = spec.sim
    domain = (0.0, s.horizon)
    base = signals.build(spec.signals.baseline.model_dump(), domain)
    ref = signals.build(spec.signals.reference.model_dump(), domain)
    p = spec.plant
    if p.kind == "linearized":
        plant = plants.LinearPlant(
            p.linear.build(),
            mode=p.mode,
            frozen_baseline=p.frozen_baseline if p.frozen_baseline is not None else 0.0,
            jumps=[(j.time, j.factor) for j in p.jumps],
            jump_scales_d=p.jump_scales_d,
        )
    else:
        plant = plants.NonlinearPlant(p.nonlinear.build())
    c = spec.controller
    if c.kind == "exact":
        ctl = co.ExactPriceController(c.model.build(), clamp=False)
    elif c.kind == "clamped":
        ctl = co.ExactPriceController(c.model.build(), clamp=True)
    elif c.kind == "interval-optimal":
        ctl = co.IntervalOptimalController(
            c.model.build(), base, ref, c.interval, c.n_sub, c.u_resolution, c.coarse_points
        )
    else:
        state = ca.AdaptiveState(
            alpha_hat=c.alpha0,
            beta_hat=c.beta0,
            zeta_hat=c.zeta0,
            y_ref=c.y0,
            alpha_spec=c.alpha.build(),
            beta_spec=c.beta.build(),
            zeta_spec=c.zeta.build(),
            gamma_alpha=c.gamma_alpha,
            gamma_beta=c.gamma_beta,
            gamma_zeta=c.gamma_zeta,
            lam=c.lam,
            sign_b=c.sign_b,
        )
        ctl = ca.AdaptivePriceController(state, plant.capacity, c.state_source, c.x0_estimate)
    sim = SimConfig(s.dt, s.horizon, s.integrator, s.seed, s.abort_on_error)
    return sim, plant, ctl, base, ref, p.x0


def execute(spec: Scenario):
    sim, plant, ctl, base, ref, x0 = build(spec)
    traj = run_scenario(sim, plant, ctl, base, ref, x0)
    traj.meta["scenario"] = spec.name
    return traj
