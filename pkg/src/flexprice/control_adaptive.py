"""Projection-based model-reference adaptive price generation.

The price is ``u = alpha_hat * x + beta_hat * r + zeta_hat`` with
``r = D_ref - B``.  The gains are adapted so the state of charge follows
the stable reference model ``dy/dt = lam * y + r / C``; no plant parameter
is estimated.  Each gain is confined to ``[theta_min, theta_max]`` by a
projection operator that scales the update to zero across a boundary layer
of width ``epsilon`` inside the bounds.

Gain updates are explicit Euler steps.  At finite step size a gain can
overshoot its hard bound; it is then clipped back and the event counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class ProjectionSpec:
    theta_min: float
    theta_max: float
    epsilon: float

    def __post_init__(self):
        if not self.theta_max > self.theta_min:
            raise ValueError(
                f"theta_max must exceed theta_min, got [{self.theta_min}, {self.theta_max}]"
            )
        half = 0.5 * (self.theta_max - self.theta_min)
        if not 0.0 < self.epsilon < half:
            raise ValueError(
                f"epsilon must satisfy 0 < epsilon < 0.5*(theta_max - theta_min) = {half:g}, "
                f"got {self.epsilon}"
            )

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.theta_min + self.theta_max)

    def contains(self, theta, tol: float = 0.0) -> bool:
        return self.theta_min - tol <= theta <= self.theta_max + tol


DEFAULT_GAIN_SPEC = ProjectionSpec(0.0, 1.0 / 3.0, 0.03)


def h(theta, spec: ProjectionSpec):
    """Convex boundary function: zero at ``theta_min + eps`` and ``theta_max - eps``."""
    lo, hi, eps = spec.theta_min, spec.theta_max, spec.epsilon
    return (theta - lo - eps) * (theta - hi + eps) / ((hi - lo - eps) * eps)


def h_prime(theta, spec: ProjectionSpec):
    lo, hi, eps = spec.theta_min, spec.theta_max, spec.epsilon
    return (2.0 * theta - lo - hi) / ((hi - lo - eps) * eps)


def proj(theta, y, spec: ProjectionSpec):
    """Projection of the update direction ``y`` at ``theta``.

    Outward updates are scaled by ``1 - h(theta)`` once ``theta`` enters
    the boundary layer; all other updates pass unchanged.
    """
    hv = h(theta, spec)
    if hv > 0 and y * h_prime(theta, spec) > 0:
        return y - y * hv
    return y


def projection_active(theta, y, spec: ProjectionSpec) -> bool:
    return h(theta, spec) > 0 and y * h_prime(theta, spec) > 0


def projected_step(theta, y, gamma, dt, spec: ProjectionSpec):
    """One Euler step of ``dtheta/dt = gamma * proj(theta, y)``.

    Returns ``(theta_next, clipped)``; ``clipped`` is True when the raw step
    left ``[theta_min, theta_max]`` and was pulled back onto the bound.
    """
    nxt = theta + dt * gamma * proj(theta, y, spec)
    if nxt > spec.theta_max:
        return spec.theta_max, True
    if nxt < spec.theta_min:
        return spec.theta_min, True
    return nxt, False


@dataclass(frozen=True)
class AdaptiveState:
    alpha_hat: float
    beta_hat: float
    zeta_hat: float
    y_ref: float
    alpha_spec: ProjectionSpec = DEFAULT_GAIN_SPEC
    beta_spec: ProjectionSpec = DEFAULT_GAIN_SPEC
    zeta_spec: ProjectionSpec = DEFAULT_GAIN_SPEC
    gamma_alpha: float = 10.0
    gamma_beta: float = 10.0
    gamma_zeta: float = 10.0
    lam: float = -1.0
    sign_b: int = -1

    def __post_init__(self):
        if not self.lam < 0:
            raise ValueError(f"reference pole must be negative, got {self.lam}")
        for name in ("gamma_alpha", "gamma_beta", "gamma_zeta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sign_b not in (-1, 1):
            raise ValueError(f"sign_b must be +1 or -1, got {self.sign_b}")
        for gain, spec in self._pairs():
            if not spec.contains(getattr(self, gain)):
                raise ValueError(f"{gain}={getattr(self, gain)} outside its projection set")

    def _pairs(self):
        return (
            ("alpha_hat", self.alpha_spec),
            ("beta_hat", self.beta_spec),
            ("zeta_hat", self.zeta_spec),
        )

    @classmethod
    def at_midpoints(cls, y_ref=0.0, **kwargs):
        specs = {k: kwargs.get(k, DEFAULT_GAIN_SPEC) for k in ("alpha_spec", "beta_spec", "zeta_spec")}
        return cls(
            alpha_hat=specs["alpha_spec"].midpoint,
            beta_hat=specs["beta_spec"].midpoint,
            zeta_hat=specs["zeta_spec"].midpoint,
            y_ref=y_ref,
            **kwargs,
        )

    @property
    def gains(self):
        return self.alpha_hat, self.beta_hat, self.zeta_hat


@dataclass(frozen=True)
class StepFlags:
    projection_active: bool
    clipped: int


@dataclass(frozen=True)
class IdealGains:
    alpha_star: float
    beta_star: float
    zeta_star: float


def reference_step(y, r, lam, capacity, dt):
    """Advance the reference model over ``dt`` with ``r`` held constant.

    Uses the exact zero-order-hold solution of the first-order model.
    """
    decay = math.exp(lam * dt)
    return decay * y + (decay - 1.0) / lam * (r / capacity)


def control(x, r, state: AdaptiveState) -> float:
    """Adaptive price, evaluated as ``alpha_hat*x + beta_hat*r + zeta_hat``."""
    return state.alpha_hat * x + state.beta_hat * r + state.zeta_hat


def adapt_step(state: AdaptiveState, x, r, e, dt):
    """Euler update of the three gains; returns ``(new_state, StepFlags)``.

    The update directions are ``-sign(b) * (x e, r e, e)``.
    """
    s = -state.sign_b
    drives = (s * x * e, s * r * e, s * e)
    gammas = (state.gamma_alpha, state.gamma_beta, state.gamma_zeta)
    new = {}
    active = False
    clipped = 0
    for (name, spec), y, gamma in zip(state._pairs(), drives, gammas):
        theta = getattr(state, name)
        active = active or projection_active(theta, y, spec)
        new[name], hit = projected_step(theta, y, gamma, dt, spec)
        clipped += hit
    return replace(state, **new), StepFlags(active, clipped)


def ideal_gains(a, b, lam, capacity, d_bar) -> IdealGains:
    """Gains that make the closed loop match the reference model exactly."""
    if b == 0:
        raise ValueError("ideal gains are undefined for b = 0")
    return IdealGains((lam - a) / b, 1.0 / (b * capacity), -d_bar)


def lyapunov(e, state: AdaptiveState, ideal: IdealGains, b_abs) -> float:
    da = state.alpha_hat - ideal.alpha_star
    db = state.beta_hat - ideal.beta_star
    dz = state.zeta_hat - ideal.zeta_star
    return 0.5 * e * e + b_abs * (
        da * da / (2.0 * state.gamma_alpha)
        + db * db / (2.0 * state.gamma_beta)
        + dz * dz / (2.0 * state.gamma_zeta)
    )


def reconstruct_state(demand, baseline, capacity, dt, x0=0.5):
    """State of charge from demand and baseline series.

    Cumulative trapezoidal integral of ``(D - B) / C`` starting at ``x0``,
    clipped to [0, 1] after every step like the plant state.
    """
    demand = np.asarray(demand, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if demand.shape != baseline.shape:
        raise ValueError(f"length mismatch: {demand.shape} vs {baseline.shape}")
    rate = (demand - baseline) / capacity
    out = np.empty_like(rate)
    x = min(max(float(x0), 0.0), 1.0)
    if len(out):
        out[0] = x
    for k in range(1, len(out)):
        x = min(max(x + 0.5 * dt * (rate[k - 1] + rate[k]), 0.0), 1.0)
        out[k] = x
    return out


class AdaptivePriceController:
    """Closed-loop wrapper used by the simulator.

    ``state_source="direct"`` feeds the plant state to the law;
    ``"reconstructed"`` integrates measured demand instead, starting from
    ``x0_estimate``.
    """

    def __init__(self, state: AdaptiveState, capacity, state_source="direct", x0_estimate=0.5):
        if state_source not in ("direct", "reconstructed"):
            raise ValueError(f"unknown state source {state_source!r}")
        self.state = state
        self.capacity = capacity
        self.state_source = state_source
        self.x_hat = min(max(float(x0_estimate), 0.0), 1.0)
        self._x = self._r = self._e = math.nan
        self._flags = StepFlags(False, 0)

    def price(self, t, x, baseline, reference) -> float:
        x_used = x if self.state_source == "direct" else self.x_hat
        self._x = x_used
        self._r = reference - baseline
        self._e = x_used - self.state.y_ref
        return control(x_used, self._r, self.state)

    @property
    def error(self) -> float:
        """Tracking error ``x - y_ref`` at the step most recently priced."""
        return self._e

    def fallback(self, x) -> float:
        return control(x, 0.0, self.state)

    def advance(self, dt, demand_start, demand_end, baseline_start, baseline_end, **_):
        old = self.state
        self.state, self._flags = adapt_step(old, self._x, self._r, self._e, dt)
        self.state = replace(
            self.state, y_ref=reference_step(old.y_ref, self._r, old.lam, self.capacity, dt)
        )
        rate = 0.5 * ((demand_start - baseline_start) + (demand_end - baseline_end))
        self.x_hat = min(max(self.x_hat + dt * rate / self.capacity, 0.0), 1.0)

    def log_fields(self) -> dict:
        """Values describing the step most recently priced."""
        return {
            "e": self._e,
            "projection_active": int(self._flags.projection_active),
            "gain_clip": self._flags.clipped,
        }


def run_procedure_2(scenario, **overrides):
    """Run an adaptive scenario through the simulator."""
    from flexprice.simkit.runner import run_config

    return run_config(scenario, **overrides)
