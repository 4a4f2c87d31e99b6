"""Closed-loop scenario runner.

At step ``k`` (time ``t = k * dt``) the controller prices the current state,
the plant output and bookkeeping are logged, then the state is advanced
over ``dt`` with the price held constant and clipped to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from flexprice import control_adaptive as ca
from flexprice.control_optimal import PriceError
from flexprice.simkit import integrators
from flexprice.simkit.trajectory import COLUMNS, Trajectory

INTEGRATORS = ("euler", "rk4", "euler-maruyama")


class RunAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 24.0
    integrator: str = "rk4"
    seed: int = 0
    abort_on_error: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt > self.horizon:
            raise ValueError(f"dt={self.dt} exceeds horizon={self.horizon}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox4x64 stream; identical seeds give identical paths."""
    return np.random.Generator(np.random.Philox(seed))


def run_scenario(config: SimConfig, plant, controller, baseline, reference, x0=0.5) -> Trajectory:
    if config.integrator == "euler-maruyama" and not plant.stochastic:
        raise ValueError("euler-maruyama requires a plant with process noise")
    rng = make_rng(config.seed)
    dt = config.dt
    n = config.n_steps
    adaptive = isinstance(controller, ca.AdaptivePriceController)
    cols = {name: [] for name in COLUMNS}
    nan = math.nan
    x = min(max(float(x0), 0.0), 1.0)
    prev_branch = None

    for k in range(n):
        t = k * dt
        b_t = baseline(t)
        ref_t = reference(t)
        failed = 0
        try:
            u = controller.price(t, x, b_t, ref_t)
        except PriceError as exc:
            if config.abort_on_error:
                raise RunAborted(f"step {k} (t={t:g}): {exc}") from exc
            failed = 1
            u = controller.fallback(x)

        d_t = plant.output(t, x, u, b_t)
        if plant.stochastic or plant.sigma_y > 0:
            dw, eps = rng.standard_normal(2)
        else:
            dw = eps = 0.0
        y_obs = d_t + plant.sigma_y * eps
        branch = plant.branch(t, x, u, b_t)

        if adaptive:
            st = controller.state
            gains = st.gains
            y_ref = st.y_ref
            e = controller.error
            c = plant.coeffs(t, x, u, b_t)
            v = nan
            if c is not None and c.b != 0.0:
                ideal = ca.ideal_gains(c.a, c.b, st.lam, plant.capacity, c.d / c.b)
                v = ca.lyapunov(e, st, ideal, abs(c.b))
        else:
            gains = (nan, nan, nan)
            y_ref = e = v = nan

        def rhs(s, xs):
            return plant.drift(s, xs, u, baseline(s))

        if config.integrator == "euler":
            raw = integrators.step_euler(rhs, t, x, dt, bounds=None)
        elif config.integrator == "rk4":
            raw = integrators.step_rk4(rhs, t, x, dt, bounds=None)
        else:
            raw = integrators.step_euler_maruyama(
                rhs, plant.diffusion, t, x, dt, math.sqrt(dt) * dw, bounds=None
            )
        x_next = integrators.clip(raw)

        t_next = (k + 1) * dt
        controller.advance(
            dt=dt,
            demand_start=d_t,
            demand_end=plant.output(t_next, x_next, u, baseline(t_next)),
            baseline_start=b_t,
            baseline_end=baseline(t_next),
        )
        extra = controller.log_fields()

        row = {
            "time": t,
            "x": x,
            "y_ref": y_ref,
            "D": d_t,
            "Y": y_obs,
            "D_ref": ref_t,
            "B": b_t,
            "u": u,
            "delta": plant.delta(t, x, u, b_t),
            "branch": branch.value,
            "alpha_hat": gains[0],
            "beta_hat": gains[1],
            "zeta_hat": gains[2],
            "e": e,
            "V": v,
            "clamp": int(raw != x_next),
            "price_clamp": extra.get("price_clamp", 0),
            "branch_switch": int(prev_branch is not None and branch is not prev_branch),
            "projection_active": extra.get("projection_active", 0),
            "no_consistent_branch": failed,
            "gain_clip": extra.get("gain_clip", 0),
            "r_negative": int(ref_t - b_t < 0),
        }
        for name in COLUMNS:
            cols[name].append(row[name])
        prev_branch = branch
        x = x_next

    meta = {"dt": dt, "controller": controller}
    if adaptive:
        meta["lam"] = controller.state.lam
    return Trajectory(cols, meta)


def switch_window(traj: Trajectory, width: int = 2) -> np.ndarray:
    """Mask of steps within ``width`` steps of a branch switch."""
    flags = np.asarray(traj["branch_switch"], dtype=bool)
    near = flags.copy()
    for s in range(1, width + 1):
        near[s:] |= flags[:-s]
        near[:-s] |= flags[s:]
    return near


def run_config(scenario, **overrides) -> Trajectory:
    """Validate (if needed), build, and run a scenario mapping or object."""
    from flexprice import scenario as sc

    spec = sc.load(scenario) if not isinstance(scenario, sc.Scenario) else scenario
    if overrides:
        spec = sc.with_overrides(spec, overrides)
    return sc.execute(spec)

