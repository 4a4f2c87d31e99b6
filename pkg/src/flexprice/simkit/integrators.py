"""Fixed-step integrators for the scalar state of charge.

Every step ends with an optional clip onto ``bounds``; pass ``bounds=None``
to get the raw update (the runner does this to count clip events).
"""

from __future__ import annotations

UNIT = (0.0, 1.0)


def clip(x, bounds=UNIT):
    if bounds is None:
        return x
    lo, hi = bounds
    return min(max(x, lo), hi)


def step_euler(f, t, x, dt, bounds=UNIT):
    return clip(x + f(t, x) * dt, bounds)


def step_rk4(f, t, x, dt, bounds=UNIT):
    k1 = f(t, x)
    k2 = f(t + dt / 2, x + dt / 2 * k1)
    k3 = f(t + dt / 2, x + dt / 2 * k2)
    k4 = f(t + dt, x + dt * k3)
    return clip(x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), bounds)


def step_euler_maruyama(drift, diffusion, t, x, dt, dw, bounds=UNIT):
    """``x + drift * dt + diffusion * dw``; ``dw`` is already scaled by sqrt(dt)."""
    return clip(x + drift(t, x) * dt + diffusion(t, x) * dw, bounds)
