"""Nonlinear stochastic flexibility function.

The state of charge ``x`` drifts with the demand deviation ``(D - B) / C``
and is perturbed by boundary-vanishing noise ``x (1 - x) sigma_x dW``.  The
demand change ``delta`` is a sigmoid of a state term ``f(x)`` and a price
term ``g(u)``; ``g`` is a nonpositive combination of seven monotone
I-spline bases.

I-spline basis
--------------
Cubic B-splines on the clamped uniform knot vector

    (0, 0, 0, 0, 0.2, 0.4, 0.6, 0.8, 1, 1, 1, 1)

give eight B-spline bases ``B_0..B_7``.  The j-th I-spline (j = 1..7) is the
tail sum ``B_j + ... + B_7``; it rises monotonically from 0 at u = 0 to 1 at
u = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPLINE_DEGREE = 3
N_ISPLINES = 7
KNOTS = np.array([0.0] * 4 + [0.2, 0.4, 0.6, 0.8] + [1.0] * 4)

_MONOTONE_GRID = np.linspace(0.0, 1.0, 1000)
_MONOTONE_TOL = 1e-12


def _check_unit(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return arr


def bspline_basis(u) -> np.ndarray:
    """Cubic B-spline basis on ``KNOTS`` by the Cox-de Boor recursion.

    Returns an array of shape ``u.shape + (8,)``.  The last nonempty knot
    span is treated as closed so the basis is right-continuous at u = 1.
    """
    u = np.asarray(u, dtype=float)
    t = KNOTS
    n_spans = len(t) - 1
    basis = np.zeros(u.shape + (n_spans,))
    last = int(np.max(np.nonzero(t[1:] > t[:-1])))
    for i in range(n_spans):
        if t[i + 1] > t[i]:
            upper = (u <= t[i + 1]) if i == last else (u < t[i + 1])
            basis[..., i] = ((u >= t[i]) & upper).astype(float)
    for p in range(1, SPLINE_DEGREE + 1):
        nxt = np.zeros(u.shape + (n_spans - p,))
        for i in range(n_spans - p):
            left_den = t[i + p] - t[i]
            right_den = t[i + p + 1] - t[i + 1]
            if left_den > 0:
                nxt[..., i] += (u - t[i]) / left_den * basis[..., i]
            if right_den > 0:
                nxt[..., i] += (t[i + p + 1] - u) / right_den * basis[..., i + 1]
        basis = nxt
    return basis


def ispline_matrix(u) -> np.ndarray:
    """All seven I-spline values at ``u``, shape ``u.shape + (7,)``."""
    u = _check_unit("u", u)
    b = bspline_basis(u)
    # reverse cumulative sum: column j holds B_j + ... + B_7
    tails = np.cumsum(b[..., ::-1], axis=-1)[..., ::-1]
    return np.clip(tails[..., 1:], 0.0, 1.0)


def ispline_basis(u, j: int):
    """Value of the j-th (1-based) monotone I-spline basis at ``u``."""
    if not 1 <= j <= N_ISPLINES:
        raise IndexError(f"I-spline index must be in 1..{N_ISPLINES}, got {j}")
    out = ispline_matrix(u)[..., j - 1]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FlexParams:
    """Parameters of the nonlinear flexibility function.

    ``beta`` weights the seven I-splines of the price response and must be
    nonpositive so ``g`` decreases in price.  ``alpha`` holds the four state
    polynomial coefficients; the resulting ``f`` is checked to be
    non-increasing on a 1000-point grid.
    """

    capacity: float
    flexible_share: float
    beta: tuple = field(default=(0.0,) * N_ISPLINES)
    alpha: tuple = field(default=(0.0, 1.0, 0.0, 0.0))
    k: float = 1.0
    sigma_x: float = 0.0
    sigma_y: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        errors = []
        if not self.capacity > 0:
            errors.append(f"capacity must be positive, got {self.capacity}")
        if not 0.0 <= self.flexible_share <= 1.0:
            errors.append(f"flexible_share must be in [0, 1], got {self.flexible_share}")
        if len(self.beta) != N_ISPLINES:
            errors.append(f"beta needs {N_ISPLINES} coefficients, got {len(self.beta)}")
        elif any(b > 0 for b in self.beta):
            errors.append("all beta coefficients must be <= 0 so g is non-increasing")
        if len(self.alpha) != 4:
            errors.append(f"alpha needs 4 coefficients, got {len(self.alpha)}")
        if not self.k > 0:
            errors.append(f"k must be positive, got {self.k}")
        if self.sigma_x < 0 or self.sigma_y < 0:
            errors.append("noise intensities must be nonnegative")
        if not errors:
            vals = f(_MONOTONE_GRID, self)
            if np.any(np.diff(vals) > _MONOTONE_TOL):
                errors.append("alpha yields an f that is not non-increasing on [0, 1]")
        if errors:
            raise ValueError("; ".join(errors))


def g(u, params: FlexParams):
    """Price response: nonpositive combination of the I-spline bases."""
    out = ispline_matrix(u) @ np.asarray(params.beta)
    return float(out) if np.ndim(out) == 0 else out


def f(x, params: FlexParams):
    """State response polynomial, evaluated term by term as printed."""
    x = _check_unit("x", x)
    a1, a2, a3, a4 = params.alpha
    s = 2.0 * x - 1.0
    out = (1.0 - 2.0 * x + a1 * (1.0 - s**2)) * (a2 + a3 * s**2 + a4 * s**6)
    return float(out) if np.ndim(out) == 0 else out


def ell(z, k: float):
    """Symmetric sigmoid ``-1 + 2 / (1 + exp(-k z))`` with range (-1, 1).

    Evaluated through the identity with ``tanh(k z / 2)``, which is exactly
    odd and does not overflow for large ``|z|``.
    """
    out = np.tanh(0.5 * k * np.asarray(z, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def demand_change(x, u, params: FlexParams):
    return ell(f(x, params) + g(u, params), params.k)


def expected_demand(baseline, delta, flexible_share):
    """Expected demand after a signed fractional change ``delta``.

    Upward changes scale the headroom ``1 - B``, downward changes scale
    ``B``; ``delta == 0`` leaves the baseline untouched.
    """
    b = np.asarray(baseline, dtype=float)
    dl = np.asarray(delta, dtype=float)
    room = np.where(dl > 0, 1.0 - b, np.where(dl < 0, b, 0.0))
    out = b + dl * flexible_share * room
    return float(out) if np.ndim(out) == 0 else out


def drift(x, u, baseline, params: FlexParams):
    """Deterministic part of the state equation, ``(D - B) / C``."""
    d = expected_demand(baseline, demand_change(x, u, params), params.flexible_share)
    return (d - baseline) / params.capacity


def demand(x, u, baseline, params: FlexParams):
    return expected_demand(baseline, demand_change(x, u, params), params.flexible_share)


def diffusion(x, sigma_x: float):
    x = _check_unit("x", x)
    out = x * (1.0 - x) * sigma_x
    return float(out) if np.ndim(out) == 0 else out


def observe(d, sigma_y: float, noise_draw):
    """Noisy demand measurement; not clamped to [0, 1]."""
    return d + sigma_y * noise_draw
