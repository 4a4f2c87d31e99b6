"""Piecewise-linear time-varying approximation of the flexibility function.

With affine stand-ins for the state, price and sigmoid maps the demand
change becomes ``delta = eta3 (eta1 x + eta2 u + lambda3)`` and the state
follows ``dx/dt = a x + b u + d``.  The coefficients switch with the sign of
``delta``: headroom ``1 - B`` on the positive branch, ``B`` on the negative
branch, all zero on the boundary.

Branch resolution is left to callers; :func:`ltv_coeffs` accepts an
assumed branch so controllers can test each candidate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from flexprice import flexfn

TIE_EPS = 1e-12


class Branch(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    ZERO = "zero"

    def multiplier(self, baseline: float) -> float:
        if self is Branch.POSITIVE:
            return 1.0 - baseline
        if self is Branch.NEGATIVE:
            return baseline
        return 0.0


@dataclass(frozen=True)
class LinearParams:
    eta1: float
    eta2: float
    eta3: float
    lambda1: float
    lambda2: float
    capacity: float
    flexible_share: float = 1.0

    def __post_init__(self):
        errors = []
        if not self.eta1 < 0:
            errors.append(f"eta1 must be negative, got {self.eta1}")
        if not self.eta2 < 0:
            errors.append(f"eta2 must be negative, got {self.eta2}")
        if not self.eta3 > 0:
            errors.append(f"eta3 must be positive, got {self.eta3}")
        if not self.lambda1 > 0:
            errors.append(f"lambda1 must be positive, got {self.lambda1}")
        if not self.lambda2 > 0:
            errors.append(f"lambda2 must be positive, got {self.lambda2}")
        if not self.capacity > 0:
            errors.append(f"capacity must be positive, got {self.capacity}")
        if not 0.0 <= self.flexible_share <= 1.0:
            errors.append(f"flexible_share must be in [0, 1], got {self.flexible_share}")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def lambda3(self) -> float:
        return self.lambda1 + self.lambda2

    @property
    def d_bar(self) -> float:
        """Input offset in ``dx/dt = a x + b (u + d_bar)``; negative."""
        return self.lambda3 / self.eta2


@dataclass(frozen=True)
class LtvCoefficients:
    a: float
    b: float
    d: float
    branch: Branch


def lin_delta(x, u, params: LinearParams):
    return params.eta3 * (params.eta1 * x + params.lambda1 + params.eta2 * u + params.lambda2)


def branch_sign(x, u, params: LinearParams) -> Branch:
    s = params.eta3 * (params.eta1 * x + params.eta2 * u + params.lambda3)
    if abs(s) <= TIE_EPS:
        return Branch.ZERO
    return Branch.POSITIVE if s > 0 else Branch.NEGATIVE


def coeffs_for_branch(branch: Branch, baseline, params: LinearParams) -> LtvCoefficients:
    scale = params.flexible_share / params.capacity * params.eta3 * branch.multiplier(baseline)
    if branch is Branch.ZERO:
        return LtvCoefficients(0.0, 0.0, 0.0, branch)
    return LtvCoefficients(
        scale * params.eta1, scale * params.eta2, scale * params.lambda3, branch
    )


def ltv_coeffs(x, u, baseline, params: LinearParams, branch: Branch | None = None):
    """LTV coefficients at ``(x, u, B)``; ``branch`` overrides sign resolution."""
    if branch is None:
        branch = branch_sign(x, u, params)
    return coeffs_for_branch(branch, baseline, params)


def lin_drift(x, u, baseline, params: LinearParams, branch: Branch | None = None):
    c = ltv_coeffs(x, u, baseline, params, branch)
    return c.a * x + c.b * u + c.d


def lin_output(x, u, baseline, params: LinearParams, branch: Branch | None = None):
    """Demand ``B + C (a x + b u + d)``, i.e. ``B + C * lin_drift``."""
    return baseline + params.capacity * lin_drift(x, u, baseline, params, branch)


def linearize(flex: flexfn.FlexParams, x0: float, u0: float, step: float = 1e-4):
    """Slopes and biases of ``f``, ``g`` and ``ell`` at an operating point.

    Central differences with half-width ``step``; ``eta3`` is the sigmoid
    slope at ``z0 = f(x0) + g(u0)``.  Raises ``ValueError`` when the
    resulting slopes or biases violate the sign requirements.
    """
    lo_x, hi_x = max(x0 - step, 0.0), min(x0 + step, 1.0)
    lo_u, hi_u = max(u0 - step, 0.0), min(u0 + step, 1.0)
    eta1 = (flexfn.f(hi_x, flex) - flexfn.f(lo_x, flex)) / (hi_x - lo_x)
    eta2 = (flexfn.g(hi_u, flex) - flexfn.g(lo_u, flex)) / (hi_u - lo_u)
    z0 = flexfn.f(x0, flex) + flexfn.g(u0, flex)
    eta3 = (flexfn.ell(z0 + step, flex.k) - flexfn.ell(z0 - step, flex.k)) / (2 * step)
    lambda1 = flexfn.f(x0, flex) - eta1 * x0
    lambda2 = flexfn.g(u0, flex) - eta2 * u0
    return LinearParams(
        eta1=eta1,
        eta2=eta2,
        eta3=eta3,
        lambda1=lambda1,
        lambda2=lambda2,
        capacity=flex.capacity,
        flexible_share=flex.flexible_share,
    )


def lin_drift_array(x, u, baseline, params: LinearParams):
    """Vectorized :func:`lin_drift` with per-element branch resolution."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    s = params.eta3 * (params.eta1 * x + params.eta2 * u + params.lambda3)
    mult = np.where(s > TIE_EPS, 1.0 - baseline, np.where(s < -TIE_EPS, baseline, 0.0))
    scale = params.flexible_share / params.capacity * params.eta3 * mult
    return (scale * params.eta1) * x + (scale * params.eta2) * u + scale * params.lambda3
