"""Plant models driven by the simulator."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from flexprice import flexfn, linff
from flexprice.linff import Branch, LinearParams, LtvCoefficients


@dataclass
class LinearPlant:
    """Linearized flexibility function.

    ``mode="time-varying"`` re-resolves the branch and baseline multiplier
    at every evaluation.  ``mode="frozen"`` keeps the positive-branch
    coefficients at ``frozen_baseline``, giving the piecewise-constant
    plant of the adaptive design.  ``jumps`` is a sorted list of
    ``(time, factor)``; from each time on, ``a``, ``b`` and ``d`` are scaled
    by that factor, so ``d / b`` stays fixed.  With ``jump_scales_d=False``
    only ``a`` and ``b`` are scaled.
    """

    params: LinearParams
    mode: str = "time-varying"
    frozen_baseline: float = 0.0
    jumps: list = field(default_factory=list)
    jump_scales_d: bool = True

    stochastic = False
    sigma_y = 0.0

    def __post_init__(self):
        if self.mode not in ("time-varying", "frozen"):
            raise ValueError(f"unknown plant mode {self.mode!r}")
        self.jumps = sorted((float(t), float(k)) for t, k in self.jumps)
        self._jump_times = [t for t, _ in self.jumps]
        self._frozen = linff.coeffs_for_branch(Branch.POSITIVE, self.frozen_baseline, self.params)

    @property
    def capacity(self):
        return self.params.capacity

    def factor(self, t) -> float:
        i = bisect.bisect_right(self._jump_times, t)
        return self.jumps[i - 1][1] if i else 1.0

    def coeffs(self, t, x, u, baseline) -> LtvCoefficients:
        if self.mode == "frozen":
            c = self._frozen
        else:
            c = linff.ltv_coeffs(x, u, baseline, self.params)
        k = self.factor(t)
        if k == 1.0:
            return c
        return LtvCoefficients(k * c.a, k * c.b, k * c.d if self.jump_scales_d else c.d, c.branch)

    def drift(self, t, x, u, baseline):
        c = self.coeffs(t, x, u, baseline)
        return c.a * x + c.b * u + c.d

    def diffusion(self, t, x):
        return 0.0

    def output(self, t, x, u, baseline):
        return baseline + self.params.capacity * self.drift(t, x, u, baseline)

    def delta(self, t, x, u, baseline):
        return linff.lin_delta(x, u, self.params)

    def branch(self, t, x, u, baseline) -> Branch:
        if self.mode == "frozen":
            return Branch.POSITIVE
        return linff.branch_sign(x, u, self.params)


@dataclass
class NonlinearPlant:
    """Nonlinear flexibility function with optional state and output noise."""

    params: flexfn.FlexParams

    @property
    def capacity(self):
        return self.params.capacity

    @property
    def stochastic(self):
        return self.params.sigma_x > 0

    @property
    def sigma_y(self):
        return self.params.sigma_y

    def coeffs(self, t, x, u, baseline):
        return None

    def drift(self, t, x, u, baseline):
        return flexfn.drift(x, _unit(u), baseline, self.params)

    def diffusion(self, t, x):
        return flexfn.diffusion(_unit(x), self.params.sigma_x)

    def output(self, t, x, u, baseline):
        return flexfn.demand(x, _unit(u), baseline, self.params)

    def delta(self, t, x, u, baseline):
        return flexfn.demand_change(x, _unit(u), self.params)

    def branch(self, t, x, u, baseline) -> Branch:
        dl = self.delta(t, x, u, baseline)
        if dl > 0:
            return Branch.POSITIVE
        if dl < 0:
            return Branch.NEGATIVE
        return Branch.ZERO


def _unit(v):
    # the nonlinear maps are only defined on [0, 1]; RK4 stages may step outside
    return min(max(v, 0.0), 1.0)
