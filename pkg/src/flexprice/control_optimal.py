"""Known-parameter price generation for the linearized flexibility function.

Three controller variants share this module:

* exact inversion of the demand output for the price (unbounded),
* the same price clipped to [0, 1],
* a per-interval constant price minimizing the integrated squared tracking
  error under the box constraint, found by a coarse scan followed by
  golden-section refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from flexprice import linff
from flexprice.linff import Branch, LinearParams

MID_PRICE = 0.5
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class PriceError(RuntimeError):
    """A controller could not produce a price at the current step."""


class NoConsistentBranch(PriceError):
    pass


class ZeroBranch(PriceError):
    pass


class SignalDomainError(ValueError):
    pass


@dataclass(frozen=True)
class IntervalGrid:
    t_start: float
    t_end: float
    n_sub: int = 16
    u_resolution: float = 1e-6

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"t_end must exceed t_start, got [{self.t_start}, {self.t_end}]")
        if self.n_sub < 1:
            raise ValueError(f"n_sub must be >= 1, got {self.n_sub}")
        if not 0.0 < self.u_resolution < 1.0:
            raise ValueError(f"u_resolution must be in (0, 1), got {self.u_resolution}")


def boundary_price(x, params: LinearParams) -> float:
    """Price at which the demand change vanishes, so that ``D = B``."""
    return -(params.eta1 * x + params.lambda3) / params.eta2


def exact_price(x, baseline, reference, params: LinearParams) -> float:
    """Invert the linear demand output for the price, unclamped.

    Each nonzero branch is tried in turn and a candidate is kept only if it
    lands on the branch it was computed for.  Among consistent candidates
    the one nearest the mid price wins.  A reference equal to the baseline
    is met by the boundary price.
    """
    cap = params.capacity
    candidates = []
    degenerate = 0
    for branch in (Branch.POSITIVE, Branch.NEGATIVE):
        c = linff.coeffs_for_branch(branch, baseline, params)
        if c.b == 0.0:
            degenerate += 1
            continue
        u = (-cap * c.a * x - cap * c.d - baseline + reference) / (cap * c.b)
        if linff.branch_sign(x, u, params) is branch:
            candidates.append(u)
    if candidates:
        return min(candidates, key=lambda u: abs(u - MID_PRICE))
    if abs(reference - baseline) <= linff.TIE_EPS:
        return boundary_price(x, params)
    if degenerate == 2:
        raise ZeroBranch(
            f"no flexible demand to steer (B={baseline}, share={params.flexible_share})"
        )
    raise NoConsistentBranch(
        f"no branch reproduces D_ref={reference} from x={x}, B={baseline}"
    )


def clamped_price(x, baseline, reference, params: LinearParams) -> float:
    return min(max(exact_price(x, baseline, reference, params), 0.0), 1.0)


def golden_section(fn, lo: float, hi: float, tol: float = 1e-6):
    """Minimize a unimodal ``fn`` on ``[lo, hi]``; returns ``(x, fn(x))``."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def _check_domain(signal, name, grid: IntervalGrid):
    domain = getattr(signal, "domain", None)
    if domain is None:
        return
    lo, hi = domain
    if grid.t_start < lo or grid.t_end > hi:
        raise SignalDomainError(
            f"{name} is defined on [{lo}, {hi}], interval is [{grid.t_start}, {grid.t_end}]"
        )


def interval_objective(u, x0, grid: IntervalGrid, baseline, reference, params: LinearParams):
    """Integrated squared tracking error for constant price(s) ``u``.

    State and cost are advanced together by classical RK4 on ``n_sub``
    equal substeps; the state is clipped to [0, 1] between substeps as the
    plant is.  ``u`` may be an array, in which case one objective value is
    returned per entry.
    """
    u = np.asarray(u, dtype=float)
    x = np.full(u.shape, float(x0))
    cost = np.zeros(u.shape)
    cap = params.capacity
    h = (grid.t_end - grid.t_start) / grid.n_sub

    def rhs(t, xs):
        bt = baseline(t)
        dx = linff.lin_drift_array(xs, u, bt, params)
        return dx, (cap * dx + bt - reference(t)) ** 2

    t = grid.t_start
    for _ in range(grid.n_sub):
        k1, q1 = rhs(t, x)
        k2, q2 = rhs(t + h / 2, x + h / 2 * k1)
        k3, q3 = rhs(t + h / 2, x + h / 2 * k2)
        k4, q4 = rhs(t + h, x + h * k3)
        x = np.clip(x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), 0.0, 1.0)
        cost = cost + h / 6 * (q1 + 2 * q2 + 2 * q3 + q4)
        t += h
    return float(cost) if cost.ndim == 0 else cost


def optimal_price_interval(
    x0, grid: IntervalGrid, baseline, reference, params: LinearParams, coarse_points: int = 21
) -> float:
    """Constant price in [0, 1] minimizing :func:`interval_objective`.

    A uniform coarse scan locates every local minimum of the sampled
    objective; each is refined by golden-section search inside its
    neighbouring scan cells.  The endpoints are always kept as candidates
    so an active bound is hit exactly.
    """
    _check_domain(baseline, "baseline", grid)
    _check_domain(reference, "reference", grid)

    def obj(u):
        return interval_objective(u, x0, grid, baseline, reference, params)

    scan = np.linspace(0.0, 1.0, coarse_points)
    vals = obj(scan)
    best_u, best_val = 0.0, float(vals[0])
    if vals[-1] < best_val:
        best_u, best_val = 1.0, float(vals[-1])
    for i in range(coarse_points):
        left = vals[i - 1] if i > 0 else np.inf
        right = vals[i + 1] if i < coarse_points - 1 else np.inf
        if vals[i] > left or vals[i] > right:
            continue
        lo = scan[max(i - 1, 0)]
        hi = scan[min(i + 1, coarse_points - 1)]
        u, val = golden_section(obj, lo, hi, grid.u_resolution)
        if val < best_val:
            best_u, best_val = float(u), float(val)
    return best_u


@dataclass
class ExactPriceController:
    """Per-step price from the exact inversion, optionally clipped."""

    model: LinearParams
    clamp: bool = False
    last_good: float | None = field(default=None, init=False)
    _clipped: bool = field(default=False, init=False)

    def price(self, t, x, baseline, reference) -> float:
        raw = exact_price(x, baseline, reference, self.model)
        u = min(max(raw, 0.0), 1.0) if self.clamp else raw
        self._clipped = u != raw
        self.last_good = u
        return u

    def fallback(self, x) -> float:
        """Price used when :meth:`price` raised: hold the last good price."""
        if self.last_good is not None:
            return self.last_good
        u = boundary_price(x, self.model)
        return min(max(u, 0.0), 1.0) if self.clamp else u

    def advance(self, **_):
        pass

    def log_fields(self) -> dict:
        return {"price_clamp": int(self._clipped)}


@dataclass
class IntervalOptimalController:
    """Piecewise-constant price re-optimized at the start of every interval."""

    model: LinearParams
    baseline: object
    reference: object
    interval: float = 1.0
    n_sub: int = 16
    u_resolution: float = 1e-6
    coarse_points: int = 21
    records: list = field(default_factory=list, init=False)
    _u: float | None = field(default=None, init=False)
    _next: float = field(default=0.0, init=False)

    def price(self, t, x, baseline, reference) -> float:
        # slack absorbs rounding in t = k * dt
        if self._u is None or t >= self._next - 1e-9:
            grid = IntervalGrid(t, t + self.interval, self.n_sub, self.u_resolution)
            u = optimal_price_interval(
                x, grid, self.baseline, self.reference, self.model, self.coarse_points
            )
            self.records.append({"grid": grid, "x0": float(x), "u": u})
            self._u = u
            self._next = t + self.interval
        return self._u

    def fallback(self, x) -> float:
        return self._u if self._u is not None else MID_PRICE

    def advance(self, **_):
        pass

    def log_fields(self) -> dict:
        return {}


def run_procedure_1(scenario, **overrides):
    """Run a known-parameter scenario (exact, clamped or interval-optimal)."""
    from flexprice.simkit.runner import run_config

    return run_config(scenario, **overrides)
