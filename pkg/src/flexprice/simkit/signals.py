"""Scalar time signals for baseline and reference demand."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Constant:
    value: float
    domain: tuple | None = None

    def __call__(self, t):
        return self.value


@dataclass(frozen=True)
class PiecewiseConstant:
    """``levels[i]`` holds on ``[breakpoints[i-1], breakpoints[i])``."""

    levels: tuple
    breakpoints: tuple
    domain: tuple | None = None

    def __post_init__(self):
        if len(self.levels) != len(self.breakpoints) + 1:
            raise ValueError("piecewise-constant needs len(levels) == len(breakpoints) + 1")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def __call__(self, t):
        return self.levels[bisect.bisect_right(self.breakpoints, t)]


@dataclass(frozen=True)
class Sinusoid:
    offset: float
    amplitude: float
    period: float
    phase: float = 0.0
    domain: tuple | None = None

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    def __call__(self, t):
        return self.offset + self.amplitude * math.sin(2.0 * math.pi * t / self.period + self.phase)


@dataclass(frozen=True)
class Table:
    """Tabulated signal; ``hold`` is left-continuous zero-order hold.

    Outside the table the end values are held.
    """

    times: tuple
    values: tuple
    interp: str = "hold"
    domain: tuple | None = None

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("table needs equally many times and values (at least one)")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("table times must be strictly increasing")
        if self.interp not in ("hold", "linear"):
            raise ValueError(f"unknown interpolation {self.interp!r}")

    def __call__(self, t):
        i = bisect.bisect_right(self.times, t)
        if i == 0:
            return self.values[0]
        if i == len(self.times) or self.interp == "hold":
            return self.values[i - 1]
        t0, t1 = self.times[i - 1], self.times[i]
        v0, v1 = self.values[i - 1], self.values[i]
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)


def value_range(signal):
    """Closed bounds of every value the signal can take."""
    if isinstance(signal, Constant):
        return signal.value, signal.value
    if isinstance(signal, PiecewiseConstant):
        return min(signal.levels), max(signal.levels)
    if isinstance(signal, Sinusoid):
        a = abs(signal.amplitude)
        return signal.offset - a, signal.offset + a
    if isinstance(signal, Table):
        return min(signal.values), max(signal.values)
    raise TypeError(f"unsupported signal {type(signal).__name__}")


def build(spec: dict, domain=None):
    """Signal object from a plain ``{"kind": ..., ...}`` mapping."""
    kind = spec["kind"]
    if kind == "constant":
        return Constant(float(spec["value"]), domain)
    if kind == "piecewise-constant":
        return PiecewiseConstant(
            tuple(map(float, spec["levels"])), tuple(map(float, spec["breakpoints"])), domain
        )
    if kind == "sinusoid":
        return Sinusoid(
            float(spec["offset"]),
            float(spec["amplitude"]),
            float(spec["period"]),
            float(spec.get("phase", 0.0)),
            domain,
        )
    if kind == "table":
        return Table(
            tuple(map(float, spec["times"])),
            tuple(map(float, spec["values"])),
            spec.get("interp", "hold"),
            domain,
        )
    raise ValueError(f"unknown signal kind {kind!r}")
