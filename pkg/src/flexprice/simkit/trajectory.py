"""Per-step simulation log, its CSV form, and run metrics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

COLUMNS = (
    "time",
    "x",
    "y_ref",
    "D",
    "Y",
    "D_ref",
    "B",
    "u",
    "delta",
    "branch",
    "alpha_hat",
    "beta_hat",
    "zeta_hat",
    "e",
    "V",
    "clamp",
    "price_clamp",
    "branch_switch",
    "projection_active",
    "no_consistent_branch",
    "gain_clip",
    "r_negative",
)
FLAG_COLUMNS = COLUMNS[15:]
TEXT_COLUMNS = ("branch",)

# per-step Lyapunov slack on top of lam * e**2 * dt
LYAPUNOV_SLACK = 10.0


@dataclass
class Trajectory:
    """Column-oriented log; one row per simulation step.

    ``meta`` carries run constants (``dt``, ``lam``) and, outside the CSV,
    the controller object so callers can inspect controller records.
    """

    columns: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [c for c in COLUMNS if c not in self.columns]
        if missing:
            raise ValueError(f"trajectory is missing columns {missing}")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError("trajectory columns have unequal lengths")
        for name in COLUMNS:
            if name not in TEXT_COLUMNS:
                dtype = int if name in FLAG_COLUMNS else float
                self.columns[name] = np.asarray(self.columns[name], dtype=dtype)

    def __len__(self):
        return len(self.columns["time"])

    def __getitem__(self, name):
        return self.columns[name]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            cols = [self.columns[c] for c in COLUMNS]
            for row in zip(*cols):
                writer.writerow(_fmt(v) for v in row)

    @classmethod
    def read_csv(cls, path, meta=None):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != COLUMNS:
                raise ValueError(f"unexpected trajectory header {header}")
            rows = list(reader)
        cols = {}
        for i, name in enumerate(COLUMNS):
            raw = [r[i] for r in rows]
            cols[name] = raw if name in TEXT_COLUMNS else [float(v) for v in raw]
        return cls(cols, dict(meta or {}))


def _fmt(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _nan_to_none(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def lyapunov_ascent(traj: Trajectory):
    """Boolean mask over steps ``k`` where ``V[k+1] - V[k]`` exceeds its bound.

    The bound is ``lam * e[k]**2 * dt + LYAPUNOV_SLACK * dt**2``.  Steps with
    an undefined ``V`` on either end are never counted.
    """
    v = traj["V"]
    e = traj["e"]
    dt = traj.meta["dt"]
    lam = traj.meta.get("lam", math.nan)
    if len(v) < 2 or not math.isfinite(lam):
        return np.zeros(max(len(v) - 1, 0), dtype=bool)
    dv = np.diff(v)
    bound = lam * e[:-1] ** 2 * dt + LYAPUNOV_SLACK * dt * dt
    with np.errstate(invalid="ignore"):
        return np.isfinite(dv) & (dv > bound)


def metrics(traj: Trajectory) -> dict:
    """Summary statistics of a run.  Keys are stable across versions."""
    n = len(traj)
    if n == 0:
        raise ValueError("empty trajectory")
    dt = traj.meta["dt"]
    err = traj["D"] - traj["D_ref"]
    u = traj["u"]
    e = traj["e"]
    tail = slice(n - max(n // 10, 1), n)
    has_e = bool(np.any(np.isfinite(e)))
    e_sq = float(np.nansum(e**2) * dt) if has_e else None
    e_sq_tail = float(np.nansum(e[tail] ** 2) * dt) if has_e else None
    last = {k: float(traj[k][-1]) for k in ("alpha_hat", "beta_hat", "zeta_hat")}
    out = {
        "steps": n,
        "dt": dt,
        "rmse_tracking": float(np.sqrt(np.mean(err**2))),
        "max_abs_tracking": float(np.max(np.abs(err))),
        "max_abs_e": float(np.nanmax(np.abs(e))) if has_e else None,
        "e_tail_max": float(np.nanmax(np.abs(e[tail]))) if has_e else None,
        "e_sq_integral": e_sq,
        "e_sq_tail": e_sq_tail,
        "u_min": float(np.min(u)),
        "u_max": float(np.max(u)),
        "u_bound_violations": int(np.sum((u < 0.0) | (u > 1.0))),
        "lyapunov_ascent_steps": int(np.sum(lyapunov_ascent(traj))),
        "clamp_events": int(np.sum(traj["clamp"])),
        "price_clamp_events": int(np.sum(traj["price_clamp"])),
        "branch_switch_events": int(np.sum(traj["branch_switch"])),
        "projection_active_steps": int(np.sum(traj["projection_active"])),
        "no_consistent_branch_events": int(np.sum(traj["no_consistent_branch"])),
        "gain_clip_events": int(np.sum(traj["gain_clip"])),
        "r_negative_steps": int(np.sum(traj["r_negative"])),
        "final_gains": {k: _nan_to_none(v) for k, v in last.items()}
        if math.isfinite(last["alpha_hat"])
        else None,
    }
    return out


def write_summary(summary: dict, path):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
