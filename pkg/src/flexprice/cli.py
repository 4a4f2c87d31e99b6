"""Command-line front end: ``flexprice validate | run | sweep | list``.

Scenarios are JSON files or the names of bundled scenarios (``fig3`` ...).
Run outputs go to ``--out`` or, by default, to ``$FLEXPRICE_OUT/<name>``
(``runs/<name>`` when the variable is unset).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from flexprice import scenario as sc
from flexprice.simkit.runner import RunAborted
from flexprice.simkit.trajectory import metrics, write_summary

OUT_ENV = "FLEXPRICE_OUT"
SWEEP_COLUMNS = (
    "rmse_tracking",
    "max_abs_tracking",
    "max_abs_e",
    "e_tail_max",
    "e_sq_integral",
    "u_min",
    "u_max",
    "u_bound_violations",
    "lyapunov_ascent_steps",
    "clamp_events",
    "price_clamp_events",
    "branch_switch_events",
    "projection_active_steps",
    "no_consistent_branch_events",
    "gain_clip_events",
)


def default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "runs")) / name


def validate(path) -> dict:
    """Effective configuration with all defaults; raises ``ScenarioError``."""
    return sc.load(path).effective()


def _run_spec(spec: sc.Scenario, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / spec.output.config, "w") as fh:
        json.dump(spec.effective(), fh, indent=2)
        fh.write("\n")
    traj = sc.execute(spec)
    summary = metrics(traj)
    summary["scenario"] = spec.name
    traj.to_csv(out / spec.output.trajectory)
    write_summary(summary, out / spec.output.summary)
    return traj, summary


def run(path, out_dir=None, seed=None, abort_on_error=None):
    """Run one scenario and write trajectory, summary and effective config."""
    overrides = {}
    if seed is not None:
        overrides["sim.seed"] = seed
    if abort_on_error is not None:
        overrides["sim.abort_on_error"] = abort_on_error
    spec = sc.load(path)
    if overrides:
        spec = sc.with_overrides(spec, overrides)
    return _run_spec(spec, out_dir or default_out(spec.name))


def _sweep_one(data, out_dir):
    spec = sc.load(data)
    _, summary = _run_spec(spec, out_dir)
    return summary


def sweep(path, parameter: str, values, out_dir=None, jobs=None):
    """One run per value of ``parameter``, plus an aggregate ``sweep.csv``.

    ``parameter`` is a dotted path into the scenario; several paths joined by
    commas are all set to the same value (e.g. the three adaptation rates).
    """
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    base = sc.load(path)
    paths = [p.strip() for p in parameter.split(",") if p.strip()]
    out = Path(out_dir or default_out(base.name + "_sweep"))
    docs = []
    for v in values:
        data = base.effective()
        for p in paths:
            sc.set_path(data, p, v)
        sc.load(data)  # fail fast, before any run starts
        docs.append(data)
    dirs = [out / f"{i:03d}_{_slug(v)}" for i, v in enumerate(values)]
    workers = jobs or min(len(docs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_sweep_one, docs, dirs))
    else:
        summaries = [_sweep_one(d, o) for d, o in zip(docs, dirs)]
    rows = []
    for v, s in zip(values, summaries):
        row = {"parameter": parameter, "value": v}
        row.update({k: s[k] for k in SWEEP_COLUMNS})
        rows.append(row)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["parameter", "value", *SWEEP_COLUMNS])
        writer.writeheader()
        writer.writerows(rows)
    return rows


def _slug(v) -> str:
    return "".join(ch if ch.isalnum() or ch in ".-" else "_" for ch in str(v))


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexprice", description="Price-signal generation for flexible demand"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario and print its effective config")
    p.add_argument("scenario")

    p = sub.add_parser("run", help="run a scenario")
    p.add_argument("scenario")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override sim.seed")
    p.add_argument(
        "--abort-on-error", action="store_true", default=None, help="stop at the first price error"
    )

    p = sub.add_parser("sweep", help="run a scenario over several values of one parameter")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="dotted path, comma-separated for several")
    p.add_argument("--values", nargs="+", required=True, type=_parse_value)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--jobs", type=int, default=None, help="parallel runs (default: one per value)")

    sub.add_parser("list", help="list bundled scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name in sc.BUNDLED:
                print(f"{name:12s} {sc.read(name).get('description', '')}")
        elif args.command == "validate":
            print(json.dumps(validate(args.scenario), indent=2))
        elif args.command == "run":
            _, summary = run(args.scenario, args.out, args.seed, args.abort_on_error)
            print(json.dumps(summary, indent=2, sort_keys=True))
        elif args.command == "sweep":
            rows = sweep(args.scenario, args.param, args.values, args.out, args.jobs)
            for row in rows:
                print(f"{row['value']!s:>12}  rmse={row['rmse_tracking']:.3e}  "
                      f"e_tail={row['e_tail_max']}")
    except sc.ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RunAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
