"""Command-line entry point: ``courtplan run`` and ``courtplan verify``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .predictor import OtherState, free_rollout
from .report import summarize, write_figures
from .scenario import (
    ScenarioConfig,
    ScenarioError,
    derive_crossing_constraints,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
    speed_limit,
)
from .simulator import ROLLOUT_STEP, simulate

log = logging.getLogger("courtplan")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
_WEIGHT_NAMES = ("f", "v", "jerk", "inter")


class UsageError(ValueError):
    pass


def read_scenario(ref: str) -> tuple[ScenarioConfig, str]:
    """Load a scenario from a file path or a bundled name such as ``scenario1``."""
    path = Path(ref)
    if path.is_file():
        return load_scenario(path.read_text()), str(path)
    bundled = resources.files("courtplan") / "scenarios" / f"{ref}.yaml"
    if bundled.is_file():
        return load_scenario(bundled.read_text()), f"bundled:{ref}"
    raise FileNotFoundError(f"no scenario file or bundled scenario named {ref!r}")


def add_dummy_vehicles(scenario: ScenarioConfig, n: int, seed: int) -> ScenarioConfig:
    """Append ``n`` unrelated vehicles on a separate road, far from the ego."""
    if n <= 0:
        return scenario
    rng = np.random.default_rng(seed)
    doc = scenario_to_dict(scenario)
    doc["paths"].append({"id": "_dummy_road", "samples": [[0.0, 0.0, 10.0], [5000.0, 0.0, 10.0]]})
    for i in range(n):
        doc["vehicles"].append({
            "id": f"d{i + 1}", "role": "other", "path": "_dummy_road",
            "s": float(rng.uniform(500.0, 2000.0)), "v": float(rng.uniform(3.0, 8.0)),
        })
    return scenario_from_dict(doc)


def parse_sweep(spec: str) -> tuple[str, list[float]]:
    name, sep, values = spec.partition("=")
    name = name.strip()
    if not sep or name not in _WEIGHT_NAMES:
        raise UsageError(f"--sweep-weight expects NAME=v1,v2 with NAME in {_WEIGHT_NAMES}, got {spec!r}")
    try:
        vals = [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad sweep value in {spec!r}") from exc
    if not vals or any(v < 0 for v in vals):
        raise UsageError("sweep values must be non-negative numbers")
    return name, vals


def _fmt(x: float) -> str:
    return f"{x:g}"


def cmd_run(args) -> int:
    scenario, _ = read_scenario(args.scenario)
    if args.replan_hz is not None:
        if args.replan_hz <= 0:
            raise UsageError("--replan-hz must be positive")
        scenario = scenario.with_planner(replan_hz=args.replan_hz)
    if args.dummy_vehicles < 0:
        raise UsageError("--dummy-vehicles must be >= 0")
    scenario = add_dummy_vehicles(scenario, args.dummy_vehicles, args.seed)
    if args.duration is not None and args.duration <= 0:
        raise UsageError("--duration must be positive")

    runs = [(scenario.name, scenario)]
    if args.sweep_weight:
        name, vals = parse_sweep(args.sweep_weight)
        runs = [(f"{scenario.name}_{name}={_fmt(v)}", scenario.with_weights(**{name: v})) for v in vals]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries = []
    for stem, sc in runs:
        log.info("running %s", stem)
        sim = simulate(sc, duration=args.duration)
        sim.write_csv(out / f"{stem}.csv")
        sim.write_json(out / f"{stem}.json")
        summary = summarize(sim, sc)
        summary.scenario = stem
        if not args.no_plots:
            write_figures(sim, sc, out, stem)
        summaries.append(summary.to_dict())
        print(summary.line())
    with open(out / "summary.json", "w") as fh:
        json.dump(summaries, fh, indent=1)
    return EXIT_OK


def cmd_verify(args) -> int:
    scenario, source = read_scenario(args.scenario)
    cfg = scenario.planner
    print(f"OK {source} ({scenario.name}): {1 + len(scenario.others)} vehicles, {len(scenario.zones)} zones")
    horizon = int(np.ceil((cfg.tau + 1) * cfg.dt / ROLLOUT_STEP))
    print("derived constraints [t_start, t_end, s_start, s_end]:")
    n_constraints = 0
    for o in scenario.others:
        zone = scenario.zone_for(o.id)
        if zone is None or zone.kind != "crossing":
            continue
        states, _ = free_rollout(OtherState(o.s, o.v), scenario.idm, horizon, ROLLOUT_STEP)
        rollout = [(i * ROLLOUT_STEP, x.s, x.v) for i, x in enumerate(states)]
        cs = derive_crossing_constraints(zone, rollout, cfg, t_min=0.0)
        for c in cs:
            print(f"  vehicle {o.id}: " + ", ".join(f"{x:.3f}" for x in c.as_list()))
        if not cs:
            print(f"  vehicle {o.id}: no constraint derived (zone not occupied within the horizon)")
        n_constraints += len(cs)
    if n_constraints == 0:
        print("  (none)")

    path = scenario.ego_path
    grid = sorted(set(np.arange(0.0, path.length, 5.0).tolist()) | set(path.s))
    print("speed limit profile (s, v_max):")
    vmax = [(s, speed_limit(path, s, cfg)) for s in grid if s >= path.s[0]]
    for i, (s, v) in enumerate(vmax):
        # print only where the limit changes, plus the path end
        if i == 0 or i == len(vmax) - 1 or v != vmax[i - 1][1] or v != vmax[i + 1][1]:
            print(f"  {s:8.2f} {v:6.3f}")
    ego = scenario.ego
    below = [(s, v) for s, v in vmax if s >= ego.s and v < ego.v]
    if below:
        s, v = min(below, key=lambda p: p[1])
        print(f"warning: v_max {v:.3f} m/s at s={s:.2f} m is below the initial ego speed {ego.v:.3f} m/s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="courtplan", description="Courteous merge planner simulation")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write logs")
    run.add_argument("scenario", help="scenario YAML path or bundled name (scenario1..3)")
    run.add_argument("--out", default="logs", help="output directory (default: logs)")
    run.add_argument("--duration", type=float, default=None, help="simulated seconds")
    run.add_argument("--seed", type=int, default=0, help="seed for generated dummy vehicles")
    run.add_argument("--sweep-weight", default=None, metavar="NAME=v1,v2", help="run once per cost weight value")
    run.add_argument("--dummy-vehicles", type=int, default=0, metavar="N", help="add N unrelated vehicles")
    run.add_argument("--replan-hz", type=float, default=None, help="replanning frequency")
    run.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="validate a scenario and show derived quantities")
    ver.add_argument("scenario")
    ver.set_defaults(func=cmd_verify)
    return p


def _error(category: str, exc: Exception, **extra) -> None:
    record = {"error": category, "message": str(exc), **extra}
    print(json.dumps(record), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("PLANNER_LOG_LEVEL", "error").lower()
    logging.basicConfig(level=_LOG_LEVELS.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        _error("scenario", exc, kind=exc.kind, locus=exc.locus)
        return EXIT_INVALID
    except UsageError as exc:
        _error("usage", exc)
        return EXIT_INVALID
    except OSError as exc:
        _error("io", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
