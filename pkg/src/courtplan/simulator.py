"""Closed-loop harness: constant-velocity traffic, fixed-rate replanning with a
consistency plan and a restart plan, and per-tick logging."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .behavior import (
    BehaviorTrajectory,
    EgoState,
    NoFeasiblePlan,
    WorldState,
    cj_interpolate,
    cj_step,
    classify_others,
    plan_behavior,
    rebase_others,
)
from .predictor import OtherState, ca_step, free_acceleration, free_rollout
from .scenario import (
    CostWeights,
    PlannerConfig,
    ScenarioConfig,
    SpatioTemporalConstraint,
    derive_crossing_constraints,
)
from .septic import (
    MIN_DURATION,
    V_EPS,
    ExecutionTrajectory,
    KnotState,
    ValidationBounds,
    comfort_cost,
    direct_chain,
    fit_septic,
    generate_candidates,
    select_best,
)

log = logging.getLogger(__name__)

ROLLOUT_STEP = 0.1
_ALIGN_TOL = MIN_DURATION


@dataclass
class ReplanResult:
    trajectory: ExecutionTrajectory
    source: str  # "consistency" | "restart" | "emergency"
    behavior: BehaviorTrajectory | None
    pool_costs: dict[str, float] = field(default_factory=dict)
    constraints: tuple[SpatioTemporalConstraint, ...] = ()
    v_bounds: tuple[float, float] = (0.0, math.inf)  # velocity window the chosen pool was validated on

    @property
    def fallback(self) -> bool:
        return self.trajectory.fallback


def consistency_state(prev: BehaviorTrajectory, t: float, others: Sequence[OtherState] = ()) -> WorldState:
    """Ego state predicted by a previous behavior trajectory at time ``t``.

    Between knots the constant-jerk step is evaluated in closed form. Other
    vehicles are not taken from the old prediction but passed in as observed.
    """
    rel = (t - prev.t0) / prev.dt
    last = len(prev.states) - 1
    if rel < -1e-9 or rel > last + 1e-9:
        raise ValueError(f"t={t} outside behavior horizon [{prev.t0}, {prev.t0 + last * prev.dt}]")
    k = min(int(math.floor(rel + 1e-9)), last)
    tau = t - (prev.t0 + k * prev.dt)
    ego = prev.states[k].ego
    if k < last and tau > 1e-9:
        ego = cj_interpolate(ego, prev.actions[k], prev.dt, tau)
    return WorldState(ego, tuple(others))


def predict_others(others: Sequence[OtherState], scenario: ScenarioConfig, horizon: float) -> list[OtherState]:
    """Advance observed others by ``horizon`` seconds with the free-road model."""
    if horizon <= 0.0:
        return list(others)
    out = []
    for x in others:
        n = max(1, int(math.ceil(horizon / ROLLOUT_STEP - 1e-9)))
        h = horizon / n
        for _ in range(n):
            x = ca_step(x, free_acceleration(x.v, scenario.idm), h)
        out.append(x)
    return out


def crossing_constraints(
    t: float, others: Sequence[OtherState], scenario: ScenarioConfig, cfg: PlannerConfig
) -> tuple[SpatioTemporalConstraint, ...]:
    """Constraints from every crossing vehicle, predicted from its observed state at ``t``."""
    horizon = (cfg.tau + 1) * cfg.dt
    steps = int(math.ceil(horizon / ROLLOUT_STEP))
    out: list[SpatioTemporalConstraint] = []
    for spec, x in zip(scenario.others, others):
        zone = scenario.zone_for(spec.id)
        if zone is None or zone.kind != "crossing":
            continue
        states, _ = free_rollout(x, scenario.idm, steps, ROLLOUT_STEP)
        rollout = [(t + i * ROLLOUT_STEP, st.s, st.v) for i, st in enumerate(states)]
        out.extend(derive_crossing_constraints(zone, rollout, cfg, t_min=t))
    return tuple(out)


def behavior_knots(B: BehaviorTrajectory, start_t: float, start: KnotState) -> list[tuple[float, KnotState]]:
    """Timed knots for smoothing: the current execution state, then the behavior states.

    Interior knots carry the outgoing constant jerk, the terminal knot zero
    jerk. A behavior state closer than the minimum segment duration to the
    start is replaced by the start.
    """
    ego = B.ego
    jerks = B.jerks + [0.0]
    knots = [(start_t, start)]
    for k, (x, j) in enumerate(zip(ego, jerks)):
        tk = B.t0 + k * B.dt
        if tk - start_t < _ALIGN_TOL:
            continue
        knots.append((tk, KnotState(x.s, x.v, x.a, j)))
    return knots


def emergency_brake(t: float, x: KnotState, cfg: PlannerConfig) -> ExecutionTrajectory:
    """Smooth full stop, used when both searches fail.

    One septic brings the ego to rest (zero speed, acceleration and jerk);
    the shortest stop whose samples keep the speed nonincreasing past its
    peak and the acceleration above ``a_min`` is used, followed by standstill to the end of
    the horizon. If no such stop exists the constant-jerk braking chain is
    smoothed instead.
    """
    horizon = cfg.tau * cfg.dt
    v0 = max(x.v, 0.0)
    if v0 <= V_EPS and x.a <= 0.0:
        rest = KnotState(x.s, 0.0, 0.0, 0.0)
        return _flag_emergency(ExecutionTrajectory([fit_septic(rest, rest, horizon, t)], splits=(0, 1),
                                                   source="emergency"))
    t_min = max((v0 + max(x.a, 0.0)) / -cfg.a_min, 0.5)
    for T in np.arange(t_min, 4.0 * t_min + 2.0, 0.2):
        for f in np.linspace(0.3, 1.2, 10):
            T = float(T)
            seg = fit_septic(x, KnotState(x.s + f * max(v0, 0.5) * T, 0.0, 0.0, 0.0), T, t)
            _, y = seg.sample()
            peak = int(np.argmax(y[1]))
            ok = (np.all(np.diff(y[1, peak:]) <= V_EPS) and y[1].min() >= -V_EPS
                  and y[2].min() >= cfg.a_min - V_EPS)
            if ok:
                rest = KnotState(seg.eval(seg.t1).s, 0.0, 0.0, 0.0)
                segs = [seg]
                if seg.t1 < t + horizon - MIN_DURATION:
                    segs.append(fit_septic(rest, rest, t + horizon - seg.t1, seg.t1))
                return _flag_emergency(ExecutionTrajectory(segs, splits=(0, 1), source="emergency"))
    ego = EgoState(x.s, v0, x.a)
    states = [ego]
    for _ in range(cfg.tau):
        a_next = max(cfg.a_min, states[-1].a - cfg.da_max)
        states.append(cj_step(states[-1], a_next, cfg.dt))
    knots = [(t, x)]
    for k in range(1, len(states)):
        j = (states[k + 1].a - states[k].a) / cfg.dt if k + 1 < len(states) else 0.0
        knots.append((t + k * cfg.dt, KnotState(states[k].s, states[k].v, states[k].a, j)))
    return _flag_emergency(direct_chain(knots, source="emergency"))


def _flag_emergency(traj: ExecutionTrajectory) -> ExecutionTrajectory:
    traj.fallback = True
    traj.emergency = True
    return traj


def _memo_key(start: WorldState, t0: float, constraints, relevant) -> tuple:
    r = lambda x: round(x, 9)  # noqa: E731
    return (
        r(t0), r(start.ego.s), r(start.ego.v), r(start.ego.a),
        tuple((r(start.others[i].s), r(start.others[i].v)) for i in relevant),
        tuple(tuple(r(x) for x in c.as_list()) for c in constraints),
    )


def _plan(cache, start, scenario, cfg, weights, t0, constraints) -> BehaviorTrajectory:
    """``plan_behavior`` memoized on the inputs that can change its result."""
    if cache is None:
        return plan_behavior(start, scenario, cfg, weights, t0=t0, constraints=constraints)
    merging, leaders = classify_others(scenario)
    key = _memo_key(start, t0, constraints, sorted([i for i, _ in merging] + leaders))
    hit = cache.get(key)
    if hit is None:
        try:
            hit = plan_behavior(start, scenario, cfg, weights, t0=t0, constraints=constraints)
        except NoFeasiblePlan as exc:
            hit = exc
        if len(cache) > 64:
            cache.clear()
        cache[key] = hit
    elif not isinstance(hit, NoFeasiblePlan) and hit.states[0].others != tuple(start.others):
        hit = rebase_others(hit, start, scenario)
    if isinstance(hit, NoFeasiblePlan):
        raise hit
    return hit


def replan(
    t: float,
    ego: KnotState,
    others: Sequence[OtherState],
    prev: BehaviorTrajectory | None,
    scenario: ScenarioConfig,
    cfg: PlannerConfig | None = None,
    weights: CostWeights | None = None,
    cache: dict | None = None,
) -> ReplanResult:
    """One planning cycle with two behavior plans.

    The consistency plan restarts from the previous behavior trajectory at its
    next knot, the restart plan from the actual execution state. Candidates of
    both are validated against fresh constraints and the cheapest wins, with
    comfort compared over the window both pools cover. ``cache`` memoizes
    behavior plans across cycles of one run: between knots the consistency
    plan is re-solved from identical inputs.
    """
    cfg = cfg or scenario.planner
    weights = weights or scenario.weights
    constraints = crossing_constraints(t, others, scenario, cfg)
    plans: list[tuple[str, BehaviorTrajectory]] = []

    if prev is not None:
        k_next = int(math.ceil((t - prev.t0) / prev.dt - 1e-6))
        if k_next < len(prev.states):
            t_k = prev.t0 + k_next * prev.dt
            seen = predict_others(others, scenario, t_k - t)
            start = consistency_state(prev, t_k, seen)
            try:
                plans.append(("consistency", _plan(cache, start, scenario, cfg, weights, t_k, constraints)))
            except NoFeasiblePlan as exc:
                log.debug("consistency plan infeasible at t=%.2f: %s", t, exc)

    restart = WorldState(EgoState(ego.s, max(ego.v, 0.0), ego.a), tuple(others))
    try:
        plans.append(("restart", _plan(cache, restart, scenario, cfg, weights, t, constraints)))
    except NoFeasiblePlan as exc:
        log.debug("restart plan infeasible at t=%.2f: %s", t, exc)

    if not plans:
        log.info("t=%.2f: no feasible behavior, emergency braking", t)
        traj = emergency_brake(t, ego, cfg)
        vs = [x.v for _, x in traj.knots()]
        return ReplanResult(traj, "emergency", None, {}, constraints, (min(vs), max(vs)))

    pools = []
    for name, B in plans:
        knots = behavior_knots(B, t, ego)
        cands = generate_candidates(knots, cfg.l_r, source=name)
        bounds = ValidationBounds.from_knots(knots, cfg.a_min, cfg.a_max, constraints)
        pools.append((name, B, cands, bounds))
    t_common = min(c[0].t_end for _, _, c, _ in pools)

    results = []
    for name, B, cands, bounds in pools:
        best, _ = select_best(cands, bounds, t_compare=t_common)
        results.append((best.fallback, comfort_cost(best, t_common), name, B, best))
    pool_costs = {name: cost for fb, cost, name, _, _ in results if not fb}
    # valid before fallback, then cheaper, then the consistency pool (listed first)
    order = sorted(range(len(results)), key=lambda i: (results[i][0], results[i][1], i))
    _, _, name, B, best = results[order[0]]
    best.source = name
    bounds = next(b for n, _, _, b in pools if n == name)
    return ReplanResult(best, name, B, pool_costs, constraints, (bounds.v_min, bounds.v_max))


# --------------------------------------------------------------------------
# logging
# --------------------------------------------------------------------------


@dataclass
class TickRecord:
    tick: int
    sim_t: float
    plan_ms: float
    source: str
    fallback: bool
    ego: KnotState
    others: tuple[OtherState, ...]
    splits: tuple[int, ...]
    behavior: dict | None
    costs: dict[str, float]
    pool_costs: dict[str, float]
    constraints: list[list[float]]
    v_bounds: tuple[float, float] = (0.0, math.inf)


@dataclass
class SimulationLog:
    scenario: str
    other_ids: list[str]
    weights: CostWeights
    tick_dt: float
    records: list[TickRecord] = field(default_factory=list)
    trajectories: list[ExecutionTrajectory] = field(default_factory=list)
    goal_reached: bool = False

    def csv_header(self) -> list[str]:
        cols = ["tick", "sim_t", "plan_ms", "source", "fallback", "ego_s", "ego_v", "ego_a", "ego_j"]
        for oid in self.other_ids:
            cols += [f"veh{oid}_s", f"veh{oid}_v"]
        return cols

    def csv_rows(self) -> list[list]:
        rows = []
        for r in self.records:
            row = [r.tick, f"{r.sim_t:.6f}", f"{r.plan_ms:.3f}", r.source, int(r.fallback)]
            row += [repr(float(x)) for x in r.ego]
            for o in r.others:
                row += [repr(float(o.s)), repr(float(o.v))]
            rows.append(row)
        return rows

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.csv_header())
            w.writerows(self.csv_rows())

    def to_json(self, timings: bool = True) -> dict:
        ticks = []
        for r, traj in zip(self.records, self.trajectories):
            ticks.append({
                "tick": r.tick,
                "sim_t": r.sim_t,
                **({"plan_ms": r.plan_ms} if timings else {}),
                "source": r.source,
                "fallback": r.fallback,
                "splits": list(r.splits),
                "costs": r.costs,
                "pool_costs": r.pool_costs,
                "constraints": r.constraints,
                "v_bounds": list(r.v_bounds),
                "behavior": r.behavior,
                "execution": traj.to_dict(),
            })
        return {
            "scenario": self.scenario,
            "other_ids": self.other_ids,
            "weights": dict(self.weights.__dict__),
            "tick_dt": self.tick_dt,
            "goal_reached": self.goal_reached,
            "ticks": ticks,
        }

    def write_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @property
    def plan_times(self) -> list[float]:
        return [r.plan_ms for r in self.records]


def simulate(
    scenario: ScenarioConfig,
    duration: float | None = None,
    cfg: PlannerConfig | None = None,
    weights: CostWeights | None = None,
) -> SimulationLog:
    """Run the closed loop until ``duration`` or until the ego passes its goal."""
    cfg = cfg or scenario.planner
    weights = weights or scenario.weights
    duration = scenario.duration if duration is None else duration
    if duration <= 0:
        raise ValueError("duration must be positive")
    tick_dt = 1.0 / cfg.replan_hz
    n_ticks = int(math.floor(duration / tick_dt + 1e-9))
    spec = scenario.ego
    ego = KnotState(spec.s, spec.v, spec.a, 0.0)
    others = [OtherState(o.s, o.v) for o in scenario.others]
    out = SimulationLog(scenario.name, [o.id for o in scenario.others], weights, tick_dt)
    traj: ExecutionTrajectory | None = None
    prev: BehaviorTrajectory | None = None
    goal = scenario.goal
    memo: dict = {}

    for tick in range(n_ticks + 1):
        t = tick * tick_dt
        if traj is not None:
            ego = traj.eval(t)
        if ego.s >= goal:
            out.goal_reached = True
            break
        t_wall = time.perf_counter()
        res = replan(t, ego, others, prev, scenario, cfg, weights, cache=memo)
        plan_ms = (time.perf_counter() - t_wall) * 1e3
        B = res.behavior
        out.records.append(TickRecord(
            tick=tick, sim_t=t, plan_ms=plan_ms, source=res.source, fallback=res.fallback,
            ego=ego, others=tuple(others), splits=res.trajectory.splits,
            behavior=None if B is None else B.to_dict(),
            costs={} if B is None else B.term_sums(),
            pool_costs=res.pool_costs,
            constraints=[c.as_list() for c in res.constraints],
            v_bounds=res.v_bounds,
        ))
        out.trajectories.append(res.trajectory)
        if res.fallback:
            log.info("tick %d (t=%.1f): %s fallback", tick, t, res.source)
        traj = res.trajectory
        prev = B
        others = [OtherState(o.s + o.v * tick_dt, o.v) for o in others]
    return out
