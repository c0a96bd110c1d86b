"""Post-run metrics and figures computed from a simulation log."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .predictor import OtherState, free_acceleration, merged_gap, reactive_acceleration
from .scenario import ScenarioConfig
from .septic import comfort_cost
from .simulator import SimulationLog


@dataclass
class RunSummary:
    scenario: str
    merge_order: str  # "ego-first" | "other-first" | "undetermined" | "n/a"
    min_gap: float
    total_j_ex: float
    mean_plan_ms: float
    max_plan_ms: float
    p50_plan_ms: float
    p95_plan_ms: float
    fallbacks: int
    emergencies: int
    ticks: int
    vehicles: int
    interaction_sum: float
    goal_reached: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        return (
            f"{self.scenario}: merge={self.merge_order} min_gap={self.min_gap:.2f} m "
            f"J_ex={self.total_j_ex:.3f} plan_ms mean={self.mean_plan_ms:.2f} "
            f"p95={self.p95_plan_ms:.2f} max={self.max_plan_ms:.2f} "
            f"fallbacks={self.fallbacks} vehicles={self.vehicles} inter_sum={self.interaction_sum:.4f}"
        )


def _merge_partner(scenario: ScenarioConfig):
    for i, spec in enumerate(scenario.others):
        zone = scenario.zone_for(spec.id)
        if zone is not None and zone.kind == "merging":
            return i, zone
    return None, None


def _crossing_time(ts, ss, target) -> float | None:
    for k in range(len(ss)):
        if ss[k] >= target:
            if k == 0:
                return ts[0]
            w = (target - ss[k - 1]) / (ss[k] - ss[k - 1])
            return ts[k - 1] + w * (ts[k] - ts[k - 1])
    return None


def merge_order(log: SimulationLog, scenario: ScenarioConfig) -> str:
    """Which vehicle reaches the merge point first, from the logged states."""
    idx, zone = _merge_partner(scenario)
    if zone is None:
        return "n/a"
    ts = [r.sim_t for r in log.records]
    t_ego = _crossing_time(ts, [r.ego.s for r in log.records], zone.merge_align[0])
    t_oth = _crossing_time(ts, [r.others[idx].s for r in log.records], zone.merge_align[1])
    if t_ego is None and t_oth is None:
        return "undetermined"
    if t_oth is None or (t_ego is not None and t_ego < t_oth):
        return "ego-first"
    return "other-first"


def merged_gaps(log: SimulationLog, scenario: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Sim times and signed merged-lane gaps (ego ahead > 0) once the ego is past the merge point."""
    idx, zone = _merge_partner(scenario)
    if zone is None:
        return np.empty(0), np.empty(0)
    rows = [(r.sim_t, merged_gap(r.ego.s, r.others[idx].s, zone))
            for r in log.records if r.ego.s >= zone.merge_align[0]]
    if not rows:
        return np.empty(0), np.empty(0)
    t, g = zip(*rows)
    return np.array(t), np.array(g)


def min_gap(log: SimulationLog, scenario: ScenarioConfig) -> float:
    """Smallest bumper distance on the merged lane.

    Taken over the ticks with the ego past its merge point; if it never gets
    there, over the whole run in merged coordinates. Infinite without a merge.
    """
    idx, zone = _merge_partner(scenario)
    if zone is None:
        return math.inf
    _, g = merged_gaps(log, scenario)
    if g.size == 0:
        g = np.array([merged_gap(r.ego.s, r.others[idx].s, zone) for r in log.records])
    return float(np.min(np.abs(g)))


def driven_interaction_sum(log: SimulationLog, scenario: ScenarioConfig) -> float:
    """Unweighted sum of |a_norm - a_inter| along the states actually driven."""
    total = 0.0
    for r in log.records:
        for spec, x in zip(scenario.others, r.others):
            zone = scenario.zone_for(spec.id)
            if zone is None or zone.kind != "merging":
                continue
            a_norm = free_acceleration(x.v, scenario.idm)
            a_inter = reactive_acceleration(OtherState(*x), r.ego.s, r.ego.v, zone, scenario.idm)
            total += abs(a_norm - a_inter)
    return total


def driven_comfort(log: SimulationLog) -> float:
    """Squared jerk integrated over the executed piece of every tick."""
    total = 0.0
    for r, traj in zip(log.records[:-1], log.trajectories[:-1]):
        total += comfort_cost(traj, r.sim_t + log.tick_dt)
    return total


def summarize(log: SimulationLog, scenario: ScenarioConfig) -> RunSummary:
    pt = np.array(log.plan_times) if log.records else np.zeros(1)
    return RunSummary(
        scenario=log.scenario,
        merge_order=merge_order(log, scenario),
        min_gap=min_gap(log, scenario),
        total_j_ex=driven_comfort(log),
        mean_plan_ms=float(pt.mean()),
        max_plan_ms=float(pt.max()),
        p50_plan_ms=float(np.percentile(pt, 50)),
        p95_plan_ms=float(np.percentile(pt, 95)),
        fallbacks=sum(r.fallback for r in log.records),
        emergencies=sum(r.source == "emergency" for r in log.records),
        ticks=len(log.records),
        vehicles=1 + len(scenario.others),
        interaction_sum=driven_interaction_sum(log, scenario),
        goal_reached=log.goal_reached,
    )


def write_figures(log: SimulationLog, scenario: ScenarioConfig, out_dir: str | Path, stem: str) -> list[Path]:
    """s-t, velocity and acceleration plots of the driven run as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Rectangle

    out_dir = Path(out_dir)
    t = np.array([r.sim_t for r in log.records])
    ego = np.array([list(r.ego) for r in log.records]).reshape(-1, 4)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, ego[:, 0], "k", label="ego")
    idx, zone = _merge_partner(scenario)
    if zone is not None:
        # other vehicle mapped into ego arc length through the merge alignment
        shift = zone.merge_align[0] - zone.merge_align[1]
        ax.plot(t, [r.others[idx].s + shift for r in log.records], "y",
                label=f"vehicle {scenario.others[idx].id} (ego frame)")
        ax.axhline(zone.merge_align[0], color="grey", lw=0.5, ls="--")
    seen = set()
    for r in log.records:
        for c in r.constraints:
            key = tuple(round(x, 1) for x in c)
            if key in seen:
                continue
            seen.add(key)
            t0, t1, s0, s1 = c
            ax.add_patch(Rectangle((t0, s0), t1 - t0, s1 - s0, color="grey", alpha=0.05, lw=0))
    ax.set_xlabel("t [s]")
    ax.set_ylabel("s [m]")
    ax.legend(loc="upper left")
    paths.append(_save(fig, out_dir / f"{stem}_st.png"))

    for col, label, suffix in ((1, "v [m/s]", "v"), (2, "a [m/s^2]", "a")):
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.plot(t, ego[:, col], "k")
        ax.set_xlabel("t [s]")
        ax.set_ylabel(label)
        paths.append(_save(fig, out_dir / f"{stem}_{suffix}.png"))
    return paths


def _save(fig, path: Path) -> Path:
    import matplotlib.pyplot as plt

    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
