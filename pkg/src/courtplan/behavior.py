"""A* search over the spatio-temporal behavior graph.

Ego edges hold the jerk constant over one step so that the acceleration moves
linearly to the action value; other vehicles are predicted per vertex (merging
traffic reacts to the ego through the IDM, everything else follows its free
rollout). Step costs combine following pressure, speed deviation, jerk and the
courtesy term; constraint violations cost infinity and are pruned.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .predictor import (
    OtherState,
    accel_bounds,
    ca_step,
    free_acceleration,
    free_rollout,
    idm_acceleration,
    merged_gap,
    reactive_acceleration,
)
from .scenario import (
    CostWeights,
    PlannerConfig,
    ScenarioConfig,
    SpatioTemporalConstraint,
    speed_limit,
)

log = logging.getLogger(__name__)

_V_EPS = 1e-12
_BISECT_ITERS = 48


class NoFeasiblePlan(RuntimeError):
    """Every branch of the behavior graph was pruned before the horizon."""


class EgoState(NamedTuple):
    s: float
    v: float
    a: float


class WorldState(NamedTuple):
    ego: EgoState
    others: tuple[OtherState, ...] = ()


class StepCost(NamedTuple):
    follow: float
    velocity: float
    jerk: float
    inter: float  # unweighted sum of |a_norm - a_inter|
    total: float  # weighted


@dataclass
class BehaviorTrajectory:
    t0: float
    dt: float
    states: list[WorldState]
    actions: list[float]
    costs: list[StepCost]

    @property
    def total_cost(self) -> float:
        return math.fsum(c.total for c in self.costs)

    @property
    def times(self) -> list[float]:
        return [self.t0 + k * self.dt for k in range(len(self.states))]

    @property
    def ego(self) -> list[EgoState]:
        return [w.ego for w in self.states]

    @property
    def jerks(self) -> list[float]:
        """Constant jerk of every step, from the realised accelerations."""
        ego = self.ego
        return [(ego[k + 1].a - ego[k].a) / self.dt for k in range(len(ego) - 1)]

    def interaction_sum(self) -> float:
        return math.fsum(c.inter for c in self.costs)

    def term_sums(self) -> dict[str, float]:
        return {
            "follow": math.fsum(c.follow for c in self.costs),
            "velocity": math.fsum(c.velocity for c in self.costs),
            "jerk": math.fsum(c.jerk for c in self.costs),
            "inter": self.interaction_sum(),
            "total": self.total_cost,
        }

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "dt": self.dt,
            "ego": [list(e) for e in self.ego],
            "others": [[list(o) for o in w.others] for w in self.states],
            "actions": list(self.actions),
            "costs": [c._asdict() for c in self.costs],
            "total_cost": self.total_cost,
        }


# --------------------------------------------------------------------------
# transition model
# --------------------------------------------------------------------------


def _cj(s: float, v: float, a: float, a_next: float, dt: float) -> tuple[float, float, float, float | None]:
    """Constant-jerk step; returns (s', v', a', t_stop) with t_stop set on a standstill clamp."""
    j = (a_next - a) / dt
    v1 = v + a * dt + 0.5 * j * dt * dt
    crossing = v1 < -_V_EPS
    if not crossing and j > 0.0 and a < 0.0:
        tm = -a / j
        if tm < dt and v + a * tm + 0.5 * j * tm * tm < -_V_EPS:
            crossing = True
    if not crossing and v <= 0.0 and (a < 0.0 or (a == 0.0 and j < 0.0)):
        crossing = True
    if crossing:
        if j == 0.0:
            t_stop = -v / a if a < 0.0 else 0.0
        else:
            disc = math.sqrt(max(a * a - 2.0 * j * v, 0.0))
            roots = [r for r in ((-a - disc) / j, (-a + disc) / j) if r >= -1e-12]
            t_stop = max(min(roots), 0.0) if roots else 0.0
        t_stop = min(t_stop, dt)
        s1 = s + v * t_stop + 0.5 * a * t_stop ** 2 + j * t_stop ** 3 / 6.0
        return max(s1, s), 0.0, 0.0, t_stop
    s1 = s + v * dt + 0.5 * a * dt * dt + j * dt ** 3 / 6.0
    if v1 <= _V_EPS and a_next < 0.0:
        # stops exactly at the step end: park rather than keep braking at rest
        return s1, 0.0, 0.0, dt
    return s1, max(v1, 0.0), a_next, None


def cj_step(x: EgoState, a_next: float, dt: float) -> EgoState:
    """Advance the ego by one behavior step towards acceleration ``a_next``.

    If the speed would reach zero inside the step (or at its end while still
    braking), the ego is parked at its stopping point with zero speed and
    acceleration.
    """
    s1, v1, a1, _ = _cj(x.s, x.v, x.a, a_next, dt)
    return EgoState(s1, v1, a1)


def cj_interpolate(x: EgoState, a_next: float, dt: float, tau: float) -> EgoState:
    """Ego state ``tau`` seconds into a constant-jerk step (0 <= tau <= dt)."""
    j = (a_next - x.a) / dt
    _, _, _, t_stop = _cj(x.s, x.v, x.a, a_next, dt)
    if t_stop is not None and tau >= t_stop:
        tau = t_stop
        return EgoState(x.s + x.v * tau + 0.5 * x.a * tau ** 2 + j * tau ** 3 / 6.0, 0.0, 0.0)
    return EgoState(
        x.s + x.v * tau + 0.5 * x.a * tau ** 2 + j * tau ** 3 / 6.0,
        max(x.v + x.a * tau + 0.5 * j * tau ** 2, 0.0),
        x.a + j * tau,
    )


def _reach_time(s, v, a, j, t_end, target):
    """Earliest tau in [0, t_end] with s(tau) >= target on a monotone cubic."""
    lo, hi = 0.0, t_end
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if s + mid * (v + mid * (0.5 * a + mid * j / 6.0)) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def edge_violates(
    constraints: Sequence[SpatioTemporalConstraint],
    t: float,
    dt: float,
    s: float,
    v: float,
    a: float,
    a_next: float,
) -> bool:
    """Whether the continuous constant-jerk edge starting at time ``t`` enters a constraint."""
    s1, v1, _, t_stop = _cj(s, v, a, a_next, dt)
    j = (a_next - a) / dt
    t_move = dt if t_stop is None else t_stop
    for c in constraints:
        if t + dt <= c.t_start or t >= c.t_end or s1 < c.s_start or s >= c.s_end:
            continue
        if c.contains(t + dt, s1):
            return True
        tau_in = 0.0 if s >= c.s_start else _reach_time(s, v, a, j, t_move, c.s_start)
        tau_out = _reach_time(s, v, a, j, t_move, c.s_end) if s1 >= c.s_end else dt
        if max(t + tau_in, c.t_start) < min(t + tau_out, c.t_end):
            return True
    return False


# --------------------------------------------------------------------------
# cost terms
# --------------------------------------------------------------------------


def velocity_cost(v: float, v_des: float) -> float:
    """Quadratic above the desired speed, absolute below it."""
    dev = v - v_des
    return dev * dev if dev > 0.0 else -dev + 0.0


def interaction_cost(
    t: float, s: float, a_norm: Sequence[float], a_inter: Sequence[float],
    constraints: Sequence[SpatioTemporalConstraint] = (),
) -> float:
    """Summed |a_norm - a_inter| of merging others, infinite inside a constraint."""
    if any(c.contains(t, s) for c in constraints):
        return math.inf
    return math.fsum(abs(n - i) for n, i in zip(a_norm, a_inter))


def step_cost(
    parent: WorldState,
    child: WorldState,
    jerk: float,
    scenario: ScenarioConfig,
    weights: CostWeights | None = None,
    cfg: PlannerConfig | None = None,
    *,
    a_norm: Sequence[float] | None = None,
    t: float = 0.0,
    constraints: Sequence[SpatioTemporalConstraint] = (),
) -> StepCost:
    """Weighted cost of the step from ``parent`` to ``child`` (child at time ``t``).

    ``a_norm`` holds the uninfluenced acceleration of every other vehicle at
    the child step; by default it is one free-road step ahead of the parent,
    which is what the first expansion of a search uses.
    """
    cfg = cfg or scenario.planner
    weights = weights or scenario.weights
    idm = scenario.idm
    if a_norm is None:
        a_norm = [free_acceleration(ca_step(x, free_acceleration(x.v, idm), cfg.dt).v, idm) for x in parent.others]
    ego = child.ego
    norms, inters = [], []
    gap_lead, v_lead = math.inf, 0.0
    for i, (spec, x) in enumerate(zip(scenario.others, child.others)):
        zone = scenario.zone_for(spec.id)
        if zone is not None and zone.kind == "merging":
            norms.append(a_norm[i])
            inters.append(reactive_acceleration(x, ego.s, ego.v, zone, idm))
            gap = merged_gap(ego.s, x.s, zone)
            if ego.s >= zone.merge_align[0] and gap <= 0.0 and -gap < gap_lead:
                gap_lead, v_lead = -gap, x.v
        elif spec.path == scenario.ego.path and 0.0 < x.s - ego.s < gap_lead:
            gap_lead, v_lead = x.s - ego.s, x.v
    follow = 0.0 if gap_lead == math.inf else idm_acceleration(ego.v, gap_lead, ego.v - v_lead, idm)[1]
    v_des = min(cfg.v_des, speed_limit(scenario.ego_path, ego.s, cfg))
    j_v = velocity_cost(ego.v, v_des)
    inter = interaction_cost(t, ego.s, norms, inters, constraints)
    total = weights.f * follow + weights.v * j_v + weights.jerk * jerk * jerk + weights.inter * inter
    return StepCost(follow, j_v, jerk * jerk, inter, total)


# --------------------------------------------------------------------------
# inevitable violation
# --------------------------------------------------------------------------


def _time_to_cover(dist: float, v: float, a: float, v_top: float) -> float:
    if dist <= 0.0:
        return 0.0
    v_top = max(v_top, v)
    if a <= 0.0:
        return dist / v if v > 0.0 else math.inf
    t_acc = (v_top - v) / a
    d_acc = v * t_acc + 0.5 * a * t_acc * t_acc
    if d_acc >= dist:
        return (-v + math.sqrt(v * v + 2.0 * a * dist)) / a
    return t_acc + (dist - d_acc) / v_top if v_top > 0.0 else math.inf


def inevitable_violation(
    x: EgoState, t: float, constraints: Sequence[SpatioTemporalConstraint], cfg: PlannerConfig
) -> bool:
    """True if no admissible control keeps the ego out of some constraint.

    Uses the continuous envelope of immediate full braking / full acceleration,
    which contains every lattice continuation, so pruning on it is sound.
    """
    brake = -cfg.a_min
    for c in constraints:
        if x.s >= c.s_end or t >= c.t_end:
            continue
        gap = c.s_start - x.s
        if gap > 0.0:
            if x.v * x.v / (2.0 * brake) < gap:
                continue
            late = (x.v - math.sqrt(max(x.v * x.v - 2.0 * brake * gap, 0.0))) / brake
            if t + late >= c.t_end:
                continue
        elif c.t_start <= t:
            return True
        if t + _time_to_cover(c.s_end - x.s, x.v, cfg.a_max, cfg.v_cap) <= c.t_start:
            continue
        return True
    return False


# --------------------------------------------------------------------------
# per-cycle problem data
# --------------------------------------------------------------------------


def classify_others(scenario: ScenarioConfig) -> tuple[list[tuple[int, object]], list[int]]:
    """Other vehicles that enter the cost: merging ones and same-path leaders.

    Everything else (crossing vehicles act through constraints only, unrelated
    traffic not at all) leaves the optimal plan unchanged.
    """
    merging, leaders = [], []
    for i, spec in enumerate(scenario.others):
        zone = scenario.zone_for(spec.id)
        if zone is not None and zone.kind == "merging":
            merging.append((i, zone))
        elif spec.path == scenario.ego.path:
            leaders.append(i)
    return merging, leaders


def rebase_others(B: BehaviorTrajectory, initial: WorldState, scenario: ScenarioConfig) -> BehaviorTrajectory:
    """Copy of ``B`` whose non-merging others follow the free rollout from ``initial``.

    Used when a plan is reused for a start that differs only in vehicles that
    do not enter the cost.
    """
    merging = {i for i, _ in classify_others(scenario)[0]}
    n = len(B.states) - 1
    rolls = [None if i in merging else free_rollout(x, scenario.idm, n, B.dt)[0]
             for i, x in enumerate(initial.others)]
    states = [
        WorldState(w.ego, tuple(w.others[i] if r is None else r[k] for i, r in enumerate(rolls)))
        for k, w in enumerate(B.states)
    ]
    return BehaviorTrajectory(B.t0, B.dt, states, list(B.actions), list(B.costs))


def _speed_limit_fn(path, cfg: PlannerConfig):
    """Fast closure equivalent to ``speed_limit(path, s, cfg)``."""
    xs, kap, leg = path.s, path.kappa, path.v_legal
    last = len(xs) - 1
    a_lat, v_cap = cfg.a_lat_max, cfg.v_cap
    sqrt, inf = math.sqrt, math.inf

    def limit(k: float, lg: float) -> float:
        k = abs(k)
        v_curve = sqrt(a_lat / k) if k > 0.0 else inf
        return min(lg, v_curve, v_cap)

    # intervals with constant curvature and legal speed need no interpolation
    flat = [limit(kap[i], leg[i]) if kap[i] == kap[i - 1] and leg[i] == leg[i - 1] else None
            for i in range(1, last + 1)]
    lo_end, hi_end = limit(kap[0], leg[0]), limit(kap[last], leg[last])

    def vmax(s: float) -> float:
        if s <= xs[0]:
            return lo_end
        if s >= xs[last]:
            return hi_end
        i = bisect_right(xs, s)
        const = flat[i - 1]
        if const is not None:
            return const
        w = (s - xs[i - 1]) / (xs[i] - xs[i - 1])
        return limit(kap[i - 1] + w * (kap[i] - kap[i - 1]), leg[i - 1] + w * (leg[i] - leg[i - 1]))

    return vmax


class _Problem:
    """Everything the search needs that does not depend on the ego branch."""

    def __init__(self, initial: WorldState, scenario: ScenarioConfig, cfg: PlannerConfig,
                 weights: CostWeights, t0: float, constraints: Sequence[SpatioTemporalConstraint]):
        self.cfg = cfg
        self.weights = weights
        self.idm = scenario.idm
        self.path = scenario.ego_path
        self.t0 = t0
        self.dt = cfg.dt
        self.tau = cfg.tau
        self.constraints = tuple(constraints)
        self.actions = tuple(sorted(cfg.actions))
        others = scenario.others
        if len(initial.others) != len(others):
            raise ValueError(f"world has {len(initial.others)} others, scenario declares {len(others)}")
        self.rollouts: list[list[OtherState]] = []
        self.a_norm: list[list[float]] = []
        for x0 in initial.others:
            states, accels = free_rollout(x0, self.idm, self.tau, self.dt)
            self.rollouts.append(states)
            self.a_norm.append(accels)
        # (index into others, zone) and indices of same-path vehicles
        self.merging, self.lane_leaders = classify_others(scenario)
        self._vmax: dict[float, float] = {}
        self._speed_limit = _speed_limit_fn(self.path, cfg)
        self._ks = 1.0 / cfg.key_s_res
        self._kv = 1.0 / cfg.key_v_res
        self.v_des = cfg.v_des
        idm = self.idm
        self._idm_consts = (idm.a, idm.v_des, idm.delta, idm.s0, idm.T, 2.0 * math.sqrt(idm.a * idm.b))
        self._idm_clamp = accel_bounds(idm)
        self._merge_consts = [(i, z.ego_interval[0], z.merge_align[0], z.merge_align[1]) for i, z in self.merging]
        self.w_f, self.w_v = weights.f, weights.v
        self.w_jerk, self.w_inter = weights.jerk, weights.inter
        self._init_heuristic()

    def _init_heuristic(self) -> None:
        """Suffix minima of v_des(s) at the path samples, for ``heuristic``."""
        xs = self.path.s
        vd = [min(self.v_des, self._speed_limit(x)) for x in xs]
        suffix = vd[:]
        for i in range(len(vd) - 2, -1, -1):
            suffix[i] = min(vd[i], suffix[i + 1])
        self._h_xs, self._h_suffix = xs, suffix
        self._h_top = max(self.actions)
        self._h_da = self.cfg.da_max

    def v_des_floor(self, s: float) -> float:
        """Lowest desired speed anywhere at or beyond ``s``.

        Curvature and legal speed are linear between samples, so the minimum of
        v_max over a stretch sits at its ends.
        """
        i = bisect_right(self._h_xs, s)
        here = min(self.v_des, self._speed_limit(s))
        return min(here, self._h_suffix[i]) if i < len(self._h_xs) else here

    def heuristic(self, k: int, s: float, v: float, a: float) -> float:
        """Lower bound on the velocity cost still to come from step ``k``.

        Acceleration can rise by at most da_max per step up to the top action
        (a standstill reset to zero stays below that envelope), which caps the
        reachable speed; any shortfall below the lowest desired speed ahead is
        charged. The bound only grows along edges, so it is consistent.
        """
        if self.w_v == 0.0:
            return 0.0
        floor = self.v_des_floor(s)
        if v >= floor:
            return 0.0
        dt, top, da = self.dt, self._h_top, self._h_da
        base = a if a > 0.0 else 0.0
        prev = base
        vh = v
        short = 0.0
        for j in range(1, self.tau - k + 1):
            acc = base + j * da
            if acc > top:
                acc = top
            vh += 0.5 * dt * (prev + acc)
            prev = acc
            if vh >= floor:
                break
            short += floor - vh
        return self.w_v * short

    def vmax(self, s: float) -> float:
        out = self._vmax.get(s)
        if out is None:
            out = self._vmax[s] = self._speed_limit(s)
        return out

    def root_inter(self, ego: EgoState, initial: WorldState) -> tuple[tuple[OtherState, ...], tuple[float, ...]]:
        states = tuple(OtherState(*initial.others[i]) for i, _ in self.merging)
        accels = tuple(reactive_acceleration(x, ego.s, ego.v, z, self.idm)
                       for x, (_, z) in zip(states, self.merging))
        return states, accels

    def edge(self, k, s, v, a, mstates, maccels, a_next):
        """Successor of one vertex, or None if the edge is pruned."""
        dt = self.dt
        s1, v1, a1, _ = _cj(s, v, a, a_next, dt)
        vmax = self._speed_limit(s1)
        if v1 > vmax + 1e-9:
            return None
        if self.constraints and edge_violates(self.constraints, self.t0 + k * dt, dt, s, v, a, a_next):
            return None
        k1 = k + 1
        inter = 0.0
        gap_lead = math.inf
        v_lead = 0.0
        ks, kv = self._ks, self._kv
        if self.merging:
            new_states = []
            new_accels = []
            mkey = []
            p_a, p_v, p_delta, p_s0, p_T, p_sq = self._idm_consts
            a_lo, a_hi = self._idm_clamp
            for m, (i, entry, me, mo) in enumerate(self._merge_consts):
                so, vo = mstates[m]
                ao = maccels[m]
                vn = vo + ao * dt
                if vn < 0.0:
                    ts = -vo / ao if ao < 0.0 else 0.0
                    so, vo = so + vo * ts + 0.5 * ao * ts * ts, 0.0
                else:
                    so, vo = so + vo * dt + 0.5 * ao * dt * dt, vn
                new_states.append(OtherState(so, vo))
                mkey.append((round(so * ks), round(vo * kv)))
                gap = (s1 - me) - (so - mo)
                free = 1.0 - (vo / p_v) ** p_delta
                if s1 < entry or gap < 0.0:
                    ai = p_a * free
                elif gap == 0.0:
                    ai = a_lo
                else:
                    s_star = p_s0 + vo * p_T + vo * (vo - v1) / p_sq
                    if s_star < 0.0:
                        s_star = 0.0
                    ai = p_a * (free - (s_star / gap) ** 2)
                ai = a_lo if ai < a_lo else (a_hi if ai > a_hi else ai)
                new_accels.append(ai)
                inter += abs(self.a_norm[i][k1] - ai)
                if s1 >= me and gap <= 0.0 and -gap < gap_lead:
                    gap_lead, v_lead = -gap, vo
            new_states = tuple(new_states)
            new_accels = tuple(new_accels)
            key = (k1, round(s1 * ks), round(v1 * kv), a1, tuple(mkey))
        else:
            new_states = new_accels = ()
            key = (k1, round(s1 * ks), round(v1 * kv), a1)
        for i in self.lane_leaders:
            xo = self.rollouts[i][k1]
            g = xo.s - s1
            if 0.0 < g < gap_lead:
                gap_lead, v_lead = g, xo.v
        if gap_lead == math.inf:
            follow = 0.0
        elif gap_lead <= 0.0:
            return None
        else:
            p_a, p_v, p_delta, p_s0, p_T, p_sq = self._idm_consts
            s_star = p_s0 + v1 * p_T + v1 * (v1 - v_lead) / p_sq
            follow = (s_star / gap_lead) ** 2 if s_star > 0.0 else 0.0
        dev = v1 - (self.v_des if self.v_des < vmax else vmax)
        j_v = dev * dev if dev > 0.0 else -dev + 0.0
        jerk = (a_next - a) / dt
        j_jerk = jerk * jerk
        total = self.w_f * follow + self.w_v * j_v + self.w_jerk * j_jerk + self.w_inter * inter
        if total == math.inf or total != total:
            return None
        return s1, v1, a1, new_states, new_accels, (follow, j_v, j_jerk, inter, total), key

    def world(self, k: int, ego: EgoState, mstates: Sequence[OtherState]) -> WorldState:
        others = [self.rollouts[i][k] for i in range(len(self.rollouts))]
        for m, (i, _) in enumerate(self.merging):
            others[i] = mstates[m]
        return WorldState(ego, tuple(others))

    def key(self, k, s, v, a, mstates):
        ks, kv = self._ks, self._kv
        if mstates:
            return (k, round(s * ks), round(v * kv), a,
                    tuple((round(x.s * ks), round(x.v * kv)) for x in mstates))
        return (k, round(s * ks), round(v * kv), a)


class _Vertex:
    __slots__ = ("k", "s", "v", "a", "g", "parent", "action", "mstates", "maccels", "cost", "key")

    def __init__(self, k, s, v, a, g, parent, action, mstates, maccels, cost, key=None):
        self.k, self.s, self.v, self.a, self.g = k, s, v, a, g
        self.parent, self.action = parent, action
        self.mstates, self.maccels, self.cost = mstates, maccels, cost
        self.key = key


def _trajectory(problem: _Problem, leaf: _Vertex) -> BehaviorTrajectory:
    chain = []
    node = leaf
    while node is not None:
        chain.append(node)
        node = node.parent
    chain.reverse()
    states = [problem.world(n.k, EgoState(n.s, n.v, n.a), n.mstates) for n in chain]
    return BehaviorTrajectory(
        t0=problem.t0, dt=problem.dt, states=states,
        actions=[n.action for n in chain[1:]], costs=[StepCost(*n.cost) for n in chain[1:]],
    )


def _check_initial(initial: WorldState) -> None:
    if initial.ego.v < 0.0:
        raise ValueError("ego speed must be non-negative")


def plan_behavior(
    initial: WorldState,
    scenario: ScenarioConfig,
    cfg: PlannerConfig | None = None,
    weights: CostWeights | None = None,
    *,
    t0: float = 0.0,
    constraints: Sequence[SpatioTemporalConstraint] = (),
) -> BehaviorTrajectory:
    """Minimum-cost action sequence to the horizon via A*.

    Inevitable-violation states are pruned. Otherwise the heuristic is a
    consistent lower bound on the remaining velocity cost, so with
    non-negative step costs the first vertex popped at depth ``tau`` is
    optimal.
    """
    cfg = cfg or scenario.planner
    weights = weights or scenario.weights
    _check_initial(initial)
    P = _Problem(initial, scenario, cfg, weights, t0, constraints)
    ego = initial.ego
    mstates, maccels = P.root_inter(ego, initial)
    root_key = P.key(0, ego.s, ego.v, ego.a, mstates)
    root = _Vertex(0, ego.s, ego.v, ego.a, 0.0, None, None, mstates, maccels, None, root_key)
    tie = itertools.count()
    heuristic = P.heuristic
    heap = [(heuristic(0, ego.s, ego.v, ego.a), -ego.s, 0.0, next(tie), root)]
    best: dict[tuple, float] = {root_key: 0.0}
    closed: set[tuple] = set()
    da = cfg.da_max + 1e-9
    succ = {a: [(x, abs(x - a)) for x in P.actions if abs(x - a) <= da] for a in P.actions}
    constraints_ = P.constraints
    edge = P.edge
    push, pop = heapq.heappush, heapq.heappop
    expanded = 0
    while heap:
        node = pop(heap)[4]
        g = node.g
        key = node.key
        if key in closed:
            continue
        closed.add(key)
        if node.k == P.tau:
            log.debug("behavior search: %d expansions, cost %.6g", expanded, g)
            return _trajectory(P, node)
        expanded += 1
        k1 = node.k + 1
        t1 = P.t0 + k1 * P.dt
        k, s, v, a, ms0, ma0 = node.k, node.s, node.v, node.a, node.mstates, node.maccels
        for a_next, dj in succ.get(a) or [(x, abs(x - a)) for x in P.actions if abs(x - a) <= da]:
            out = edge(k, s, v, a, ms0, ma0, a_next)
            if out is None:
                continue
            s1, v1, a1, ms, ma, cost, ckey = out
            if constraints_ and inevitable_violation(EgoState(s1, v1, a1), t1, constraints_, cfg):
                continue
            g1 = g + cost[4]
            if ckey in closed or g1 >= best.get(ckey, math.inf):
                continue
            best[ckey] = g1
            child = _Vertex(k1, s1, v1, a1, g1, node, a_next, ms, ma, cost, ckey)
            push(heap, (g1 + heuristic(k1, s1, v1, a1), -s1, dj, next(tie), child))
    raise NoFeasiblePlan(f"open set exhausted after {expanded} expansions")


def brute_force_plan(
    initial: WorldState,
    scenario: ScenarioConfig,
    cfg: PlannerConfig | None = None,
    weights: CostWeights | None = None,
    *,
    t0: float = 0.0,
    constraints: Sequence[SpatioTemporalConstraint] = (),
    max_tau: int = 6,
) -> BehaviorTrajectory:
    """Exhaustive enumeration of all action sequences; a test oracle for A*.

    Feasibility is the search's: an edge is dropped if it violates a bound or
    a constraint, or if it ends in a state from which a violation is inevitable.
    """
    cfg = cfg or scenario.planner
    weights = weights or scenario.weights
    if cfg.tau > max_tau:
        raise ValueError(f"brute force refuses tau={cfg.tau} > {max_tau}")
    _check_initial(initial)
    P = _Problem(initial, scenario, cfg, weights, t0, constraints)
    ego = initial.ego
    mstates, maccels = P.root_inter(ego, initial)
    root = _Vertex(0, ego.s, ego.v, ego.a, 0.0, None, None, mstates, maccels, None)
    best_leaf: list[_Vertex | None] = [None]
    best_cost = [math.inf]
    da = cfg.da_max + 1e-9

    def dfs(node: _Vertex) -> None:
        if node.k == P.tau:
            if node.g < best_cost[0]:
                best_cost[0], best_leaf[0] = node.g, node
            return
        for a_next in P.actions:
            if abs(a_next - node.a) > da:
                continue
            out = P.edge(node.k, node.s, node.v, node.a, node.mstates, node.maccels, a_next)
            if out is None:
                continue
            s1, v1, a1, ms, ma, cost, _ = out
            t1 = P.t0 + (node.k + 1) * cfg.dt
            if P.constraints and inevitable_violation(EgoState(s1, v1, a1), t1, P.constraints, cfg):
                continue
            dfs(_Vertex(node.k + 1, s1, v1, a1, node.g + cost[4], node, a_next, ms, ma, cost))

    dfs(root)
    if best_leaf[0] is None:
        raise NoFeasiblePlan("every action sequence is infeasible")
    return _trajectory(P, best_leaf[0])


def expand(state: WorldState, scenario: ScenarioConfig, cfg: PlannerConfig | None = None,
           weights: CostWeights | None = None, *, t: float = 0.0,
           constraints: Sequence[SpatioTemporalConstraint] = ()) -> list[tuple[float, WorldState, StepCost]]:
    """Successors of a single world state observed at time ``t``.

    Returns ``(a_next, child, cost)`` for every action inside the ``da_max``
    window whose edge survives pruning.
    """
    cfg = cfg or scenario.planner
    weights = weights or scenario.weights
    P = _Problem(state, scenario, cfg, weights, t, constraints)
    ego = state.ego
    mstates, maccels = P.root_inter(ego, state)
    out = []
    for a_next in P.actions:
        if abs(a_next - ego.a) > cfg.da_max + 1e-9:
            continue
        res = P.edge(0, ego.s, ego.v, ego.a, mstates, maccels, a_next)
        if res is None:
            continue
        s1, v1, a1, ms, _, cost, _ = res
        child = EgoState(s1, v1, a1)
        if P.constraints and inevitable_violation(child, t + cfg.dt, P.constraints, cfg):
            continue
        out.append((a_next, P.world(1, child, ms), StepCost(*cost)))
    return out
