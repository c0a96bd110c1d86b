"""Reactive model for other vehicles: IDM acceleration with constant-acceleration
stepping, giving both the uninfluenced and the ego-reacting predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .scenario import ConflictZone, IdmParams


class OtherState(NamedTuple):
    s: float
    v: float


@dataclass(frozen=True)
class InteractionPrediction:
    """Per-step accelerations of one other vehicle without / with the ego."""

    a_norm: tuple[float, ...]
    a_inter: tuple[float, ...]

    def __post_init__(self):
        if len(self.a_norm) != len(self.a_inter):
            raise ValueError("a_norm and a_inter must have equal length")

    def induced(self) -> float:
        return sum(abs(n - i) for n, i in zip(self.a_norm, self.a_inter))


def accel_bounds(p: IdmParams) -> tuple[float, float]:
    """Clamp applied to every IDM output."""
    return -2.0 * p.b, p.a


def idm_desired_gap(v: float, dv: float, p: IdmParams) -> float:
    """Desired dynamic gap ``s*``; ``dv`` is the closing speed (follower minus leader)."""
    return p.s0 + v * p.T + v * dv / (2.0 * math.sqrt(p.a * p.b))


def idm_acceleration(v: float, gap: float, dv: float, p: IdmParams) -> tuple[float, float]:
    """IDM acceleration and interaction term ``(s*/gap)**2``.

    ``gap = math.inf`` means free road. A non-positive gap (overlap) returns the
    clamp minimum with an infinite interaction term instead of raising.
    """
    a_lo, a_hi = accel_bounds(p)
    free = 1.0 - (v / p.v_des) ** p.delta
    if gap == math.inf:
        interaction = 0.0
    elif gap <= 0.0:
        return a_lo, math.inf
    else:
        s_star = max(idm_desired_gap(v, dv, p), 0.0)
        interaction = (s_star / gap) ** 2
    a = p.a * (free - interaction)
    return min(max(a, a_lo), a_hi), interaction


def free_acceleration(v: float, p: IdmParams) -> float:
    a_lo, a_hi = accel_bounds(p)
    return min(max(p.a * (1.0 - (v / p.v_des) ** p.delta), a_lo), a_hi)


def ca_step(x: OtherState, a: float, dt: float) -> OtherState:
    """Constant-acceleration transition; a vehicle braking to a halt stays stopped."""
    s, v = x
    v1 = v + a * dt
    if v1 < 0.0:
        t_stop = -v / a if a < 0.0 else 0.0
        return OtherState(s + v * t_stop + 0.5 * a * t_stop * t_stop, 0.0)
    return OtherState(s + v * dt + 0.5 * a * dt * dt, v1)


def free_rollout(x0: OtherState, p: IdmParams, steps: int, dt: float) -> tuple[list[OtherState], list[float]]:
    """Uninfluenced prediction: IDM without a leader, stepped with ``ca_step``.

    Returns ``steps + 1`` states and the acceleration applied at each of them
    (the last one is the acceleration the vehicle would apply next).
    """
    states = [OtherState(*x0)]
    accels = []
    for _ in range(steps):
        a = free_acceleration(states[-1].v, p)
        accels.append(a)
        states.append(ca_step(states[-1], a, dt))
    accels.append(free_acceleration(states[-1].v, p))
    return states, accels


def merged_gap(s_ego: float, s_other: float, zone: ConflictZone) -> float:
    """Signed distance of the ego ahead of the other vehicle on the merged lane."""
    me, mo = zone.merge_align
    return (s_ego - me) - (s_other - mo)


def reactive_acceleration(x_o: OtherState, s_e: float, v_e: float, zone: ConflictZone, p: IdmParams) -> float:
    """Acceleration of a merging vehicle that treats the ego as its leader.

    The other vehicle only reacts once the ego has entered the zone and is
    ahead of it in merged coordinates.
    """
    if zone.kind != "merging" or zone.merge_align is None:
        raise ValueError("reactive prediction needs a merging zone with merge_align")
    if s_e < zone.ego_interval[0]:
        return free_acceleration(x_o.v, p)
    gap = merged_gap(s_e, x_o.s, zone)
    if gap < 0.0:
        return free_acceleration(x_o.v, p)
    return idm_acceleration(x_o.v, gap, x_o.v - v_e, p)[0]
