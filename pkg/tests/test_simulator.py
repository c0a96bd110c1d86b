import csv
import math

import numpy as np
import pytest

from courtplan.behavior import EgoState, WorldState, cj_interpolate, cj_step, plan_behavior
from courtplan.predictor import OtherState, ca_step, free_acceleration, free_rollout
from courtplan.scenario import scenario_from_dict
from courtplan.septic import KnotState
from courtplan.simulator import (
    behavior_knots,
    consistency_state,
    emergency_brake,
    predict_others,
    replan,
    simulate,
)
from conftest import bundled, straight_doc


def crossing_doc(ego_v=10.0, other_s=4.0, other_v=0.0):
    """Crossing vehicle standing in the conflict zone right in front of the ego."""
    return straight_doc(
        ego_v=ego_v,
        others=[{"id": "3", "role": "other", "path": "main", "s": other_s, "v": other_v}],
        zones=[{"kind": "crossing", "other_id": "3", "ego_interval": [6, 10], "other_interval": [0, 8]}],
    )


def test_consistency_state_examples():
    sc = scenario_from_dict(straight_doc(ego_v=2.0))
    B = plan_behavior(WorldState(EgoState(0, 2, 0)), sc)
    # exactly on a knot
    assert consistency_state(B, 3.0).ego == B.ego[3]
    # between knots: closed-form constant jerk from the previous knot
    mid = consistency_state(B, 2.5, [OtherState(1.0, 2.0)])
    assert mid.ego == pytest.approx(cj_interpolate(B.ego[2], B.actions[2], 1.0, 0.5))
    assert mid.others == (OtherState(1.0, 2.0),)
    assert consistency_state(B, 10.0).ego == B.ego[-1]
    with pytest.raises(ValueError):
        consistency_state(B, 10.5)


def test_predict_others_matches_free_rollout():
    sc = bundled("scenario1")
    x = OtherState(-20.0, 3.0)
    states, _ = free_rollout(x, sc.idm, 10, 0.1)
    assert predict_others([x], sc, 1.0)[0] == pytest.approx(states[-1], abs=1e-12)
    assert predict_others([x], sc, 0.0) == [x]
    # a horizon that is not a multiple of the rollout step is split evenly
    y = x
    for _ in range(3):
        y = ca_step(y, free_acceleration(y.v, sc.idm), 0.25 / 3)
    assert predict_others([x], sc, 0.25)[0] == pytest.approx(y, abs=1e-12)


def test_behavior_knots_layout():
    sc = scenario_from_dict(straight_doc(ego_v=4.0))
    B = plan_behavior(WorldState(EgoState(0, 4, 0)), sc, t0=1.0)
    start = KnotState(1.0, 4.0, 0.0, 0.0)
    knots = behavior_knots(B, 0.4, start)
    assert knots[0] == (0.4, start)
    assert [t for t, _ in knots[1:]] == pytest.approx([1.0 + k for k in range(len(B.ego))])
    assert knots[-1][1].j == 0.0
    assert knots[1][1].j == pytest.approx(B.jerks[0])
    # a behavior state on top of the start is dropped
    assert len(behavior_knots(B, 1.0, start)) == len(B.ego)


def test_two_cycle_static_replay():
    sc = scenario_from_dict(straight_doc(ego_v=4.0))
    ego = KnotState(0.0, 4.0, 0.0, 0.0)
    r0 = replan(0.0, ego, [], None, sc)
    assert r0.source == "restart"
    x1 = r0.trajectory.eval(0.2)
    r1 = replan(0.2, x1, [], r0.behavior, sc)
    # the new trajectory starts exactly where the old one was
    assert r1.trajectory.eval(0.2) == pytest.approx(x1, abs=1e-9)
    assert r1.source in ("consistency", "restart")
    assert set(r1.pool_costs) <= {"consistency", "restart"}
    # nothing changed in the world, so the consistency plan continues the previous one
    assert r1.behavior.ego[0] == pytest.approx(r0.behavior.ego[1], abs=1e-12) or r1.source == "restart"


def test_scripted_perturbation():
    sc = scenario_from_dict(straight_doc(ego_v=4.0))
    r0 = replan(0.0, KnotState(0.0, 4.0, 0.0, 0.0), [], None, sc)
    x1 = r0.trajectory.eval(0.2)
    pushed = KnotState(x1.s, x1.v + 1.0, x1.a, x1.j)
    r1 = replan(0.2, pushed, [], r0.behavior, sc)
    assert r1.trajectory.eval(0.2) == pytest.approx(pushed, abs=1e-9)
    assert not r1.fallback


def test_emergency_brake_profile():
    cfg = bundled("scenario1").planner
    traj = emergency_brake(0.0, KnotState(0.0, 8.0, 0.0, 0.0), cfg)
    assert traj.emergency
    t, x = traj.sample(0.05)
    assert np.all(np.diff(x[1]) <= 1e-9)
    assert x[1, -1] == pytest.approx(0.0, abs=1e-9)
    assert x[2].min() >= cfg.a_min - 1e-6


def test_replan_emergency_when_infeasible():
    sc = scenario_from_dict(crossing_doc())
    res = replan(0.0, KnotState(0.0, 10.0, 0.0, 0.0), [OtherState(4.0, 0.0)], None, sc)
    assert res.constraints
    assert res.source == "emergency" and res.behavior is None
    assert res.trajectory.emergency


def test_goal_termination():
    sc = scenario_from_dict(straight_doc(ego_v=7.0, goal_s=20.0, duration=20.0))
    log = simulate(sc)
    assert log.goal_reached
    assert log.records[-1].ego.s < 20.0
    assert log.records[-1].sim_t < 4.0


def test_duration_ticks():
    sc = scenario_from_dict(straight_doc(ego_v=5.0))
    log = simulate(sc, duration=1.0)
    assert [r.tick for r in log.records] == list(range(6))
    assert log.records[-1].sim_t == pytest.approx(1.0)
    with pytest.raises(ValueError):
        simulate(sc, duration=0.0)


def test_others_constant_velocity():
    _, log = run()
    r0, r1 = log.records[0], log.records[1]
    for a, b in zip(r0.others, r1.others):
        assert b.s == pytest.approx(a.s + a.v * log.tick_dt)
        assert b.v == a.v


def run():
    from conftest import run_bundled
    return run_bundled("scenario1")


def test_csv_schema(tmp_path):
    _, log = run()
    path = tmp_path / "run.csv"
    log.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["tick", "sim_t", "plan_ms", "source", "fallback",
                       "ego_s", "ego_v", "ego_a", "ego_j", "veh2_s", "veh2_v"]
    assert len(rows) == len(log.records) + 1
    r = log.records[7]
    assert float(rows[8][5]) == r.ego.s
    assert float(rows[8][9]) == r.others[0].s


def test_json_log(tmp_path):
    _, log = run()
    d = log.to_json()
    assert d["scenario"] == "scenario1"
    tick = d["ticks"][3]
    assert {"plan_ms", "source", "splits", "costs", "constraints", "v_bounds", "behavior", "execution"} <= set(tick)
    assert tick["v_bounds"][0] <= tick["v_bounds"][1]
    assert "plan_ms" not in log.to_json(timings=False)["ticks"][0]


def test_deterministic_logs():
    sc = bundled("scenario3")
    a = simulate(sc, duration=4.0).to_json(timings=False)
    b = simulate(sc, duration=4.0).to_json(timings=False)
    assert a == b


def test_driven_state_continuity():
    # each tick starts from the previous execution trajectory evaluated at the tick time
    _, log = run()
    for k in range(1, len(log.records)):
        prev = log.trajectories[k - 1]
        t = log.records[k].sim_t
        assert log.records[k].ego == pytest.approx(prev.eval(t), abs=1e-12)
        assert log.trajectories[k].eval(t) == pytest.approx(log.records[k].ego, abs=1e-6)


def test_emergency_in_closed_loop():
    sc = scenario_from_dict(crossing_doc(), )
    log = simulate(sc, duration=2.0)
    assert log.records[0].source == "emergency"
    vs = [r.ego.v for r in log.records]
    assert all(b <= a + 1e-9 for a, b in zip(vs, vs[1:]))
    assert math.isfinite(log.records[-1].ego.s)
    assert cj_step(EgoState(0, 0, 0), 0.0, 1.0).v == 0.0
