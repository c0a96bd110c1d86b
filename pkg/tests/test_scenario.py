import math

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from courtplan.scenario import (
    ConflictZone,
    PathProfile,
    PlannerConfig,
    ScenarioError,
    SpatioTemporalConstraint,
    derive_crossing_constraints,
    load_scenario,
    scenario_from_dict,
    serialize,
    speed_limit,
)
from conftest import bundled, straight_doc

CFG = PlannerConfig()


def merging_doc():
    return straight_doc(
        others=[{"id": "2", "role": "other", "path": "main", "s": -20.0, "v": 7.5}],
        zones=[{"kind": "merging", "other_id": "2", "ego_interval": [30, 45],
                "other_interval": [55, 70], "merge_align": [45, 70]}],
    )


# --- loading ---------------------------------------------------------------

def test_load_one_other():
    sc = load_scenario(yaml.safe_dump(merging_doc()))
    assert len(sc.others) == 1
    assert sc.ego.id == "1"
    assert sc.zones[0].merge_align == (45.0, 70.0)


def test_two_egos_named():
    doc = merging_doc()
    doc["vehicles"][1]["role"] = "ego"
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    assert "'1'" in str(err.value) and "'2'" in str(err.value)


def test_unknown_zone_vehicle():
    doc = merging_doc()
    doc["zones"][0]["other_id"] = "99"
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    assert "99" in str(err.value)
    assert err.value.kind == "semantic"


def test_parse_error_has_line():
    with pytest.raises(ScenarioError) as err:
        load_scenario("paths: [\n  {id: a,\n")
    assert err.value.kind == "parse"
    assert "line" in (err.value.locus or "")


@pytest.mark.parametrize("mutate, locus", [
    (lambda d: d["vehicles"][0].update(v=-1.0), "vehicles[0].v"),
    (lambda d: d["zones"][0].update(ego_interval=[45, 30]), "zones[0].ego_interval"),
    (lambda d: d["zones"][0].pop("merge_align"), "zones[0]"),
    (lambda d: d["paths"][0]["samples"].append([10.0, 0.0, 10.0]), "paths[ego].samples[2]"),
    (lambda d: d["paths"][0]["samples"][0].__setitem__(2, 0.0), "paths[ego].samples[0]"),
    (lambda d: d.update(weights={"inter": -1}), "weights.inter"),
])
def test_invariants_rejected(mutate, locus):
    doc = merging_doc()
    mutate(doc)
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    assert err.value.locus == locus


def test_planner_invariants():
    for bad in ({"dt": 0}, {"tau": 1}, {"actions": []}, {"actions": [3.0]}, {"da_max": 0}, {"l_r": 0}):
        doc = merging_doc()
        doc["planner"] = bad
        with pytest.raises(ScenarioError):
            scenario_from_dict(doc)


def test_unknown_top_level_key():
    doc = merging_doc()
    doc["bogus"] = 1
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    assert err.value.kind == "schema"


@pytest.mark.parametrize("name", ["scenario1", "scenario2", "scenario3"])
def test_round_trip(name):
    sc = bundled(name)
    assert load_scenario(serialize(sc)) == sc


# --- path profile and speed limit -------------------------------------------

def test_path_interpolation_and_clamp():
    p = PathProfile("p", [[0, 0.0, 10], [10, 0.1, 6]])
    assert p.curvature(5) == pytest.approx(0.05)
    assert p.legal_speed(5) == pytest.approx(8.0)
    assert p.curvature(-3) == 0.0
    assert p.legal_speed(50) == 6.0


@pytest.mark.parametrize("kappa, expected", [(0.0, 10.0), (0.08, 5.0), (0.02, 10.0), (-0.08, 5.0)])
def test_speed_limit_examples(kappa, expected):
    p = PathProfile("p", [[0, kappa, 10], [100, kappa, 10]])
    assert speed_limit(p, 50.0, CFG) == pytest.approx(expected, abs=1e-12)


@given(k1=st.floats(0, 1), k2=st.floats(0, 1))
def test_speed_limit_monotone(k1, k2):
    lo, hi = sorted((k1, k2))
    v_lo = speed_limit(PathProfile("p", [[0, lo, 10], [1, lo, 10]]), 0.5, CFG)
    v_hi = speed_limit(PathProfile("p", [[0, hi, 10], [1, hi, 10]]), 0.5, CFG)
    assert v_hi <= v_lo
    assert v_lo <= CFG.v_cap


# --- crossing constraints -------------------------------------------------------

CROSS = ConflictZone("crossing", "3", (30.0, 38.0), (0.0, 8.0))


def cv_rollout(s0, v, horizon=11.0, step=0.1):
    n = int(round(horizon / step))
    return [(i * step, s0 + v * i * step, v) for i in range(n + 1)]


def test_crossing_constant_velocity():
    cs = derive_crossing_constraints(CROSS, cv_rollout(-20.0, 10.0), CFG)
    assert len(cs) == 1
    assert cs[0].as_list() == pytest.approx([1.0, 3.8, 28.0, 40.0], abs=1e-9)


def test_crossing_already_past():
    assert derive_crossing_constraints(CROSS, cv_rollout(50.0, 10.0), CFG) == []


def test_crossing_stop_inside():
    # brakes at 2 m/s^2 from 6 m/s starting at s=-5: stops at s=4 inside [0, 8)
    rollout = []
    for i in range(111):
        t = i * 0.1
        tt = min(t, 3.0)
        rollout.append((t, -5.0 + 6.0 * tt - tt * tt, max(6.0 - 2.0 * t, 0.0)))
    cs = derive_crossing_constraints(CROSS, rollout, CFG)
    # oracle: occupancy scan, entry where s crosses 0
    t_in = next(t for t, s, _ in rollout if s >= 0.0)
    assert len(cs) == 1
    assert cs[0].t_end == pytest.approx(rollout[-1][0] + CFG.t_safe)
    assert cs[0].t_start == pytest.approx(t_in - CFG.t_safe, abs=0.1)


@settings(max_examples=200)
@given(s0=st.floats(-60, 20), v=st.floats(0.5, 12))
def test_crossing_spatial_padding(s0, v):
    for c in derive_crossing_constraints(CROSS, cv_rollout(s0, v), CFG):
        assert c.s_start == 30.0 - CFG.d_safe
        assert c.s_end == 38.0 + CFG.d_safe
        assert c.t_end > c.t_start >= 0.0


def test_constraint_half_open():
    c = SpatioTemporalConstraint(1.0, 3.0, 10.0, 20.0)
    assert c.contains(1.0, 10.0)
    assert not c.contains(3.0, 15.0)
    assert not c.contains(2.0, 20.0)
    with pytest.raises(ValueError):
        SpatioTemporalConstraint(3.0, 3.0, 0.0, 1.0)


def test_constraint_clipped_to_zero():
    cs = derive_crossing_constraints(CROSS, cv_rollout(-5.0, 10.0), CFG)
    assert cs[0].t_start == 0.0
    assert math.isfinite(cs[0].t_end)
