import functools

import pytest

from courtplan.cli import add_dummy_vehicles, read_scenario
from courtplan.scenario import scenario_from_dict
from courtplan.simulator import simulate


def straight_doc(ego_v=5.0, others=(), zones=(), length=300.0, **extra):
    """Small scenario document: straight ego road plus optional extras."""
    doc = {
        "paths": [
            {"id": "ego", "samples": [[0.0, 0.0, 10.0], [length, 0.0, 10.0]]},
            {"id": "main", "samples": [[0.0, 0.0, 10.0], [length, 0.0, 10.0]]},
        ],
        "vehicles": [{"id": "1", "role": "ego", "path": "ego", "s": 0.0, "v": ego_v, "a": 0.0}],
        "zones": list(zones),
    }
    doc["vehicles"] += list(others)
    doc.update(extra)
    return doc


@pytest.fixture
def straight():
    return scenario_from_dict(straight_doc())


@functools.lru_cache(maxsize=None)
def bundled(name):
    return read_scenario(name)[0]


@functools.lru_cache(maxsize=None)
def run_bundled(name, inter=None, dummies=0, seed=0):
    """Closed-loop run of a bundled scenario, cached across the session."""
    sc = bundled(name)
    if inter is not None:
        sc = sc.with_weights(inter=inter)
    sc = add_dummy_vehicles(sc, dummies, seed)
    return sc, simulate(sc)
