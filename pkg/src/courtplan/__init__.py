"""Courteous longitudinal planning for merging and crossing at intersections.

Behavior planning runs A* over a constant-jerk lattice with an IDM-based
model of how other vehicles react to the ego; septic polynomials smooth the
result into an executable trajectory, replanned in closed loop.
"""

from .behavior import (
    BehaviorTrajectory,
    EgoState,
    NoFeasiblePlan,
    WorldState,
    brute_force_plan,
    cj_step,
    plan_behavior,
)
from .scenario import (
    ConflictZone,
    CostWeights,
    IdmParams,
    PlannerConfig,
    ScenarioConfig,
    ScenarioError,
    SpatioTemporalConstraint,
    load_scenario,
)
from .septic import ExecutionTrajectory, KnotState, fit_septic
from .simulator import SimulationLog, replan, simulate

__version__ = "0.1.0"
