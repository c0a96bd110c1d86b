"""Declarative scenario model: center-line profiles, vehicles, conflict zones,
cost weights and planner limits, plus the derived speed limits and crossing
constraints."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import yaml


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario documents.

    ``locus`` names the offending field (``vehicles[1].v``) or the document
    line for parse errors.
    """

    def __init__(self, message: str, locus: str | None = None, kind: str = "semantic"):
        self.locus = locus
        self.kind = kind
        super().__init__(f"{locus}: {message}" if locus else message)


class PathProfile:
    """Arc-length indexed curvature and legal speed along a center line.

    Queries between samples interpolate linearly, queries past either end clamp
    to the nearest sample.
    """

    __slots__ = ("id", "s", "kappa", "v_legal")

    def __init__(self, id: str, samples: Iterable[Sequence[float]]):
        rows = [tuple(float(x) for x in row) for row in samples]
        if not rows:
            raise ScenarioError("path needs at least one sample", f"paths[{id}].samples")
        for i, row in enumerate(rows):
            if len(row) != 3:
                raise ScenarioError("sample must be [s, kappa, v_legal]", f"paths[{id}].samples[{i}]")
            if not all(math.isfinite(x) for x in row):
                raise ScenarioError("sample values must be finite", f"paths[{id}].samples[{i}]")
            if row[2] <= 0.0:
                raise ScenarioError("legal speed must be positive", f"paths[{id}].samples[{i}]")
            if i and row[0] <= rows[i - 1][0]:
                raise ScenarioError("arc lengths must be strictly increasing", f"paths[{id}].samples[{i}]")
        self.id = str(id)
        self.s = tuple(r[0] for r in rows)
        self.kappa = tuple(r[1] for r in rows)
        self.v_legal = tuple(r[2] for r in rows)

    def _interp(self, values: tuple[float, ...], s: float) -> float:
        xs = self.s
        if s <= xs[0]:
            return values[0]
        if s >= xs[-1]:
            return values[-1]
        i = bisect_right(xs, s)
        w = (s - xs[i - 1]) / (xs[i] - xs[i - 1])
        return values[i - 1] + w * (values[i] - values[i - 1])

    def curvature(self, s: float) -> float:
        return self._interp(self.kappa, s)

    def legal_speed(self, s: float) -> float:
        return self._interp(self.v_legal, s)

    @property
    def length(self) -> float:
        return self.s[-1]

    def samples(self) -> list[list[float]]:
        return [[s, k, v] for s, k, v in zip(self.s, self.kappa, self.v_legal)]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PathProfile) and self.samples() == other.samples() and self.id == other.id

    def __repr__(self) -> str:
        return f"PathProfile({self.id!r}, n={len(self.s)}, length={self.length:g})"


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    role: str  # "ego" | "other"
    path: str
    s: float
    v: float
    a: float = 0.0
    sim_model: str = "cv"


@dataclass(frozen=True)
class ConflictZone:
    kind: str  # "merging" | "crossing"
    other_id: str
    ego_interval: tuple[float, float]
    other_interval: tuple[float, float]
    merge_align: tuple[float, float] | None = None


@dataclass(frozen=True)
class SpatioTemporalConstraint:
    """Forbidden rectangle on the ego center line; both windows half-open."""

    t_start: float
    t_end: float
    s_start: float
    s_end: float

    def __post_init__(self):
        if not (self.t_end > self.t_start and self.s_end > self.s_start):
            raise ValueError(f"degenerate constraint {self.as_list()}")

    def contains(self, t: float, s: float) -> bool:
        return self.t_start <= t < self.t_end and self.s_start <= s < self.s_end

    def as_list(self) -> list[float]:
        return [self.t_start, self.t_end, self.s_start, self.s_end]


@dataclass(frozen=True)
class CostWeights:
    f: float = 5.0
    v: float = 1.0
    jerk: float = 1.0
    inter: float = 20.0


@dataclass(frozen=True)
class PlannerConfig:
    dt: float = 1.0
    tau: int = 10
    actions: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    da_max: float = 1.9
    a_min: float = -2.5
    a_max: float = 2.5
    v_cap: float = 10.0
    v_des: float = 7.5
    a_lat_max: float = 2.0
    l_r: int = 1
    replan_hz: float = 5.0
    t_safe: float = 1.0
    d_safe: float = 2.0
    # closed-set key resolution for duplicate detection in the behavior graph
    key_s_res: float = 1e-6
    key_v_res: float = 1e-6


@dataclass(frozen=True)
class IdmParams:
    a: float = 0.73
    b: float = 1.67
    delta: float = 4.0
    T: float = 1.5
    s0: float = 2.0
    v_des: float = 7.5


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    paths: dict[str, PathProfile]
    vehicles: tuple[VehicleSpec, ...]
    zones: tuple[ConflictZone, ...] = ()
    weights: CostWeights = field(default_factory=CostWeights)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    idm: IdmParams = field(default_factory=IdmParams)
    goal_s: float | None = None
    duration: float = 30.0

    @property
    def ego(self) -> VehicleSpec:
        return next(v for v in self.vehicles if v.role == "ego")

    @property
    def others(self) -> tuple[VehicleSpec, ...]:
        return tuple(v for v in self.vehicles if v.role != "ego")

    @property
    def ego_path(self) -> PathProfile:
        return self.paths[self.ego.path]

    @property
    def goal(self) -> float:
        return self.goal_s if self.goal_s is not None else self.ego_path.length

    def zone_for(self, other_id: str) -> ConflictZone | None:
        for z in self.zones:
            if z.other_id == other_id:
                return z
        return None

    def with_weights(self, **changes: float) -> "ScenarioConfig":
        return replace(self, weights=replace(self.weights, **changes))

    def with_planner(self, **changes: Any) -> "ScenarioConfig":
        return replace(self, planner=replace(self.planner, **changes))


# --------------------------------------------------------------------------
# derived quantities
# --------------------------------------------------------------------------


def speed_limit(path: PathProfile, s: float, cfg: PlannerConfig) -> float:
    """Maximum admissible speed at arc length ``s``.

    Intersection of the legal speed, the lateral-acceleration bound
    ``sqrt(a_lat_max / |kappa|)`` and the vehicle cap.
    """
    kappa = abs(path.curvature(s))
    v_curve = math.sqrt(cfg.a_lat_max / kappa) if kappa > 0.0 else math.inf
    return min(path.legal_speed(s), v_curve, cfg.v_cap)


def _crossing_time(t0, s0, v0, t1, s1, v1, target):
    """Time in [t0, t1] at which a constant-acceleration piece reaches ``target``."""
    dt = t1 - t0
    if dt <= 0.0:
        return t0
    a = (v1 - v0) / dt
    d = target - s0
    if abs(a) < 1e-12:
        return t0 + (d / v0 if v0 > 0.0 else 0.0)
    disc = max(v0 * v0 + 2.0 * a * d, 0.0)
    tau = (-v0 + math.sqrt(disc)) / a
    return t0 + min(max(tau, 0.0), dt)


def derive_crossing_constraints(
    zone: ConflictZone,
    rollout: Sequence[tuple[float, float, float]],
    cfg: PlannerConfig,
    t_min: float | None = None,
) -> list[SpatioTemporalConstraint]:
    """Spatio-temporal constraints on the ego path from a crossing vehicle.

    ``rollout`` is a time-ordered sequence of ``(t, s, v)`` for the other
    vehicle, assumed constant-acceleration between samples. Each contiguous
    occupancy window of ``zone.other_interval`` becomes one forbidden rectangle
    padded by ``t_safe`` and ``d_safe``; start times are clipped to ``t_min``
    (default: the first rollout time).
    """
    if zone.kind != "crossing":
        raise ValueError(f"expected a crossing zone, got {zone.kind!r}")
    if not rollout:
        return []
    lo, hi = zone.other_interval
    t_clip = rollout[0][0] if t_min is None else t_min
    windows: list[list[float]] = []
    t_prev, s_prev, v_prev = rollout[0]
    inside = lo <= s_prev < hi
    if inside:
        windows.append([t_prev, math.inf])
    for t, s, v in rollout[1:]:
        if not inside and s_prev < lo <= s:
            t_in = _crossing_time(t_prev, s_prev, v_prev, t, s, v, lo)
            windows.append([t_in, math.inf])
            inside = True
        if inside and s_prev < hi <= s:
            windows[-1][1] = _crossing_time(t_prev, s_prev, v_prev, t, s, v, hi)
            inside = False
        t_prev, s_prev, v_prev = t, s, v
    if inside:
        windows[-1][1] = rollout[-1][0]
    e0, e1 = zone.ego_interval
    return [
        SpatioTemporalConstraint(
            max(t_in - cfg.t_safe, t_clip), t_out + cfg.t_safe, e0 - cfg.d_safe, e1 + cfg.d_safe
        )
        for t_in, t_out in windows
        if t_out + cfg.t_safe > max(t_in - cfg.t_safe, t_clip)
    ]


# --------------------------------------------------------------------------
# loading / serialization
# --------------------------------------------------------------------------

_PLANNER_KEYS = {
    "dt", "tau", "actions", "da_max", "a_min", "a_max", "v_cap", "v_des",
    "a_lat_max", "l_r", "replan_hz", "t_safe", "d_safe", "key_s_res", "key_v_res",
}
_IDM_KEYS = {"a", "b", "delta", "T", "s0", "v_des"}
_WEIGHT_KEYS = {"f", "v", "jerk", "inter"}


def _num(value: Any, locus: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"expected a number, got {value!r}", locus, kind="schema")
    out = float(value)
    if not math.isfinite(out):
        raise ScenarioError("value must be finite", locus, kind="schema")
    return out


def _interval(value: Any, locus: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError("expected [start, end]", locus, kind="schema")
    lo, hi = _num(value[0], f"{locus}[0]"), _num(value[1], f"{locus}[1]")
    if hi <= lo:
        raise ScenarioError("interval end must exceed start", locus)
    return lo, hi


def _section(doc: dict, key: str, allowed: set[str], locus: str) -> dict[str, float]:
    raw = doc.get(key) or {}
    if not isinstance(raw, dict):
        raise ScenarioError("expected a mapping", locus, kind="schema")
    unknown = set(raw) - allowed
    if unknown:
        raise ScenarioError(f"unknown keys {sorted(unknown)}", locus, kind="schema")
    return raw


def _build_planner(raw: dict) -> PlannerConfig:
    kw: dict[str, Any] = {}
    for k, v in raw.items():
        loc = f"planner.{k}"
        if k == "actions":
            if not isinstance(v, (list, tuple)) or not v:
                raise ScenarioError("action set must be a non-empty list", loc, kind="schema")
            kw[k] = tuple(sorted(_num(a, f"{loc}[{i}]") for i, a in enumerate(v)))
        elif k in ("tau", "l_r"):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ScenarioError("expected an integer", loc, kind="schema")
            kw[k] = v
        else:
            kw[k] = _num(v, loc)
    cfg = PlannerConfig(**kw)
    if cfg.dt <= 0:
        raise ScenarioError("dt must be positive", "planner.dt")
    if cfg.tau < 2:
        raise ScenarioError("tau must be at least 2", "planner.tau")
    if cfg.da_max <= 0:
        raise ScenarioError("da_max must be positive", "planner.da_max")
    if cfg.l_r < 1:
        raise ScenarioError("l_r must be at least 1", "planner.l_r")
    if cfg.a_min >= cfg.a_max:
        raise ScenarioError("a_min must be below a_max", "planner.a_min")
    for i, a in enumerate(cfg.actions):
        if not cfg.a_min <= a <= cfg.a_max:
            raise ScenarioError(f"action {a} outside [a_min, a_max]", f"planner.actions[{i}]")
    if cfg.replan_hz <= 0 or cfg.v_cap <= 0 or cfg.a_lat_max <= 0:
        raise ScenarioError("replan_hz, v_cap and a_lat_max must be positive", "planner")
    if cfg.t_safe < 0 or cfg.d_safe < 0:
        raise ScenarioError("safety margins must be non-negative", "planner")
    return cfg


def _build_idm(raw: dict) -> IdmParams:
    p = IdmParams(**{k: _num(v, f"idm.{k}") for k, v in raw.items()})
    for key in ("a", "b", "T", "s0", "v_des"):
        if getattr(p, key) <= 0:
            raise ScenarioError("must be positive", f"idm.{key}")
    if p.delta < 1:
        raise ScenarioError("delta must be at least 1", "idm.delta")
    return p


def scenario_from_dict(doc: Any) -> ScenarioConfig:
    """Validate a parsed scenario mapping and build the immutable config."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping", kind="schema")
    known = {"name", "paths", "vehicles", "zones", "weights", "planner", "idm", "goal_s", "duration"}
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"unknown top-level keys {sorted(unknown)}", kind="schema")

    raw_paths = doc.get("paths")
    if not isinstance(raw_paths, list) or not raw_paths:
        raise ScenarioError("at least one path is required", "paths", kind="schema")
    paths: dict[str, PathProfile] = {}
    for i, p in enumerate(raw_paths):
        if not isinstance(p, dict) or "id" not in p or "samples" not in p:
            raise ScenarioError("path needs 'id' and 'samples'", f"paths[{i}]", kind="schema")
        pid = str(p["id"])
        if pid in paths:
            raise ScenarioError(f"duplicate path id {pid!r}", f"paths[{i}].id")
        if not isinstance(p["samples"], list):
            raise ScenarioError("samples must be a list", f"paths[{i}].samples", kind="schema")
        for j, row in enumerate(p["samples"]):
            if not isinstance(row, list):
                raise ScenarioError("sample must be a list", f"paths[{i}].samples[{j}]", kind="schema")
            for c, x in enumerate(row):
                _num(x, f"paths[{i}].samples[{j}][{c}]")
        paths[pid] = PathProfile(pid, p["samples"])

    raw_vehicles = doc.get("vehicles")
    if not isinstance(raw_vehicles, list) or not raw_vehicles:
        raise ScenarioError("at least one vehicle is required", "vehicles", kind="schema")
    vehicles = []
    for i, v in enumerate(raw_vehicles):
        loc = f"vehicles[{i}]"
        if not isinstance(v, dict):
            raise ScenarioError("expected a mapping", loc, kind="schema")
        for key in ("id", "role", "path", "s", "v"):
            if key not in v:
                raise ScenarioError(f"missing '{key}'", loc, kind="schema")
        role = v["role"]
        if role not in ("ego", "other"):
            raise ScenarioError(f"role must be 'ego' or 'other', got {role!r}", f"{loc}.role")
        path = str(v["path"])
        if path not in paths:
            raise ScenarioError(f"unknown path {path!r}", f"{loc}.path")
        speed = _num(v["v"], f"{loc}.v")
        if speed < 0:
            raise ScenarioError("initial speed must be non-negative", f"{loc}.v")
        model = v.get("sim_model", "cv")
        if model != "cv":
            raise ScenarioError(f"unsupported sim_model {model!r}", f"{loc}.sim_model")
        vehicles.append(VehicleSpec(
            id=str(v["id"]), role=role, path=path, s=_num(v["s"], f"{loc}.s"), v=speed,
            a=_num(v.get("a", 0.0), f"{loc}.a"), sim_model=model,
        ))
    ids = [v.id for v in vehicles]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ScenarioError(f"duplicate vehicle ids {dupes}", "vehicles")
    egos = [v.id for v in vehicles if v.role == "ego"]
    if len(egos) != 1:
        named = ", ".join(repr(e) for e in egos) or "none"
        raise ScenarioError(f"exactly one ego vehicle required, found {len(egos)}: {named}", "vehicles")

    zones = []
    for i, z in enumerate(doc.get("zones") or []):
        loc = f"zones[{i}]"
        if not isinstance(z, dict):
            raise ScenarioError("expected a mapping", loc, kind="schema")
        kind = z.get("kind")
        if kind not in ("merging", "crossing"):
            raise ScenarioError(f"kind must be 'merging' or 'crossing', got {kind!r}", f"{loc}.kind")
        other = str(z.get("other_id"))
        if other not in ids or other in egos:
            raise ScenarioError(f"unknown other vehicle id {other!r}", f"{loc}.other_id")
        align = None
        if kind == "merging":
            if "merge_align" not in z:
                raise ScenarioError("merging zone needs merge_align", loc)
            raw = z["merge_align"]
            if not isinstance(raw, (list, tuple)) or len(raw) != 2:
                raise ScenarioError("expected [s_merge_ego, s_merge_other]", f"{loc}.merge_align", kind="schema")
            align = (_num(raw[0], f"{loc}.merge_align[0]"), _num(raw[1], f"{loc}.merge_align[1]"))
        zones.append(ConflictZone(
            kind=kind, other_id=other,
            ego_interval=_interval(z.get("ego_interval"), f"{loc}.ego_interval"),
            other_interval=_interval(z.get("other_interval"), f"{loc}.other_interval"),
            merge_align=align,
        ))
    if len({z.other_id for z in zones}) != len(zones):
        raise ScenarioError("at most one zone per other vehicle", "zones")

    weights_raw = _section(doc, "weights", _WEIGHT_KEYS, "weights")
    weights = CostWeights(**{k: _num(v, f"weights.{k}") for k, v in weights_raw.items()})
    for k in _WEIGHT_KEYS:
        if getattr(weights, k) < 0:
            raise ScenarioError("weights must be non-negative", f"weights.{k}")

    planner = _build_planner(_section(doc, "planner", _PLANNER_KEYS, "planner"))
    idm = _build_idm(_section(doc, "idm", _IDM_KEYS, "idm"))
    goal = doc.get("goal_s")
    duration = _num(doc.get("duration", 30.0), "duration")
    if duration <= 0:
        raise ScenarioError("duration must be positive", "duration")
    return ScenarioConfig(
        name=str(doc.get("name", "scenario")), paths=paths, vehicles=tuple(vehicles), zones=tuple(zones),
        weights=weights, planner=planner, idm=idm,
        goal_s=None if goal is None else _num(goal, "goal_s"), duration=duration,
    )


def load_scenario(document: str) -> ScenarioConfig:
    """Parse and validate a YAML (or JSON) scenario document."""
    try:
        doc = yaml.safe_load(document)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        locus = f"line {mark.line + 1}, column {mark.column + 1}" if mark else None
        raise ScenarioError(exc.problem or str(exc), locus, kind="parse") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(str(exc), kind="parse") from exc
    return scenario_from_dict(doc)


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    """Canonical mapping form; ``scenario_from_dict`` inverts it exactly."""
    out: dict[str, Any] = {
        "name": cfg.name,
        "paths": [{"id": p.id, "samples": p.samples()} for p in cfg.paths.values()],
        "vehicles": [
            {"id": v.id, "role": v.role, "path": v.path, "s": v.s, "v": v.v, "a": v.a, "sim_model": v.sim_model}
            for v in cfg.vehicles
        ],
        "zones": [],
        "weights": {k: getattr(cfg.weights, k) for k in ("f", "v", "jerk", "inter")},
        "planner": {
            k: (list(getattr(cfg.planner, k)) if k == "actions" else getattr(cfg.planner, k))
            for k in PlannerConfig.__dataclass_fields__
        },
        "idm": {k: getattr(cfg.idm, k) for k in IdmParams.__dataclass_fields__},
        "duration": cfg.duration,
    }
    for z in cfg.zones:
        entry: dict[str, Any] = {
            "kind": z.kind, "other_id": z.other_id,
            "ego_interval": list(z.ego_interval), "other_interval": list(z.other_interval),
        }
        if z.merge_align is not None:
            entry["merge_align"] = list(z.merge_align)
        out["zones"].append(entry)
    if cfg.goal_s is not None:
        out["goal_s"] = cfg.goal_s
    return out


def serialize(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False)
