"""Piecewise septic execution trajectories.

A degree-7 segment matches position, velocity, acceleration and jerk at both
ends, so chaining fitted segments gives a C3 trajectory. Candidates differ in
which behavior states they interpolate; the cheapest valid one by integrated
squared jerk wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .scenario import SpatioTemporalConstraint

MIN_DURATION = 1e-3
SAMPLE_STEP = 0.05
V_EPS = 1e-6


class DegenerateSegment(ValueError):
    pass


class KnotState(NamedTuple):
    s: float
    v: float
    a: float
    j: float


# M2(1) maps the upper coefficients of a unit-duration segment onto (s, v, a, j);
# its inverse is integral, written out exactly.
_M2_UNIT_INV = np.array([
    [35.0, -15.0, 2.5, -1.0 / 6.0],
    [-84.0, 39.0, -7.0, 0.5],
    [70.0, -34.0, 6.5, -0.5],
    [-20.0, 10.0, -2.0, 1.0 / 6.0],
])
# derivative factors: d^n/dt^n t^i = _FALL[n, i] t^(i-n)
_FALL = np.array([[math.perm(i, n) for i in range(8)] for n in range(4)], dtype=float)
_FALL_ROWS = _FALL.tolist()
_POW = np.arange(8)


@dataclass(frozen=True)
class SepticSegment:
    """Degree-7 polynomial on [t0, t1].

    ``unit`` holds the coefficients in normalised time u = (t - t0) / T, which is
    what evaluation uses; ``coeffs`` are the same polynomial in seconds.
    """

    unit: np.ndarray
    t0: float
    t1: float

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @cached_property
    def coeffs(self) -> np.ndarray:
        return self.unit / self.duration ** np.arange(8)

    def eval(self, t: float) -> KnotState:
        """State and its first three derivatives at absolute time ``t``."""
        if t < self.t0 - 1e-9 or t > self.t1 + 1e-9:
            raise ValueError(f"t={t} outside segment [{self.t0}, {self.t1}]")
        T = self.duration
        u = (t - self.t0) / T
        d = self.unit.tolist()
        out = []
        for n in range(4):
            acc = 0.0
            fall = _FALL_ROWS[n]
            for i in range(7, n - 1, -1):
                acc = acc * u + d[i] * fall[i]
            out.append(acc / T ** n)
        return KnotState(*out)

    def eval_many(self, t: np.ndarray) -> np.ndarray:
        """Array of shape (4, len(t)) with s, v, a, jerk."""
        T = self.duration
        u = (np.asarray(t, dtype=float) - self.t0) / T
        powers = u[None, :] ** _POW[:, None]  # (8, n), entries in [0, 1] on the segment
        return (self._deriv_matrix @ powers) / (T ** _POW[:4])[:, None]

    @cached_property
    def _deriv_matrix(self) -> np.ndarray:
        # row n maps u-powers onto the n-th derivative (before the 1/T^n scaling)
        m = np.zeros((4, 8))
        for n in range(4):
            m[n, : 8 - n] = self.unit[n:] * _FALL[n, n:]
        return m

    def jerk_poly(self) -> np.ndarray:
        return self.coeffs[3:] * _FALL[3, 3:]

    @cached_property
    def comfort(self) -> float:
        """Integrated squared jerk over the whole segment."""
        return segment_comfort(self)

    def sample(self, step: float = SAMPLE_STEP) -> tuple[np.ndarray, np.ndarray]:
        """Times from t0 in ``step`` increments plus t1, and the states there."""
        cached = self.__dict__.get("_sampled")
        if cached is not None and cached[0] == step:
            return cached[1], cached[2]
        t = np.append(np.arange(self.t0, self.t1, step), self.t1)
        x = self.eval_many(t)
        self.__dict__["_sampled"] = (step, t, x)
        return t, x


def fit_septic(x0: KnotState, xf: KnotState, duration: float, t0: float = 0.0) -> SepticSegment:
    """Septic segment from ``x0`` to ``xf`` over ``duration`` seconds.

    The lower four coefficients come straight from the start state; the upper
    four solve the boundary residual. Both are computed in normalised time,
    which keeps the solve well conditioned for short and long segments alike.
    """
    if duration <= 0.0:
        raise DegenerateSegment(f"duration must be positive, got {duration}")
    if duration < MIN_DURATION:
        raise DegenerateSegment(f"duration {duration} below {MIN_DURATION} s")
    T = duration
    d_low = np.array([x0.s, x0.v * T, 0.5 * x0.a * T * T, x0.j * T ** 3 / 6.0])
    # M1(1) d_low, the cubic part's contribution at u = 1
    pred = np.array([
        d_low[0] + d_low[1] + d_low[2] + d_low[3],
        d_low[1] + 2.0 * d_low[2] + 3.0 * d_low[3],
        2.0 * d_low[2] + 6.0 * d_low[3],
        6.0 * d_low[3],
    ])
    target = np.array([xf.s, xf.v * T, xf.a * T * T, xf.j * T ** 3])
    d_high = _M2_UNIT_INV @ (target - pred)
    return SepticSegment(np.concatenate([d_low, d_high]), t0, t0 + T)


@dataclass
class ExecutionTrajectory:
    segments: list[SepticSegment]
    splits: tuple[int, ...] = ()
    fallback: bool = False
    emergency: bool = False
    source: str = ""
    cost: float = field(default=math.nan)

    def __post_init__(self):
        if math.isnan(self.cost):
            self.cost = comfort_cost(self)

    @property
    def t_start(self) -> float:
        return self.segments[0].t0

    @property
    def t_end(self) -> float:
        return self.segments[-1].t1

    def segment_at(self, t: float) -> SepticSegment:
        for seg in self.segments:
            if t <= seg.t1:
                return seg
        return self.segments[-1]

    def eval(self, t: float) -> KnotState:
        t = min(max(t, self.t_start), self.t_end)
        return self.segment_at(t).eval(t)

    def sample(self, step: float = SAMPLE_STEP) -> tuple[np.ndarray, np.ndarray]:
        """Sample times and states (4, n) at ``step`` plus every segment end."""
        ts, xs = zip(*(seg.sample(step) for seg in self.segments))
        return np.concatenate(ts), np.concatenate(xs, axis=1)

    def knots(self) -> list[tuple[float, KnotState]]:
        out = [(self.segments[0].t0, self.segments[0].eval(self.segments[0].t0))]
        out += [(seg.t1, seg.eval(seg.t1)) for seg in self.segments]
        return out

    def to_dict(self) -> dict:
        return {
            "splits": list(self.splits),
            "fallback": self.fallback,
            "emergency": self.emergency,
            "source": self.source,
            "cost": self.cost,
            "segments": [{"t0": s.t0, "t1": s.t1, "coeffs": s.coeffs.tolist(), "unit": s.unit.tolist()} for s in self.segments],
        }


def segment_comfort(seg: SepticSegment, t_from: float | None = None, t_to: float | None = None) -> float:
    """Exact integral of squared jerk over (part of) one segment."""
    if t_from is None and (t_to is None or t_to >= seg.t1) and "comfort" in seg.__dict__:
        return seg.comfort
    lo = 0.0 if t_from is None else max(t_from - seg.t0, 0.0)
    hi = seg.duration if t_to is None else min(t_to - seg.t0, seg.duration)
    if hi <= lo:
        return 0.0
    T = seg.duration
    # jerk(t) = p(u) / T^3 with u = (t - t0) / T, so the integral is (1/T^5) int p^2 du
    p = (seg.unit[3:] * _FALL[3, 3:]).tolist()
    sq = [0.0] * 9
    for i, ci in enumerate(p):
        for k, ck in enumerate(p):
            sq[i + k] += ci * ck
    return (_antideriv(sq, hi / T) - _antideriv(sq, lo / T)) / T ** 5


def _antideriv(c: list[float], x: float) -> float:
    acc = 0.0
    for n in range(len(c) - 1, -1, -1):
        acc = acc * x + c[n] / (n + 1)
    return acc * x


def comfort_cost(traj: ExecutionTrajectory, t_to: float | None = None) -> float:
    """Integrated squared jerk, optionally truncated at ``t_to``."""
    if t_to is None:
        return math.fsum(s.comfort for s in traj.segments)
    return math.fsum(s.comfort if t_to >= s.t1 else segment_comfort(s, None, t_to) for s in traj.segments)


# --------------------------------------------------------------------------
# candidates
# --------------------------------------------------------------------------


def candidate_splits(n: int, l_r: int = 1, start: int = 0) -> list[tuple[int, ...]]:
    """Knot index sequences interpolated by each candidate.

    From ``start`` a single polynomial reaches knot ``k`` (every ``k`` up to the
    last knot); the remainder is interpolated directly or, with ``l_r > 1``,
    split again from ``k``. Duplicates are removed, order is by first split.
    """
    last = n - 1
    if n < 2:
        return []
    out: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    for k in range(start + 1, last + 1):
        if l_r <= 1 or k == last:
            tails = [tuple(range(k, last + 1))]
        else:
            tails = candidate_splits(n, l_r - 1, k)
        for tail in tails:
            cand = (start,) + tail
            if cand not in seen:
                seen.add(cand)
                out.append(cand)
    return out


def generate_candidates(
    knots: Sequence[tuple[float, KnotState]], l_r: int = 1, source: str = ""
) -> list[ExecutionTrajectory]:
    """Septic chains through the timed ``knots`` (knot 0 is the start state)."""
    cache: dict[tuple[int, int], SepticSegment] = {}

    def seg(i: int, j: int) -> SepticSegment:
        out = cache.get((i, j))
        if out is None:
            (ti, xi), (tj, xj) = knots[i], knots[j]
            out = cache[(i, j)] = fit_septic(xi, xj, tj - ti, ti)
        return out

    return [
        ExecutionTrajectory([seg(a, b) for a, b in zip(sp, sp[1:])], splits=sp, source=source)
        for sp in candidate_splits(len(knots), l_r)
    ]


def direct_chain(knots: Sequence[tuple[float, KnotState]], source: str = "") -> ExecutionTrajectory:
    sp = tuple(range(len(knots)))
    return ExecutionTrajectory(
        [fit_septic(knots[i][1], knots[i + 1][1], knots[i + 1][0] - knots[i][0], knots[i][0])
         for i in range(len(knots) - 1)],
        splits=sp, source=source,
    )


# --------------------------------------------------------------------------
# validation and selection
# --------------------------------------------------------------------------


class Verdict(NamedTuple):
    ok: bool
    reason: str = ""
    t: float = math.nan

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class ValidationBounds:
    v_min: float
    v_max: float
    a_min: float
    a_max: float
    constraints: tuple[SpatioTemporalConstraint, ...] = ()
    step: float = SAMPLE_STEP

    @classmethod
    def from_knots(cls, knots: Sequence[tuple[float, KnotState]], a_min: float, a_max: float,
                   constraints: Sequence[SpatioTemporalConstraint] = (), step: float = SAMPLE_STEP):
        vs = [x.v for _, x in knots]
        return cls(min(vs), max(vs), a_min, a_max, tuple(constraints), step)


def _segment_violation(seg: SepticSegment, bounds: ValidationBounds) -> tuple[str, float] | None:
    t, x = seg.sample(bounds.step)
    s, v, a = x[0], x[1], x[2]
    checks = [
        ("negative velocity", v < -V_EPS),
        ("velocity overshoot", v > bounds.v_max + V_EPS),
        ("velocity undershoot", v < bounds.v_min - V_EPS),
        ("acceleration above a_max", a > bounds.a_max + V_EPS),
        ("acceleration below a_min", a < bounds.a_min - V_EPS),
    ]
    for c in bounds.constraints:
        checks.append(("constraint violated", (t >= c.t_start) & (t < c.t_end) & (s >= c.s_start) & (s < c.s_end)))
    first = None
    for reason, mask in checks:
        idx = np.flatnonzero(mask)
        if idx.size and (first is None or t[idx[0]] < first[1]):
            first = (reason, float(t[idx[0]]))
    return first


def validate(traj: ExecutionTrajectory, bounds: ValidationBounds, memo: dict | None = None) -> Verdict:
    """Densely sample the trajectory and report the first violated bound.

    Segments are checked in time order, so the first offending segment holds
    the earliest violation. ``memo`` shares per-segment results between
    candidates built from the same segments.
    """
    for seg in traj.segments:
        if memo is None:
            hit = _segment_violation(seg, bounds)
        else:
            key = id(seg)
            if key not in memo:
                memo[key] = _segment_violation(seg, bounds)
            hit = memo[key]
        if hit is not None:
            return Verdict(False, *hit)
    return Verdict(True)


def select_best(
    candidates: Sequence[ExecutionTrajectory], bounds: ValidationBounds, t_compare: float | None = None
) -> tuple[ExecutionTrajectory, list[Verdict]]:
    """Cheapest valid candidate; falls back to the all-direct chain.

    ``t_compare`` truncates the comfort integral used for ranking so that
    candidate pools with different horizons compare on a common window.
    """
    if not candidates:
        raise ValueError("no candidates")
    memo: dict = {}
    verdicts = [validate(c, bounds, memo) for c in candidates]
    best = None
    best_cost = math.inf
    for cand, ok in zip(candidates, verdicts):
        if not ok:
            continue
        cost = cand.cost if t_compare is None else comfort_cost(cand, t_compare)
        if cost < best_cost:
            best, best_cost = cand, cost
    if best is not None:
        return best, verdicts
    direct = next((c for c in candidates if c.splits == tuple(range(len(c.splits)))), candidates[0])
    direct.fallback = True
    return direct, verdicts
