"""Cousin trajectory generation: expert interpolation, behavior-templated
extension, neighbor densification, and action-distribution statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import daa
from .geometry import Pose2, normalize_angle
from .scenario import (
    MapModel,
    Scenario,
    Trajectory,
    TrajectorySample,
    resample,
)

EXTENSION_KINDS = ("LaneChangeLeft", "LaneChangeRight", "LaneShift", "SharpTurn")
ACTION_CLASSES = ("Straight", "LeftTurn", "RightTurn", "LaneChange", "UTurn")


class ExtensionFailed(Exception):
    """The templated maneuver is impossible here or failed its checks."""

    def __init__(self, reason: str, report: daa.FeasibilityReport | None = None):
        self.reason = reason
        self.report = report
        super().__init__(reason)


@dataclass(frozen=True)
class InterpolationConfig:
    """m points inserted between each pair of consecutive samples."""

    m: int = 1

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("m must be >= 1")


@dataclass(frozen=True)
class ExtensionSpec:
    kind: str
    window: tuple[float, float]
    offset: float = 0.0  # LaneShift: signed lateral offset, positive left
    radius: float = 0.0  # SharpTurn: turning radius
    turn_direction: str = "left"  # SharpTurn only

    def __post_init__(self) -> None:
        if self.kind not in EXTENSION_KINDS:
            raise ValueError(f"unknown extension kind {self.kind!r}")
        t0, t1 = self.window
        if not 0.0 <= t0 < t1:
            raise ValueError("window must satisfy 0 <= t_start < t_end")
        if self.kind == "SharpTurn" and self.radius <= 0.0:
            raise ValueError("SharpTurn needs a positive radius")
        if self.turn_direction not in ("left", "right"):
            raise ValueError("turn_direction must be 'left' or 'right'")


def interpolate(traj: Trajectory, cfg: InterpolationConfig) -> Trajectory:
    """Insert m linearly interpolated points between consecutive samples.

    Original samples are preserved bitwise; positions and speed interpolate
    linearly, headings along the shortest arc.
    """
    out: list[TrajectorySample] = []
    ss = traj.samples
    for i in range(len(ss) - 1):
        a, b = ss[i], ss[i + 1]
        out.append(a)
        dt_ins = (b.t - a.t) / (cfg.m + 1)
        for k in range(1, cfg.m + 1):
            t = a.t + k * dt_ins
            w = (t - a.t) / (b.t - a.t)
            theta = normalize_angle(a.pose.theta + w * normalize_angle(b.pose.theta - a.pose.theta))
            out.append(
                TrajectorySample(
                    t,
                    Pose2(a.pose.x + w * (b.pose.x - a.pose.x), a.pose.y + w * (b.pose.y - a.pose.y), theta),
                    a.v + w * (b.v - a.v),
                )
            )
    out.append(ss[-1])
    return Trajectory(tuple(out))


def adjust_neighbors(s: Scenario, cfg: InterpolationConfig) -> Scenario:
    """Densify every agent's trajectory with the same interpolation scheme.

    Samples at the original timestamps are untouched, so relative BEV offsets
    between agents at those times are preserved exactly.
    """
    return replace(
        s,
        ego=replace(s.ego, trajectory=interpolate(s.ego.trajectory, cfg)),
        others=tuple(replace(a, trajectory=interpolate(a.trajectory, cfg)) for a in s.others),
    )


def _left_normal(theta: float) -> np.ndarray:
    return np.array([-math.sin(theta), math.cos(theta)])


def extend(s: Scenario, spec: ExtensionSpec, d_min: float = 1.0) -> Trajectory:
    """New ego trajectory: the expert outside the maneuver window, the
    templated maneuver inside (its terminal lateral state persists after the
    window). The candidate must pass the same checks as the adversary
    pipeline (behavior predicate skipped) or ExtensionFailed is raised.
    """
    t0, t1 = spec.window
    if t1 > s.horizon:
        raise ExtensionFailed("window extends past the scenario horizon")
    grid = s.grid()
    expert = resample(s.ego.trajectory, s.dt, s.horizon)

    if spec.kind == "LaneShift" and spec.offset == 0.0:
        return expert

    if spec.kind in ("LaneChangeLeft", "LaneChangeRight"):
        lane = daa.ego_lane(s)
        if lane is None:
            raise ExtensionFailed("scenario has no ego lane")
        neighbor_id = lane.left_neighbor if spec.kind == "LaneChangeLeft" else lane.right_neighbor
        if neighbor_id is None:
            side = "left" if spec.kind == "LaneChangeLeft" else "right"
            raise ExtensionFailed(f"ego lane has no {side} neighbor")
        target_line = s.map.lane_by_id(neighbor_id).centerline
        positions = daa.eased_blend_positions(grid, expert.positions, target_line, t0, t1 - t0)
        candidate = _splice(expert, grid, positions, t0)

    elif spec.kind == "LaneShift":
        base = expert.positions
        positions = np.array(base)
        for k, t in enumerate(grid):
            e = _ease(t, t0, t1)
            if e:
                positions[k] = base[k] + e * spec.offset * _left_normal(expert.samples[k].pose.theta)
        candidate = _splice(expert, grid, positions, t0)

    else:  # SharpTurn
        sign = 1.0 if spec.turn_direction == "left" else -1.0
        kappa = sign / spec.radius
        out: list[TrajectorySample] = []
        for k, t in enumerate(grid):
            if t < t0 or k == 0:
                out.append(expert.samples[k])
                continue
            # advance from the previous output state at the expert's speed
            prev = out[-1]
            dt_k = grid[k] - grid[k - 1]
            x = prev.pose.x + prev.v * dt_k * math.cos(prev.pose.theta)
            y = prev.pose.y + prev.v * dt_k * math.sin(prev.pose.theta)
            dtheta = kappa * prev.v * dt_k if t <= t1 else 0.0
            pose = Pose2(x, y, normalize_angle(prev.pose.theta + dtheta))
            out.append(TrajectorySample(t, pose, expert.samples[k].v))
        candidate = Trajectory(tuple(out))

    report = daa.run_feasibility_checks(s, candidate, s.ego.id, d_min)
    if not report.feasible:
        raise ExtensionFailed("cousin trajectory failed the feasibility checks", report=report)
    return candidate


def _ease(t: float, t0: float, t1: float) -> float:
    from .geometry import quintic_ease

    return quintic_ease((t - t0) / (t1 - t0))


def _splice(expert: Trajectory, grid: Sequence[float], positions: np.ndarray, t0: float) -> Trajectory:
    """Expert samples verbatim before the window start, recomputed
    finite-difference headings/speeds from there on."""
    moved = daa.trajectory_from_positions(
        grid, positions, fallback_heading=expert.samples[0].pose.theta
    )
    out = [expert.samples[k] if grid[k] < t0 else moved.samples[k] for k in range(len(grid))]
    return Trajectory(tuple(out))


# ---------------------------------------------------------------------------
# action classification (Fig.-6-style statistics)


@dataclass(frozen=True)
class ClassifierConfig:
    straight_heading_max: float = 0.1
    turn_min: float = math.pi / 4
    uturn_min: float = 3 * math.pi / 4
    straight_offset_frac: float = 0.5


def net_heading_change(traj: Trajectory) -> float:
    """Unwrapped cumulative heading change over the trajectory."""
    total = 0.0
    for a, b in zip(traj.samples, traj.samples[1:]):
        total += normalize_angle(b.pose.theta - a.pose.theta)
    return total


def classify_action(traj: Trajectory, map_model: MapModel, cfg: ClassifierConfig = ClassifierConfig()) -> str:
    """One of Straight / LeftTurn / RightTurn / LaneChange / UTurn."""
    net = net_heading_change(traj)
    if abs(net) > cfg.uturn_min:
        return "UTurn"
    if abs(net) >= cfg.turn_min:
        return "LeftTurn" if net > 0 else "RightTurn"
    first = traj.samples[0].pose
    last = traj.samples[-1].pose
    lane_start = map_model.nearest_lane((first.x, first.y))
    lane_end = map_model.nearest_lane((last.x, last.y))
    if lane_start is not None and lane_end is not None and lane_start.id != lane_end.id:
        return "LaneChange"
    return "Straight"


@dataclass(frozen=True)
class ActionHistogram:
    counts: dict = field(default_factory=lambda: {cls: 0 for cls in ACTION_CLASSES})

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def non_straight(self) -> int:
        return self.total - self.counts.get("Straight", 0)

    def __add__(self, other: "ActionHistogram") -> "ActionHistogram":
        return ActionHistogram({cls: self.counts[cls] + other.counts[cls] for cls in ACTION_CLASSES})

    def __str__(self) -> str:
        cells = "  ".join(f"{cls}:{self.counts[cls]}" for cls in ACTION_CLASSES)
        return f"{cells}  total:{self.total}"


def dataset_stats(scenarios: Sequence[Scenario], cfg: ClassifierConfig = ClassifierConfig()) -> ActionHistogram:
    counts = {cls: 0 for cls in ACTION_CLASSES}
    for s in scenarios:
        counts[classify_action(s.ego.trajectory, s.map, cfg)] += 1
    return ActionHistogram(counts)


def with_provenance(s: Scenario, new_id: str, transform: str, params: dict) -> Scenario:
    """Tag a derived scenario with its source and transform."""
    from .scenario import Provenance

    return replace(s, id=new_id, provenance=Provenance(source_id=s.id, transform=transform, params=params))
