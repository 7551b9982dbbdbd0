"""Dynamic adversary pipeline: pick an interaction target near the ego,
retarget it onto a behavior-conditioned trajectory, and vet the result.

Synthesis is template-based and deterministic: longitudinal speed-profile
edits (brake/stop/slow kinds) and quintic-eased lateral blends into the ego
lane (cut-in/intrusion kinds). Every synthesized candidate is vetted by the
same feasibility checks exposed publicly, so a returned trajectory always
passes check_feasibility.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import OrientedBox, Polyline, Pose2, boxes_collide, normalize_angle, quintic_ease
from .kinematics import check_trajectory_kinematics
from .scenario import (
    GridMismatch,
    Lane,
    Scenario,
    Trajectory,
    TrajectorySample,
    resample,
)

BEHAVIOR_KINDS = (
    "DynamicCutIn",
    "HardBrake",
    "OppositeLaneIntrusion",
    "ParkingCutIn",
    "BlockedIntersection",
    "HazardAtSideLane",
    "WrongWayVehicle",
    "LaneChangeConflict",
)

# Kinds whose BEV predicate is "crosses into the ego lane ahead of the ego".
_CUT_IN_KINDS = ("DynamicCutIn", "ParkingCutIn", "LaneChangeConflict")
# Kinds whose BEV predicate is "enters the ego lane from elsewhere".
_INTRUSION_KINDS = ("OppositeLaneIntrusion", "WrongWayVehicle")

LANE_RELATIONS = ("SAME", "ADJACENT", "OPPOSITE")

_STOP_EPS = 0.1
_SPEED_EPS = 1e-6


class SynthesisFailed(Exception):
    """Scene geometry (or the downstream checks) make the behavior impossible.

    `report` carries the FeasibilityReport when the candidate was built but
    failed vetting; it is None for purely geometric impossibilities.
    """

    def __init__(self, reason: str, report: "FeasibilityReport | None" = None):
        self.reason = reason
        self.report = report
        super().__init__(reason)


@dataclass(frozen=True)
class DistanceGate:
    """Ego-to-candidate selection window."""

    min_range: float
    max_range: float
    lane_relation: str
    heading_alignment_max: float = math.pi / 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_range < self.max_range:
            raise ValueError("need 0 <= min_range < max_range")
        if self.lane_relation not in LANE_RELATIONS:
            raise ValueError(f"unknown lane relation {self.lane_relation!r}")


@dataclass(frozen=True)
class BehaviorSpec:
    """One interactive behavior from the corner-case catalog."""

    kind: str
    params: dict = field(default_factory=dict)
    d_min: float = 1.0
    selection_gate: DistanceGate = DistanceGate(5.0, 30.0, "ADJACENT")
    partial: bool = False

    def __post_init__(self) -> None:
        if self.kind not in BEHAVIOR_KINDS:
            raise ValueError(f"unknown behavior kind {self.kind!r}")
        if self.d_min <= 0.0:
            raise ValueError("d_min must be positive")
        for key, value in self.params.items():
            if isinstance(value, (int, float)) and key not in ("final_v", "slow_v") and value <= 0.0:
                raise ValueError(f"behavior param {key} must be positive")


@dataclass(frozen=True)
class Violation:
    check: str  # DRIVABLE | CLEARANCE | KINEMATIC | BEHAVIOR
    index: int
    detail: str


@dataclass(frozen=True)
class FeasibilityReport:
    verdict: str  # FEASIBLE | INFEASIBLE
    violations: tuple[Violation, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.verdict == "FEASIBLE"

    def __str__(self) -> str:
        if self.feasible:
            return "FEASIBLE"
        lines = [f"INFEASIBLE ({len(self.violations)} violations)"]
        lines += [f"  [{v.check}] step {v.index}: {v.detail}" for v in self.violations]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# behavior catalog

_DEFAULT_CATALOG_RESOURCE = "behaviors.json"


def _spec_from_dict(obj: dict) -> BehaviorSpec:
    gate = obj["gate"]
    return BehaviorSpec(
        kind=obj["kind"],
        params=dict(obj.get("params", {})),
        d_min=float(obj.get("d_min", 1.0)),
        selection_gate=DistanceGate(
            min_range=float(gate["min_range"]),
            max_range=float(gate["max_range"]),
            lane_relation=gate["lane_relation"],
            heading_alignment_max=float(gate.get("heading_alignment_max", math.pi / 2)),
        ),
        partial=bool(obj.get("partial", False)),
    )


def load_catalog(path: str | Path) -> dict[str, BehaviorSpec]:
    """Behavior catalog file: JSON list of BehaviorSpec records keyed by kind."""
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    catalog = {}
    for obj in records:
        spec = _spec_from_dict(obj)
        catalog[spec.kind] = spec
    return catalog


def default_catalog() -> dict[str, BehaviorSpec]:
    text = resources.files("bevsim").joinpath("data", _DEFAULT_CATALOG_RESOURCE).read_text("utf-8")
    return {spec.kind: spec for spec in map(_spec_from_dict, json.loads(text))}


# ---------------------------------------------------------------------------
# target selection


def _footprint_radius(agent) -> float:
    return math.hypot(agent.half_length, agent.half_width)


def ego_lane(s: Scenario) -> Lane | None:
    """Lane the ego occupies at t=0 (nearest FORWARD centerline)."""
    p0 = s.ego.trajectory.sample_at(0.0).pose
    return s.map.nearest_lane((p0.x, p0.y), direction="FORWARD")


def _lane_relation_ok(s: Scenario, ego: Lane, candidate_pos, relation: str) -> bool:
    lane = s.map.nearest_lane(candidate_pos)
    if lane is None:
        return False
    if relation == "SAME":
        return lane.id == ego.id
    if relation == "ADJACENT":
        return lane.id in (ego.left_neighbor, ego.right_neighbor)
    return lane.direction == "OPPOSITE"


def select_target(s: Scenario, behavior: BehaviorSpec) -> str | None:
    """Nearest vehicle passing the behavior's gate at t=0; None = no candidate.

    Deterministic: ties on distance break by lexicographic agent id, and the
    result does not depend on the order of the scenario's agent list.
    """
    gate = behavior.selection_gate
    lane = ego_lane(s)
    if lane is None:
        return None
    ego_pose = s.ego.trajectory.sample_at(0.0).pose
    best: tuple[float, str] | None = None
    for agent in s.others:
        if not agent.is_vehicle():
            continue
        pose = agent.trajectory.sample_at(0.0).pose
        dist = math.hypot(pose.x - ego_pose.x, pose.y - ego_pose.y)
        if not gate.min_range <= dist <= gate.max_range:
            continue
        if not _lane_relation_ok(s, lane, (pose.x, pose.y), gate.lane_relation):
            continue
        flip = math.pi if gate.lane_relation == "OPPOSITE" else 0.0
        if abs(normalize_angle(pose.theta - ego_pose.theta - flip)) > gate.heading_alignment_max:
            continue
        key = (dist, agent.id)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


# ---------------------------------------------------------------------------
# trajectory construction helpers (shared with the cousin generator)


def trajectory_from_positions(
    times: Sequence[float],
    positions: np.ndarray,
    speeds: Sequence[float] | None = None,
    fallback_heading: float = 0.0,
) -> Trajectory:
    """Trajectory whose headings/speeds follow the finite differences of the
    position sequence; stationary stretches hold the previous heading."""
    n = len(times)
    headings = []
    prev = fallback_heading
    for k in range(n):
        j = min(k, n - 2)
        dx = positions[j + 1, 0] - positions[j, 0]
        dy = positions[j + 1, 1] - positions[j, 1]
        if math.hypot(dx, dy) > 1e-9:
            prev = math.atan2(dy, dx)
        headings.append(prev)
    if speeds is None:
        speeds = []
        for k in range(n):
            j = min(k, n - 2)
            d = math.hypot(positions[j + 1, 0] - positions[j, 0], positions[j + 1, 1] - positions[j, 1])
            speeds.append(d / (times[j + 1] - times[j]))
    return Trajectory(
        tuple(
            TrajectorySample(float(times[k]), Pose2(float(positions[k, 0]), float(positions[k, 1]), headings[k]), float(speeds[k]))
            for k in range(n)
        )
    )


def path_polyline(positions: np.ndarray) -> Polyline | None:
    """Polyline through the positions with duplicate points dropped;
    None when the path has no usable extent."""
    pts = [positions[0]]
    for p in positions[1:]:
        if math.hypot(p[0] - pts[-1][0], p[1] - pts[-1][1]) > 1e-9:
            pts.append(p)
    if len(pts) < 2:
        return None
    return Polyline(pts)


def retime_speed_profile(
    times: Sequence[float], path: Polyline, s0: float, speeds: Sequence[float], fallback_heading: float
) -> Trajectory:
    """Re-run a path under a new speed profile (forward-Euler stations),
    holding the path's end once the profile outruns it."""
    s_k = s0
    positions = []
    headings = []
    for k in range(len(times)):
        positions.append(path.point_at(s_k))
        headings.append(path.heading_at(s_k) if path.length > 0 else fallback_heading)
        if k < len(times) - 1:
            s_k += speeds[k] * (times[k + 1] - times[k])
    return Trajectory(
        tuple(
            TrajectorySample(float(times[k]), Pose2(float(positions[k][0]), float(positions[k][1]), headings[k]), float(speeds[k]))
            for k in range(len(times))
        )
    )


def eased_blend_positions(
    times: Sequence[float],
    base: np.ndarray,
    target_line: Polyline,
    t_start: float,
    duration: float,
) -> np.ndarray:
    """Quintic-eased lateral blend from a base path onto a target centerline.

    At each step the base point is pulled toward its foot point on the target
    line by the ease weight: 0 before t_start, 1 after t_start + duration.
    """
    out = np.array(base, dtype=float)
    for k, t in enumerate(times):
        e = quintic_ease((t - t_start) / duration)
        if e == 0.0:
            continue
        s_foot, _ = target_line.project(base[k])
        foot = target_line.point_at(s_foot)
        out[k] = base[k] + e * (foot - base[k])
    return out


# ---------------------------------------------------------------------------
# feasibility checks


# CLEARANCE is two-part: the center-to-center distance floor (d_min), plus a
# footprint-overlap test so "avoid collisions with other vehicles" holds even
# when d_min alone would permit box intersection. Overlap is only possible
# within the sum of the half-diagonals, which gates the exact test.


def behavior_violations(
    s: Scenario, candidate: Trajectory, owner_id: str, behavior: BehaviorSpec
) -> list[Violation]:
    """Kind-specific BEV predicate over the candidate trajectory."""
    violations: list[Violation] = []
    speeds = [smp.v for smp in candidate.samples]
    times = [smp.t for smp in candidate.samples]
    kind = behavior.kind

    if kind in _CUT_IN_KINDS or kind in _INTRUSION_KINDS:
        lane = ego_lane(s)
        if lane is None:
            return [Violation("BEHAVIOR", 0, "no ego lane to verify the maneuver against")]
        half = lane.width / 2.0
        lateral = [lane.centerline.project((smp.pose.x, smp.pose.y))[1] for smp in candidate.samples]
        if abs(lateral[0]) <= half:
            violations.append(Violation("BEHAVIOR", 0, "target starts inside the ego lane"))
        crossing = next((k for k, d in enumerate(lateral) if abs(d) < half), None)
        if crossing is None:
            violations.append(
                Violation("BEHAVIOR", len(lateral) - 1, "target never enters the ego lane")
            )
        elif kind in _CUT_IN_KINDS:
            ego_traj = resample(s.ego.trajectory, s.dt, s.horizon)
            ego_pose = ego_traj.samples[crossing].pose
            cand_pose = candidate.samples[crossing].pose
            s_ego, _ = lane.centerline.project((ego_pose.x, ego_pose.y))
            s_cand, _ = lane.centerline.project((cand_pose.x, cand_pose.y))
            if s_cand <= s_ego:
                violations.append(
                    Violation("BEHAVIOR", crossing, "target is not ahead of the ego when crossing into its lane")
                )
    elif kind == "HardBrake":
        final_v = float(behavior.params.get("final_v", 0.0))
        decel = float(behavior.params["decel"])
        reach = next((k for k, v in enumerate(speeds) if v <= final_v + _SPEED_EPS), None)
        if reach is None:
            violations.append(Violation("BEHAVIOR", len(speeds) - 1, f"speed never reaches {final_v} m/s"))
        else:
            budget = (speeds[0] - final_v) / decel + 2.0 * s.dt
            if times[reach] > budget:
                violations.append(
                    Violation("BEHAVIOR", reach, f"braking slower than the requested {decel} m/s^2")
                )
    elif kind in ("BlockedIntersection", "HazardAtSideLane"):
        limit = _STOP_EPS if kind == "BlockedIntersection" else float(behavior.params["slow_v"])
        reach = next((k for k, v in enumerate(speeds) if v <= limit + _SPEED_EPS), None)
        if reach is None:
            violations.append(Violation("BEHAVIOR", len(speeds) - 1, f"speed never drops to {limit} m/s"))
        else:
            for k in range(reach, len(speeds)):
                if speeds[k] > limit + _SPEED_EPS:
                    violations.append(Violation("BEHAVIOR", k, "target speeds back up after slowing"))
                    break
    return violations


def run_feasibility_checks(
    s: Scenario,
    candidate: Trajectory,
    owner_id: str,
    d_min: float,
    behavior: BehaviorSpec | None = None,
) -> FeasibilityReport:
    """DRIVABLE, CLEARANCE, KINEMATIC and (when a behavior is given) BEHAVIOR
    checks, all always run; collisions with the ego are explicitly allowed."""
    grid = s.grid()
    if not candidate.on_grid(grid):
        raise GridMismatch("candidate timestamps differ from the scenario grid")
    owner = s.agent_by_id(owner_id)
    violations: list[Violation] = []

    for k, smp in enumerate(candidate.samples):
        if not s.map.contains_point((smp.pose.x, smp.pose.y)):
            violations.append(Violation("DRIVABLE", k, "footprint center leaves the drivable region"))

    cand_xy = candidate.positions
    for agent in s.others:
        if agent.id in (owner_id, s.ego.id):
            continue
        other = resample(agent.trajectory, s.dt, s.horizon)
        dists = np.linalg.norm(cand_xy - other.positions, axis=1)
        bad = np.nonzero(dists < d_min)[0]
        if bad.size:
            k = int(bad[0])
            violations.append(
                Violation("CLEARANCE", k, f"{dists[k]:.3f} m to agent '{agent.id}' < d_min {d_min:.3f} m")
            )
            continue
        reach = _footprint_radius(owner) + _footprint_radius(agent)
        for k in np.nonzero(dists < reach)[0]:
            k = int(k)
            a = OrientedBox(candidate.samples[k].pose, owner.half_length, owner.half_width)
            b = OrientedBox(other.samples[k].pose, agent.half_length, agent.half_width)
            if boxes_collide(a, b):
                violations.append(
                    Violation("CLEARANCE", k, f"footprint overlap with agent '{agent.id}'")
                )
                break

    params = owner.effective_kinematics()
    if params is not None:
        verdict = check_trajectory_kinematics(candidate.txy(), params)
        if not verdict.feasible:
            violations.append(
                Violation("KINEMATIC", verdict.index or 0, f"{verdict.constraint} bound violated")
            )

    if behavior is not None:
        violations.extend(behavior_violations(s, candidate, owner_id, behavior))

    return FeasibilityReport("FEASIBLE" if not violations else "INFEASIBLE", tuple(violations))


def check_feasibility(
    s: Scenario, candidate: Trajectory, owner_id: str, behavior: BehaviorSpec
) -> FeasibilityReport:
    return run_feasibility_checks(s, candidate, owner_id, behavior.d_min, behavior)


# ---------------------------------------------------------------------------
# synthesis


def _speed_ramp(v0: float, target_v: float, rate: float, times: Sequence[float]) -> list[float]:
    if target_v <= v0:
        return [max(target_v, v0 - rate * t) for t in times]
    return [min(target_v, v0 + rate * t) for t in times]


def _first_time_within(ego: Trajectory, other: Trajectory, gap: float) -> int | None:
    for k in range(len(ego)):
        e, o = ego.samples[k].pose, other.samples[k].pose
        if math.hypot(e.x - o.x, e.y - o.y) <= gap:
            return k
    return None


def synthesize_adversary(s: Scenario, target_id: str, behavior: BehaviorSpec) -> Trajectory:
    """Behavior-conditioned replacement trajectory for the target vehicle.

    Deterministic parametric templates; the returned trajectory is on the
    scenario grid and has already passed check_feasibility. Raises
    SynthesisFailed when the scene makes the behavior impossible or the
    candidate fails vetting.
    """
    target = s.agent_by_id(target_id)
    if not target.is_vehicle():
        raise SynthesisFailed(f"agent '{target_id}' is not a vehicle")
    grid = s.grid()
    tgt = resample(target.trajectory, s.dt, s.horizon)
    ego = resample(s.ego.trajectory, s.dt, s.horizon)
    kind = behavior.kind
    p = behavior.params

    if kind in ("HardBrake", "BlockedIntersection", "HazardAtSideLane"):
        v0 = tgt.samples[0].v
        if kind == "HardBrake":
            target_v = float(p.get("final_v", 0.0))
        elif kind == "BlockedIntersection":
            target_v = 0.0
        else:
            target_v = float(p["slow_v"])
        if v0 <= target_v:
            raise SynthesisFailed(f"target already at {v0:.2f} m/s <= goal {target_v:.2f} m/s")
        speeds = _speed_ramp(v0, target_v, float(p["decel"]), grid)
        path = path_polyline(tgt.positions)
        if path is None:
            raise SynthesisFailed("target trajectory has no path to slow down along")
        candidate = retime_speed_profile(grid, path, 0.0, speeds, tgt.samples[0].pose.theta)

    elif kind in _CUT_IN_KINDS or kind in _INTRUSION_KINDS:
        lane = ego_lane(s)
        if lane is None:
            raise SynthesisFailed("scenario has no ego lane to merge into")
        half = lane.width / 2.0
        d0 = lane.centerline.project((tgt.samples[0].pose.x, tgt.samples[0].pose.y))[1]
        if abs(d0) <= half:
            raise SynthesisFailed("target already occupies the ego lane")
        duration = float(p["lateral_duration"])

        if kind == "ParkingCutIn":
            if tgt.samples[0].v > 0.5:
                raise SynthesisFailed("parking cut-in target must start (near-)stationary")
            own_lane = s.map.nearest_lane((tgt.samples[0].pose.x, tgt.samples[0].pose.y))
            if own_lane is None:
                raise SynthesisFailed("parked target is not near any lane")
            s_park, d_park = own_lane.centerline.project((tgt.samples[0].pose.x, tgt.samples[0].pose.y))
            exit_path = own_lane.centerline.offset(d_park)
            # parked until the ego comes within the trigger gap, then ramp up
            k_trig = _first_time_within(ego, tgt, float(p["trigger_gap"]))
            if k_trig is None:
                raise SynthesisFailed("ego never comes within the trigger gap")
            accel = float(p["accel"])
            exit_speed = float(p["exit_speed"])
            t_trig = grid[k_trig]
            speeds = [max(0.0, min(exit_speed, accel * (t - t_trig))) for t in grid]
            base_traj = retime_speed_profile(grid, exit_path, s_park, speeds, tgt.samples[0].pose.theta)
            base = base_traj.positions
            # blend only once the car is rolling; sideways translation at
            # rest would fail the steering check
            k0 = next((k for k, v in enumerate(speeds) if v >= 0.5 * exit_speed), None)
        else:
            base = tgt.positions
            if kind in _INTRUSION_KINDS:
                k0 = 0
            else:
                k0 = _first_time_within(ego, tgt, float(p["trigger_gap"]))
        if k0 is None:
            raise SynthesisFailed("ego never comes within the trigger gap")
        t_start = grid[k0]
        if t_start + duration > s.horizon:
            raise SynthesisFailed("lateral maneuver does not fit before the horizon")

        blended = eased_blend_positions(grid, base, lane.centerline, t_start, duration)
        candidate = trajectory_from_positions(grid, blended, fallback_heading=tgt.samples[0].pose.theta)

        if kind == "DynamicCutIn":
            k_done = min(range(len(grid)), key=lambda k: abs(grid[k] - (t_start + duration)))
            s_cand = lane.centerline.project(tuple(blended[k_done]))[0]
            s_ego = lane.centerline.project((ego.samples[k_done].pose.x, ego.samples[k_done].pose.y))[0]
            lead = s_cand - s_ego
            if lead < float(p.get("target_gap_after", 0.0)):
                raise SynthesisFailed(
                    f"lead after merge {lead:.2f} m < requested gap {p.get('target_gap_after')} m"
                )
    else:
        raise SynthesisFailed(f"no synthesis template for kind {kind!r}")

    report = check_feasibility(s, candidate, target_id, behavior)
    if not report.feasible:
        raise SynthesisFailed("synthesized candidate failed the feasibility checks", report=report)
    return candidate


# ---------------------------------------------------------------------------
# run-time perturbation


def perturb(traj: Trajectory, rng_seed: int, bounds: tuple[float, float] = (0.8, 1.2)) -> Trajectory:
    """Seed-deterministic uniform speed rescale of the time parameterization.

    The traversed path is unchanged; the output keeps the input's timestamps
    (the scenario grid), with positions pulled from the warped time axis.
    """
    lo, hi = bounds
    if not 0.0 < lo <= hi:
        raise ValueError("bounds must satisfy 0 < lo <= hi")
    factor = float(np.random.default_rng(rng_seed).uniform(lo, hi))
    out = []
    for smp in traj.samples:
        src = traj.sample_at(factor * smp.t)
        out.append(TrajectorySample(smp.t, src.pose, factor * src.v))
    return Trajectory(tuple(out))


def plan_ego_avoidance(s: Scenario, d_min: float = 1.0) -> Trajectory | None:
    """Collision-free ego trajectory for an edited scene (imitation stage).

    Tries the expert itself, then the cousin-extension lane changes; returns
    the first candidate passing the feasibility checks, None when all fail.
    """
    from . import ctg  # local import; ctg builds on this module's checks

    expert = resample(s.ego.trajectory, s.dt, s.horizon)
    if run_feasibility_checks(s, expert, s.ego.id, d_min).feasible:
        return expert
    window = (0.1 * s.horizon, 0.7 * s.horizon)
    for kind in ("LaneChangeLeft", "LaneChangeRight"):
        try:
            return ctg.extend(s, ctg.ExtensionSpec(kind=kind, window=window), d_min=d_min)
        except ctg.ExtensionFailed:
            continue
    return None
