"""Deterministic closed-loop rollout engine.

One clip: the policy drives the ego through the bicycle model while every
other agent replays its (possibly adversary-injected) trajectory; collisions
and expert-deviation events are logged against the shared time grid. Results
are bitwise reproducible for identical (scenario, policy, thresholds, seed),
independent of batch worker count.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from . import daa
from .geometry import OrientedBox, Polygon, Pose2, boxes_collide, normalize_angle
from .kinematics import (
    AgentState,
    ControlInput,
    EnvelopeViolation,
    KinematicParams,
    clamp_speed,
    clamp_steering,
    fit_control,
    step,
)
from .scenario import (
    Agent,
    GridMismatch,
    Lane,
    Scenario,
    Trajectory,
    canonical_json,
    resample,
)

DEFAULT_OBSERVATION_RADIUS = 60.0

EVENT_KINDS = ("DYNAMIC_COLLISION", "STATIC_COLLISION", "POSITION_DEVIATION", "HEADING_DEVIATION")


@dataclass(frozen=True)
class DeviationThresholds:
    position: float = 2.0
    heading: float = 0.52

    def __post_init__(self) -> None:
        if self.position <= 0.0 or self.heading <= 0.0:
            raise ValueError("deviation thresholds must be positive")


@dataclass(frozen=True)
class ObservedAgent:
    id: str
    category: str
    pose: Pose2
    v: float
    half_length: float
    half_width: float


@dataclass(frozen=True)
class Observation:
    """Structured BEV state handed to the policy at each step."""

    ego: AgentState
    others: tuple[ObservedAgent, ...]  # sorted by id, within the radius
    lanes: tuple[Lane, ...]
    drivable: tuple[Polygon, ...]
    t: float


class Policy(Protocol):
    def act(self, obs: Observation, rng_seed: int) -> ControlInput: ...


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    detail: dict


@dataclass(frozen=True)
class ClipResult:
    scenario_id: str
    states: tuple[AgentState, ...]
    events: tuple[Event, ...]
    completed: bool
    edited: bool = False
    failure: str | None = None

    def has_event(self, kind: str) -> bool:
        return any(e.kind == kind for e in self.events)


def derive_seed(batch_seed: int, *parts: str) -> int:
    """Stable per-clip seed; batch order cannot change outcomes."""
    digest = hashlib.sha256(":".join([str(batch_seed), *parts]).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _bind(policy: Any, s: Scenario) -> Any:
    make = getattr(policy, "for_scenario", None)
    return make(s) if make is not None else policy


def build_observation(
    s: Scenario,
    ego_state: AgentState,
    others: dict[str, Trajectory],
    t: float,
    radius: float,
) -> Observation:
    ex, ey = ego_state.pose.x, ego_state.pose.y
    seen = []
    for aid in sorted(others):
        agent = s.agent_by_id(aid)
        smp = others[aid].sample_at(t)
        if math.hypot(smp.pose.x - ex, smp.pose.y - ey) <= radius:
            seen.append(
                ObservedAgent(aid, agent.category, smp.pose, smp.v, agent.half_length, agent.half_width)
            )
    lanes = tuple(
        lane for lane in s.map.lanes if abs(lane.centerline.project((ex, ey))[1]) <= radius
    )
    drivable = tuple(
        poly
        for poly in s.map.drivable
        if poly.contains((ex, ey)) or np.min(np.linalg.norm(poly.vertices - np.array([ex, ey]), axis=1)) <= radius
    )
    return Observation(ego=ego_state, others=seen, lanes=lanes, drivable=drivable, t=t)


def _footprint(agent: Agent, pose: Pose2) -> OrientedBox:
    return OrientedBox(pose, agent.half_length, agent.half_width)


def run_clip(
    s: Scenario,
    policy: Policy,
    adversary: tuple[str, Trajectory] | None = None,
    thresholds: DeviationThresholds = DeviationThresholds(),
    seed: int = 0,
    obs_radius: float = DEFAULT_OBSERVATION_RADIUS,
) -> ClipResult:
    """Roll one scenario closed-loop and log its events.

    The clip ends early (completed=False) at the first collision, on an
    out-of-envelope policy command, or on a policy exception; deviation
    events are logged without terminating.
    """
    grid = s.grid()
    others: dict[str, Trajectory] = {}
    for agent in s.others:
        others[agent.id] = resample(agent.trajectory, s.dt, s.horizon)
    if adversary is not None:
        adv_id, adv_traj = adversary
        if adv_id not in others:
            raise KeyError(f"adversary agent '{adv_id}' not in scenario")
        if not adv_traj.on_grid(grid):
            raise GridMismatch("adversary trajectory is not on the scenario grid")
        others[adv_id] = adv_traj

    expert = resample(s.ego.trajectory, s.dt, s.horizon)
    params = s.ego.effective_kinematics()
    assert params is not None  # ego is a vehicle by scenario validation
    bound = _bind(policy, s)

    state = AgentState(pose=expert.samples[0].pose, v=expert.samples[0].v, delta=0.0, t=grid[0])
    states = [state]
    events: list[Event] = []
    completed = True
    failure = None

    for k in range(len(grid) - 1):
        obs = build_observation(s, state, others, grid[k], obs_radius)
        try:
            u = bound.act(obs, seed)
        except Exception as e:  # policy crashes never take the harness down
            failure = f"policy_error: {e!r}"
            completed = False
            break
        try:
            state = step(state, u, grid[k + 1] - grid[k], params)
        except EnvelopeViolation as e:
            failure = f"envelope_violation: {e}"
            completed = False
            break
        t1 = grid[k + 1]
        state = replace(state, t=t1)  # pin to the grid stamp, no dt accumulation dust
        states.append(state)

        ego_box = _footprint(s.ego, state.pose)
        dynamic_hit = None
        static_hit = None
        for aid in sorted(others):
            agent = s.agent_by_id(aid)
            smp = others[aid].sample_at(t1)
            if boxes_collide(ego_box, _footprint(agent, smp.pose)):
                hit = {
                    "agent": aid,
                    "x": smp.pose.x,
                    "y": smp.pose.y,
                    "theta": smp.pose.theta,
                    "half_length": agent.half_length,
                    "half_width": agent.half_width,
                }
                if agent.category == "STATIC_OBSTACLE":
                    static_hit = static_hit or hit
                else:
                    dynamic_hit = dynamic_hit or hit
        if dynamic_hit is not None:
            events.append(Event(t1, "DYNAMIC_COLLISION", dynamic_hit))
        if static_hit is not None:
            events.append(Event(t1, "STATIC_COLLISION", static_hit))

        ref = expert.sample_at(t1)
        pos_dev = math.hypot(state.pose.x - ref.pose.x, state.pose.y - ref.pose.y)
        if pos_dev > thresholds.position:
            events.append(Event(t1, "POSITION_DEVIATION", {"deviation": pos_dev, "threshold": thresholds.position}))
        head_dev = abs(normalize_angle(state.pose.theta - ref.pose.theta))
        if head_dev > thresholds.heading:
            events.append(Event(t1, "HEADING_DEVIATION", {"deviation": head_dev, "threshold": thresholds.heading}))

        if dynamic_hit is not None or static_hit is not None:
            completed = False
            break

    return ClipResult(
        scenario_id=s.id,
        states=tuple(states),
        events=tuple(events),
        completed=completed,
        edited=adversary is not None,
        failure=failure,
    )


# ---------------------------------------------------------------------------
# batch evaluation


@dataclass(frozen=True)
class DaaConfig:
    """Adversary injection settings for batch runs."""

    behavior: daa.BehaviorSpec
    p_perturb: float = 0.5
    perturb_bounds: tuple[float, float] = (0.8, 1.2)


def _inject_adversary(s: Scenario, cfg: DaaConfig, batch_seed: int) -> tuple[str, Trajectory] | None:
    target = daa.select_target(s, cfg.behavior)
    if target is None:
        return None
    try:
        traj = daa.synthesize_adversary(s, target, cfg.behavior)
    except daa.SynthesisFailed:
        return None
    rng = np.random.default_rng(derive_seed(batch_seed, s.id, "perturb-gate"))
    if rng.random() < cfg.p_perturb:
        traj = daa.perturb(traj, derive_seed(batch_seed, s.id, "perturb"), cfg.perturb_bounds)
    return target, traj


def run_batch(
    scenarios: Sequence[Scenario],
    policy: Policy,
    daa_config: DaaConfig | None = None,
    thresholds: DeviationThresholds = DeviationThresholds(),
    seed: int = 0,
    workers: int = 1,
) -> list[ClipResult]:
    """Evaluate scenarios in input order; results are independent of worker
    count and per-scenario failures never abort the batch."""

    def one(s: Scenario) -> ClipResult:
        try:
            adversary = _inject_adversary(s, daa_config, seed) if daa_config else None
            return run_clip(s, policy, adversary, thresholds, derive_seed(seed, s.id))
        except Exception as e:
            return ClipResult(
                scenario_id=s.id,
                states=(),
                events=(),
                completed=False,
                edited=False,
                failure=f"config_error: {e!r}",
            )

    if workers <= 1:
        return [one(s) for s in scenarios]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, scenarios))


# ---------------------------------------------------------------------------
# built-in policies


class ExpertReplayPolicy:
    """Re-emits controls fitted step-by-step from the ego expert trajectory."""

    def for_scenario(self, s: Scenario) -> "ExpertReplayPolicy._Bound":
        params = s.ego.effective_kinematics()
        assert params is not None
        return self._Bound(resample(s.ego.trajectory, s.dt, s.horizon), params, s.dt)

    class _Bound:
        def __init__(self, expert: Trajectory, params: KinematicParams, dt: float):
            self.expert = expert
            self.params = params
            self.dt = dt

        def act(self, obs: Observation, rng_seed: int) -> ControlInput:
            target = self.expert.sample_at(obs.t + self.dt)
            return fit_control(obs.ego, target.pose, self.dt, self.params)


class ConstantControlPolicy:
    """Holds a fixed (v, delta) command, ramped within the ego envelope."""

    def __init__(self, v: float, delta: float = 0.0):
        self.v = v
        self.delta = delta

    def for_scenario(self, s: Scenario) -> "ConstantControlPolicy._Bound":
        params = s.ego.effective_kinematics()
        assert params is not None
        return self._Bound(self.v, self.delta, params, s.dt)

    class _Bound:
        def __init__(self, v: float, delta: float, params: KinematicParams, dt: float):
            self.v = v
            self.delta = delta
            self.params = params
            self.dt = dt

        def act(self, obs: Observation, rng_seed: int) -> ControlInput:
            return ControlInput(
                v=clamp_speed(self.v, obs.ego.v, self.dt, self.params),
                delta=clamp_steering(self.delta, self.params),
            )


class LaneFollowIdmPolicy:
    """Follows the nearest forward lane centerline with an intelligent-driver
    speed law against the nearest leader in that lane."""

    def __init__(
        self,
        v_desired: float | None = None,
        min_gap: float = 2.0,
        time_headway: float = 1.5,
        accel: float = 1.5,
        comfort_decel: float = 2.0,
        lookahead: float = 8.0,
    ):
        self.v_desired = v_desired
        self.min_gap = min_gap
        self.time_headway = time_headway
        self.accel = accel
        self.comfort_decel = comfort_decel
        self.lookahead = lookahead

    def for_scenario(self, s: Scenario) -> "LaneFollowIdmPolicy._Bound":
        params = s.ego.effective_kinematics()
        assert params is not None
        v0 = self.v_desired if self.v_desired is not None else 0.8 * params.v_max
        return self._Bound(self, v0, params, s.dt, s.ego.half_length)

    class _Bound:
        def __init__(self, cfg: "LaneFollowIdmPolicy", v0: float, params: KinematicParams, dt: float, ego_half_length: float):
            self.cfg = cfg
            self.v0 = v0
            self.params = params
            self.dt = dt
            self.ego_half_length = ego_half_length

        def _idm_accel(self, v: float, gap: float, dv: float) -> float:
            c = self.cfg
            a = min(c.accel, self.params.a_max)
            s_star = c.min_gap + v * c.time_headway + v * dv / (2.0 * math.sqrt(a * c.comfort_decel))
            gap = max(gap, 0.1)
            return a * (1.0 - (v / self.v0) ** 4 - (max(s_star, 0.0) / gap) ** 2)

        def act(self, obs: Observation, rng_seed: int) -> ControlInput:
            p = self.params
            pos = (obs.ego.pose.x, obs.ego.pose.y)
            forward = [ln for ln in obs.lanes if ln.direction == "FORWARD"] or list(obs.lanes)
            if not forward:
                return ControlInput(v=clamp_speed(self.v0, obs.ego.v, self.dt, p), delta=0.0)
            lane = min(forward, key=lambda ln: (abs(ln.centerline.project(pos)[1]), ln.id))
            s_ego, _ = lane.centerline.project(pos)

            # pure-pursuit steering toward a lookahead point on the centerline
            aim = lane.centerline.point_at(s_ego + self.cfg.lookahead)
            alpha = normalize_angle(math.atan2(aim[1] - pos[1], aim[0] - pos[0]) - obs.ego.pose.theta)
            delta = math.atan(2.0 * p.wheelbase * math.sin(alpha) / self.cfg.lookahead)

            # nearest leader in the same lane
            gap = math.inf
            leader_v = 0.0
            for other in obs.others:
                s_o, d_o = lane.centerline.project((other.pose.x, other.pose.y))
                if abs(d_o) > lane.width / 2.0 or s_o <= s_ego:
                    continue
                net = s_o - s_ego - other.half_length - self.ego_half_length
                if net < gap:
                    gap = net
                    leader_v = other.v
            if math.isinf(gap):
                accel = min(self.cfg.accel, p.a_max) * (1.0 - (obs.ego.v / self.v0) ** 4)
            else:
                accel = self._idm_accel(obs.ego.v, gap, obs.ego.v - leader_v)
            v = clamp_speed(obs.ego.v + accel * self.dt, obs.ego.v, self.dt, p)
            return ControlInput(v=v, delta=clamp_steering(delta, p))


def expert_replay() -> ExpertReplayPolicy:
    return ExpertReplayPolicy()


def constant_control(v: float, delta: float = 0.0) -> ConstantControlPolicy:
    return ConstantControlPolicy(v, delta)


def lane_follow_idm(**kwargs) -> LaneFollowIdmPolicy:
    return LaneFollowIdmPolicy(**kwargs)


POLICY_BUILDERS: dict[str, Callable[..., Policy]] = {
    "expert_replay": expert_replay,
    "constant_control": constant_control,
    "lane_follow_idm": lane_follow_idm,
}


# ---------------------------------------------------------------------------
# clip (de)serialization: JSON lines, canonical formatting


def clip_to_dict(clip: ClipResult) -> dict:
    return {
        "scenario_id": clip.scenario_id,
        "states": [
            {"t": st.t, "x": st.pose.x, "y": st.pose.y, "theta": st.pose.theta, "v": st.v, "delta": st.delta}
            for st in clip.states
        ],
        "events": [{"t": e.t, "kind": e.kind, "detail": e.detail} for e in clip.events],
        "completed": clip.completed,
        "edited": clip.edited,
        "failure": clip.failure,
    }


def clip_from_dict(obj: dict) -> ClipResult:
    return ClipResult(
        scenario_id=obj["scenario_id"],
        states=tuple(
            AgentState(Pose2(st["x"], st["y"], st["theta"]), st["v"], st["delta"], st["t"])
            for st in obj["states"]
        ),
        events=tuple(Event(e["t"], e["kind"], e["detail"]) for e in obj["events"]),
        completed=obj["completed"],
        edited=obj.get("edited", False),
        failure=obj.get("failure"),
    )


def write_clips(clips: Sequence[ClipResult], path: str | Path) -> None:
    lines = [canonical_json(clip_to_dict(c)) for c in clips]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_clips(path: str | Path) -> list[ClipResult]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(clip_from_dict(json.loads(line)))
    return out
