"""Kinematic bicycle model: stepping, rollouts, and trajectory envelope checks.

The step integrator moves the vehicle v*dt along its current heading, then
rotates the heading by (v/L)*tan(delta)*dt, so consecutive rollout positions
are always exactly v*dt apart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Pose2, normalize_angle


class EnvelopeViolation(Exception):
    """A control input breaks the vehicle's operational envelope.

    `bound` names the violated constraint: "steering", "speed" or "accel".
    `step_index` is set when raised from a rollout.
    """

    def __init__(self, bound: str, value: float, limit: float, step_index: int | None = None):
        self.bound = bound
        self.value = value
        self.limit = limit
        self.step_index = step_index
        at = "" if step_index is None else f" at step {step_index}"
        super().__init__(f"{bound} bound violated{at}: |{value:.6g}| exceeds {limit:.6g}")


class MalformedTrajectory(Exception):
    """Trajectory unusable for a kinematics check (too short or non-monotone)."""


@dataclass(frozen=True)
class KinematicParams:
    """Per-category operational envelope of the bicycle model."""

    wheelbase: float
    delta_max: float
    v_max: float
    v_min: float = 0.0
    a_max: float = 4.0

    def __post_init__(self) -> None:
        if self.wheelbase <= 0.0:
            raise ValueError("wheelbase must be positive")
        if not 0.0 < self.delta_max < math.pi / 2:
            raise ValueError("delta_max must lie in (0, pi/2)")
        if not self.v_max > self.v_min >= 0.0:
            raise ValueError("need v_max > v_min >= 0")
        if self.a_max <= 0.0:
            raise ValueError("a_max must be positive")


# Default envelopes per vehicle category; override via agent records or the
# CLI config's "kinematics" table.
CATEGORY_PARAMS: dict[str, KinematicParams] = {
    "CAR": KinematicParams(wheelbase=2.8, delta_max=0.6, v_max=20.0, v_min=0.0, a_max=4.0),
    "TRUCK": KinematicParams(wheelbase=5.5, delta_max=0.45, v_max=16.0, v_min=0.0, a_max=2.5),
    "BUS": KinematicParams(wheelbase=5.5, delta_max=0.45, v_max=16.0, v_min=0.0, a_max=2.5),
}

DEFAULT_DT = 0.1


@dataclass(frozen=True)
class AgentState:
    pose: Pose2
    v: float
    delta: float
    t: float


@dataclass(frozen=True)
class ControlInput:
    v: float
    delta: float


def step(state: AgentState, u: ControlInput, dt: float, params: KinematicParams) -> AgentState:
    """Advance one step: translate along the current heading, then rotate."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if abs(u.delta) > params.delta_max:
        raise EnvelopeViolation("steering", u.delta, params.delta_max)
    if u.v < params.v_min or u.v > params.v_max:
        raise EnvelopeViolation("speed", u.v, params.v_max)
    if abs(u.v - state.v) > params.a_max * dt:
        raise EnvelopeViolation("accel", (u.v - state.v) / dt, params.a_max)
    ds = u.v * dt
    x = state.pose.x + ds * math.cos(state.pose.theta)
    y = state.pose.y + ds * math.sin(state.pose.theta)
    dtheta = u.v / params.wheelbase * math.tan(u.delta) * dt
    return AgentState(
        pose=Pose2(x, y, normalize_angle(state.pose.theta + dtheta)),
        v=u.v,
        delta=u.delta,
        t=state.t + dt,
    )


def rollout(
    initial: AgentState,
    controls: Sequence[ControlInput],
    dt: float,
    params: KinematicParams,
) -> list[AgentState]:
    """Iterate step over a control sequence; returns len(controls)+1 states."""
    if not controls:
        raise ValueError("controls must be non-empty")
    states = [initial]
    for k, u in enumerate(controls):
        try:
            states.append(step(states[-1], u, dt, params))
        except EnvelopeViolation as e:
            raise EnvelopeViolation(e.bound, e.value, e.limit, step_index=k) from None
    return states


@dataclass(frozen=True)
class KinematicsVerdict:
    feasible: bool
    index: int | None = None
    constraint: str | None = None

    def __bool__(self) -> bool:
        return self.feasible


FEASIBLE = KinematicsVerdict(True)

# Relative slack absorbing float noise in the implied-quantity comparisons.
_CHECK_RTOL = 1e-9


def vertex_curvature(p0, p1, p2) -> float:
    """Signed discrete curvature at p1: turn angle per incoming arc length.

    Exactly recovers tan(delta)/L for paths emitted by `step`, which moves
    along the current heading first and rotates after (the circumscribed-
    circle estimate does not: unequal chord lengths skew it upward when the
    speed changes through the vertex). Degenerate triples report 0.
    """
    ax, ay = p1[0] - p0[0], p1[1] - p0[1]
    bx, by = p2[0] - p1[0], p2[1] - p1[1]
    a = math.hypot(ax, ay)
    if a < 1e-12 or math.hypot(bx, by) < 1e-12:
        return 0.0
    turn = math.atan2(ax * by - ay * bx, ax * bx + ay * by)
    return turn / a


def check_trajectory_kinematics(
    samples: Sequence[Sequence[float]], params: KinematicParams
) -> KinematicsVerdict:
    """Check a timestamped path (t, x, y rows) against the envelope.

    Verifies implied segment speeds, implied per-step speed changes, and the
    steering angle implied by the circumscribed-circle curvature of each
    interior point triple. Reports the first violating sample index.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 3:
        raise MalformedTrajectory("need at least 3 (t, x, y) samples")
    ts = arr[:, 0]
    dts = np.diff(ts)
    if np.any(dts <= 0.0):
        raise MalformedTrajectory("timestamps must be strictly increasing")

    seg = np.linalg.norm(np.diff(arr[:, 1:], axis=0), axis=1)
    speeds = seg / dts
    v_hi = params.v_max * (1.0 + _CHECK_RTOL) + 1e-12
    v_lo = params.v_min * (1.0 - _CHECK_RTOL) - 1e-12
    for i, v in enumerate(speeds):
        if v > v_hi or v < v_lo:
            return KinematicsVerdict(False, index=i, constraint="speed")

    for i in range(len(speeds) - 1):
        dv = abs(speeds[i + 1] - speeds[i])
        limit = params.a_max * dts[i + 1]
        if dv > limit * (1.0 + _CHECK_RTOL) + 1e-12:
            return KinematicsVerdict(False, index=i + 1, constraint="accel")

    for i in range(1, len(arr) - 1):
        kappa = vertex_curvature(arr[i - 1, 1:], arr[i, 1:], arr[i + 1, 1:])
        delta = math.atan(params.wheelbase * kappa)
        if abs(delta) > params.delta_max * (1.0 + _CHECK_RTOL) + 1e-12:
            return KinematicsVerdict(False, index=i, constraint="steering")

    return FEASIBLE


# Clamps shave this much off the envelope edge so a re-derived bound check
# cannot trip on 1-ulp float noise.
_CLAMP_MARGIN = 1e-9


def clamp_speed(v_target: float, v_current: float, dt: float, params: KinematicParams) -> float:
    """Nearest speed to v_target reachable within the envelope this step."""
    lo = max(v_current - params.a_max * dt + _CLAMP_MARGIN, params.v_min)
    hi = min(v_current + params.a_max * dt - _CLAMP_MARGIN, params.v_max)
    if lo > hi:  # degenerate window; pin to the accel-feasible side
        lo = hi = min(max(v_current, params.v_min), params.v_max)
    return min(max(v_target, lo), hi)


def clamp_steering(delta: float, params: KinematicParams) -> float:
    bound = params.delta_max - _CLAMP_MARGIN
    return min(max(delta, -bound), bound)


def fit_control(
    state: AgentState, target_pose: Pose2, dt: float, params: KinematicParams
) -> ControlInput:
    """In-envelope control that best moves `state` toward a target pose.

    Inverts the step update: speed from the position gap, steering from the
    heading gap, both clamped to the envelope.
    """
    dist = math.hypot(target_pose.x - state.pose.x, target_pose.y - state.pose.y)
    v = clamp_speed(dist / dt, state.v, dt, params)
    dtheta = normalize_angle(target_pose.theta - state.pose.theta)
    if v * dt > 1e-9:
        delta = math.atan(dtheta * params.wheelbase / (v * dt))
    else:
        delta = 0.0
    return ControlInput(v=v, delta=clamp_steering(delta, params))


def states_to_txy(states: Sequence[AgentState]) -> np.ndarray:
    """(t, x, y) rows for a state sequence, as consumed by the checks."""
    return np.array([[s.t, s.pose.x, s.pose.y] for s in states])
