"""Shared synthetic scenario builders.

The generators here stand in for real map/log ingestion: straight multi-lane
corridors with replaying traffic, plus per-behavior randomized setups used
by the adversary-pipeline sweeps.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from bevsim.geometry import Polygon, Polyline, Pose2
from bevsim.kinematics import KinematicParams
from bevsim.scenario import Agent, Lane, MapModel, Scenario, Trajectory, TrajectorySample, time_grid

LANE_WIDTH = 3.5

# Braking corner cases need more deceleration authority than the shipped
# car default; adversary vehicles in the sweeps carry this envelope.
ADVERSARY_PARAMS = KinematicParams(wheelbase=2.8, delta_max=0.6, v_max=25.0, v_min=0.0, a_max=8.0)


def straight_trajectory(
    x0: float, y0: float, v: float, dt: float, horizon: float, theta: float = 0.0
) -> Trajectory:
    return Trajectory(
        tuple(
            TrajectorySample(t, Pose2(x0 + v * t * math.cos(theta), y0 + v * t * math.sin(theta), theta), v)
            for t in time_grid(dt, horizon)
        )
    )


def parked_trajectory(x0: float, y0: float, horizon: float, theta: float = 0.0) -> Trajectory:
    return Trajectory(
        (
            TrajectorySample(0.0, Pose2(x0, y0, theta), 0.0),
            TrajectorySample(horizon, Pose2(x0, y0, theta), 0.0),
        )
    )


def corridor_map(
    n_forward: int = 2,
    n_opposite: int = 0,
    lane_width: float = LANE_WIDTH,
    x_min: float = -80.0,
    x_max: float = 500.0,
) -> MapModel:
    """Straight corridor along +x. Forward lanes at y = 0, w, 2w, ...; any
    opposite lanes stacked above them, driving toward -x."""
    lanes = []
    for i in range(n_forward):
        lanes.append(
            Lane(
                id=f"f{i}",
                centerline=Polyline([(x_min, i * lane_width), (x_max, i * lane_width)]),
                width=lane_width,
                direction="FORWARD",
                left_neighbor=f"f{i + 1}" if i + 1 < n_forward else None,
                right_neighbor=f"f{i - 1}" if i > 0 else None,
            )
        )
    for j in range(n_opposite):
        y = (n_forward + j) * lane_width
        lanes.append(
            Lane(
                id=f"o{j}",
                centerline=Polyline([(x_min, y), (x_max, y)]),
                width=lane_width,
                direction="OPPOSITE",
            )
        )
    n_lanes = n_forward + n_opposite
    lo = -lane_width
    hi = n_lanes * lane_width
    drivable = Polygon([(x_min, lo), (x_max, lo), (x_max, hi), (x_min, hi)])
    return MapModel(drivable=(drivable,), lanes=tuple(lanes))


def car(agent_id: str, traj: Trajectory, params: KinematicParams | None = None) -> Agent:
    return Agent(agent_id, "CAR", half_length=2.2, half_width=0.9, trajectory=traj, kinematics=params)


def obstacle(agent_id: str, x: float, y: float) -> Agent:
    return Agent(
        agent_id,
        "STATIC_OBSTACLE",
        half_length=1.0,
        half_width=1.0,
        trajectory=Trajectory((TrajectorySample(0.0, Pose2(x, y, 0.0), 0.0),)),
    )


def corridor_scenario(
    scenario_id: str = "corridor",
    ego_v: float = 10.0,
    others: tuple[Agent, ...] = (),
    n_forward: int = 2,
    n_opposite: int = 0,
    dt: float = 0.1,
    horizon: float = 8.0,
    ego_lane_y: float = 0.0,
) -> Scenario:
    m = corridor_map(n_forward=n_forward, n_opposite=n_opposite)
    ego = car("ego", straight_trajectory(0.0, ego_lane_y, ego_v, dt, horizon))
    return Scenario(scenario_id, m, ego, others, horizon, dt)


def behavior_scenario(kind: str, rng: np.random.Generator, index: int = 0) -> Scenario:
    """Randomized scenario on which the named behavior's pipeline succeeds.

    Background traffic is placed far enough away to keep clearance honest
    while still exercising the checks.
    """
    dt, horizon = 0.1, 8.0
    ego_v = float(rng.uniform(8.0, 12.0))
    sid = f"{kind.lower()}-{index:04d}"

    if kind in ("DynamicCutIn", "LaneChangeConflict"):
        gap = float(rng.uniform(6.0, 14.0))
        tgt_v = ego_v + float(rng.uniform(1.0, 3.0))
        target = car("target", straight_trajectory(gap, LANE_WIDTH, tgt_v, dt, horizon), ADVERSARY_PARAMS)
        background = car("bg", straight_trajectory(-25.0, 0.0, ego_v, dt, horizon))
        return corridor_scenario(sid, ego_v, (target, background), n_forward=2, dt=dt, horizon=horizon)

    if kind == "ParkingCutIn":
        # the parked car needs a head start to still be ahead when it merges
        ego_v = float(rng.uniform(5.0, 8.0))
        gap = float(rng.uniform(15.0, 22.0))
        target = car("target", parked_trajectory(gap, LANE_WIDTH, horizon), ADVERSARY_PARAMS)
        background = car("bg", straight_trajectory(-30.0, LANE_WIDTH, ego_v, dt, horizon))
        return corridor_scenario(sid, ego_v, (target, background), n_forward=2, dt=dt, horizon=horizon)

    if kind in ("HardBrake", "BlockedIntersection", "HazardAtSideLane"):
        gap = {
            "HardBrake": rng.uniform(12.0, 35.0),
            "BlockedIntersection": rng.uniform(14.0, 45.0),
            "HazardAtSideLane": rng.uniform(8.0, 35.0),
        }[kind]
        tgt_v = float(rng.uniform(8.0, 13.0))
        target = car("target", straight_trajectory(float(gap), 0.0, tgt_v, dt, horizon), ADVERSARY_PARAMS)
        # background traffic ahead in the next lane pulls away from the
        # slowing target, keeping the clearance margin honest
        background = car("bg", straight_trajectory(float(gap) + 40.0, LANE_WIDTH, ego_v, dt, horizon))
        return corridor_scenario(sid, ego_v, (target, background), n_forward=2, dt=dt, horizon=horizon)

    if kind in ("OppositeLaneIntrusion", "WrongWayVehicle"):
        gap = float(rng.uniform(15.0, 55.0))
        tgt_v = float(rng.uniform(6.0, 10.0))
        target = car(
            "target",
            straight_trajectory(gap, 2 * LANE_WIDTH, tgt_v, dt, horizon, theta=math.pi),
            ADVERSARY_PARAMS,
        )
        # same-direction traffic far downstream, outrunning the oncoming target
        background = car("bg", straight_trajectory(gap + 70.0, LANE_WIDTH, ego_v, dt, horizon))
        return corridor_scenario(
            sid, ego_v, (target, background), n_forward=2, n_opposite=1, dt=dt, horizon=horizon
        )

    raise ValueError(f"no generator for behavior kind {kind!r}")


def turning_scenario(scenario_id: str, direction: float = 1.0, dt: float = 0.1, horizon: float = 8.0) -> Scenario:
    """Ego drives a quarter-circle (net heading change ~ pi/2)."""
    v = 8.0
    radius = v * horizon / (math.pi / 2)
    samples = []
    for t in time_grid(dt, horizon):
        ang = direction * (v * t / radius)
        x = radius * math.sin(ang)
        y = direction * radius * (1.0 - math.cos(ang))
        samples.append(TrajectorySample(t, Pose2(x, y, direction * (v * t / radius)), v))
    span = radius + 30.0
    m = MapModel(drivable=(Polygon([(-span, -span), (span, -span), (span, span), (-span, span)]),))
    ego = car("ego", Trajectory(tuple(samples)))
    return Scenario(scenario_id, m, ego, (), horizon, dt)


@pytest.fixture
def two_lane_scenario() -> Scenario:
    target = car("npc1", straight_trajectory(15.0, LANE_WIDTH, 11.0, 0.1, 8.0), ADVERSARY_PARAMS)
    return corridor_scenario("two-lane", ego_v=10.0, others=(target,))


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[{'PASS' if report.passed else 'FAIL'}] {name}")
