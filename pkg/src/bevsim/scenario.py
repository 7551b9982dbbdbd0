"""Scenario data model (map, agents, trajectories) and its JSON serialization.

Scenario files follow schema v1: a single JSON object with canonical
formatting (sorted keys, fixed 9-decimal float fields), so saving the same
scenario twice yields byte-identical files. Unknown fields are rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .geometry import Polygon, Polyline, Pose2, normalize_angle
from .kinematics import CATEGORY_PARAMS, KinematicParams

SCHEMA_VERSION = "1"

CATEGORIES = ("CAR", "TRUCK", "BUS", "PEDESTRIAN", "STATIC_OBSTACLE")
VEHICLE_CATEGORIES = ("CAR", "TRUCK", "BUS")
LANE_DIRECTIONS = ("FORWARD", "OPPOSITE")


class ParseError(Exception):
    """File is not parseable JSON."""


class SchemaError(Exception):
    """JSON parses but does not match scenario schema v1."""


class ValidationError(Exception):
    """Schema-shaped input breaks a scenario invariant."""

    def __init__(self, message: str, pointer: str):
        self.pointer = pointer
        super().__init__(f"{message} (at {pointer})")


class GridMismatch(Exception):
    """Trajectory timestamps differ from the scenario's time grid."""


def time_grid(dt: float, horizon: float) -> list[float]:
    """Timestamps 0, dt, 2*dt, ... up to and including horizon.

    Shared by every producer and consumer of on-grid trajectories so grids
    compare exactly. Stamps are rounded to 9 decimals to match the canonical
    file format (a reloaded on-grid trajectory stays exactly on-grid), and
    the last stamp is clamped to the horizon.
    """
    if dt <= 0.0 or horizon <= 0.0:
        raise ValueError("dt and horizon must be positive")
    n = int(math.floor(horizon / dt + 1e-9)) + 1
    ts = [round(k * dt, 9) for k in range(n)]
    if ts[-1] > horizon:
        ts[-1] = horizon
    return ts


# ---------------------------------------------------------------------------
# canonical JSON


def _canon_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError("canonical JSON cannot hold non-finite floats")
    if x == 0.0:
        x = 0.0  # collapse -0.0
    return f"{x:.9f}"


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and fixed 9-decimal float formatting."""
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return _canon_float(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{canonical_json(v)}" for k, v in items) + "}"
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# data model


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    pose: Pose2
    v: float


@dataclass(frozen=True)
class Trajectory:
    """Timestamped pose/speed track with strictly increasing timestamps."""

    samples: tuple[TrajectorySample, ...]

    def __post_init__(self) -> None:
        if len(self.samples) < 1:
            raise ValueError("trajectory needs at least one sample")
        ts = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    @cached_property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([[s.pose.x, s.pose.y] for s in self.samples])

    @property
    def t_start(self) -> float:
        return self.samples[0].t

    @property
    def t_end(self) -> float:
        return self.samples[-1].t

    def txy(self) -> np.ndarray:
        """(t, x, y) rows, the shape consumed by the geometry/kinematics checks."""
        return np.array([[s.t, s.pose.x, s.pose.y] for s in self.samples])

    def sample_at(self, t: float) -> TrajectorySample:
        """Linear interpolation at time t; ends are held beyond the range.

        Positions and speed interpolate linearly, heading along the shortest
        arc; a query exactly on a knot returns that sample unchanged.
        """
        ss = self.samples
        if t <= ss[0].t:
            return replace(ss[0], t=t)
        if t >= ss[-1].t:
            return replace(ss[-1], t=t)
        ts = self.times
        i = int(np.searchsorted(ts, t, side="right")) - 1
        a, b = ss[i], ss[i + 1]
        if a.t == t:
            return a
        w = (t - a.t) / (b.t - a.t)
        theta = normalize_angle(a.pose.theta + w * normalize_angle(b.pose.theta - a.pose.theta))
        return TrajectorySample(
            t=t,
            pose=Pose2(
                a.pose.x + w * (b.pose.x - a.pose.x),
                a.pose.y + w * (b.pose.y - a.pose.y),
                theta,
            ),
            v=a.v + w * (b.v - a.v),
        )

    def on_grid(self, grid: Sequence[float]) -> bool:
        own = [s.t for s in self.samples]
        return len(own) == len(grid) and all(a == b for a, b in zip(own, grid))


def trajectory_from_rows(rows: Sequence[Sequence[float]]) -> Trajectory:
    """Build from (t, x, y, theta, v) rows."""
    return Trajectory(
        tuple(TrajectorySample(float(t), Pose2(float(x), float(y), float(th)), float(v)) for t, x, y, th, v in rows)
    )


def resample(traj: Trajectory, dt: float, horizon: float) -> Trajectory:
    """Resample onto the canonical grid; boundary samples are held outside
    the original time range."""
    return Trajectory(tuple(traj.sample_at(t) for t in time_grid(dt, horizon)))


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: Polyline
    width: float
    direction: str = "FORWARD"
    left_neighbor: str | None = None
    right_neighbor: str | None = None


@dataclass(frozen=True)
class MapModel:
    drivable: tuple[Polygon, ...]
    lanes: tuple[Lane, ...] = ()

    def lane_by_id(self, lane_id: str) -> Lane:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(lane_id)

    def nearest_lane(self, point: Sequence[float], direction: str | None = None) -> Lane | None:
        """Lane whose centerline is closest to the point, ties by lane id."""
        best: tuple[float, str] | None = None
        best_lane = None
        for lane in self.lanes:
            if direction is not None and lane.direction != direction:
                continue
            _, d = lane.centerline.project(point)
            key = (abs(d), lane.id)
            if best is None or key < best:
                best = key
                best_lane = lane
        return best_lane

    def contains_point(self, point: Sequence[float]) -> bool:
        return any(poly.contains(point) for poly in self.drivable)


@dataclass(frozen=True)
class Agent:
    id: str
    category: str
    half_length: float
    half_width: float
    trajectory: Trajectory
    kinematics: KinematicParams | None = None

    def effective_kinematics(self) -> KinematicParams | None:
        """Explicit envelope, or the category default for vehicle categories."""
        if self.kinematics is not None:
            return self.kinematics
        return CATEGORY_PARAMS.get(self.category)

    def is_vehicle(self) -> bool:
        return self.category in VEHICLE_CATEGORIES


@dataclass(frozen=True)
class Provenance:
    source_id: str
    transform: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    id: str
    map: MapModel
    ego: Agent
    others: tuple[Agent, ...]
    horizon: float
    dt: float
    provenance: Provenance | None = None

    def grid(self) -> list[float]:
        return time_grid(self.dt, self.horizon)

    def agent_by_id(self, agent_id: str) -> Agent:
        if agent_id == self.ego.id:
            return self.ego
        for a in self.others:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)

    def with_agent_trajectory(self, agent_id: str, traj: Trajectory) -> "Scenario":
        """Copy with one non-ego agent's trajectory replaced."""
        others = tuple(replace(a, trajectory=traj) if a.id == agent_id else a for a in self.others)
        if all(a.id != agent_id for a in self.others):
            raise KeyError(agent_id)
        return replace(self, others=others)


# ---------------------------------------------------------------------------
# schema load/save


def _require(obj: dict, ptr: str, required: dict[str, type | tuple], optional: dict[str, type | tuple] = {}) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"expected object at {ptr}")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise SchemaError(f"unknown field '{sorted(unknown)[0]}' at {ptr}")
    for key, typ in required.items():
        if key not in obj:
            raise SchemaError(f"missing field '{key}' at {ptr}")
        if not isinstance(obj[key], typ) or isinstance(obj[key], bool):
            raise SchemaError(f"field '{key}' has wrong type at {ptr}")
    for key, typ in optional.items():
        if key in obj and (not isinstance(obj[key], typ) or isinstance(obj[key], bool)):
            raise SchemaError(f"field '{key}' has wrong type at {ptr}")


_NUM = (int, float)


def _load_polyline(rows: list, ptr: str) -> Polyline:
    pts = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 2 or not all(isinstance(v, _NUM) for v in row):
            raise SchemaError(f"expected [x, y] at {ptr}/{i}")
        pts.append((float(row[0]), float(row[1])))
    try:
        return Polyline(pts)
    except ValueError as e:
        raise ValidationError(str(e), ptr) from None


def _load_polygon(rows: list, ptr: str) -> Polygon:
    pts = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 2 or not all(isinstance(v, _NUM) for v in row):
            raise SchemaError(f"expected [x, y] at {ptr}/{i}")
        pts.append((float(row[0]), float(row[1])))
    try:
        return Polygon(pts)
    except ValueError as e:
        raise ValidationError(str(e), ptr) from None


def _load_agent(obj: dict, ptr: str) -> Agent:
    _require(
        obj,
        ptr,
        required={"id": str, "category": str, "half_length": _NUM, "half_width": _NUM, "trajectory": list},
        optional={"kinematics": dict},
    )
    if obj["category"] not in CATEGORIES:
        raise ValidationError(f"unknown category '{obj['category']}'", f"{ptr}/category")
    if obj["half_length"] <= 0 or obj["half_width"] <= 0:
        raise ValidationError("footprint extents must be positive", f"{ptr}/half_length")
    kin = None
    if "kinematics" in obj:
        if obj["category"] not in VEHICLE_CATEGORIES:
            raise ValidationError(
                f"category {obj['category']} cannot carry kinematics", f"{ptr}/kinematics"
            )
        kobj = obj["kinematics"]
        _require(
            kobj,
            f"{ptr}/kinematics",
            required={"L": _NUM, "delta_max": _NUM, "v_max": _NUM, "v_min": _NUM, "a_max": _NUM},
        )
        try:
            kin = KinematicParams(
                wheelbase=float(kobj["L"]),
                delta_max=float(kobj["delta_max"]),
                v_max=float(kobj["v_max"]),
                v_min=float(kobj["v_min"]),
                a_max=float(kobj["a_max"]),
            )
        except ValueError as e:
            raise ValidationError(str(e), f"{ptr}/kinematics") from None
    samples = []
    prev_t = None
    for i, row in enumerate(obj["trajectory"]):
        _require(row, f"{ptr}/trajectory/{i}", required={"t": _NUM, "x": _NUM, "y": _NUM, "theta": _NUM, "v": _NUM})
        t = float(row["t"])
        if prev_t is not None and t <= prev_t:
            raise ValidationError(
                f"timestamps of agent '{obj['id']}' must be strictly increasing",
                f"{ptr}/trajectory/{i}/t",
            )
        prev_t = t
        samples.append(
            TrajectorySample(t, Pose2(float(row["x"]), float(row["y"]), float(row["theta"])), float(row["v"]))
        )
    min_len = 1 if obj["category"] == "STATIC_OBSTACLE" else 2
    if len(samples) < min_len:
        raise ValidationError(
            f"agent '{obj['id']}' needs at least {min_len} trajectory samples", f"{ptr}/trajectory"
        )
    return Agent(
        id=obj["id"],
        category=obj["category"],
        half_length=float(obj["half_length"]),
        half_width=float(obj["half_width"]),
        trajectory=Trajectory(tuple(samples)),
        kinematics=kin,
    )


def _load_map(obj: dict, ptr: str) -> MapModel:
    _require(obj, ptr, required={"drivable": list}, optional={"lanes": list})
    if not obj["drivable"]:
        raise ValidationError("map needs at least one drivable polygon", f"{ptr}/drivable")
    drivable = tuple(_load_polygon(p, f"{ptr}/drivable/{i}") for i, p in enumerate(obj["drivable"]))
    lanes = []
    for i, lobj in enumerate(obj.get("lanes", [])):
        lptr = f"{ptr}/lanes/{i}"
        _require(
            lobj,
            lptr,
            required={"id": str, "centerline": list, "width": _NUM, "direction": str},
            optional={"left_neighbor": str, "right_neighbor": str},
        )
        if lobj["width"] <= 0:
            raise ValidationError("lane width must be positive", f"{lptr}/width")
        if lobj["direction"] not in LANE_DIRECTIONS:
            raise ValidationError(f"unknown lane direction '{lobj['direction']}'", f"{lptr}/direction")
        lanes.append(
            Lane(
                id=lobj["id"],
                centerline=_load_polyline(lobj["centerline"], f"{lptr}/centerline"),
                width=float(lobj["width"]),
                direction=lobj["direction"],
                left_neighbor=lobj.get("left_neighbor"),
                right_neighbor=lobj.get("right_neighbor"),
            )
        )
    lane_ids = {lane.id for lane in lanes}
    if len(lane_ids) != len(lanes):
        raise ValidationError("duplicate lane ids", f"{ptr}/lanes")
    for i, lane in enumerate(lanes):
        for side in ("left_neighbor", "right_neighbor"):
            ref = getattr(lane, side)
            if ref is not None and ref not in lane_ids:
                raise ValidationError(f"lane '{lane.id}' references unknown {side} '{ref}'", f"{ptr}/lanes/{i}/{side}")
    return MapModel(drivable=drivable, lanes=tuple(lanes))


def scenario_from_dict(doc: Any, ptr: str = "") -> Scenario:
    if not isinstance(doc, dict):
        raise SchemaError("top level must be a JSON object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {doc.get('schema_version')!r}")
    _require(
        doc,
        ptr or "/",
        required={"schema_version": str, "id": str, "dt": _NUM, "horizon": _NUM, "map": dict, "ego": dict, "others": list},
        optional={"provenance": dict},
    )
    if doc["dt"] <= 0 or doc["horizon"] <= 0:
        raise ValidationError("dt and horizon must be positive", f"{ptr}/dt")
    ego = _load_agent(doc["ego"], f"{ptr}/ego")
    if not ego.is_vehicle():
        raise ValidationError("ego must be a vehicle category", f"{ptr}/ego/category")
    others = tuple(_load_agent(a, f"{ptr}/others/{i}") for i, a in enumerate(doc["others"]))
    ids = [ego.id] + [a.id for a in others]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate agent ids", f"{ptr}/others")
    prov = None
    if "provenance" in doc:
        pobj = doc["provenance"]
        _require(pobj, f"{ptr}/provenance", required={"source_id": str, "transform": str}, optional={"params": dict})
        prov = Provenance(source_id=pobj["source_id"], transform=pobj["transform"], params=pobj.get("params", {}))
    return Scenario(
        id=doc["id"],
        map=_load_map(doc["map"], f"{ptr}/map"),
        ego=ego,
        others=others,
        horizon=float(doc["horizon"]),
        dt=float(doc["dt"]),
        provenance=prov,
    )


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    return scenario_from_dict(doc)


def _agent_to_dict(agent: Agent) -> dict:
    obj: dict[str, Any] = {
        "id": agent.id,
        "category": agent.category,
        "half_length": float(agent.half_length),
        "half_width": float(agent.half_width),
        "trajectory": [
            {"t": s.t, "x": s.pose.x, "y": s.pose.y, "theta": s.pose.theta, "v": s.v}
            for s in agent.trajectory.samples
        ],
    }
    if agent.kinematics is not None:
        k = agent.kinematics
        obj["kinematics"] = {
            "L": k.wheelbase,
            "delta_max": k.delta_max,
            "v_max": k.v_max,
            "v_min": k.v_min,
            "a_max": k.a_max,
        }
    return obj


def scenario_to_dict(s: Scenario) -> dict:
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "id": s.id,
        "dt": float(s.dt),
        "horizon": float(s.horizon),
        "map": {
            "drivable": [[[float(x), float(y)] for x, y in poly.vertices] for poly in s.map.drivable],
            "lanes": [
                {
                    "id": lane.id,
                    "centerline": [[float(x), float(y)] for x, y in lane.centerline.points],
                    "width": float(lane.width),
                    "direction": lane.direction,
                    **({"left_neighbor": lane.left_neighbor} if lane.left_neighbor else {}),
                    **({"right_neighbor": lane.right_neighbor} if lane.right_neighbor else {}),
                }
                for lane in s.map.lanes
            ],
        },
        "ego": _agent_to_dict(s.ego),
        "others": [_agent_to_dict(a) for a in s.others],
    }
    if s.provenance is not None:
        doc["provenance"] = {
            "source_id": s.provenance.source_id,
            "transform": s.provenance.transform,
            "params": s.provenance.params,
        }
    return doc


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(canonical_json(scenario_to_dict(s)) + "\n", encoding="utf-8")
