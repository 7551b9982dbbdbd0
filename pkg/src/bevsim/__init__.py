"""Deterministic BEV driving-scenario simulator and adversarial scenario toolkit."""

from .geometry import (
    EmptyOverlap,
    OrientedBox,
    Polygon,
    Polyline,
    Pose2,
    boxes_collide,
    compose,
    inverse,
    min_clearance,
    normalize_angle,
    point_in_polygon,
    quintic_ease,
    transform_box,
)
from .kinematics import (
    CATEGORY_PARAMS,
    AgentState,
    ControlInput,
    EnvelopeViolation,
    KinematicParams,
    KinematicsVerdict,
    MalformedTrajectory,
    check_trajectory_kinematics,
    rollout,
    step,
)
from .scenario import (
    Agent,
    GridMismatch,
    Lane,
    MapModel,
    ParseError,
    Provenance,
    Scenario,
    SchemaError,
    Trajectory,
    TrajectorySample,
    ValidationError,
    load_scenario,
    resample,
    save_scenario,
    time_grid,
    trajectory_from_rows,
)
from .daa import (
    BEHAVIOR_KINDS,
    BehaviorSpec,
    DistanceGate,
    FeasibilityReport,
    SynthesisFailed,
    Violation,
    check_feasibility,
    default_catalog,
    load_catalog,
    perturb,
    select_target,
    synthesize_adversary,
)
from .ctg import (
    ActionHistogram,
    ExtensionFailed,
    ExtensionSpec,
    InterpolationConfig,
    adjust_neighbors,
    classify_action,
    dataset_stats,
    extend,
    interpolate,
)
from .simulator import (
    ClipResult,
    DaaConfig,
    DeviationThresholds,
    Event,
    Observation,
    constant_control,
    expert_replay,
    lane_follow_idm,
    read_clips,
    run_batch,
    run_clip,
    write_clips,
)
from .metrics import EmptyInput, MetricReport, aggregate, compare

__version__ = "0.1.0"
