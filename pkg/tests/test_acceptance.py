"""Acceptance suite: one test per release criterion, each with its stated
tolerance and wall-clock budget. Run with `pytest tests/test_acceptance.py -v`.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from bevsim.cli import main
from bevsim.ctg import InterpolationConfig, dataset_stats, interpolate
from bevsim.daa import check_feasibility, default_catalog, ego_lane, select_target, synthesize_adversary, SynthesisFailed
from bevsim.geometry import OrientedBox, Polygon, Pose2, boxes_collide, point_in_polygon, separating_axis
from bevsim.kinematics import CATEGORY_PARAMS, AgentState, ControlInput, rollout
from bevsim.metrics import aggregate
from bevsim.scenario import Trajectory, TrajectorySample, load_scenario, resample, save_scenario
from bevsim.simulator import constant_control, expert_replay, run_batch

from conftest import (
    LANE_WIDTH,
    behavior_scenario,
    car,
    corridor_scenario,
    obstacle,
    straight_trajectory,
    turning_scenario,
)
from test_metrics import ABLATION_ROWS, CUT_IN_ROWS, MAIN_COMPARISON_ROWS


def write_corpus(out_dir: Path, scenarios):
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in scenarios:
        p = out_dir / f"{s.id}.json"
        save_scenario(s, p)
        paths.append(p)
    return paths


class Budget:
    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc == (None, None, None):
            assert self.elapsed < self.seconds, f"runtime {self.elapsed:.1f}s over budget {self.seconds}s"


def test_criterion_1_metric_identities():
    with Budget(1.0):
        # published benchmark rows: CR = DCR + SCR and DR = PDR + HDR within
        # +-0.001 on every fixture row
        for _, cr, dcr, scr, dr, pdr, hdr in MAIN_COMPARISON_ROWS + ABLATION_ROWS:
            assert abs(cr - (dcr + scr)) <= 0.001
            assert abs(dr - (pdr + hdr)) <= 0.001
        for _, cr, dcr, scr in CUT_IN_ROWS:
            assert abs(cr - (dcr + scr)) <= 0.001
        # synthetic clip corpora: the identities hold exactly
        from test_metrics import clip

        rng = np.random.default_rng(1)
        for trial in range(50):
            clips = [
                clip(
                    f"{trial}-{i}",
                    dyn=int(rng.integers(0, 2)),
                    stat=int(rng.integers(0, 2)),
                    pos=int(rng.integers(0, 2)),
                    head=int(rng.integers(0, 2)),
                )
                for i in range(int(rng.integers(1, 40)))
            ]
            report = aggregate(clips)
            assert report.cr - (report.dcr + report.scr) == 0.0
            assert report.dr - (report.pdr + report.hdr) == 0.0


def test_criterion_2_bicycle_circle_fidelity():
    with Budget(5.0):
        rng = np.random.default_rng(2026)
        dt = 0.1
        categories = list(CATEGORY_PARAMS.values())
        failures = 0
        for _ in range(1000):
            params = categories[int(rng.integers(len(categories)))]
            v = float(rng.uniform(3.0, params.v_max))
            delta = float(rng.uniform(0.12, params.delta_max)) * (1 if rng.random() < 0.5 else -1)
            radius = params.wheelbase / abs(math.tan(delta))
            dtheta = v / params.wheelbase * math.tan(delta) * dt
            steps = int(math.ceil(2.0 * math.pi / abs(dtheta))) + 1
            init = AgentState(Pose2(0.0, 0.0, 0.0), v, delta, 0.0)
            states = rollout(init, [ControlInput(v, delta)] * steps, dt, params)
            cx, cy = 0.0, math.copysign(radius, delta)
            worst = max(abs(math.hypot(s.pose.x - cx, s.pose.y - cy) - radius) for s in states)
            if worst > v * dt:
                failures += 1
        assert failures == 0


def test_criterion_3_daa_pipeline_self_consistency():
    with Budget(60.0):
        catalog = default_catalog()
        cut_in_kinds = ("DynamicCutIn", "ParkingCutIn", "LaneChangeConflict")
        rng = np.random.default_rng(33)
        ego_only_within_dmin = 0
        for kind, behavior in catalog.items():
            produced = 0
            for i in range(200):
                s = behavior_scenario(kind, rng, i)
                target = select_target(s, behavior)
                if target is None:
                    continue
                try:
                    traj = synthesize_adversary(s, target, behavior)
                except SynthesisFailed:
                    continue
                produced += 1

                report = check_feasibility(s, traj, target, behavior)
                assert report.feasible, f"{kind} scenario {i}: {report}"

                # Eq.-9 clearance against every non-ego agent, re-derived
                cand = traj.positions
                ego_traj = resample(s.ego.trajectory, s.dt, s.horizon)
                min_to_ego = float(
                    np.min(np.linalg.norm(cand - ego_traj.positions, axis=1))
                )
                others_clear = True
                for agent in s.others:
                    if agent.id == target:
                        continue
                    other = resample(agent.trajectory, s.dt, s.horizon)
                    dmin_agent = float(np.min(np.linalg.norm(cand - other.positions, axis=1)))
                    assert dmin_agent >= behavior.d_min, f"{kind} scenario {i}: Eq.9 violated"
                    if dmin_agent < behavior.d_min:
                        others_clear = False
                if min_to_ego < behavior.d_min and others_clear:
                    ego_only_within_dmin += 1

                if kind in cut_in_kinds:
                    lane = ego_lane(s)
                    half = lane.width / 2.0
                    lateral = [lane.centerline.project((p[0], p[1]))[1] for p in cand]
                    assert abs(lateral[0]) > half
                    crossing = next(k for k, d in enumerate(lateral) if abs(d) < half)
                    s_t = lane.centerline.project(tuple(cand[crossing]))[0]
                    e = ego_traj.samples[crossing].pose
                    s_e = lane.centerline.project((e.x, e.y))[0]
                    assert s_t > s_e, f"{kind} scenario {i}: not ahead at crossing"
            assert produced >= 150, f"{kind}: only {produced}/200 scenarios produced a trajectory"
        assert ego_only_within_dmin >= 20


def test_criterion_4_interpolation_exactness():
    with Budget(5.0):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(4, 12))
            ts = np.cumsum(rng.uniform(0.05, 0.7, size=n))
            rows = [
                TrajectorySample(
                    float(t),
                    Pose2(float(rng.uniform(-100, 100)), float(rng.uniform(-100, 100)), float(rng.uniform(-3, 3))),
                    float(rng.uniform(0, 20)),
                )
                for t in ts
            ]
            traj = Trajectory(tuple(rows))
            for m in (1, 2, 3, 5):
                out = interpolate(traj, InterpolationConfig(m=m))
                # grid-count formula
                assert len(out) == (n - 1) * (m + 1) + 1
                # originals preserved bitwise
                assert out.samples[:: m + 1] == traj.samples
                # direct evaluation of the linear formula
                for i in range(n - 1):
                    a, b = traj.samples[i], traj.samples[i + 1]
                    dt_ins = (b.t - a.t) / (m + 1)
                    for k in range(1, m + 1):
                        t = a.t + k * dt_ins
                        w = (t - a.t) / (b.t - a.t)
                        ex = a.pose.x + w * (b.pose.x - a.pose.x)
                        ey = a.pose.y + w * (b.pose.y - a.pose.y)
                        got = out.samples[i * (m + 1) + k]
                        assert abs(got.pose.x - ex) <= 1e-9
                        assert abs(got.pose.y - ey) <= 1e-9
                        assert got.t == t


def test_criterion_5_augmentation_multiplies_non_straight(tmp_path, capsys):
    with Budget(60.0):
        # 90% straight corpus; ego rides the middle lane so both lane-change
        # cousins are geometrically available
        straights = [
            corridor_scenario(
                f"straight-{i:02d}",
                ego_v=7.0 + 0.3 * i,
                n_forward=3,
                ego_lane_y=LANE_WIDTH,
            )
            for i in range(18)
        ]
        turns = [turning_scenario("turn-a"), turning_scenario("turn-b", direction=-1.0)]
        corpus = write_corpus(tmp_path / "aug-src", straights + turns)
        out_dir = tmp_path / "aug-out"
        code = main(
            ["augment", *map(str, corpus), "--mode", "extend", "--out-dir", str(out_dir), "--stats"]
        )
        assert code == 0
        capsys.readouterr()

        originals = [load_scenario(p) for p in corpus]
        cousins = [load_scenario(p) for p in sorted(out_dir.glob("*.json"))]
        before = dataset_stats(originals)
        after = dataset_stats(originals + cousins)
        assert before.non_straight() == 2
        assert after.non_straight() >= 4 * before.non_straight()


def _evaluation_corpus(tmp_path: Path) -> list[Path]:
    scenarios = []
    for i in range(50):
        others = [
            car("ahead", straight_trajectory(20.0 + i, LANE_WIDTH, 8.0 + 0.2 * (i % 5), 0.1, 8.0)),
        ]
        if i % 3 == 0:
            others.append(obstacle("cone", 55.0 + i, -2.5))
        if i % 4 == 0:
            others.append(car("trail", straight_trajectory(-30.0, 0.0, 6.0 + 0.1 * i, 0.1, 8.0)))
        scenarios.append(
            corridor_scenario(f"eval-{i:02d}", ego_v=6.0 + 0.15 * i, others=tuple(others))
        )
    return write_corpus(tmp_path / "eval-corpus", scenarios)


def test_criterion_6_closed_loop_determinism(tmp_path):
    with Budget(120.0):
        corpus = _evaluation_corpus(tmp_path)
        glob_pattern = str(corpus[0].parent / "*.json")
        outputs = {}
        for workers in (1, 4, 8):
            out_dir = tmp_path / f"det-w{workers}"
            config = {
                "scenarios": glob_pattern,
                "policy": {"name": "expert_replay", "params": {}},
                "thresholds": {"position": 2.0, "heading": 0.52},
                "seed": 7,
                "workers": workers,
                "out_dir": str(out_dir),
            }
            cfg_path = tmp_path / f"det-cfg-{workers}.json"
            cfg_path.write_text(json.dumps(config))
            assert main(["evaluate", "--config", str(cfg_path)]) == 0
            outputs[workers] = (
                (out_dir / "clips.jsonl").read_bytes(),
                (out_dir / "report.json").read_bytes(),
            )
        assert outputs[1] == outputs[4] == outputs[8]


def test_criterion_7_collision_event_soundness(tmp_path):
    with Budget(60.0):
        # clean corpus under expert replay: CR = 0 and no unlogged overlap
        corpus = [load_scenario(p) for p in _evaluation_corpus(tmp_path)]
        clean_clips = run_batch(corpus, expert_replay(), seed=7)
        report = aggregate(clean_clips)
        assert report.cr == 0.0
        for s, clip in zip(corpus, clean_clips):
            others = {a.id: resample(a.trajectory, s.dt, s.horizon) for a in s.others}
            for st in clip.states:
                ego_box = OrientedBox(st.pose, s.ego.half_length, s.ego.half_width)
                for aid, traj in others.items():
                    agent = s.agent_by_id(aid)
                    smp = traj.sample_at(st.t)
                    other_box = OrientedBox(smp.pose, agent.half_length, agent.half_width)
                    assert not boxes_collide(ego_box, other_box), f"unlogged overlap in {s.id}"

        # collision-bearing corpus: every logged event re-checks true
        crashers = []
        for i in range(8):
            blocker = car("stall", straight_trajectory(14.0 + 2 * i, 0.0, 0.0, 0.1, 8.0))
            crashers.append(corridor_scenario(f"crash-d{i}", ego_v=8.0, others=(blocker,)))
        for i in range(8):
            rock = obstacle("rock", 12.0 + 2 * i, 0.0)
            crashers.append(corridor_scenario(f"crash-s{i}", ego_v=8.0, others=(rock,)))
        crash_clips = run_batch(crashers, constant_control(10.0, 0.0), seed=3)
        collision_events = 0
        for s, clip in zip(crashers, crash_clips):
            for e in clip.events:
                if not e.kind.endswith("COLLISION"):
                    continue
                collision_events += 1
                state = next(st for st in clip.states if st.t == e.t)
                ego_box = OrientedBox(state.pose, s.ego.half_length, s.ego.half_width)
                other_box = OrientedBox(
                    Pose2(e.detail["x"], e.detail["y"], e.detail["theta"]),
                    e.detail["half_length"],
                    e.detail["half_width"],
                )
                assert boxes_collide(ego_box, other_box)
        assert collision_events == len(crashers)  # every crasher collides once
        crash_report = aggregate(crash_clips)
        assert crash_report.dcr == 0.5 and crash_report.scr == 0.5


def test_criterion_8_geometry_oracles():
    with Budget(30.0):
        rng = np.random.default_rng(88)
        unit = rng.uniform(-1.0, 1.0, size=(10_000, 2))

        def mc_overlap(a: OrientedBox, b: OrientedBox) -> bool:
            for src, dst in ((a, b), (b, a)):
                pts = unit * np.array([src.half_length, src.half_width])
                c, s = math.cos(src.center.theta), math.sin(src.center.theta)
                rot = np.array([[c, -s], [s, c]])
                world = pts @ rot.T + np.array([src.center.x, src.center.y])
                c2, s2 = math.cos(dst.center.theta), math.sin(dst.center.theta)
                rot2 = np.array([[c2, -s2], [s2, c2]])
                local = (world - np.array([dst.center.x, dst.center.y])) @ rot2
                inside = (np.abs(local[:, 0]) <= dst.half_length) & (np.abs(local[:, 1]) <= dst.half_width)
                if bool(inside.any()):
                    return True
            return False

        boundary_cases = 0
        for _ in range(10_000):
            a = OrientedBox(
                Pose2(rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(-math.pi, math.pi)),
                rng.uniform(0.3, 3.0),
                rng.uniform(0.3, 3.0),
            )
            b = OrientedBox(
                Pose2(rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(-math.pi, math.pi)),
                rng.uniform(0.3, 3.0),
                rng.uniform(0.3, 3.0),
            )
            got = boxes_collide(a, b)
            mc = mc_overlap(a, b)
            if got != mc:
                # sampling can only miss slivers; adjudicate with the
                # separating-axis certificate
                assert got and separating_axis(a, b) is None
                boundary_cases += 1
        assert boundary_cases < 100  # disagreements stay at sampling resolution

        def winding_number(point, poly) -> int:
            total = 0.0
            vs = poly.vertices
            for i in range(len(vs)):
                a_ = vs[i] - np.asarray(point, dtype=float)
                b_ = vs[(i + 1) % len(vs)] - np.asarray(point, dtype=float)
                total += math.atan2(a_[0] * b_[1] - a_[1] * b_[0], a_[0] * b_[0] + a_[1] * b_[1])
            return round(total / (2.0 * math.pi))

        polygons = []
        for _ in range(10):
            n = int(rng.integers(5, 12))
            angles = (np.arange(n) + rng.uniform(0.05, 0.95, size=n)) * (2 * math.pi / n)
            radii = rng.uniform(1.0, 5.0, size=n)
            polygons.append(Polygon(np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])))
        for i in range(10_000):
            poly = polygons[i % len(polygons)]
            p = rng.uniform(-6, 6, size=2)
            assert point_in_polygon(p, poly) == (winding_number(p, poly) != 0)
