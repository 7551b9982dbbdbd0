"""Static BEV figure rendering.

Figures are written as SVG with a pinned hash salt and no date metadata, so
identical inputs always produce identical bytes. Agent boxes carry a
`gid="agent-box-<id>"` attribute in the SVG for downstream counting.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Polygon as MplPolygon

from .geometry import OrientedBox
from .scenario import Scenario
from .simulator import ClipResult

_HASH_SALT = "bevsim"

_COLORS = {
    "drivable": "#e8e8e8",
    "lane": "#9aa7b0",
    "ego": "#1f77b4",
    "expert": "#1f77b4",
    "other": "#7f7f7f",
    "adversary": "#d62728",
    "rollout": "#2ca02c",
    "event": "#ff7f0e",
    "static": "#4d4d4d",
}


def save_deterministic_svg(fig, path: str | Path) -> None:
    plt.rcParams["svg.hashsalt"] = _HASH_SALT
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def _adversary_id(s: Scenario) -> str | None:
    if s.provenance is not None and s.provenance.transform == "adversary":
        target = s.provenance.params.get("target")
        return target if isinstance(target, str) else None
    return None


def _draw_box(ax, box: OrientedBox, color: str, gid: str, alpha: float = 0.9) -> None:
    patch = MplPolygon(box.corners(), closed=True, facecolor=color, edgecolor="black", linewidth=0.5, alpha=alpha)
    patch.set_gid(gid)
    ax.add_patch(patch)


def draw_scenario(ax, s: Scenario, t: float, clip: ClipResult | None = None) -> None:
    """Layered BEV frame: map, trajectories, then agent boxes at time t."""
    for i, poly in enumerate(s.map.drivable):
        patch = MplPolygon(poly.vertices, closed=True, facecolor=_COLORS["drivable"], edgecolor="none", zorder=0)
        patch.set_gid(f"drivable-{i}")
        ax.add_patch(patch)
    for lane in s.map.lanes:
        pts = lane.centerline.points
        ax.plot(pts[:, 0], pts[:, 1], linestyle="--", linewidth=0.8, color=_COLORS["lane"], zorder=1, gid=f"lane-{lane.id}")

    adversary = _adversary_id(s)
    expert_xy = s.ego.trajectory.positions
    ax.plot(expert_xy[:, 0], expert_xy[:, 1], color=_COLORS["expert"], linewidth=1.2, zorder=2, gid="traj-ego-expert")
    for agent in s.others:
        xy = agent.trajectory.positions
        color = _COLORS["adversary"] if agent.id == adversary else _COLORS["other"]
        ax.plot(xy[:, 0], xy[:, 1], color=color, linewidth=0.8, zorder=2, gid=f"traj-{agent.id}")
    if clip is not None and clip.states:
        xy = np.array([[st.pose.x, st.pose.y] for st in clip.states])
        ax.plot(xy[:, 0], xy[:, 1], color=_COLORS["rollout"], linewidth=1.2, zorder=3, gid="traj-ego-rollout")
        for e in clip.events:
            if e.kind.endswith("COLLISION"):
                st = min(clip.states, key=lambda st: abs(st.t - e.t))
                ax.plot([st.pose.x], [st.pose.y], marker="x", markersize=8, color=_COLORS["event"], zorder=5, gid=f"event-{e.kind}")

    if clip is not None and clip.states:
        nearest = min(clip.states, key=lambda st: abs(st.t - t))
        ego_pose = nearest.pose
    else:
        ego_pose = s.ego.trajectory.sample_at(t).pose
    _draw_box(ax, OrientedBox(ego_pose, s.ego.half_length, s.ego.half_width), _COLORS["ego"], f"agent-box-{s.ego.id}")
    for agent in s.others:
        pose = agent.trajectory.sample_at(t).pose
        if agent.id == adversary:
            color = _COLORS["adversary"]
        elif agent.category == "STATIC_OBSTACLE":
            color = _COLORS["static"]
        else:
            color = _COLORS["other"]
        _draw_box(ax, OrientedBox(pose, agent.half_length, agent.half_width), color, f"agent-box-{agent.id}")

    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{s.id}  t={t:.2f}s")


def render_scenario_svg(s: Scenario, t: float, path: str | Path, clip: ClipResult | None = None) -> None:
    fig, ax = plt.subplots(figsize=(8, 8))
    draw_scenario(ax, s, t, clip)
    save_deterministic_svg(fig, path)


def render_metrics_svg(rows: list[tuple[str, dict]], path: str | Path) -> None:
    """Grouped bar chart over the six ratios, one group per report."""
    from .metrics import METRIC_COLUMNS

    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = np.arange(len(METRIC_COLUMNS))
    width = 0.8 / max(len(rows), 1)
    for i, (name, report) in enumerate(rows):
        values = [report.get(c) or 0.0 for c in METRIC_COLUMNS]
        ax.bar(x + i * width, values, width, label=name, gid=f"bars-{name}")
    ax.set_xticks(x + 0.4 - width / 2.0)
    ax.set_xticklabels([c.upper() for c in METRIC_COLUMNS])
    ax.set_ylabel("ratio")
    ax.set_title("collision / deviation ratios")
    ax.legend()
    save_deterministic_svg(fig, path)
