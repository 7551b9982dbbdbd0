"""Batch command-line front end.

Subcommands: validate, adversary, augment, evaluate, render, stats. Every
subcommand is a thin shell over the library; stdout carries data and tables,
stderr carries diagnostics. The default evaluate config path can be set via
the BEVSIM_CONFIG environment variable.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import ctg, daa, metrics, render
from .kinematics import CATEGORY_PARAMS, KinematicParams
from .scenario import (
    ParseError,
    Scenario,
    SchemaError,
    ValidationError,
    canonical_json,
    load_scenario,
    save_scenario,
)
from .simulator import (
    DaaConfig,
    DeviationThresholds,
    POLICY_BUILDERS,
    read_clips,
    run_batch,
    write_clips,
)

CONFIG_ENV_VAR = "BEVSIM_CONFIG"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_CANDIDATE = 2
EXIT_INFEASIBLE = 3


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _expand_paths(patterns: list[str]) -> list[Path]:
    out: list[Path] = []
    for pattern in patterns:
        matches = sorted(glob.glob(pattern))
        if matches:
            out.extend(Path(m) for m in matches)
        else:
            out.append(Path(pattern))
    return out


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args: argparse.Namespace) -> int:
    failures = 0
    for path in _expand_paths(args.paths):
        try:
            load_scenario(path)
        except (ParseError, SchemaError, ValidationError, OSError) as e:
            print(f"FAIL {path}: {e}")
            failures += 1
            continue
        print(f"PASS {path}")
    return EXIT_OK if failures == 0 else EXIT_ERROR


# ---------------------------------------------------------------------------
# adversary


def _load_behavior(kind: str, catalog_path: str | None) -> daa.BehaviorSpec:
    catalog = daa.load_catalog(catalog_path) if catalog_path else daa.default_catalog()
    if kind not in catalog:
        raise KeyError(f"behavior kind '{kind}' not in catalog ({', '.join(sorted(catalog))})")
    return catalog[kind]


def cmd_adversary(args: argparse.Namespace) -> int:
    s = load_scenario(args.scenario)
    behavior = _load_behavior(args.behavior, args.catalog)
    target = daa.select_target(s, behavior)
    if target is None:
        _err(f"no candidate target for behavior {args.behavior}")
        return EXIT_NO_CANDIDATE
    try:
        traj = daa.synthesize_adversary(s, target, behavior)
    except daa.SynthesisFailed as e:
        if e.report is not None:
            _err(f"infeasible adversary trajectory for target '{target}':")
            _err(str(e.report))
            return EXIT_INFEASIBLE
        _err(f"synthesis failed for target '{target}': {e.reason}")
        return EXIT_NO_CANDIDATE
    if args.perturb:
        traj = daa.perturb(traj, args.seed)
    edited = s.with_agent_trajectory(target, traj)
    edited = ctg.with_provenance(
        edited,
        new_id=f"{s.id}--adv-{args.behavior}",
        transform="adversary",
        params={"behavior": args.behavior, "target": target, "seed": args.seed, "perturbed": bool(args.perturb)},
    )
    save_scenario(edited, args.out)
    print(f"{args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# augment


def _default_window(s: Scenario) -> tuple[float, float]:
    return (0.2 * s.horizon, 0.8 * s.horizon)


def cmd_augment(args: argparse.Namespace) -> int:
    paths = _expand_paths(args.paths)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    originals: list[Scenario] = []
    cousins: list[Scenario] = []
    had_error = False
    for path in paths:
        try:
            s = load_scenario(path)
        except (ParseError, SchemaError, ValidationError, OSError) as e:
            _err(f"skip {path}: {e}")
            had_error = True
            continue
        originals.append(s)
        if args.mode == "interpolate":
            cfg = ctg.InterpolationConfig(m=args.m)
            cousin = ctg.with_provenance(
                ctg.adjust_neighbors(s, cfg),
                new_id=f"{s.id}--interp-m{args.m}",
                transform="interpolate",
                params={"m": args.m},
            )
            cousins.append(cousin)
        else:
            window = tuple(args.window) if args.window else _default_window(s)
            for kind in args.kinds:
                spec = ctg.ExtensionSpec(
                    kind=kind,
                    window=window,
                    offset=args.offset,
                    radius=args.radius,
                )
                try:
                    new_ego_traj = ctg.extend(s, spec, d_min=args.d_min)
                except ctg.ExtensionFailed as e:
                    _err(f"skip {path} [{kind}]: {e.reason}")
                    continue
                cousin = replace(s, ego=replace(s.ego, trajectory=new_ego_traj))
                cousins.append(
                    ctg.with_provenance(
                        cousin,
                        new_id=f"{s.id}--ext-{kind}",
                        transform="extend",
                        params={"kind": kind, "window": list(window)},
                    )
                )
    for cousin in cousins:
        out_path = out_dir / f"{cousin.id}.json"
        save_scenario(cousin, out_path)
        print(str(out_path))
    if args.stats:
        before = ctg.dataset_stats(originals)
        after = before + ctg.dataset_stats(cousins)
        print(f"before: {before}")
        print(f"after:  {after}")
    return EXIT_ERROR if had_error else EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


_CONFIG_KEYS = {"scenarios", "policy", "daa", "thresholds", "seed", "workers", "out_dir", "kinematics"}


def _apply_kinematics_table(table: dict) -> None:
    for category, obj in table.items():
        CATEGORY_PARAMS[category] = KinematicParams(
            wheelbase=float(obj["L"]),
            delta_max=float(obj["delta_max"]),
            v_max=float(obj["v_max"]),
            v_min=float(obj.get("v_min", 0.0)),
            a_max=float(obj["a_max"]),
        )


def _load_run_config(path: Path, args: argparse.Namespace) -> dict:
    cfg = json.loads(path.read_text(encoding="utf-8"))
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise SchemaError(f"unknown config field '{sorted(unknown)[0]}'")
    if args.workers is not None:
        cfg["workers"] = args.workers
    if args.out_dir is not None:
        cfg["out_dir"] = args.out_dir
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    cfg.setdefault("workers", 1)
    if int(cfg["workers"]) < 1:
        raise ValueError("worker count must be >= 1")
    if "scenarios" not in cfg or "out_dir" not in cfg:
        raise SchemaError("config needs 'scenarios' and 'out_dir'")
    return cfg


def cmd_evaluate(args: argparse.Namespace) -> int:
    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if not config_path:
        _err(f"no config given (pass --config or set {CONFIG_ENV_VAR})")
        return EXIT_ERROR
    cfg = _load_run_config(Path(config_path), args)
    if "kinematics" in cfg:
        _apply_kinematics_table(cfg["kinematics"])

    patterns = cfg["scenarios"] if isinstance(cfg["scenarios"], list) else [cfg["scenarios"]]
    scenarios = [load_scenario(p) for p in _expand_paths(patterns)]

    policy_cfg = cfg.get("policy", {"name": "expert_replay", "params": {}})
    builder = POLICY_BUILDERS.get(policy_cfg["name"])
    if builder is None:
        _err(f"unknown policy '{policy_cfg['name']}' (have {', '.join(sorted(POLICY_BUILDERS))})")
        return EXIT_ERROR
    policy = builder(**policy_cfg.get("params", {}))

    daa_config = None
    if "daa" in cfg and cfg["daa"]:
        dcfg = cfg["daa"]
        behavior = _load_behavior(dcfg["behavior"], dcfg.get("catalog"))
        daa_config = DaaConfig(
            behavior=behavior,
            p_perturb=float(dcfg.get("p_perturb", 0.5)),
            perturb_bounds=tuple(dcfg.get("perturb_bounds", (0.8, 1.2))),
        )

    th = cfg.get("thresholds", {})
    thresholds = DeviationThresholds(
        position=float(th.get("position", 2.0)), heading=float(th.get("heading", 0.52))
    )

    clips = run_batch(
        scenarios,
        policy,
        daa_config=daa_config,
        thresholds=thresholds,
        seed=int(cfg["seed"]),
        workers=int(cfg["workers"]),
    )

    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_clips(clips, out_dir / "clips.jsonl")
    report = metrics.aggregate(clips, thresholds)
    report_dict = metrics.report_to_dict(report)
    (out_dir / "report.json").write_text(canonical_json(report_dict) + "\n", encoding="utf-8")
    table = metrics.compare([(policy_cfg["name"], report)])
    (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
    (out_dir / "report.csv").write_text(metrics.reports_to_csv([(policy_cfg["name"], report)]), encoding="utf-8")
    render.render_metrics_svg([(policy_cfg["name"], report_dict)], out_dir / "report.svg")
    print(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# render


def cmd_render(args: argparse.Namespace) -> int:
    s = load_scenario(args.scenario)
    clip = None
    if args.clip:
        clips = read_clips(args.clip)
        matching = [c for c in clips if c.scenario_id == s.id]
        pool = matching or clips
        if not pool:
            _err(f"no clips in {args.clip}")
            return EXIT_ERROR
        clip = pool[args.clip_index]
    out = Path(args.out)
    if args.all:
        grid = s.grid()
        for i, t in enumerate(grid):
            frame = out.with_name(f"{out.stem}_{i:04d}{out.suffix}")
            render.render_scenario_svg(s, t, frame, clip)
            print(str(frame))
    else:
        render.render_scenario_svg(s, args.time, out, clip)
        print(str(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# stats


def cmd_stats(args: argparse.Namespace) -> int:
    scenarios = [load_scenario(p) for p in _expand_paths(args.paths)]
    print(str(ctg.dataset_stats(scenarios)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bevsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate scenario files")
    p.add_argument("paths", nargs="+", help="scenario files or globs")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("adversary", help="inject a behavior-conditioned adversary")
    p.add_argument("scenario")
    p.add_argument("--behavior", required=True, choices=daa.BEHAVIOR_KINDS)
    p.add_argument("--catalog", help="behavior catalog JSON (default: shipped catalog)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", action="store_true", help="apply the seeded speed perturbation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("augment", help="generate cousin scenarios")
    p.add_argument("paths", nargs="+")
    p.add_argument("--mode", choices=("interpolate", "extend"), required=True)
    p.add_argument("--m", type=int, default=1, help="interpolation points per gap")
    p.add_argument("--kinds", nargs="+", default=["LaneChangeLeft", "LaneChangeRight"], choices=ctg.EXTENSION_KINDS)
    p.add_argument("--window", nargs=2, type=float, metavar=("T0", "T1"))
    p.add_argument("--offset", type=float, default=0.0, help="LaneShift lateral offset")
    p.add_argument("--radius", type=float, default=0.0, help="SharpTurn radius")
    p.add_argument("--d-min", type=float, default=1.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stats", action="store_true", help="print before/after action histograms")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="closed-loop batch evaluation")
    p.add_argument("--config", help=f"run config JSON (default: ${CONFIG_ENV_VAR})")
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="render BEV SVG snapshots")
    p.add_argument("scenario")
    p.add_argument("-t", "--time", type=float, default=0.0)
    p.add_argument("--all", action="store_true", help="one frame per grid step")
    p.add_argument("--clip", help="clips.jsonl to overlay the rollout from")
    p.add_argument("--clip-index", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("stats", help="action-distribution histogram for a corpus")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, SchemaError, ValidationError) as e:
        _err(f"error: {e}")
        return EXIT_ERROR
    except (OSError, KeyError, ValueError) as e:
        _err(f"error: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
