"""Command-line entry points wiring the pipeline end to end.

Four subcommands:

``platesim recon``
    Build a scene's items from depth (optionally from external PFM/PGM
    files), write per-item meshes, a particle checkpoint, and a volume
    table.

``platesim sim``
    Settle a scene (or resume a checkpoint), optionally run one action
    or a fixed extra duration, and write the final checkpoint, rendered
    depth/mask, and a metrics CSV.

``platesim plan``
    Run the threshold-and-explore planner and write the plan report
    plus per-candidate artifacts.

``platesim verify``
    Run the acceptance checks and print a pass/fail table.

Every file-producing command renders PNG figures next to the delimited
output. Exit codes: 0 success, 2 bad configuration or input data,
3 simulation failure, 4 verification failure. All file outputs are
deterministic for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .actions import ActionKind, ActionSpec, plan_action
from .depthio import write_pfm, write_pgm
from .errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyItemError,
    InfeasibleActionError,
    MaterialError,
    OpenMeshError,
    PlatesimError,
    SamplingError,
    SimulationError,
    TooFewParticlesError,
    TrajectoryError,
)
from .figures import candidates_figure, depth_figure, mask_figure, metrics_figure
from .mpm import load_checkpoint, save_checkpoint
from .recon import export_obj
from .render import RenderPolicy, rollout_with_policy
from .report import (
    MetricsRecorder,
    candidates_csv,
    estimates_lines,
    metrics_csv,
    plan_report,
    volumes_csv,
)
from .planner import execute as planner_execute
from .planner import plan as planner_plan
from .scene import (
    SceneConfig,
    build_scene,
    canonical_scene,
    canonical_scene_names,
)

__all__ = [
    "main",
    "run_recon",
    "run_sim",
    "run_plan",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_SIM",
    "EXIT_VERIFY",
    "OUT_DIR_ENV",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIM = 3
EXIT_VERIFY = 4

OUT_DIR_ENV = "PLATESIM_OUT_DIR"

# Bad configuration or bad input data: out before any physics runs.
_CONFIG_ERRORS = (
    ConfigError,
    MaterialError,
    DimensionMismatchError,
    EmptyItemError,
    OpenMeshError,
    SamplingError,
    TooFewParticlesError,
    TrajectoryError,
)

_ACTION_CHOICES = ("none", "push+x", "push-x", "push+z", "push-z", "cut", "flip")


def _load_config(value: str) -> tuple[SceneConfig, Optional[Path]]:
    """Accept a YAML path or the bare name of a shipped scene."""
    path = Path(value)
    if path.is_file():
        return SceneConfig.from_yaml(path), path.parent
    if "/" not in value and not value.endswith(".yaml"):
        names = canonical_scene_names()
        if value in names:
            return canonical_scene(value), None
        raise ConfigError(
            f"--config {value!r}: no such file, and not a shipped scene "
            f"(shipped: {names})"
        )
    raise ConfigError(f"--config {value!r}: file not found")


def _apply_overrides(config: SceneConfig, args) -> SceneConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "grid", None) is not None:
        changes["grid_dims"] = args.grid
    if getattr(args, "render_mode", None) is not None:
        changes["render_mode"] = args.render_mode
    if changes:
        config = config.with_overrides(**changes)
    return config


def _resolve_out_dir(args) -> Path:
    out = getattr(args, "out_dir", None) or os.environ.get(OUT_DIR_ENV) or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _action_spec(name: str, item_id: int, params) -> ActionSpec:
    if name.startswith("push"):
        return ActionSpec(ActionKind.PUSH, item_id, name[4:], params)
    return ActionSpec(name, item_id, params=params)


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    print(f"wrote {path}")
    return path


def run_recon(
    config: SceneConfig,
    out_dir: Path,
    config_dir: Optional[Path] = None,
    depth_file: Optional[str] = None,
    mask_file: Optional[str] = None,
    pitch: Optional[float] = None,
):
    """Reconstruct every item, then write meshes, checkpoint, volumes.

    When ``depth_file``/``mask_file`` are given, every item's source is
    redirected to those files with its own id as the mask label; the
    config keeps supplying categories and materials.
    """
    if (depth_file is None) != (mask_file is None):
        raise ConfigError("--depth and --mask must be given together")
    if depth_file is not None:
        px = pitch if pitch is not None else float(config.recon["pitch"])
        items = tuple(
            replace(
                item,
                source={
                    "kind": "heightmap",
                    "path": str(depth_file),
                    "mask": str(mask_file),
                    "label": item.item_id,
                    "pitch": px,
                },
            )
            for item in config.items
        )
        config = config.with_overrides(items=items)
    bundle = build_scene(config, config_dir)
    categories = {item.item_id: item.category for item in config.items}
    counts = {
        iid: int(np.count_nonzero(bundle.world.item_id == iid))
        for iid in bundle.volumes
    }
    table = volumes_csv(bundle.volumes, categories, counts)
    _write(out_dir / "volumes.csv", table)
    for iid, mesh in sorted(bundle.meshes.items()):
        obj_path = out_dir / f"item_{iid}.obj"
        export_obj(obj_path, mesh)
        print(f"wrote {obj_path}")
    ckpt = out_dir / "particles.ckpt"
    save_checkpoint(bundle.world, ckpt)
    print(f"wrote {ckpt}")
    depth, mask = bundle.render()
    write_pfm(out_dir / "depth.pfm", depth)
    write_pgm(out_dir / "mask.pgm", mask)
    depth_figure(depth, out_dir / "depth.png", title=f"{config.name}: depth")
    mask_figure(
        mask, bundle.camera.pixel_pitch, out_dir / "mask.png",
        title=f"{config.name}: masks",
    )
    print(table, end="")
    return bundle


def run_sim(
    config: SceneConfig,
    out_dir: Path,
    config_dir: Optional[Path] = None,
    action: str = "none",
    item: Optional[int] = None,
    duration: float = 0.0,
    from_checkpoint: Optional[str] = None,
):
    """Settle (or resume), optionally act, then write state + metrics."""
    bundle = build_scene(config, config_dir)
    world = bundle.world
    recorder = MetricsRecorder()
    if from_checkpoint is not None:
        load_checkpoint(world, from_checkpoint)
    elif config.settle_time > 0:
        world.run(config.settle_time, progress=recorder.probe)
    if not recorder.rows:
        recorder.sample(world)
    policy = RenderPolicy.from_name(config.render_mode)
    monitor_fired = False
    if action != "none":
        ids = sorted({int(i) for i in np.unique(world.item_id)})
        target = item if item is not None else ids[0]
        if target not in ids:
            raise ConfigError(f"--item {target}: scene has items {ids}")
        spec = _action_spec(action, target, config.actions)
        trajectory, monitor = plan_action(world, spec)
        rollout = rollout_with_policy(
            world,
            trajectory,
            policy,
            bundle.camera,
            tool_index=bundle.fork_index,
            monitor=monitor,
            settle_time=config.actions.settle_time,
            probe=recorder.step_probe,
        )
        depth, mask = rollout.depth, rollout.mask
        monitor_fired = rollout.monitor_fired
    elif duration > 0:
        rollout = rollout_with_policy(
            world, None, policy, bundle.camera,
            duration=duration, probe=recorder.step_probe,
        )
        depth, mask = rollout.depth, rollout.mask
    else:
        depth, mask = bundle.render()
    if recorder.rows[-1]["step"] != world.step_count:
        recorder.sample(world)

    ckpt = out_dir / "final.ckpt"
    save_checkpoint(world, ckpt)
    print(f"wrote {ckpt}")
    write_pfm(out_dir / "depth.pfm", depth)
    write_pgm(out_dir / "mask.pgm", mask)
    _write(out_dir / "metrics.csv", metrics_csv(recorder))
    depth_figure(depth, out_dir / "depth.png", title=f"{config.name}: final depth")
    mask_figure(
        mask, bundle.camera.pixel_pitch, out_dir / "mask.png",
        title=f"{config.name}: final masks",
    )
    metrics_figure(recorder, out_dir / "metrics.png")
    com = world.com()
    print(
        f"steps={world.step_count} t={world.t:.4f}s "
        f"com=({com[0]:.6f}, {com[1]:.6f}, {com[2]:.6f})"
        + (f" monitor_fired={monitor_fired}" if action != "none" else "")
    )
    return world, recorder


def run_plan(
    config: SceneConfig,
    out_dir: Path,
    config_dir: Optional[Path] = None,
    workers: Optional[int] = None,
    do_execute: bool = False,
):
    """Settle, plan (optionally execute), and write report + artifacts."""
    if workers is not None:
        config = config.with_overrides(
            planner=replace(config.planner, workers=workers)
        )
    bundle = build_scene(config, config_dir)
    bundle.settle()
    depth_pre, mask_pre = bundle.render()
    result = planner_plan(
        bundle.world,
        bundle.observer(),
        bundle.rollout_fn(),
        bundle.config.planner,
        bundle.config.actions,
    )
    trace = None
    if do_execute:
        trace = planner_execute(
            bundle.world,
            result,
            bundle.observer(),
            bundle.rollout_fn(),
            bundle.config.planner,
        )
    report = plan_report(bundle.config, result, trace)
    _write(out_dir / "report.txt", report)
    _write(out_dir / "candidates.csv", candidates_csv(result))
    write_pfm(out_dir / "depth_pre.pfm", depth_pre)
    write_pgm(out_dir / "mask_pre.pgm", mask_pre)
    depth_figure(depth_pre, out_dir / "depth_pre.png", title=f"{config.name}: pre")
    mask_figure(
        mask_pre, bundle.camera.pixel_pitch, out_dir / "mask_pre.png",
        title=f"{config.name}: pre masks",
    )
    candidates_figure(
        result, bundle.config.planner.threshold, out_dir / "candidates.png"
    )
    if trace is not None:
        depth_post, mask_post = bundle.render()
        write_pfm(out_dir / "depth_post.pfm", depth_post)
        write_pgm(out_dir / "mask_post.pgm", mask_post)
        depth_figure(
            depth_post, out_dir / "depth_post.png", title=f"{config.name}: post"
        )
    print(report, end="")
    return result, trace


def _cmd_recon(args) -> int:
    config, config_dir = _load_config(args.config)
    config = _apply_overrides(config, args)
    out_dir = _resolve_out_dir(args)
    run_recon(
        config, out_dir, config_dir,
        depth_file=args.depth, mask_file=args.mask, pitch=args.pitch,
    )
    return EXIT_OK


def _cmd_sim(args) -> int:
    config, config_dir = _load_config(args.config)
    config = _apply_overrides(config, args)
    out_dir = _resolve_out_dir(args)
    run_sim(
        config, out_dir, config_dir,
        action=args.action, item=args.item,
        duration=args.duration, from_checkpoint=args.from_checkpoint,
    )
    return EXIT_OK


def _cmd_plan(args) -> int:
    config, config_dir = _load_config(args.config)
    config = _apply_overrides(config, args)
    out_dir = _resolve_out_dir(args)
    workers = args.workers if args.workers is not None else os.cpu_count() or 1
    run_plan(config, out_dir, config_dir, workers=workers, do_execute=args.execute)
    return EXIT_OK


def _cmd_verify(args) -> int:
    from . import verify

    if args.list:
        for name in verify.check_names():
            print(name)
        return EXIT_OK
    results = verify.run_checks(names=args.only or None, echo=True)
    print()
    print(verify.summary_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platesim",
        description="Desk-scale food manipulation: reconstruct, simulate, plan.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--config", required=True,
            help="scene YAML path, or the name of a shipped scene "
            f"({', '.join(canonical_scene_names())})",
        )
        p.add_argument("--seed", type=int, help="override the scene seed")
        p.add_argument(
            "--grid", type=int, help="override grid resolution (cells per axis)"
        )
        p.add_argument(
            "--render-mode", choices=["on-demand", "every-step"],
            help="override the scene's render policy",
        )
        p.add_argument(
            "--out-dir",
            help=f"output directory (default: ${OUT_DIR_ENV} or ./out)",
        )

    p_recon = sub.add_parser(
        "recon", help="reconstruct items into meshes, particles, and volumes"
    )
    common(p_recon)
    p_recon.add_argument("--depth", help="PFM depth image replacing item sources")
    p_recon.add_argument("--mask", help="PGM label mask paired with --depth")
    p_recon.add_argument(
        "--pitch", type=float, help="pixel pitch of --depth in metres"
    )
    p_recon.set_defaults(func=_cmd_recon)

    p_sim = sub.add_parser(
        "sim", help="settle a scene, optionally run one action, write state"
    )
    common(p_sim)
    p_sim.add_argument(
        "--action", choices=_ACTION_CHOICES, default="none",
        help="action to run after settling (default: none)",
    )
    p_sim.add_argument("--item", type=int, help="target item id (default: lowest)")
    p_sim.add_argument(
        "--duration", type=float, default=0.0,
        help="extra tool-free simulation time in seconds (with --action none)",
    )
    p_sim.add_argument(
        "--from-checkpoint", help="resume particle state instead of settling"
    )
    p_sim.set_defaults(func=_cmd_sim)

    p_plan = sub.add_parser("plan", help="run the pre-acquisition planner")
    common(p_plan)
    p_plan.add_argument(
        "--workers", type=int,
        help="parallel rollout workers (default: available cores)",
    )
    p_plan.add_argument(
        "--execute", action="store_true",
        help="also execute the chosen action on the live world",
    )
    p_plan.set_defaults(func=_cmd_plan)

    p_verify = sub.add_parser("verify", help="run the acceptance checks")
    p_verify.add_argument(
        "--only", nargs="*", metavar="NAME",
        help="run only the named checks (see --list)",
    )
    p_verify.add_argument(
        "--list", action="store_true", help="list check names and exit"
    )
    p_verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, InfeasibleActionError) as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return EXIT_SIM
    except PlatesimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
