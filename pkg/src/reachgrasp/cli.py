"""Command-line entry point: field, synthesize, eval, scene-gen.

Exit codes: 0 success, 2 infeasible scene, 3 optimization abort, 4 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__, configure_threads
from .body.kinematics import forward_kinematics
from .body.reach import UnreachableTarget
from .body.skeleton import default_skeleton
from .geometry.io import write_obj
from .geometry.mesh import MeshError
from .hand import write_hand_json, write_hand_obj
from .metrics import MetricsReport, aggregate_rows, write_aggregate_csv
from .optimize.solver import LossWeights, OptimizationAborted, OptimizerConfig
from .pipeline import InfeasibleScene, Sample, SynthesisResult, synthesize
from .reachingfield import DEFAULT_DIRECTIONS, FieldError, build_field, write_field_json, write_field_ply
from .scene import (
    BATTERY_HEIGHTS,
    OBJECT_KINDS,
    RECEPTACLE_KINDS,
    SceneConfig,
    SceneError,
    build_scene,
    load_scene,
    make_object,
    write_scene,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_ABORT = 3
EXIT_IO = 4

log = logging.getLogger("reachgrasp")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _content_hash(config: SceneConfig, scene_path: Path, extra: dict) -> str:
    """sha256 over the scene file, every mesh it references and the effective settings."""
    h = hashlib.sha256()
    files = [scene_path, config.resolve(config.object_mesh), config.resolve(config.receptacle_mesh)]
    files += [config.resolve(o) for o in config.occluders]
    for f in files:
        data = Path(f).read_bytes()
        h.update(len(data).to_bytes(8, "little"))
        h.update(data)
    h.update(json.dumps(extra, sort_keys=True).encode("utf-8"))
    return h.hexdigest()


def _write_manifest(out: Path, command: str, args: argparse.Namespace, config_path, seed, content_hash: str,
                    settings: dict) -> None:
    # written before any other output; wall-clock timings go to timings.json
    _dump(out / "manifest.json", {
        "command": command,
        "version": __version__,
        "config": None if config_path is None else str(config_path),
        "scene": str(args.scene),
        "seed": seed,
        "content_hash": content_hash,
        "output_directory": str(out),
        "settings": settings,
        "timings_file": "timings.json",
    })


def _load_run_config(path) -> dict:
    if path is None:
        return {}
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(d, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return d


def _settings(args: argparse.Namespace, cfg: dict, scene_cfg: SceneConfig) -> dict:
    """Effective settings: config file first, flags override."""
    opt = dict(cfg.get("optimizer", {}))
    if args.stage1_iters is not None:
        opt["stage1_iters"] = args.stage1_iters
    if args.stage2_iters is not None:
        opt["stage2_iters"] = args.stage2_iters
    opt_cfg = OptimizerConfig(**{k: (tuple(v) if k == "adam_betas" else v) for k, v in opt.items()})
    weights = LossWeights(**cfg.get("weights", {}))
    return {
        "seed": args.seed if args.seed is not None else int(cfg.get("seed", scene_cfg.seed)),
        "hand": args.hand or cfg.get("hand", scene_cfg.handedness),
        "rays": args.rays if args.rays is not None else int(cfg.get("rays", DEFAULT_DIRECTIONS)),
        "samples": args.samples if args.samples is not None else int(cfg.get("samples", 1)),
        "weights": asdict(weights),
        "optimizer": asdict(opt_cfg),
    }


def _write_sample(d: Path, s: Sample) -> None:
    d.mkdir(parents=True, exist_ok=True)
    skel = default_skeleton()
    st = forward_kinematics(skel, s.final_pose)
    write_obj(d / "body.obj", st.mesh(), header="refined body (capsule mesh)")
    _dump(d / "body.json", {
        "final_pose": s.final_pose.to_dict(),
        "reach_pose": s.reach_pose.to_dict(),
        "ray_index": s.ray_index,
        "d_arm": s.d_arm.tolist(),
        "d_grasp": s.d_grasp.tolist(),
        "rejected_directions": s.rejected,
        "trace": s.trace.to_dict(),
    })
    write_hand_json(d / "hand.json", s.hand)
    write_hand_obj(d / "hand.obj", s.hand)
    s.trace.write_csv(d / "trace.csv")
    s.metrics.write_json(d / "metrics.json")


def cmd_field(args: argparse.Namespace) -> int:
    scene_cfg = SceneConfig.from_json(args.scene)
    scene = load_scene(scene_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hand = args.hand or scene_cfg.handedness
    settings = {"rays": args.rays, "hand": hand}
    _write_manifest(out, "field", args, None, args.seed, _content_hash(scene_cfg, Path(args.scene), settings),
                    settings)
    t = time.perf_counter()
    try:
        fld = build_field(scene, args.rays, hand)
    except FieldError as exc:
        _dump(out / "report.json", {"error": str(exc), "filter_report": exc.report})
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    write_field_json(out / "field.json", fld)
    write_field_ply(out / "field.ply", fld)
    _dump(out / "timings.json", {"field": time.perf_counter() - t})
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace) -> int:
    scene_cfg = SceneConfig.from_json(args.scene)
    cfg = _load_run_config(args.config)
    settings = _settings(args, cfg, scene_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "synthesize", args, args.config, settings["seed"],
                    _content_hash(scene_cfg, Path(args.scene), settings), settings)
    scene = load_scene(scene_cfg)
    weights = LossWeights(**settings["weights"])
    opt = settings["optimizer"]
    opt_cfg = OptimizerConfig(**{**opt, "adam_betas": tuple(opt["adam_betas"])})
    try:
        res: SynthesisResult = synthesize(scene, settings["seed"], settings["hand"], settings["samples"],
                                          weights, opt_cfg, settings["rays"])
    except (FieldError, InfeasibleScene, UnreachableTarget) as exc:
        _dump(out / "report.json", {"error": str(exc), "report": getattr(exc, "report", {})})
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except OptimizationAborted as exc:
        _dump(out / "report.json", {"error": str(exc), "iteration": exc.iteration, "term": exc.term,
                                    "stage": exc.stage})
        log.error("%s", exc)
        return EXIT_ABORT
    write_field_json(out / "field.json", res.field)
    write_field_ply(out / "field.ply", res.field)
    if len(res.samples) == 1:
        _write_sample(out, res.samples[0])
    else:
        for k, s in enumerate(res.samples):
            _write_sample(out / f"sample_{k:02d}", s)
        _dump(out / "diversity.json", {"samples": len(res.samples), "pose_diversity_cm": res.pose_diversity})
    _dump(out / "timings.json", res.timings)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    named = []
    for run in args.runs:
        run = Path(run)
        paths = [run / "metrics.json"] if (run / "metrics.json").exists() else sorted(run.glob("sample_*/metrics.json"))
        if not paths:
            log.warning("skipping %s: no metrics.json", run)
            continue
        for p in paths:
            try:
                d = json.loads(p.read_text(encoding="utf-8"))
                timing = p.parent / "timings.json"
                if not timing.exists():
                    timing = run / "timings.json"
                if timing.exists() and d.get("runtime") is None:
                    d["runtime"] = json.loads(timing.read_text(encoding="utf-8")).get("total")
                named.append((str(p.parent), MetricsReport.from_dict(d)))
            except (ValueError, TypeError, KeyError) as exc:
                log.warning("skipping %s: %s", p, exc)
    if not named:
        log.error("no readable metrics among %d run(s)", len(args.runs))
        return EXIT_IO
    rows = aggregate_rows(named)
    write_aggregate_csv(args.out, rows)
    return EXIT_OK


def cmd_scene_gen(args: argparse.Namespace) -> int:
    heights = [args.height] if args.height is not None else list(BATTERY_HEIGHTS[args.kind])
    out = Path(args.out)
    for h in heights:
        scene, pose = build_scene(args.kind, h, args.object, handedness=args.hand or "right", seed=args.seed)
        d = out if len(heights) == 1 else out / f"{args.kind}_{h:.2f}"
        write_scene(d, scene, pose, make_object(args.object), args.seed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reachgrasp", description="Whole-body reach-and-grasp synthesis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("field", help="compute and export the approach-direction field")
    f.add_argument("scene")
    f.add_argument("--rays", type=int, default=DEFAULT_DIRECTIONS)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--hand", choices=("right", "left"))
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_field)

    s = sub.add_parser("synthesize", help="sample a direction and refine a whole-body grasp")
    s.add_argument("scene")
    s.add_argument("--seed", type=int)
    s.add_argument("--hand", choices=("right", "left"))
    s.add_argument("--samples", type=int, help="independent directions to synthesize (default 1)")
    s.add_argument("--rays", type=int)
    s.add_argument("--config", help="JSON with weights/optimizer/seed/hand/rays/samples")
    s.add_argument("--stage1-iters", type=int)
    s.add_argument("--stage2-iters", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synthesize)

    e = sub.add_parser("eval", help="aggregate metrics.json files into a CSV")
    e.add_argument("runs", nargs="+")
    e.add_argument("--out", default="aggregate.csv")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("scene-gen", help="write a procedural scene (meshes + scene.json)")
    g.add_argument("--kind", choices=RECEPTACLE_KINDS, default="table")
    g.add_argument("--height", type=float, help="receptacle height; all battery heights when omitted")
    g.add_argument("--object", choices=tuple(OBJECT_KINDS), default="box")
    g.add_argument("--hand", choices=("right", "left"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_scene_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    configure_threads()
    try:
        return args.func(args)
    except (SceneError, MeshError) as exc:
        log.error("infeasible scene: %s", exc)
        return EXIT_INFEASIBLE
    except (OSError, json.JSONDecodeError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (TypeError, ValueError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
