"""Command-line entry point: ``pvgen journey run | render | sample | agent probe``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def cmd_journey_run(args) -> dict:
    from .config import JourneyConfig
    from .pipeline import run_journey

    cfg = JourneyConfig.load(args.config) if args.config else JourneyConfig()
    over = {"output_dir": str(args.out)}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.cycles is not None:
        over["cycles"] = args.cycles
    if args.agent is not None:
        over["agent"] = replace(cfg.agent, kind=args.agent)
    cfg = replace(cfg, **over)
    record = run_journey(cfg)
    return {
        "status": "ok",
        "out": str(args.out),
        "segments": [s.kind for s in record.segments],
        "point_cloud_stats": list(record.point_cloud_stats),
    }


def _scene_and_trajectory(path):
    from .config import JourneyConfig
    from .synth import SceneSpec

    d = _load_json(path)
    if "layers" in d:
        cfg = JourneyConfig(scene=SceneSpec(**d))
    else:
        cfg = JourneyConfig.from_dict(d)
    return cfg


def cmd_render(args) -> dict:
    from .geometry import CameraPose
    from .imageio import png_bytes
    from .synth import render_world
    from .trajectory import make_path

    cfg = _scene_and_trajectory(args.scene)
    path = make_path(CameraPose.identity(), cfg.trajectory, seed=np.random.default_rng([cfg.seed, 0, 0]))
    if not 0 <= args.pose < len(path):
        raise IndexError(f"pose index {args.pose} outside 0..{len(path) - 1}")
    pose = path.poses[args.pose]
    image, depth = render_world(cfg.scene, pose)
    out = {"pose": args.pose, "center": pose.center.tolist(), "depth_range": [float(depth.min()), float(depth.max())]}
    if args.out:
        Path(args.out).write_bytes(png_bytes(image))
        out["out"] = str(args.out)
    return out


def cmd_sample(args) -> dict:
    from .diffusion import ConditionBundle, GmmDenoiser, ancestral_sample, make_schedule
    from .persist import write_tensor
    from .synth import MotionPatternSpec, SceneSpec, gen_scene, gen_video_prior

    spec = MotionPatternSpec(**_load_json(args.prior)) if args.prior else MotionPatternSpec()
    spec = replace(spec, frames=args.frames)
    base, _ = gen_scene(SceneSpec(height=spec.height, width=spec.width, channels=spec.channels))
    prior = gen_video_prior(spec, base_image=base)
    schedule = make_schedule(args.steps)
    cond = ConditionBundle(start_frame=base, text=args.text) if args.condition else ConditionBundle(text=args.text)
    video = ancestral_sample(GmmDenoiser(prior, schedule), prior.shape, schedule, seed=args.seed, cond=cond)
    out = {"shape": list(video.shape), "mean": float(video.mean())}
    if args.out:
        out["checksum"] = write_tensor(args.out, video)
        out["out"] = str(args.out)
    return out


def cmd_agent_probe(args) -> dict:
    from . import agent as agents

    path = Path(args.fixture)
    text = path.read_text(encoding="utf-8").strip()
    first = json.loads(text.splitlines()[0]) if text else {}
    if "response" in first:
        bot = agents.ReplayAgent(path)
    else:
        bot = agents.MockAgent(agents.SceneFixture.from_dict(json.loads(text)))
    scene = agents.imagine_entities(bot, [], args.k)
    transcript = agents.run_cot(bot, None, scene)
    return {
        "scene_name": scene.scene_name,
        "description": scene.description,
        "dynamic_prompt": transcript.dynamic_prompt,
        "warnings": list(transcript.warnings),
    }


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pvgen", description="Perpetual view generation on procedural worlds.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    journey = sub.add_parser("journey", help="journey commands")
    jsub = journey.add_subparsers(dest="journey_command", required=True)
    run = jsub.add_parser("run", help="run a journey and write its record")
    run.add_argument("--config", type=Path, default=None)
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--cycles", type=int, default=None)
    run.add_argument("--agent", choices=("mock", "http", "disabled"), default=None)
    run.set_defaults(func=cmd_journey_run)

    rend = sub.add_parser("render", help="ray-cast a scene at one pose of its camera path")
    rend.add_argument("--scene", type=Path, required=True, help="scene or journey config JSON")
    rend.add_argument("--pose", type=int, required=True)
    rend.add_argument("--out", type=Path, default=None, help="PNG output path")
    rend.set_defaults(func=cmd_render)

    samp = sub.add_parser("sample", help="draw one video from a motion-pattern prior")
    samp.add_argument("--prior", type=Path, default=None, help="motion pattern spec JSON")
    samp.add_argument("--frames", type=int, required=True)
    samp.add_argument("--steps", type=int, default=1000)
    samp.add_argument("--seed", type=int, default=0)
    samp.add_argument("--text", default=None)
    samp.add_argument("--condition", action="store_true", help="condition on the scene image as frame 0")
    samp.add_argument("--out", type=Path, default=None, help="frame tensor output path")
    samp.set_defaults(func=cmd_sample)

    ag = sub.add_parser("agent", help="prompting agent commands")
    asub = ag.add_subparsers(dest="agent_command", required=True)
    probe = asub.add_parser("probe", help="run both agent exchanges against a fixture")
    probe.add_argument("--fixture", type=Path, required=True, help="replay JSONL or scene fixture JSON")
    probe.add_argument("-k", type=int, default=10)
    probe.set_defaults(func=cmd_agent_probe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        result = args.func(args)
    except Exception as exc:  # report every failure as one JSON line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
