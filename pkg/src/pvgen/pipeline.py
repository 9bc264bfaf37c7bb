"""Alternating spatial-transition and dynamics stages over a procedural world."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import agent as agents
from .config import JourneyConfig
from .depth import HttpDepthClient, SyntheticDepth
from .diffusion import ConditionBundle, GmmDenoiser, GmmPrior, NoiseSchedule, ancestral_sample
from .geometry import CameraPose, PointCloud, merge, render, unproject
from .sampler import (
    FLYOVER_PROMPT,
    GuidanceConfig,
    build_prior,
    guided_sample,
    inpaint_image,
    pad_views,
    unpad_views,
)
from .synth import SceneSpec, gen_scene, gen_video_prior, world_prior
from .trajectory import CameraPath, make_path, reversed_motion

log = logging.getLogger(__name__)

SPATIAL = "spatial"
DYNAMICS = "dynamics"
RECORD_VERSION = "1"


class EmptyRenderError(RuntimeError):
    def __init__(self, index: int):
        super().__init__(f"point cloud renders empty at path pose {index}; the camera left the scene")
        self.index = index


class JourneyError(RuntimeError):
    """A stage failed; ``record`` holds the segments finished before the failure."""

    def __init__(self, message: str, record: "JourneyRecord"):
        super().__init__(message)
        self.record = record


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JourneySegment:
    kind: str
    frames: np.ndarray  # float32 (F, H, W, C)
    camera_path: CameraPath | None = None
    prompts: dict = field(default_factory=dict)
    transcript: agents.AgentTranscript | None = None

    def __eq__(self, other):
        if not isinstance(other, JourneySegment):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.frames.dtype == other.frames.dtype
            and np.array_equal(self.frames, other.frames)
            and _path_dict(self.camera_path) == _path_dict(other.camera_path)
            and self.prompts == other.prompts
            and self.transcript == other.transcript
        )


def _path_dict(path):
    return None if path is None else path.to_dict()


@dataclass(frozen=True)
class JourneyRecord:
    seed: int
    config: dict
    segments: tuple = ()
    point_cloud_stats: tuple = ()  # point count after each stage-I merge
    complete: bool = True
    version: str = RECORD_VERSION


# --------------------------------------------------------------------------
# runtime state
# --------------------------------------------------------------------------


@dataclass
class JourneyState:
    view: np.ndarray  # current frame, (H, W, C)
    pose: CameraPose
    cloud: PointCloud
    cycle: int = 0
    scene_prompt: agents.ScenePrompt | None = None
    entities: tuple = ()  # entity names known in the current view


@dataclass
class JourneyContext:
    """Collaborators shared by all stages of one journey."""

    agent: object | None
    depth: object
    schedule: NoiseSchedule
    observer: Callable | None = None  # receives sampler StepEvents of stage I
    prompt_log: list = field(default_factory=list)  # (purpose, text) of every conditioning prompt


def make_agent(config: JourneyConfig):
    ac = config.agent
    if ac.kind == "disabled":
        return None
    if ac.kind == "http":
        return agents.HttpAgent(ac.endpoint, ac.model, timeout=ac.timeout)
    fixture = agents.SceneFixture.load(ac.fixture) if ac.fixture else agents.DRAGON_TEMPLE
    return agents.MockAgent(fixture)


def make_depth(config: JourneyConfig):
    if config.depth.source == "external":
        return HttpDepthClient(config.depth.endpoint, config.depth.timeout)
    return SyntheticDepth(config.scene)


def make_context(config: JourneyConfig, agent=None, depth=None, observer=None) -> JourneyContext:
    return JourneyContext(
        make_agent(config) if agent is None else agent,
        make_depth(config) if depth is None else depth,
        config.diffusion.schedule(),
        observer,
    )


def initial_state(config: JourneyConfig, depth) -> JourneyState:
    image, _ = gen_scene(config.scene)
    pose = CameraPose.identity()
    d0 = depth.estimate(image, pose)
    cloud = unproject(image, d0, pose, config.scene.intrinsics)
    return JourneyState(image, pose, cloud)


def _seed(config: JourneyConfig, cycle: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, cycle, tag])


def _padded(video: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return video
    return np.concatenate([np.repeat(video[:1], k, axis=0), video, np.repeat(video[-1:], k, axis=0)])


def _candidate_moves(path: CameraPath) -> list:
    """The planned move, its mirror image, and standing still."""
    start = path.poses[0]
    return [list(path.poses), reversed_motion(path), [start] * len(path)]


def transition_prior(scene: SceneSpec, path: CameraPath, sigma: float, pad: int) -> GmmPrior:
    base = world_prior(scene, _candidate_moves(path), sigma, scene.intrinsics)
    return GmmPrior.from_components(
        [(w, _padded(m, pad), s) for w, m, s in zip(base.weights, base.means, base.sigmas)]
    )


def endpoint_prior(scene: SceneSpec, path: CameraPath, sigma: float) -> GmmPrior:
    moves = [[seq[-1]] for seq in _candidate_moves(path)]
    return world_prior(scene, moves, sigma, scene.intrinsics)


def _pin_first(frames: np.ndarray, view: np.ndarray) -> np.ndarray:
    out = np.asarray(frames, dtype=np.float32).copy()
    out[0] = view
    return out


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def run_stage1(state: JourneyState, config: JourneyConfig, ctx: JourneyContext):
    """Spatial transition from the current view along the configured camera path.

    Returns ``(segment, merged_cloud, end_pose, scene_prompt)``; the scene
    prompt is ``None`` without an agent.
    """
    scene, K = config.scene, config.scene.intrinsics
    gcfg: GuidanceConfig = config.guidance
    path = make_path(state.pose, config.trajectory, seed=_seed(config, state.cycle, 0))
    end = path.poses[-1]

    # complete the far view first
    partial_end = render(state.cloud, end, K)
    scene_prompt = None
    if ctx.agent is not None:
        scene_prompt = agents.imagine_entities(
            ctx.agent, list(state.entities), config.agent.entities, max_retries=config.agent.max_retries
        )
    inpaint_text = None if scene_prompt is None else scene_prompt.text()
    ctx.prompt_log.append(("inpaint", inpaint_text))
    inpaint_denoiser = GmmDenoiser(endpoint_prior(scene, path, config.world_sigma), ctx.schedule, config.text_boost)
    end_view = inpaint_image(
        partial_end.image,
        partial_end.mask,
        inpaint_denoiser,
        ConditionBundle(text=inpaint_text),
        replace(gcfg, pad_count=0),
        ctx.schedule,
        seed=_seed(config, state.cycle, 1),
    )
    end_view = end_view.astype(np.float32).astype(np.float64)

    end_depth = ctx.depth.estimate(end_view, end)
    cloud = merge(state.cloud, unproject(end_view, end_depth, end, K))

    partials = []
    for i, pose in enumerate(path.poses[1:-1], start=1):
        r = render(cloud, pose, K)
        if not r.mask.any():
            raise EmptyRenderError(i)
        partials.append(r)
    prior = pad_views(build_prior(state.view, partials, end_view), gcfg.pad_count)

    ctx.prompt_log.append(("transition", FLYOVER_PROMPT))
    denoiser = GmmDenoiser(
        transition_prior(scene, path, config.world_sigma, gcfg.pad_count), ctx.schedule, config.text_boost
    )
    video = guided_sample(
        denoiser,
        prior,
        ConditionBundle(start_frame=state.view, text=FLYOVER_PROMPT),
        gcfg,
        ctx.schedule,
        seed=_seed(config, state.cycle, 2),
        observer=ctx.observer,
    )
    frames = _pin_first(unpad_views(video, gcfg.pad_count), state.view)
    prompts = {"transition": FLYOVER_PROMPT, "scene": None if scene_prompt is None else scene_prompt.to_dict()}
    segment = JourneySegment(SPATIAL, frames, path, prompts)
    return segment, cloud, end, scene_prompt


def run_stage2(state: JourneyState, config: JourneyConfig, ctx: JourneyContext) -> JourneySegment:
    """Object dynamics at a fixed camera, conditioned on the current view and a dynamics prompt."""
    transcript = None
    if ctx.agent is None or state.scene_prompt is None:
        text = agents.DEFAULT_DYNAMICS_PROMPT
    else:
        transcript = agents.run_cot(
            ctx.agent,
            state.view,
            state.scene_prompt,
            strict=config.agent.strict,
            max_retries=config.agent.max_retries,
        )
        text = transcript.dynamic_prompt
    ctx.prompt_log.append(("dynamics", text))
    prior = gen_video_prior(config.prior, base_image=state.view)
    denoiser = GmmDenoiser(prior, ctx.schedule, config.text_boost)
    video = ancestral_sample(
        denoiser,
        prior.shape,
        ctx.schedule,
        seed=_seed(config, state.cycle, 3),
        cond=ConditionBundle(start_frame=state.view, text=text),
    )
    frames = _pin_first(video, state.view)
    return JourneySegment(DYNAMICS, frames, None, {"dynamics": text}, transcript)


def run_journey(
    config: JourneyConfig,
    *,
    agent=None,
    depth=None,
    observer=None,
    save: bool = True,
) -> JourneyRecord:
    """Alternate spatial and dynamics stages ``config.cycles`` times.

    Each segment starts from the last frame of the one before.  With
    ``config.output_dir`` set and ``save`` true the record is written there,
    including when a stage fails; a failed journey's record is marked
    incomplete and travels on the raised ``JourneyError``.
    """
    from .persist import save_journey

    ctx = make_context(config, agent, depth, observer)
    segments, stats = [], []

    def _record(complete: bool) -> JourneyRecord:
        return JourneyRecord(config.seed, config.snapshot(), tuple(segments), tuple(stats), complete)

    try:
        state = initial_state(config, ctx.depth)
        for cycle in range(config.cycles):
            state.cycle = cycle
            seg, cloud, end, scene_prompt = run_stage1(state, config, ctx)
            segments.append(seg)
            stats.append(len(cloud))
            state.view = seg.frames[-1].astype(np.float64)
            state.pose, state.cloud, state.scene_prompt = end, cloud, scene_prompt
            seg2 = run_stage2(state, config, ctx)
            segments.append(seg2)
            state.view = seg2.frames[-1].astype(np.float64)
            if seg2.transcript is not None and len(seg2.transcript.entities):
                state.entities = tuple(seg2.transcript.entities.names())
    except Exception as exc:
        record = _record(False)
        if save and config.output_dir:
            save_journey(record, config.output_dir)
        raise JourneyError(f"journey stopped after {len(segments)} segments: {exc}", record) from exc
    record = _record(True)
    if save and config.output_dir:
        save_journey(record, config.output_dir)
    return record
