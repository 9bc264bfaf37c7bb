"""Perpetual view generation with exact mixture denoisers on procedural worlds."""

from ._kernels import BACKEND, available_backends, set_backend
from .config import JourneyConfig
from .diffusion import ConditionBundle, GmmDenoiser, GmmPrior, NoiseSchedule, make_schedule
from .geometry import CameraIntrinsics, CameraPose, PointCloud, merge, render, unproject
from .persist import load_journey, save_journey
from .pipeline import JourneyRecord, JourneySegment, run_journey, run_stage1, run_stage2
from .sampler import GuidanceConfig, PriorVideo, guided_sample, inpaint_image
from .synth import MotionPatternSpec, SceneSpec, gen_scene, gen_video_prior
from .trajectory import CameraPath, TrajectorySpec, make_path

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CameraIntrinsics", "CameraPath", "CameraPose", "ConditionBundle", "GmmDenoiser",
    "GmmPrior", "GuidanceConfig", "JourneyConfig", "JourneyRecord", "JourneySegment",
    "MotionPatternSpec", "NoiseSchedule", "PointCloud", "PriorVideo", "SceneSpec", "TrajectorySpec",
    "available_backends", "gen_scene", "gen_video_prior", "guided_sample", "inpaint_image",
    "load_journey", "make_path", "make_schedule", "merge", "render", "run_journey", "run_stage1",
    "run_stage2", "save_journey", "set_backend", "unproject",
]
