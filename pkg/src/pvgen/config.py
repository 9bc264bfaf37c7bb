"""Journey configuration, loadable from and dumpable to JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .diffusion import DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS, make_schedule
from .sampler import GuidanceConfig
from .synth import MotionPatternSpec, SceneSpec
from .trajectory import TrajectorySpec

AGENT_KINDS = ("mock", "http", "disabled")
DEPTH_SOURCES = ("synthetic", "external")


@dataclass(frozen=True)
class DiffusionConfig:
    steps: int = DEFAULT_STEPS
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END

    def schedule(self):
        return make_schedule(self.steps, self.beta_start, self.beta_end)


@dataclass(frozen=True)
class AgentConfig:
    kind: str = "mock"
    endpoint: str | None = None  # http only; falls back to the environment
    model: str | None = None
    fixture: str | None = None  # mock only: scene fixture JSON
    entities: int = 10
    max_retries: int = 2
    timeout: float = 60.0
    strict: bool = False

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"agent kind must be one of {AGENT_KINDS}, got {self.kind!r}")
        if self.entities < 1:
            raise ValueError("entities must be >= 1")


@dataclass(frozen=True)
class DepthConfig:
    source: str = "synthetic"
    endpoint: str | None = None
    timeout: float = 60.0

    def __post_init__(self):
        if self.source not in DEPTH_SOURCES:
            raise ValueError(f"depth source must be one of {DEPTH_SOURCES}, got {self.source!r}")


@dataclass(frozen=True)
class JourneyConfig:
    seed: int = 0
    cycles: int = 1
    frames_per_segment: int = 48
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    scene: SceneSpec = field(default_factory=SceneSpec)
    prior: MotionPatternSpec = field(default_factory=MotionPatternSpec)
    agent: AgentConfig = field(default_factory=AgentConfig)
    depth: DepthConfig = field(default_factory=DepthConfig)
    world_sigma: float = 0.01  # stddev of the spatial-transition prior components
    text_boost: float = 4.0
    output_dir: str | None = None

    def __post_init__(self):
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if self.frames_per_segment < 2:
            raise ValueError("frames_per_segment must be >= 2")
        if self.world_sigma < 0:
            raise ValueError("world_sigma must be >= 0")
        if isinstance(self.agent, str):
            object.__setattr__(self, "agent", AgentConfig(kind=self.agent))
        # every video in a journey shares one frame count and image size
        s = self.scene
        object.__setattr__(self, "trajectory", replace(self.trajectory, frames=self.frames_per_segment))
        object.__setattr__(
            self,
            "prior",
            replace(self.prior, frames=self.frames_per_segment, height=s.height, width=s.width, channels=s.channels),
        )

    def to_dict(self, include_output: bool = True) -> dict:
        d = {
            "seed": self.seed,
            "cycles": self.cycles,
            "frames_per_segment": self.frames_per_segment,
            "diffusion": asdict(self.diffusion),
            "trajectory": self.trajectory.to_dict(),
            "guidance": self.guidance.to_dict(),
            "scene": self.scene.to_dict(),
            "prior": self.prior.to_dict(),
            "agent": asdict(self.agent),
            "depth": asdict(self.depth),
            "world_sigma": self.world_sigma,
            "text_boost": self.text_boost,
        }
        if include_output:
            d["output_dir"] = self.output_dir
        return d

    def snapshot(self) -> dict:
        """Everything that affects the journey's content; the output location is left out."""
        return self.to_dict(include_output=False)

    @classmethod
    def from_dict(cls, d: dict) -> "JourneyConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        kw = dict(d)
        nested = {
            "diffusion": DiffusionConfig,
            "trajectory": TrajectorySpec,
            "guidance": GuidanceConfig,
            "scene": SceneSpec,
            "prior": MotionPatternSpec,
            "agent": AgentConfig,
            "depth": DepthConfig,
        }
        for key, typ in nested.items():
            if isinstance(kw.get(key), dict):
                kw[key] = typ(**kw[key])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "JourneyConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
