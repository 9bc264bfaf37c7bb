"""Camera paths for spatial transitions: backward dolly with a height wobble, and yaw turns."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import CameraPose

LINEAR = "linear"
ROTATIONAL = "rotational"

# backward dolly distance and (rotational) yaw + strafe, totals over a path
LINEAR_TRANSLATION = 0.0005
ROTATIONAL_TRANSLATION = 0.0001
ROTATIONAL_YAW = 0.45
SINE_AMPLITUDE = 5e-5
SINE_CYCLES = 1.0


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = LINEAR
    frames: int = 48
    translation_total: float | None = None
    rotation_total: float | None = None
    sine_amplitude: float = SINE_AMPLITUDE
    sine_cycles: float = SINE_CYCLES

    def __post_init__(self):
        if self.kind not in (LINEAR, ROTATIONAL):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.translation_total is None:
            tr = LINEAR_TRANSLATION if self.kind == LINEAR else ROTATIONAL_TRANSLATION
            object.__setattr__(self, "translation_total", tr)
        if self.rotation_total is None:
            object.__setattr__(self, "rotation_total", 0.0 if self.kind == LINEAR else ROTATIONAL_YAW)
        if self.frames < 2:
            raise ValueError(f"a path needs at least 2 poses, got {self.frames}")
        if self.translation_total < 0:
            raise ValueError("translation_total must be >= 0")
        if abs(self.rotation_total) > math.pi:
            raise ValueError("|rotation_total| must not exceed pi")

    @classmethod
    def linear(cls, **kw) -> "TrajectorySpec":
        return cls(kind=LINEAR, **kw)

    @classmethod
    def rotational(cls, **kw) -> "TrajectorySpec":
        return cls(kind=ROTATIONAL, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CameraPath:
    poses: tuple
    spec: TrajectorySpec
    phase: float | None = field(default=None)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, i) -> CameraPose:
        return self.poses[i]

    def centers(self) -> np.ndarray:
        return np.array([p.center for p in self.poses])

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.centers(), axis=0), axis=1)))

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "phase": self.phase,
            "poses": [p.to_dict() for p in self.poses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPath":
        return cls(
            tuple(CameraPose.from_dict(p) for p in d["poses"]),
            TrajectorySpec(**d["spec"]),
            d.get("phase"),
        )


def yaw_rotation(theta: float) -> np.ndarray:
    """Camera-local rotation about +y; positive turns the view toward +x."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def relative_yaw(pose: CameraPose, start: CameraPose) -> float:
    f = start.rotation @ pose.forward
    return math.atan2(f[0], f[2])


def linear_path(start: CameraPose, spec: TrajectorySpec, seed=None) -> CameraPath:
    """Dolly backward with a sine wobble in height.

    The wobble phase is drawn from ``seed``; offsets are clamped to zero at
    both ends so the endpoints do not depend on the seed.
    """
    if spec.kind != LINEAR:
        raise ValueError(f"linear_path got a {spec.kind!r} spec")
    n = spec.frames - 1
    rng = np.random.default_rng(seed)
    phase = float(rng.uniform(0.0, 2.0 * math.pi))
    c0, back, up = start.center, -start.forward, -start.down
    poses = [start]
    for i in range(1, n + 1):
        s = i / n
        h = 0.0
        if i < n:
            h = spec.sine_amplitude * math.sin(2.0 * math.pi * spec.sine_cycles * s + phase)
        poses.append(CameraPose.from_center(start.rotation, c0 + spec.translation_total * s * back + h * up))
    return CameraPath(tuple(poses), spec, phase)


def rotational_path(start: CameraPose, spec: TrajectorySpec) -> CameraPath:
    """Yaw linearly to ``rotation_total`` while strafing along the initial right axis."""
    if spec.kind != ROTATIONAL:
        raise ValueError(f"rotational_path got a {spec.kind!r} spec")
    n = spec.frames - 1
    c0, right = start.center, start.right
    poses = [start]
    for i in range(1, n + 1):
        s = i / n
        rot = yaw_rotation(spec.rotation_total * s).T @ start.rotation
        poses.append(CameraPose.from_center(rot, c0 + spec.translation_total * s * right))
    return CameraPath(tuple(poses), spec)


def make_path(start: CameraPose, spec: TrajectorySpec, seed=None) -> CameraPath:
    if spec.kind == LINEAR:
        return linear_path(start, spec, seed)
    return rotational_path(start, spec)


def _to44(p: CameraPose) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = p.rotation
    m[:3, 3] = p.translation
    return m


def _from44(m: np.ndarray) -> CameraPose:
    r = m[:3, :3]
    # re-orthonormalize away accumulated rounding
    u, _, vt = np.linalg.svd(r)
    return CameraPose(u @ vt, m[:3, 3])


def reversed_motion(path: CameraPath) -> list[CameraPose]:
    """Poses that apply each step's motion relative to the start in the opposite sense."""
    t0 = _to44(path.poses[0])
    out = [path.poses[0]]
    for p in path.poses[1:]:
        out.append(_from44(t0 @ np.linalg.inv(_to44(p)) @ t0))
    return out
