"""Procedural layered scenes with exact depth, and moving-pattern video priors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import GmmPrior
from .geometry import CameraIntrinsics, CameraPose, GeometryError, pixel_rays

TEXTURES = ("checker", "gradient", "noise")


@dataclass(frozen=True)
class Layer:
    """Fronto-parallel textured plane at world z = ``depth``.

    ``extent`` is ``(x_min, x_max, y_min, y_max)`` in world units; ``None``
    entries are unbounded.  ``cell`` is the texture period in world units.
    """

    depth: float
    texture: str = "checker"
    extent: tuple | None = None
    cell: float = 4e-4
    colors: tuple | None = None

    def __post_init__(self):
        if self.texture not in TEXTURES:
            raise ValueError(f"texture must be one of {TEXTURES}, got {self.texture!r}")
        if not (self.depth > 0 and math.isfinite(self.depth)):
            raise ValueError("layer depth must be positive and finite")
        if self.cell <= 0:
            raise ValueError("texture cell must be positive")
        if self.extent is not None:
            ext = tuple(None if e is None else float(e) for e in self.extent)
            if len(ext) != 4:
                raise ValueError("extent is (x_min, x_max, y_min, y_max)")
            object.__setattr__(self, "extent", ext)
        if self.colors is not None:
            object.__setattr__(self, "colors", tuple(tuple(map(float, c)) for c in self.colors))

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "texture": self.texture,
            "extent": None if self.extent is None else list(self.extent),
            "cell": self.cell,
            "colors": None if self.colors is None else [list(c) for c in self.colors],
        }


def _default_layers() -> tuple:
    return (
        Layer(0.0015, "gradient", (None, -0.0001, None, None), cell=3e-3),
        Layer(0.0025, "checker", (0.0003, None, -0.0005, 0.0006), cell=1e-3),
        Layer(0.004, "gradient", None, cell=5e-3),
    )


@dataclass(frozen=True)
class SceneSpec:
    """Stack of layers, nearest first.  The farthest layer is an unbounded backdrop."""

    seed: int = 0
    layers: tuple = field(default_factory=_default_layers)
    height: int = 16
    width: int = 16
    channels: int = 3
    focal: float | None = None

    def __post_init__(self):
        layers = tuple(l if isinstance(l, Layer) else Layer(**l) for l in self.layers)
        if not layers:
            raise ValueError("a scene needs at least one layer")
        depths = [l.depth for l in layers]
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise ValueError(f"layer depths must be strictly increasing, got {depths}")
        object.__setattr__(self, "layers", layers)
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise ValueError("image size must be positive")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.centered(self.width, self.height, self.focal)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "layers": [l.to_dict() for l in self.layers],
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "focal": self.focal,
        }


def _hash01(i: np.ndarray, j: np.ndarray, salt: int) -> np.ndarray:
    """Deterministic per-cell uniform values in [0, 1) from integer lattice coords."""
    with np.errstate(over="ignore"):
        h = (i.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)) ^ (
            j.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        )
        h ^= np.uint64(salt & 0xFFFFFFFFFFFFFFFF) * np.uint64(0x165667B19E3779F9)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xFF51AFD7ED558CCD)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xC4CEB9FE1A85EC53)
        h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _layer_colors(spec: SceneSpec, k: int, layer: Layer) -> np.ndarray:
    if layer.colors is not None:
        c = np.array(layer.colors, dtype=np.float64)
        if c.shape != (2, spec.channels):
            raise ValueError(f"layer colors must be 2 x {spec.channels}")
        return c
    rng = np.random.default_rng([spec.seed, k])
    return rng.uniform(0.05, 0.95, size=(2, spec.channels))


def _texture(spec: SceneSpec, k: int, layer: Layer, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    ca, cb = _layer_colors(spec, k, layer)
    gi = np.floor(x / layer.cell).astype(np.int64)
    gj = np.floor(y / layer.cell).astype(np.int64)
    if layer.texture == "checker":
        mix = ((gi + gj) % 2).astype(np.float64)
    elif layer.texture == "gradient":
        mix = 0.5 + 0.5 * np.sin(2 * np.pi * x / layer.cell) * np.cos(np.pi * y / layer.cell)
    else:
        mix = _hash01(gi, gj, spec.seed * 1000003 + k)
    return ca + mix[..., None] * (cb - ca)


def render_world(spec: SceneSpec, pose: CameraPose, K: CameraIntrinsics | None = None):
    """Ray-cast the layered scene exactly.  Returns (image HxWxC, depth HxW)."""
    K = spec.intrinsics if K is None else K
    rays = pixel_rays(K) @ pose.rotation  # world directions, camera-z component 1
    c = pose.center
    h, w = K.height, K.width
    best = np.full((h, w), np.inf)
    image = np.zeros((h, w, spec.channels))
    last = len(spec.layers) - 1
    for k, layer in enumerate(spec.layers):
        dz = rays[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (layer.depth - c[2]) / dz
        x = c[0] + s * rays[..., 0]
        y = c[1] + s * rays[..., 1]
        hit = np.isfinite(s) & (s > 0)
        if layer.extent is not None and k != last:
            x0, x1, y0, y1 = layer.extent
            if x0 is not None:
                hit &= x >= x0
            if x1 is not None:
                hit &= x < x1
            if y0 is not None:
                hit &= y >= y0
            if y1 is not None:
                hit &= y < y1
        win = hit & (s < best)
        if np.any(win):
            best[win] = s[win]
            image[win] = _texture(spec, k, layer, x[win], y[win])
    if not np.all(np.isfinite(best)):
        raise GeometryError("some pixels see no layer; the camera looks past the backdrop")
    return image, best


def gen_scene(spec: SceneSpec):
    """Image and ground-truth depth seen from the identity pose."""
    return render_world(spec, CameraPose.identity())


def render_world_video(spec: SceneSpec, poses, K: CameraIntrinsics | None = None) -> np.ndarray:
    return np.stack([render_world(spec, p, K)[0] for p in poses])


# --------------------------------------------------------------------------
# moving-pattern video priors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MotionPattern:
    velocity: tuple = (1.0, 0.0)  # (dx, dy) pixels per frame
    weight: float = 1.0
    base: np.ndarray | None = None  # None: filled with the current view
    label: str | None = None

    def __post_init__(self):
        if len(self.velocity) != 2:
            raise ValueError("velocity is (dx, dy)")
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        if self.base is not None:
            object.__setattr__(self, "base", np.asarray(self.base, dtype=np.float64))

    def __eq__(self, other):
        if not isinstance(other, MotionPattern):
            return NotImplemented
        same_base = (self.base is None) == (other.base is None) and (
            self.base is None or np.array_equal(self.base, other.base)
        )
        return (self.velocity, self.weight, self.label) == (other.velocity, other.weight, other.label) and same_base

    def to_dict(self) -> dict:
        return {
            "velocity": list(self.velocity),
            "weight": self.weight,
            "base": None if self.base is None else np.asarray(self.base).tolist(),
            "label": self.label,
        }


def _default_patterns() -> tuple:
    return (
        MotionPattern((0.0, 0.5), 0.25, label="flap"),
        MotionPattern((0.25, -0.5), 0.25, label="waft"),
        MotionPattern((0.5, 0.0), 0.25, label="swing"),
        MotionPattern((-1.0, 0.0), 0.25, label="flow"),
    )


@dataclass(frozen=True)
class MotionPatternSpec:
    frames: int = 48
    height: int = 16
    width: int = 16
    channels: int = 3
    patterns: tuple = field(default_factory=_default_patterns)
    sigma: float = 0.02

    def __post_init__(self):
        pats = tuple(p if isinstance(p, MotionPattern) else MotionPattern(**p) for p in self.patterns)
        if not pats:
            raise ValueError("need at least one motion pattern")
        if abs(sum(p.weight for p in pats) - 1.0) > 1e-12:
            raise ValueError("pattern weights must sum to 1")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        object.__setattr__(self, "patterns", pats)

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "patterns": [p.to_dict() for p in self.patterns],
            "sigma": self.sigma,
        }


def shift_image(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Wrap-around translation; +dx moves content right, +dy moves it down."""
    return np.roll(image, (dy, dx), axis=(0, 1))


def pattern_video(base: np.ndarray, velocity, frames: int) -> np.ndarray:
    vx, vy = velocity
    return np.stack(
        [shift_image(base, math.floor(f * vx + 0.5), math.floor(f * vy + 0.5)) for f in range(frames)]
    )


def gen_video_prior(spec: MotionPatternSpec, base_image=None) -> GmmPrior:
    """One mixture component per pattern: its base image sliding frame by frame."""
    shape = (spec.height, spec.width, spec.channels)
    comps = []
    for p in spec.patterns:
        base = p.base if p.base is not None else base_image
        if base is None:
            raise ValueError("pattern has no base image and no current view was given")
        base = np.asarray(base, dtype=np.float64).reshape(shape)
        comps.append((p.weight, pattern_video(base, p.velocity, spec.frames), spec.sigma, p.label))
    return GmmPrior.from_components(comps)


def world_prior(
    spec: SceneSpec,
    pose_sequences,
    sigma: float,
    K: CameraIntrinsics | None = None,
    weights=None,
) -> GmmPrior:
    """Mixture whose component means are exact renders of the scene along candidate camera moves."""
    vids = [render_world_video(spec, seq, K) for seq in pose_sequences]
    n = len(vids)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
    return GmmPrior.from_components([(w[i], vids[i], sigma) for i in range(n)])
