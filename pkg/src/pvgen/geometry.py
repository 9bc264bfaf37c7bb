"""Pinhole cameras, depth unprojection, z-buffered point splatting, cloud merging.

Poses are world-to-camera: ``p_cam = R @ p_world + t``.  Camera axes follow
the image: +x right, +y down, +z forward.  Depth is camera-frame z, not ray
length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

Z_NEAR = 1e-6
MERGE_VOXEL = 1e-4
_ORTHO_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")

    @classmethod
    def centered(cls, width: int, height: int, focal: float | None = None) -> "CameraIntrinsics":
        """Square pixels, principal point at the image center (pixel-center coordinates)."""
        f = float(width if focal is None else focal)
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, int(width), int(height))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("fx", "fy", "cx", "cy", "width", "height")}


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise GeometryError(f"rotation must be 3x3, got {r.shape}")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise GeometryError("rotation is not a proper orthonormal matrix")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_center(cls, rotation, center) -> "CameraPose":
        r = np.asarray(rotation, dtype=np.float64)
        return cls(r, -r @ np.asarray(center, dtype=np.float64))

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    # camera axes expressed in world coordinates
    @property
    def right(self) -> np.ndarray:
        return self.rotation[0].copy()

    @property
    def down(self) -> np.ndarray:
        return self.rotation[1].copy()

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[2].copy()

    def matrix(self) -> np.ndarray:
        """3x4 [R | t]."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(np.array(d["rotation"]), np.array(d["translation"]))

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    __hash__ = None


def check_depth(depth) -> np.ndarray:
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise GeometryError(f"depth map must be HxW, got shape {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise GeometryError("depth map must be finite and strictly positive")
    return d


@dataclass(frozen=True)
class PointCloud:
    positions: np.ndarray  # (n, 3)
    colors: np.ndarray  # (n, C)

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        c = np.asarray(self.colors, dtype=np.float64)
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        if c.shape[0] != p.shape[0]:
            raise GeometryError("one color per position")
        if not np.all(np.isfinite(p)):
            raise GeometryError("point positions must be finite")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "colors", c)

    @classmethod
    def empty(cls, channels: int) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, channels)))

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def channels(self) -> int:
        return self.colors.shape[1]


@dataclass(frozen=True)
class RenderOutput:
    image: np.ndarray  # (H, W, C)
    mask: np.ndarray  # (H, W) uint8, 1 = covered

    @property
    def coverage(self) -> float:
        return float(self.mask.mean())


def _as_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise GeometryError(f"image must be HxW or HxWxC, got shape {img.shape}")
    return img


def pixel_rays(K: CameraIntrinsics) -> np.ndarray:
    """K^-1 (u, v, 1) for every pixel, shape (H, W, 3)."""
    u, v = np.meshgrid(np.arange(K.width, dtype=np.float64), np.arange(K.height, dtype=np.float64))
    return np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)


def unproject(image, depth, pose: CameraPose, K: CameraIntrinsics) -> PointCloud:
    """Lift every pixel to a world-space point carrying the pixel's color."""
    img = _as_image(image)
    d = check_depth(depth)
    h, w = d.shape
    if img.shape[:2] != (h, w) or (K.height, K.width) != (h, w):
        raise GeometryError(
            f"image {img.shape[:2]}, depth {d.shape} and intrinsics {(K.height, K.width)} disagree"
        )
    p_cam = pixel_rays(K) * d[:, :, None]
    world = (p_cam.reshape(-1, 3) - pose.translation) @ pose.rotation
    return PointCloud(world, img.reshape(h * w, -1))


def project(points, pose: CameraPose, K: CameraIntrinsics):
    """Camera-frame depth and continuous pixel coordinates for world points."""
    p_cam = np.asarray(points, dtype=np.float64) @ pose.rotation.T + pose.translation
    z = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * p_cam[:, 0] / z + K.cx
        v = K.fy * p_cam[:, 1] / z + K.cy
    return z, u, v


def render(
    cloud: PointCloud,
    pose: CameraPose,
    K: CameraIntrinsics,
    splat_radius: int = 0,
    z_near: float = Z_NEAR,
) -> RenderOutput:
    """Z-buffered splat render.

    Each point lands on its nearest pixel (or a disc of ``splat_radius``
    pixels around it).  The nearest point wins; depths within 1e-9 of the
    pixel minimum resolve to the earliest point in cloud order.
    """
    h, w = K.height, K.width
    image = np.zeros((h, w, cloud.channels))
    mask = np.zeros((h, w), dtype=np.uint8)
    if len(cloud) == 0:
        return RenderOutput(image, mask)
    z, u, v = project(cloud.positions, pose, K)
    keep = (z > z_near) & (np.abs(u) < 1e9) & (np.abs(v) < 1e9)
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return RenderOutput(image, mask)
    px = np.floor(u[idx] + 0.5).astype(np.int64)
    py = np.floor(v[idx] + 0.5).astype(np.int64)
    winner = _kernels.zbuffer(px, py, z[idx], h, w, _kernels.disc_offsets(splat_radius))
    hit = winner >= 0
    flat = image.reshape(h * w, -1)
    flat[hit] = cloud.colors[idx[winner[hit]]]
    mask.reshape(-1)[hit] = 1
    return RenderOutput(image, mask)


def merge(a: PointCloud, b: PointCloud, voxel: float = MERGE_VOXEL) -> PointCloud:
    """Append the points of ``b`` whose voxel is not yet occupied.

    Every point of ``a`` is kept; a point of ``b`` is dropped if an earlier
    point (from ``a`` or from ``b``) already sits in its voxel.
    """
    if len(a) and len(b) and a.channels != b.channels:
        raise GeometryError(f"color channels differ: {a.channels} vs {b.channels}")
    if len(b) == 0:
        return a
    if len(a) == 0:
        a = PointCloud.empty(b.channels)
    keys = np.floor(np.concatenate([a.positions, b.positions]) / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    new = np.sort(first[first >= len(a)]) - len(a)
    return PointCloud(
        np.concatenate([a.positions, b.positions[new]]),
        np.concatenate([a.colors, b.colors[new]]),
    )
