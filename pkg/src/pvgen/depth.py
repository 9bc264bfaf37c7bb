"""Depth sources for lifting views into the point cloud."""

from __future__ import annotations

import base64
import json
import os
import urllib.error
import urllib.request
from typing import Protocol, runtime_checkable

import numpy as np

from .imageio import png_bytes
from .geometry import CameraPose, check_depth
from .synth import SceneSpec, render_world

ENV_DEPTH_ENDPOINT = "PVGEN_DEPTH_ENDPOINT"


class DepthTransportError(RuntimeError):
    pass


@runtime_checkable
class DepthEstimator(Protocol):
    def estimate(self, image: np.ndarray, pose: CameraPose | None = None) -> np.ndarray: ...


class SyntheticDepth:
    """Ground-truth depth of a procedural scene.

    The image is not consulted: depth comes from ray-casting ``scene`` at
    ``pose``, which stands in for a perfect monocular estimator.
    """

    def __init__(self, scene: SceneSpec):
        self.scene = scene

    def estimate(self, image, pose: CameraPose | None = None) -> np.ndarray:
        pose = CameraPose.identity() if pose is None else pose
        img = np.asarray(image)
        _, depth = render_world(self.scene, pose)
        if img.shape[:2] != depth.shape:
            raise ValueError(f"image {img.shape[:2]} does not match scene size {depth.shape}")
        # planar layers: camera-z distance equals the ray parameter for unit-z rays
        return check_depth(depth)


class HttpDepthClient:
    """Remote monocular depth: POST ``{"image": <base64 PNG>}``, expect ``{"depth": [[...]]}``."""

    def __init__(self, endpoint: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint or os.environ.get(ENV_DEPTH_ENDPOINT)
        if not self.endpoint:
            raise ValueError(f"no depth endpoint configured (set {ENV_DEPTH_ENDPOINT} or pass endpoint)")
        self.timeout = timeout

    def estimate(self, image, pose: CameraPose | None = None) -> np.ndarray:
        body = json.dumps({"image": base64.b64encode(png_bytes(image)).decode("ascii")}).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"}, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            raise DepthTransportError(f"depth endpoint failed: {exc}") from exc
        depth = check_depth(payload["depth"])
        if depth.shape != np.asarray(image).shape[:2]:
            raise ValueError(f"depth {depth.shape} does not match image {np.asarray(image).shape[:2]}")
        return depth
