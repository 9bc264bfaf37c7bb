"""On-disk journey records: a JSON manifest plus one binary tensor file per segment."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .agent import AgentTranscript
from .imageio import png_bytes
from .pipeline import RECORD_VERSION, JourneyRecord, JourneySegment
from .trajectory import CameraPath

MANIFEST = "journey.json"
MAGIC = b"VJT1"


class JourneyFormatError(ValueError):
    pass


class JourneyVersionError(JourneyFormatError):
    pass


class ChecksumError(JourneyFormatError):
    def __init__(self, path):
        super().__init__(f"checksum mismatch for {path}")
        self.path = str(path)


def encode_tensor(array) -> bytes:
    a = np.ascontiguousarray(array, dtype="<f4")
    head = MAGIC + struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape)
    return head + a.tobytes(order="C")


def decode_tensor(data: bytes, name: str = "<bytes>") -> np.ndarray:
    if data[:4] != MAGIC:
        raise JourneyFormatError(f"{name}: not a frame tensor file")
    (rank,) = struct.unpack_from("<I", data, 4)
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    start = 8 + 4 * rank
    n = int(np.prod(dims, dtype=np.int64))
    if len(data) - start != 4 * n:
        raise JourneyFormatError(f"{name}: payload holds {len(data) - start} bytes, header implies {4 * n}")
    return np.frombuffer(data, dtype="<f4", offset=start).reshape(dims).astype(np.float32)


def write_tensor(path, array) -> str:
    data = encode_tensor(array)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), str(path))


def _segment_entry(i: int, seg: JourneySegment, root: Path, export_png: bool) -> dict:
    name = f"segment_{i:03d}.vjt"
    checksum = write_tensor(root / name, seg.frames)
    entry = {
        "kind": seg.kind,
        "frame_files": [name],
        "prompts": seg.prompts,
        "checksum": checksum,
    }
    if seg.camera_path is not None:
        entry["camera_path"] = seg.camera_path.to_dict()
    if seg.transcript is not None:
        entry["transcript"] = seg.transcript.to_dict()
    if export_png:
        png_dir = root / f"segment_{i:03d}"
        png_dir.mkdir(exist_ok=True)
        for f, frame in enumerate(seg.frames):
            (png_dir / f"frame_{f:03d}.png").write_bytes(png_bytes(frame))
    return entry


def manifest_dict(record: JourneyRecord, segments: list) -> dict:
    return {
        "version": record.version,
        "seed": record.seed,
        "config": record.config,
        "segments": segments,
        "point_cloud_stats": list(record.point_cloud_stats),
        "complete": record.complete,
    }


def save_journey(record: JourneyRecord, directory, export_png: bool = True) -> Path:
    """Write ``journey.json`` and per-segment tensors (plus 8-bit PNG previews)."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    entries = [_segment_entry(i, s, root, export_png) for i, s in enumerate(record.segments)]
    path = root / MANIFEST
    path.write_text(json.dumps(manifest_dict(record, entries), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_journey(directory) -> JourneyRecord:
    root = Path(directory)
    manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    version = manifest.get("version")
    if version != RECORD_VERSION:
        raise JourneyVersionError(f"journey version {version!r} is not supported (expected {RECORD_VERSION!r})")
    segments = []
    for entry in manifest["segments"]:
        blobs = []
        for name in entry["frame_files"]:
            data = (root / name).read_bytes()
            blobs.append((name, data))
        digest = hashlib.sha256(b"".join(d for _, d in blobs)).hexdigest()
        if digest != entry["checksum"]:
            raise ChecksumError(root / entry["frame_files"][0])
        frames = np.concatenate([decode_tensor(d, n) for n, d in blobs])
        path = CameraPath.from_dict(entry["camera_path"]) if "camera_path" in entry else None
        transcript = AgentTranscript.from_dict(entry["transcript"]) if "transcript" in entry else None
        segments.append(JourneySegment(entry["kind"], frames, path, entry["prompts"], transcript))
    return JourneyRecord(
        manifest["seed"],
        manifest["config"],
        tuple(segments),
        tuple(manifest.get("point_cloud_stats", [])),
        manifest.get("complete", True),
        version,
    )
