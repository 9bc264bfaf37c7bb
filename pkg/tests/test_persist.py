import json
import struct

import numpy as np
import pytest

from pvgen.agent import MockAgent, imagine_entities, run_cot
from pvgen.geometry import CameraPose
from pvgen.persist import (
    MAGIC,
    MANIFEST,
    ChecksumError,
    JourneyFormatError,
    JourneyVersionError,
    decode_tensor,
    encode_tensor,
    load_journey,
    read_tensor,
    save_journey,
)
from pvgen.pipeline import JourneyRecord, JourneySegment
from pvgen.trajectory import TrajectorySpec, make_path


@pytest.fixture
def record():
    rng = np.random.default_rng(0)
    path = make_path(CameraPose.identity(), TrajectorySpec(frames=4), seed=0)
    bot = MockAgent()
    tr = run_cot(bot, None, imagine_entities(bot, [], 10))
    a = rng.random((4, 3, 3, 3)).astype(np.float32)
    b = rng.random((4, 3, 3, 3)).astype(np.float32)
    b[0] = a[-1]
    segs = (
        JourneySegment("spatial", a, path, {"transition": "t", "scene": None}),
        JourneySegment("dynamics", b, None, {"dynamics": tr.dynamic_prompt}, tr),
    )
    return JourneyRecord(7, {"seed": 7}, segs, (27,))


def test_tensor_header_layout():
    data = encode_tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert data[:4] == MAGIC
    assert struct.unpack_from("<3I", data, 4) == (2, 2, 3)
    assert np.frombuffer(data[16:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]


def test_tensor_roundtrip(tmp_path):
    x = np.random.default_rng(1).standard_normal((2, 4, 5, 3)).astype(np.float32)
    path = tmp_path / "x.vjt"
    from pvgen.persist import write_tensor

    write_tensor(path, x)
    assert np.array_equal(read_tensor(path), x)


def test_tensor_truncated():
    data = encode_tensor(np.zeros((2, 2), np.float32))
    with pytest.raises(JourneyFormatError):
        decode_tensor(data[:-1])
    with pytest.raises(JourneyFormatError):
        decode_tensor(b"XXXX" + data[4:])


def test_roundtrip_equal(tmp_path, record):
    save_journey(record, tmp_path)
    assert load_journey(tmp_path) == record


def test_manifest_layout(tmp_path, record):
    save_journey(record, tmp_path)
    m = json.loads((tmp_path / MANIFEST).read_text())
    assert set(m) == {"version", "seed", "config", "segments", "point_cloud_stats", "complete"}
    assert m["segments"][0]["frame_files"] == ["segment_000.vjt"]
    assert "camera_path" in m["segments"][0] and "transcript" in m["segments"][1]
    assert (tmp_path / "segment_001" / "frame_003.png").exists()


def test_png_export_optional(tmp_path, record):
    save_journey(record, tmp_path, export_png=False)
    assert not (tmp_path / "segment_000").exists()


def test_save_is_byte_stable(tmp_path, record):
    save_journey(record, tmp_path / "a")
    save_journey(record, tmp_path / "b")
    for name in (MANIFEST, "segment_000.vjt", "segment_001.vjt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_version_rejected(tmp_path, record):
    save_journey(record, tmp_path)
    m = json.loads((tmp_path / MANIFEST).read_text())
    m["version"] = "2"
    (tmp_path / MANIFEST).write_text(json.dumps(m))
    with pytest.raises(JourneyVersionError, match="'2'"):
        load_journey(tmp_path)


def test_corrupted_tensor_names_file(tmp_path, record):
    save_journey(record, tmp_path)
    target = tmp_path / "segment_001.vjt"
    data = bytearray(target.read_bytes())
    data[-1] ^= 0xFF
    target.write_bytes(bytes(data))
    with pytest.raises(ChecksumError) as ei:
        load_journey(tmp_path)
    assert ei.value.path.endswith("segment_001.vjt")
