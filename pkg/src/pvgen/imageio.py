"""8-bit PNG encoding of float images in [0, 1]."""

from __future__ import annotations

import io

import numpy as np


def to_uint8(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def png_bytes(image) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buf, format="PNG")
    return buf.getvalue()
