"""8-bit RGB image helpers; PNG on disk."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BadImage


def as_rgb_array(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise BadImage(f"expected uint8 (H, W, 3), got {arr.dtype} {arr.shape}")
    return arr


def save_png(image: np.ndarray, path: str | Path) -> None:
    Image.fromarray(as_rgb_array(image), mode="RGB").save(Path(path), format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    try:
        with Image.open(Path(path)) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise BadImage(f"cannot decode {path}: {exc}") from exc


def png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(as_rgb_array(image), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def from_png_bytes(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise BadImage(f"cannot decode PNG payload: {exc}") from exc
