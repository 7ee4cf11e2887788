"""Shared binary/JSON helpers for artifact files.

All float blocks on disk are little-endian float32, row-major, base64 when
embedded in JSON.  In-memory arrays are float64; values written to disk are
float32-representable after a round trip, which is what makes re-serialization
bit-exact.
"""
from __future__ import annotations

import base64
import hashlib
import json
from typing import Any, Sequence

import numpy as np


def f32_bytes(arr: np.ndarray) -> bytes:
    """Contiguous little-endian float32 bytes, row-major."""
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def encode_f32(arr: np.ndarray) -> str:
    return base64.b64encode(f32_bytes(arr)).decode("ascii")


def decode_f32(data: str, shape: Sequence[int]) -> np.ndarray:
    """Decode a base64 float32 block back to a float64 array of `shape`."""
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    flat = np.frombuffer(raw, dtype="<f4")
    expected = int(np.prod(shape)) if len(shape) else flat.size
    if flat.size != expected:
        raise ValueError(f"float block has {flat.size} values, expected {expected}")
    return flat.reshape(tuple(shape)).astype(np.float64)


def canonical_json(obj: Any) -> str:
    """Deterministic JSON rendering used for fingerprints and artifact files."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def fingerprint(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def fingerprint_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def derive_seed(*parts: Any) -> int:
    """Deterministic 31-bit seed derived from a tuple of labels/numbers.

    Used wherever independent random streams are needed (per-iteration noise,
    per-weight previews) so that parallel and sequential execution agree.
    """
    key = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little") % (2**31)
