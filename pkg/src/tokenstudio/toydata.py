"""Deterministic toy image fixtures for desk-scale runs and tests.

Images are flat-colored or block-patterned 32x32 RGB, aligned to 2x2 blocks so
the reference codec reconstructs them almost exactly.
"""
from __future__ import annotations

import numpy as np


def solid_image(rgb: tuple[int, int, int], size: int = 32) -> np.ndarray:
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:] = np.asarray(rgb, dtype=np.uint8)
    return img


def square_image(
    square_rgb: tuple[int, int, int],
    background_rgb: tuple[int, int, int] = (220, 220, 220),
    size: int = 32,
    square_size: int = 16,
    offset: tuple[int, int] = (8, 8),
) -> np.ndarray:
    """A colored square on a flat background; offsets snap to 2-px blocks."""
    img = solid_image(background_rgb, size)
    r = (offset[0] // 2) * 2
    c = (offset[1] // 2) * 2
    s = (square_size // 2) * 2
    img[r : r + s, c : c + s] = np.asarray(square_rgb, dtype=np.uint8)
    return img


def concept_images(n: int, seed: int = 0, size: int = 32) -> list[np.ndarray]:
    """Blue-ish squares with seeded variation in shade, size, and placement."""
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(n):
        blue = (
            int(rng.integers(0, 60)),
            int(rng.integers(0, 80)),
            int(rng.integers(170, 255)),
        )
        bg = int(rng.integers(190, 240))
        square_size = int(rng.integers(6, 13)) * 2
        max_off = size - square_size
        offset = (int(rng.integers(0, max_off // 2 + 1)) * 2,
                  int(rng.integers(0, max_off // 2 + 1)) * 2)
        images.append(
            square_image(blue, (bg, bg, bg), size=size, square_size=square_size, offset=offset)
        )
    return images


def distractor_images(n: int, seed: int = 0, size: int = 32) -> list[np.ndarray]:
    """Warm-toned blocky images used as unrelated classes in retrieval tests."""
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(n):
        base = solid_image(
            (int(rng.integers(150, 255)), int(rng.integers(60, 160)), int(rng.integers(0, 80))),
            size,
        )
        blocks = rng.integers(0, 2, size=(size // 4, size // 4, 1))
        shade = (blocks * rng.integers(20, 60)).astype(np.uint8)
        base = np.clip(
            base.astype(np.int16) - shade.repeat(4, axis=0).repeat(4, axis=1), 0, 255
        ).astype(np.uint8)
        images.append(base)
    return images
