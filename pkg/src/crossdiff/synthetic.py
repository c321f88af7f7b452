"""Seeded synthetic test images standing in for a natural/texture corpus."""
from __future__ import annotations

import numpy as np

from .errors import TooSmall

LEVELS = np.arange(32, 225, 32, dtype=np.float64)  # 32, 64, ..., 224
KINDS = ("shapes", "texture")


def shapes(size: int, seed: int = 0) -> np.ndarray:
    """Piecewise-constant rectangles and disks on a flat background."""
    rng = np.random.Generator(np.random.PCG64(seed))
    img = np.full((size, size), LEVELS[1])
    yy, xx = np.mgrid[0:size, 0:size]
    n_shapes = 8
    levels = rng.permutation(np.tile(LEVELS[[0, 2, 3, 4, 5, 6]], 2))[:n_shapes]
    for i, level in enumerate(levels):
        if i % 2 == 0:
            w, h = rng.integers(size // 8, size // 3, size=2)
            x0, y0 = rng.integers(0, size - w), rng.integers(0, size - h)
            img[y0:y0 + h, x0:x0 + w] = level
        else:
            r = rng.integers(size // 16, size // 6)
            cx, cy = rng.integers(r, size - r, size=2)
            img[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = level
    return img


def texture(size: int, seed: int = 0) -> np.ndarray:
    """Oriented short-period sinusoids plus fine speckle, rescaled to [0, 255]."""
    rng = np.random.Generator(np.random.PCG64(seed))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for _ in range(4):
        angle = rng.uniform(0, np.pi)
        period = rng.uniform(3.0, 7.0)
        phase = rng.uniform(0, 2 * np.pi)
        k = 2 * np.pi / period
        img += np.sin(k * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
    img += 0.8 * rng.standard_normal((size, size))
    lo, hi = img.min(), img.max()
    return (img - lo) * (255.0 / (hi - lo))


def generate_synthetic(kind: str, size: int, seed: int = 0) -> np.ndarray:
    if size < 32:
        raise TooSmall(f"synthetic images need size >= 32, got {size}")
    if kind == "shapes":
        return shapes(size, seed)
    if kind == "texture":
        return texture(size, seed)
    raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")
