"""One-step neighbourhood filters: Yaroslavsky (bilateral) and Nonlocal Means."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import as_image


@dataclass(frozen=True)
class YaroslavskyConfig:
    h: float = 64.0
    rho: float = 4.0

    def __post_init__(self):
        if not self.h > 0 or not self.rho > 0:
            raise ValueError("h and rho must be positive")
        if self.half_width < 1:
            raise ValueError(f"rho = {self.rho:g} gives an empty window")

    @property
    def half_width(self) -> int:
        """Window half-width: a box of diameter 4 rho has half-width round(2 rho)."""
        return int(math.floor(2 * self.rho + 0.5))


def yaroslavsky(img, cfg: YaroslavskyConfig = YaroslavskyConfig()) -> np.ndarray:
    """Range-weighted mean over a square window clipped at the borders."""
    u = as_image(img)
    H, W = u.shape
    w = cfg.half_width
    inv_h2 = 1.0 / (cfg.h * cfg.h)
    up = np.pad(u, w)
    inside = np.pad(np.ones_like(u), w)
    num = np.zeros_like(u)
    den = np.zeros_like(u)
    for dy in range(-w, w + 1):
        for dx in range(-w, w + 1):
            v = up[w + dy:w + dy + H, w + dx:w + dx + W]
            m = inside[w + dy:w + dy + H, w + dx:w + dx + W]
            d = v - u
            weight = m * np.exp(-(d * d) * inv_h2)
            num += weight * d
            den += weight
    # increment form: constants come back bit-exact
    return u + num / den


@dataclass(frozen=True)
class NlmConfig:
    sigma: float = 8.0
    h: float | None = None  # defaults to kappa * sigma
    kappa: float = 1.0
    patch_radius: int = 2
    search_radius: int = 10

    def __post_init__(self):
        if not self.sigma > 0 or not self.kappa > 0:
            raise ValueError("sigma and kappa must be positive")
        if self.h is not None and not self.h > 0:
            raise ValueError("h must be positive")
        if self.patch_radius < 1 or self.search_radius < 1:
            raise ValueError("patch and search radii must be positive integers")

    @property
    def range_scale(self) -> float:
        return self.kappa * self.sigma if self.h is None else self.h


def patch_kernel(sigma: float, radius: int) -> np.ndarray:
    """1-D factor of the normalized Gaussian truncated to the patch."""
    z = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(z * z) / (2 * sigma * sigma))
    return k / k.sum()


def _correlate_valid(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of ``a`` with ``outer(k, k)``."""
    r = k.size
    rows = sum(k[i] * a[i:a.shape[0] - r + 1 + i, :] for i in range(r))
    return sum(k[j] * rows[:, j:rows.shape[1] - r + 1 + j] for j in range(r))


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 neighbourhood, treating outside as zero."""
    p = np.pad(a, radius)
    n = 2 * radius + 1
    rows = sum(p[i:p.shape[0] - n + 1 + i, :] for i in range(n))
    return sum(rows[:, j:rows.shape[1] - n + 1 + j] for j in range(n))


def nlm(img, cfg: NlmConfig = NlmConfig()) -> np.ndarray:
    """Patch-wise Nonlocal Means.

    For every patch centre ``x`` and candidate ``y = x + d`` inside the
    image and the search window, the weight is ``exp(-M(x, y) / h^2)`` with
    ``M`` the Gaussian-weighted squared patch distance on the mirror-extended
    image. Each weighted patch estimate is spread back over its patch, and a
    pixel's output is the uniform average of the estimates covering it.
    """
    u = as_image(img)
    H, W = u.shape
    pr, sr = cfg.patch_radius, cfg.search_radius
    pad = pr + sr
    ub = np.pad(u, pad, mode="symmetric")
    kern = patch_kernel(cfg.sigma, pr)
    inv_h2 = 1.0 / cfg.range_scale**2

    # x runs over the image; this view covers x + z for |z| <= pr
    base = ub[sr:sr + H + 2 * pr, sr:sr + W + 2 * pr]
    offsets = [(dy, dx) for dy in range(-sr, sr + 1) for dx in range(-sr, sr + 1)]
    weights = np.zeros((len(offsets), H, W))
    for i, (dy, dx) in enumerate(offsets):
        y0, y1 = max(0, -dy), min(H, H - dy)
        x0, x1 = max(0, -dx), min(W, W - dx)
        if y0 >= y1 or x0 >= x1:
            continue
        a = base[y0:y1 + 2 * pr, x0:x1 + 2 * pr]
        b = ub[sr + y0 + dy:sr + y1 + dy + 2 * pr, sr + x0 + dx:sr + x1 + dx + 2 * pr]
        dist = _correlate_valid((a - b) ** 2, kern)
        weights[i, y0:y1, x0:x1] = np.exp(-dist * inv_h2)
    weights /= weights.sum(axis=0)

    # the spread weights at a pixel sum to its patch count
    out = np.zeros_like(u)
    total = np.zeros_like(u)
    for i, (dy, dx) in enumerate(offsets):
        spread = _box_sum(weights[i], pr)
        out += spread * (ub[pad + dy:pad + dy + H, pad + dx:pad + dx + W] - u)
        total += spread
    return u + out / total
