"""Grayscale images: PGM I/O, additive Gaussian noise and quality metrics.

An image is a 2-D ``float64`` numpy array of shape ``(height, width)``;
row-major flattening gives the nodal ordering used by the finite element
code.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConstantImage,
    MalformedHeader,
    ShapeMismatch,
    TruncatedData,
    UnsupportedMaxval,
    ZeroDenominator,
    ZeroNorm,
)

PEAK = 255.0
SSIM_C1 = (0.01 * PEAK) ** 2
SSIM_C2 = (0.03 * PEAK) ** 2


def as_image(data) -> np.ndarray:
    """Validate and convert ``data`` to a finite 2-D float64 array."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must be a non-empty 2-D array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

_WS = b" \t\n\r\v\f"


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace separated header tokens, skipping comments.

    Returns the tokens and the offset just past the final token.
    """
    tokens = []
    pos, n = 0, len(data)
    while len(tokens) < count:
        while pos < n and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise MalformedHeader("unexpected end of header")
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def load_pgm(data: bytes) -> np.ndarray:
    """Parse a P2 (ASCII) or P5 (binary) PGM byte string."""
    if len(data) < 2 or data[:2] not in (b"P2", b"P5"):
        raise MalformedHeader(f"unsupported magic number {data[:2]!r}")
    tokens, pos = _header_tokens(data, 4)
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MalformedHeader("non-integer header field") from None
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if not 0 < maxval <= 65535:
        raise UnsupportedMaxval(f"maxval {maxval} outside 1..65535")
    count = width * height

    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WS:
            raise MalformedHeader("missing whitespace after maxval")
        raster = data[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(raster) < need:
            raise TruncatedData(f"expected {need} raster bytes, got {len(raster)}")
        values = np.frombuffer(raster[:need], dtype=dtype)
    else:
        body = re.sub(rb"#[^\r\n]*", b"", data[pos:])
        fields = body.split()
        if len(fields) < count:
            raise TruncatedData(f"expected {count} samples, got {len(fields)}")
        try:
            values = np.array([int(f) for f in fields[:count]], dtype=np.int64)
        except ValueError:
            raise MalformedHeader("non-integer sample in P2 raster") from None
        if values.min() < 0:
            raise MalformedHeader("negative sample in P2 raster")
    if values.max() > maxval:
        raise MalformedHeader("sample exceeds maxval")
    return values.astype(np.float64).reshape(height, width)


def quantize(img: np.ndarray) -> np.ndarray:
    """Round half up to integers and clamp to [0, 255] as ``uint8``."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def save_pgm(img, binary: bool = True) -> bytes:
    """Encode an image as 8-bit PGM (P5 when ``binary`` else P2)."""
    q = quantize(as_image(img))
    height, width = q.shape
    if binary:
        return b"P5\n%d %d\n255\n" % (width, height) + q.tobytes()
    rows = [" ".join(str(v) for v in row) for row in q.tolist()]
    return ("P2\n%d %d\n255\n" % (width, height) + "\n".join(rows) + "\n").encode("ascii")


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image as PILImage

        with PILImage.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.float64)
    return load_pgm(path.read_bytes())


def write_image(path, img) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(quantize(as_image(img)), mode="L").save(path)
        return
    path.write_bytes(save_pgm(img))


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    target_snr: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not self.target_snr > 0:
            raise ValueError("target_snr must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def noise_std(img, target_snr: float) -> float:
    """Standard deviation of the noise giving ``target_snr`` for ``img``."""
    s = float(np.std(as_image(img)))
    if s == 0.0:
        raise ConstantImage("constant image: SNR is undefined")
    return s / target_snr


def add_gaussian_noise(img, spec: NoiseSpec) -> np.ndarray:
    """Return ``img + n`` with ``n`` i.i.d. N(0, (std(img)/snr)^2).

    The result is not clamped. The noise stream comes from numpy's PCG64
    generator seeded with ``spec.seed``.
    """
    img = as_image(img)
    sigma = noise_std(img, spec.target_snr)
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    return img + sigma * rng.standard_normal(img.shape)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def snr(clean, noisy) -> float:
    """std(clean) / std(clean - noisy), population standard deviations."""
    clean, noisy = _pair(clean, noisy)
    den = float(np.std(clean - noisy))
    if den == 0.0:
        raise ZeroDenominator("clean - noisy has zero standard deviation")
    return float(np.std(clean)) / den


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return math.sqrt(float(np.mean((a - b) ** 2)))


def psnr(a, b) -> float:
    """Peak SNR in dB for peak 255; ``math.inf`` for identical images."""
    err = rmse(a, b)
    if err == 0.0:
        return math.inf
    return 20.0 * math.log10(PEAK / err)


def ncc(a, b) -> float:
    """Raw normalized cross correlation <a,b> / (|a| |b|), no mean removal."""
    a, b = _pair(a, b)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNorm("ncc is undefined for an all-zero image")
    return float(np.vdot(a, b)) / (na * nb)


def ssim(a, b) -> float:
    """Global SSIM: one window covering the whole image."""
    a, b = _pair(a, b)
    mu_a, mu_b = float(a.mean()), float(b.mean())
    da, db = a - mu_a, b - mu_b
    var_a, var_b = float(np.mean(da * da)), float(np.mean(db * db))
    cov = float(np.mean(da * db))
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


@dataclass
class QualityReport:
    psnr: float
    ncc: float
    ssim: float
    fp_iterations: list[int] | None = None
    fp_residuals: list[float] | None = None

    @classmethod
    def compare(cls, reference, estimate, **diagnostics) -> "QualityReport":
        return cls(psnr(reference, estimate), ncc(reference, estimate), ssim(reference, estimate), **diagnostics)
