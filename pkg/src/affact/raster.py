"""Pixel operations on float images.

Images are numpy arrays of shape (height, width, channels) with channels in
{1, 3} and samples in [0, 1]. Row-parallel operations split the output into
row bands; every output sample is computed by the same elementwise arithmetic
whatever the split, so results do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .geometry import AffineTransform


def as_image(arr) -> np.ndarray:
    """Validate ``arr`` and return it as a float64 (H, W, C) array."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W) or (H, W, 1|3) image, got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError("image is empty")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite samples")
    return img


def new_image(width: int, height: int, channels: int = 3, fill: float = 0.0) -> np.ndarray:
    return np.full((height, width, channels), fill, dtype=np.float64)


def _row_bands(n_rows: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, n_rows))
    if workers == 1:
        return [(0, n_rows)]
    edges = np.linspace(0, n_rows, workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run_bands(fn, n_rows: int, workers: int) -> list:
    bands = _row_bands(n_rows, workers)
    if len(bands) == 1:
        return [fn(*bands[0])]
    with ThreadPoolExecutor(max_workers=len(bands)) as pool:
        return list(pool.map(lambda band: fn(*band), bands))


def sample_bilinear(src: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Bilinear samples of ``src`` at source coordinates (sx, sy).

    Coordinates outside [0, w-1] x [0, h-1] yield 0. Returns an array of shape
    ``sx.shape + (channels,)``.
    """
    h, w, c = src.shape
    valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    x0 = np.clip(np.floor(sx), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(sy), 0, max(h - 2, 0))
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    i00 = y0.astype(np.intp) * w + x0.astype(np.intp)
    dx = 1 if w > 1 else 0
    dy = w if h > 1 else 0
    flat = src.reshape(-1, c)
    top = flat[i00] * (1.0 - fx) + flat[i00 + dx] * fx
    bottom = flat[i00 + dy] * (1.0 - fx) + flat[i00 + dy + dx] * fx
    out = top * (1.0 - fy) + bottom * fy
    out[~valid] = 0.0
    return out


def warp(src: np.ndarray, t: AffineTransform, out_w: int, out_h: int, workers: int = 1) -> np.ndarray:
    """Inverse-mapped warp: output pixel (u, v) samples ``src`` at ``t(u, v)``."""
    if out_w <= 0 or out_h <= 0:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    src = as_image(src)
    u = np.arange(out_w, dtype=np.float64)

    def band(r0: int, r1: int) -> np.ndarray:
        v = np.arange(r0, r1, dtype=np.float64)[:, None]
        sx = t.a * u + t.b * v + t.c
        sy = t.d * u + t.e * v + t.f
        return sample_bilinear(src, sx, sy)

    return np.concatenate(_run_bands(band, out_h, workers), axis=0)


def warp_many(src: np.ndarray, transforms: Sequence[AffineTransform], out_w: int, out_h: int) -> np.ndarray:
    """Warp one source image with many transforms; returns (N, out_h, out_w, C).

    Equivalent to stacking :func:`warp` results, but vectorized over N.
    """
    if out_w <= 0 or out_h <= 0:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    src = as_image(src)
    if len(transforms) == 0:
        return np.zeros((0, out_h, out_w, src.shape[2]))
    coef = np.array([[t.a, t.b, t.c, t.d, t.e, t.f] for t in transforms])[:, :, None, None]
    u = np.arange(out_w, dtype=np.float64)[None, :]
    v = np.arange(out_h, dtype=np.float64)[:, None]
    sx = coef[:, 0] * u + coef[:, 1] * v + coef[:, 2]
    sy = coef[:, 3] * u + coef[:, 4] * v + coef[:, 5]
    return sample_bilinear(src, sx, sy)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian truncated at radius ceil(3 * sigma)."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return np.ones(1)
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    with np.errstate(over="ignore"):
        k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_rows(img: np.ndarray, kernel: np.ndarray, r0: int, r1: int) -> np.ndarray:
    radius = len(kernel) // 2
    w = img.shape[1]
    rows = img[r0:r1]
    left = np.repeat(rows[:, :1], radius, axis=1)
    right = np.repeat(rows[:, -1:], radius, axis=1)
    padded = np.concatenate([left, rows, right], axis=1)
    out = kernel[0] * padded[:, :w]
    for j in range(1, len(kernel)):
        out += kernel[j] * padded[:, j:j + w]
    return out


def gaussian_blur(src: np.ndarray, sigma: float, workers: int = 1) -> np.ndarray:
    """Separable Gaussian blur with edge replication; ``sigma == 0`` is a copy."""
    src = as_image(src)
    kernel = gaussian_kernel(sigma)
    if len(kernel) == 1:
        return src.copy()
    horiz = np.concatenate(
        _run_bands(lambda a, b: _convolve_rows(src, kernel, a, b), src.shape[0], workers), axis=0
    )
    # The vertical pass runs on the transposed image so it reuses the row code.
    horiz_t = np.ascontiguousarray(horiz.transpose(1, 0, 2))
    vert_t = np.concatenate(
        _run_bands(lambda a, b: _convolve_rows(horiz_t, kernel, a, b), horiz_t.shape[0], workers), axis=0
    )
    return np.ascontiguousarray(vert_t.transpose(1, 0, 2))


def hflip(src: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(as_image(src)[:, ::-1])


def rescale(src: np.ndarray, out_w: int, out_h: int, workers: int = 1) -> np.ndarray:
    """Bilinear resize mapping the corner pixel centers onto each other."""
    if out_w <= 0 or out_h <= 0:
        raise ValueError(f"target size must be positive, got {out_w}x{out_h}")
    src = as_image(src)
    h, w, _ = src.shape
    if (out_w, out_h) == (w, h):
        return src.copy()
    fx = (w - 1) / (out_w - 1) if out_w > 1 else 0.0
    fy = (h - 1) / (out_h - 1) if out_h > 1 else 0.0
    return warp(src, AffineTransform(fx, 0.0, 0.0, 0.0, fy, 0.0), out_w, out_h, workers=workers)


def crop(src: np.ndarray, x: int, y: int, w: int, h: int) -> np.ndarray:
    src = as_image(src)
    H, W, _ = src.shape
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > W or y + h > H:
        raise ValueError(f"crop rectangle ({x}, {y}, {w}, {h}) outside {W}x{H} image")
    return src[y:y + h, x:x + w].copy()


def to_gray(src: np.ndarray) -> np.ndarray:
    """Luma (ITU-R 601) of an RGB image; single-channel images pass through."""
    src = as_image(src)
    if src.shape[2] == 1:
        return src
    return (src @ np.array([0.299, 0.587, 0.114]))[:, :, None]
