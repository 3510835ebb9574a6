"""Grayscale image helpers: bicubic factor-2 resampling, pyramids, PSNR, noise.

Images are plain 2-D ``float64`` numpy arrays with nominal range [0, 255].
Values are never clipped here; quantization happens only on export.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: Keys cubic convolution parameter.
KEYS_A = -0.5


def keys_kernel(x, a: float = KEYS_A):
    """Evaluate the Keys cubic convolution kernel at ``x`` (scalar or array)."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def as_image(img) -> np.ndarray:
    """Validate ``img`` and return it as a float64 2-D array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or Inf values")
    return arr


@lru_cache(maxsize=64)
def _down_matrix(size: int) -> np.ndarray:
    # Antialiased: kernel stretched by 2, output centre i sits at input 2i + 0.5.
    out = -(-size // 2)
    mat = np.zeros((out, size))
    for i in range(out):
        centre = 2.0 * i + 0.5
        first = math.floor(centre) - 3
        for src in range(first, first + 8):
            w = float(keys_kernel((src - centre) / 2.0)) / 2.0
            mat[i, min(max(src, 0), size - 1)] += w
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=64)
def _up_matrix(size: int, target: int) -> np.ndarray:
    # Output centre j sits at input (j + 0.5) / 2 - 0.5.
    mat = np.zeros((target, size))
    for j in range(target):
        pos = (j + 0.5) / 2.0 - 0.5
        first = math.floor(pos) - 1
        for src in range(first, first + 4):
            w = float(keys_kernel(src - pos))
            mat[j, min(max(src, 0), size - 1)] += w
    mat.setflags(write=False)
    return mat


def downsample(img) -> np.ndarray:
    """Halve both dimensions (rounding up) with antialiased bicubic filtering."""
    img = as_image(img)
    h, w = img.shape
    if min(h, w) < 2:
        raise ValueError(f"cannot downsample a {h}x{w} image")
    return _down_matrix(h) @ img @ _down_matrix(w).T


def upsample(img, target_h: int, target_w: int) -> np.ndarray:
    """Bicubic factor-2 upsampling to an exact target size.

    ``target_h`` must be ``2*h`` or ``2*h - 1`` (likewise for the width) so that
    odd-sized pyramid levels round-trip exactly.
    """
    img = as_image(img)
    h, w = img.shape
    if target_h not in (2 * h - 1, 2 * h) or target_w not in (2 * w - 1, 2 * w):
        raise ValueError(
            f"target {target_h}x{target_w} is not a factor-2 upsampling of {h}x{w}"
        )
    return _up_matrix(h, target_h) @ img @ _up_matrix(w, target_w).T


def pyramid_dims(h: int, w: int, levels: int) -> list[tuple[int, int]]:
    """Level sizes from finest (index 0) to coarsest under ceil-halving."""
    dims = [(h, w)]
    for _ in range(levels - 1):
        h, w = -(-h // 2), -(-w // 2)
        dims.append((h, w))
    return dims


@dataclass(frozen=True)
class Pyramid:
    """Bicubic image pyramid; ``levels[0]`` is the input, ``levels[-1]`` the coarsest."""

    levels: tuple[np.ndarray, ...]
    factor: int = 2

    @property
    def dims(self) -> list[tuple[int, int]]:
        return [lvl.shape for lvl in self.levels]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, n: int) -> np.ndarray:
        return self.levels[n]


def build_pyramid(img, levels: int) -> Pyramid:
    if levels < 1:
        raise ValueError("a pyramid needs at least one level")
    out = [as_image(img)]
    for _ in range(levels - 1):
        out.append(downsample(out[-1]))
    return Pyramid(tuple(out))


def psnr(a, b, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def add_gaussian_noise(img, sigma: float, seed: int) -> np.ndarray:
    """Add zero-mean white Gaussian noise; output is not clipped."""
    img = as_image(img)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return img + rng.normal(0.0, sigma, size=img.shape)
