"""Image coding, denoising and inpainting on top of the cascade, plus the
single-scale KSVD baseline used for comparisons."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .cascade import (
    CascadeConfig,
    CascadeModel,
    LayerCodes,
    encode_with_estimate,
    fit_model,
)
from .image import as_image, psnr
from .ksvd import TrainConfig, dct_dictionary, train
from .omp import Both, Budget, StopRule, encode_batch, reconstruct
from .patches import aggregate, extract, make_grid

#: Noise gain in the per-patch error target ``C * sigma``.
DEFAULT_GAIN = 1.15


@dataclass(frozen=True)
class RatePoint:
    coeffs_per_pixel: float
    psnr_db: float

    def __post_init__(self):
        if self.coeffs_per_pixel < 0:
            raise ValueError("coefficients per pixel cannot be negative")

    def __str__(self) -> str:
        return f"{self.coeffs_per_pixel:.6f},{self.psnr_db:.4f}"


def tolerance_schedule(err: float, levels: int, b: int = 8, decay: float = 0.7,
                       max_atoms: int | None = None) -> list[StopRule]:
    """Per-level stop rules from a per-pixel RMS error target.

    Level ``n`` gets ``err * decay**n``: a coarse coefficient covers ``4**n``
    full-resolution pixels, so coarse levels are coded more tightly.
    """
    cap = max_atoms or b * b
    return [Both(cap, b * b * (err * decay**n) ** 2) for n in range(levels)]


def code_image(img, model: CascadeModel, stops=None):
    """Encode and decode ``img``; returns ``(codes, RatePoint, reconstruction)``."""
    img = as_image(img)
    codes, recon = encode_with_estimate(img, model, stops)
    return codes, RatePoint(codes.nnz / img.size, psnr(img, recon)), recon


# -- single-scale baseline ----------------------------------------------------

def fit_baseline(img, b: int = 8, s: int = 7, m: int = 256, stop: StopRule = Budget(4),
                 train_cfg: TrainConfig = TrainConfig(), mask=None) -> np.ndarray:
    """Plain KSVD dictionary for ``img``'s own patches, DCT-initialized."""
    img = as_image(img)
    grid = make_grid(*img.shape, b, s)
    pmask = extract(np.asarray(mask, dtype=np.float64), grid) if mask is not None else None
    cfg = dataclasses.replace(train_cfg, stop=stop)
    return train(extract(img, grid), dct_dictionary(b, m), cfg, mask=pmask).dictionary


def baseline_code(img, D, s: int = 7, stop: StopRule = Budget(4), mask=None):
    """Single-scale encode/aggregate; returns ``(codes, reconstruction)``."""
    img = as_image(img)
    b = int(round(np.sqrt(D.shape[0])))
    grid = make_grid(*img.shape, b, s)
    pmask = extract(np.asarray(mask, dtype=np.float64), grid) if mask is not None else None
    code = encode_batch(D, extract(img, grid), stop, mask=pmask)
    include = ~code.skipped if code.skipped.any() else None
    recon = aggregate(reconstruct(D, code), grid, include=include)
    return LayerCodes([code], (img.shape,)), recon


def baseline_ksvd(img, b: int = 8, s: int = 7, m: int = 256, stop: StopRule = Budget(4),
                  train_cfg: TrainConfig = TrainConfig()):
    """Train and code at a single scale; returns ``(codes, RatePoint, reconstruction)``."""
    img = as_image(img)
    D = fit_baseline(img, b, s, m, stop, train_cfg)
    codes, recon = baseline_code(img, D, s, stop)
    return codes, RatePoint(codes.nnz / img.size, psnr(img, recon)), recon


def baseline_ksvd_masked(corrupted, mask, b: int = 8, s: int = 7, m: int = 256,
                         stop: StopRule = Budget(4), train_cfg: TrainConfig = TrainConfig()):
    """Single-scale masked KSVD inpainting; returns the restored image.

    Patches with fewer than the minimum number of known pixels are left at
    zero, since there is no coarser estimate to fall back on.
    """
    mask = _check_mask(corrupted, mask)
    D = fit_baseline(corrupted, b, s, m, stop, train_cfg, mask=mask)
    return baseline_code(corrupted, D, s, stop, mask=mask)[1]


# -- denoising ----------------------------------------------------------------

def denoise_config(h: int, w: int, levels: int = 4, b: int = 8, s: int = 1,
                   iterations: int = 10, max_patches: int | None = 20000,
                   m: int = 256, seed: int = 0) -> CascadeConfig:
    cap = b * b // 2
    cfg = CascadeConfig(
        levels=levels, b=b, s=s, budgets=(cap,) * levels, global_m=m,
        train=TrainConfig(iterations=iterations, seed=seed, max_patches=max_patches),
    )
    return cfg.fit(h, w)


def denoise_stops(cfg: CascadeConfig, sigma: float, gain: float = DEFAULT_GAIN):
    eps2 = cfg.n * (gain * sigma) ** 2
    return [Both(cfg.n // 2, eps2) for _ in range(cfg.levels)]


def denoise(noisy, sigma: float, gain: float = DEFAULT_GAIN, cfg: CascadeConfig | None = None,
            model: CascadeModel | None = None) -> np.ndarray:
    """Cascade denoising with error-targeted OMP at every level.

    Every patch's residual is coded until its squared error drops below
    ``b*b * (gain*sigma)**2`` or ``b*b/2`` atoms are used.  Without ``model``
    the dictionaries are learned from the noisy image itself.
    """
    noisy = as_image(noisy)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if model is not None:
        cfg = model.config
    elif cfg is None:
        cfg = denoise_config(*noisy.shape)
    stops = denoise_stops(cfg, sigma, gain)
    if model is None:
        model = fit_model(noisy, cfg, stops=stops, train_stop=stops[0])
    return encode_with_estimate(noisy, model, stops)[1]


# -- inpainting ---------------------------------------------------------------

def _check_mask(img, mask) -> np.ndarray:
    img = as_image(img)
    mask = np.asarray(mask)
    if mask.shape != img.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask values must be 0 or 1")
    if not mask.any():
        raise ValueError("mask marks every pixel as missing")
    return mask.astype(np.float64)


def inpaint_config(h: int, w: int, levels: int = 4, b: int = 8, s: int = 2,
                   budgets=(2, 3, 4, 6), iterations: int = 10,
                   max_patches: int | None = 20000, m: int = 256,
                   seed: int = 0) -> CascadeConfig:
    cfg = CascadeConfig(
        levels=levels, b=b, s=s, budgets=tuple(budgets)[:levels], global_m=m,
        train=TrainConfig(iterations=iterations, seed=seed, max_patches=max_patches),
    )
    return cfg.fit(h, w)


def inpaint(corrupted, mask, cfg: CascadeConfig | None = None,
            model: CascadeModel | None = None, stops=None) -> np.ndarray:
    """Fill missing pixels (``mask == 0``) by masked cascade coding.

    Values under missing pixels are ignored.  The whole output comes from the
    decoded cascade; regions with no usable data at a level inherit the
    upsampled coarser estimate.
    """
    corrupted = as_image(corrupted)
    mask = _check_mask(corrupted, mask)
    if mask.all():
        mask = None
    else:
        corrupted = np.where(mask != 0, corrupted, 0.0)
    if model is not None:
        cfg = model.config
    elif cfg is None:
        cfg = inpaint_config(*corrupted.shape)
    if model is None:
        model = fit_model(corrupted, cfg, stops=stops, mask=mask)
    return encode_with_estimate(corrupted, model, stops, mask=mask)[1]
