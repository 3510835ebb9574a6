"""Two-pass cascaded residual coding over a bicubic pyramid.

Level ``n = 0`` is the full-resolution image and ``n = N`` the coarsest.  The
first pass learns one dictionary per level on the residual left by the
coarser levels; the second pass learns a single global dictionary from all
levels' residual patches, and that dictionary is what encode/decode use.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .image import as_image, build_pyramid, pyramid_dims, upsample
from .ksvd import TrainConfig, dct_dictionary, train
from .omp import Budget, SparseCode, StopRule, check_dictionary, encode_batch, reconstruct
from .patches import PatchGrid, aggregate, extract, make_grid


def max_levels(h: int, w: int, b: int, limit: int = 32) -> int:
    """Deepest pyramid whose coarsest level still holds a ``b x b`` patch."""
    levels = 0
    for dh, dw in pyramid_dims(h, w, limit):
        if min(dh, dw) < b:
            break
        levels += 1
    return levels


@dataclass(frozen=True)
class CascadeConfig:
    """Cascade hyper-parameters.

    ``budgets[n]`` is the coefficient budget of level ``n`` (0 = finest).
    ``level_m`` sizes the first-pass dictionaries (defaults to ``global_m``).
    """

    levels: int = 4
    b: int = 8
    s: int = 7
    budgets: tuple[int, ...] = (4, 4, 4, 4)
    train: TrainConfig = field(default_factory=TrainConfig)
    global_m: int = 256
    level_m: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(t) for t in self.budgets))
        if self.levels < 1:
            raise ValueError("a cascade needs at least one level")
        if len(self.budgets) != self.levels:
            raise ValueError(f"{len(self.budgets)} budgets given for {self.levels} levels")
        if any(t < 1 for t in self.budgets):
            raise ValueError("per-level budgets must be at least 1")
        if self.b < 1 or self.s < 1:
            raise ValueError("patch size and stride must be positive")
        if self.s > self.b:
            raise ValueError("stride cannot exceed the patch size")

    @property
    def n(self) -> int:
        return self.b * self.b

    def stops(self) -> list[StopRule]:
        return [Budget(t) for t in self.budgets]

    def check_dims(self, h: int, w: int) -> list[tuple[int, int]]:
        dims = pyramid_dims(h, w, self.levels)
        ch, cw = dims[-1]
        if min(ch, cw) < self.b:
            raise ValueError(
                f"{self.levels} levels on {h}x{w} leave a {ch}x{cw} coarsest level, "
                f"smaller than {self.b}x{self.b} patches"
            )
        return dims

    def fit(self, h: int, w: int) -> CascadeConfig:
        """Copy with the depth capped so the coarsest level fits a patch."""
        levels = min(self.levels, max_levels(h, w, self.b))
        if levels < 1:
            raise ValueError(f"{h}x{w} image is smaller than one {self.b}x{self.b} patch")
        return dataclasses.replace(self, levels=levels, budgets=self.budgets[:levels])


@dataclass(frozen=True)
class CascadeModel:
    config: CascadeConfig
    dictionary: np.ndarray
    dims: tuple[tuple[int, int], ...]

    def __post_init__(self):
        check_dictionary(self.dictionary, tol=1e-6)
        if self.dictionary.shape[0] != self.config.n:
            raise ValueError("dictionary dimension does not match the patch size")
        if len(self.dims) != self.config.levels:
            raise ValueError("recorded pyramid does not match the level count")

    def grid(self, n: int, dims=None) -> PatchGrid:
        h, w = (dims or self.dims)[n]
        return make_grid(h, w, self.config.b, self.config.s)


@dataclass
class LayerCodes:
    """Per-level sparse codes; ``codes[n]``/``dims[n]`` index levels finest-first.

    Iterate with :meth:`coarse_to_fine` for the coding order.
    """

    codes: list[SparseCode]
    dims: tuple[tuple[int, int], ...]

    @property
    def levels(self) -> int:
        return len(self.codes)

    @property
    def nnz(self) -> int:
        return sum(c.nnz for c in self.codes)

    def coarse_to_fine(self):
        for n in range(self.levels - 1, -1, -1):
            yield n, self.codes[n]


@dataclass
class FirstPass:
    pyramid: list[np.ndarray]
    dictionaries: list[np.ndarray]
    residuals: list[np.ndarray]
    reconstructions: list[np.ndarray]
    codes: list[SparseCode]
    grids: list[PatchGrid]
    masks: list[np.ndarray] | None = None

    @property
    def dims(self) -> tuple[tuple[int, int], ...]:
        return tuple(p.shape for p in self.pyramid)


def mask_pyramid(img, mask, levels: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pyramid of a partially known image and its masks.

    A coarse pixel is known when any pixel of its 2x2 footprint is known, and
    takes the mean of the known footprint pixels.
    """
    img = as_image(img)
    mask = np.asarray(mask) != 0
    if mask.shape != img.shape:
        raise ValueError("mask and image shapes differ")
    imgs = [np.where(mask, img, 0.0)]
    masks = [mask.astype(np.float64)]
    for _ in range(levels - 1):
        h, w = imgs[-1].shape
        ph, pw = -(-h // 2) * 2, -(-w // 2) * 2
        val = np.zeros((ph, pw))
        cnt = np.zeros((ph, pw))
        val[:h, :w] = imgs[-1] * masks[-1]
        cnt[:h, :w] = masks[-1]
        val = val.reshape(ph // 2, 2, pw // 2, 2).sum(axis=(1, 3))
        cnt = cnt.reshape(ph // 2, 2, pw // 2, 2).sum(axis=(1, 3))
        known = cnt > 0
        imgs.append(np.where(known, val / np.where(known, cnt, 1.0), 0.0))
        masks.append(known.astype(np.float64))
    return imgs, masks


def _level_stops(cfg: CascadeConfig, stops) -> list[StopRule]:
    stops = cfg.stops() if stops is None else list(stops)
    if len(stops) != cfg.levels:
        raise ValueError(f"{len(stops)} stop rules given for {cfg.levels} levels")
    return stops


def decode_level(D, code: SparseCode, grid: PatchGrid, coarse_up=None) -> np.ndarray:
    """Aggregate one level's decoded patches and add the upsampled coarser estimate."""
    include = ~code.skipped if code.skipped.any() else None
    out = aggregate(reconstruct(D, code), grid, include=include)
    if coarse_up is not None:
        out = out + coarse_up
    return out


def first_pass(img, cfg: CascadeConfig, *, stops=None, mask=None) -> FirstPass:
    """Learn per-level residual dictionaries from coarse to fine."""
    img = as_image(img)
    dims = cfg.check_dims(*img.shape)
    stops = _level_stops(cfg, stops)
    if mask is None:
        pyr, masks = list(build_pyramid(img, cfg.levels).levels), None
    else:
        pyr, masks = mask_pyramid(img, mask, cfg.levels)
    grids = [make_grid(h, w, cfg.b, cfg.s) for h, w in dims]
    m = cfg.level_m or cfg.global_m
    N = cfg.levels - 1
    dictionaries = [None] * cfg.levels
    residuals = [None] * cfg.levels
    recons = [None] * cfg.levels
    codes = [None] * cfg.levels
    for n in range(N, -1, -1):
        up = upsample(recons[n + 1], *dims[n]) if n < N else None
        residuals[n] = pyr[n] - up if up is not None else pyr[n].copy()
        patches = extract(residuals[n], grids[n])
        pmask = extract(masks[n], grids[n]) if masks is not None else None
        level_cfg = dataclasses.replace(cfg.train, stop=stops[n])
        D = train(patches, dct_dictionary(cfg.b, m), level_cfg, mask=pmask).dictionary
        codes[n] = encode_batch(D, patches, stops[n], mask=pmask)
        recons[n] = decode_level(D, codes[n], grids[n], up)
        dictionaries[n] = D
    return FirstPass(pyr, dictionaries, residuals, recons, codes, grids, masks)


def second_pass_train(residuals, cfg: CascadeConfig, *, stop: StopRule | None = None,
                      masks=None, dims=None, on_iteration=None) -> CascadeModel:
    """Train the global dictionary on residual patches pooled over all levels.

    ``residuals`` may be a list of per-level residual lists (several training
    images); patches are pooled without per-level weighting.
    """
    if len(residuals) and isinstance(residuals[0], np.ndarray):
        residuals = [residuals]
        masks = [masks] if masks is not None else None
    cols, mcols = [], []
    for i, res in enumerate(residuals):
        if len(res) != cfg.levels:
            raise ValueError(f"expected {cfg.levels} residual levels, got {len(res)}")
        for n, r in enumerate(res):
            grid = make_grid(*r.shape, cfg.b, cfg.s)
            cols.append(extract(r, grid))
            if masks is not None:
                mcols.append(extract(masks[i][n], grid))
    patches = np.concatenate(cols, axis=1)
    pmask = np.concatenate(mcols, axis=1) if masks is not None else None
    stop = stop or Budget(max(cfg.budgets))
    result = train(patches, dct_dictionary(cfg.b, cfg.global_m),
                   dataclasses.replace(cfg.train, stop=stop), mask=pmask,
                   on_iteration=on_iteration)
    if dims is None:
        dims = tuple(r.shape for r in residuals[0])
    return CascadeModel(cfg, result.dictionary, tuple(tuple(d) for d in dims))


def fit_model(img, cfg: CascadeConfig, *, stops=None, train_stop=None, mask=None) -> CascadeModel:
    """Both passes on a single image."""
    fp = first_pass(img, cfg, stops=stops, mask=mask)
    return second_pass_train(fp.residuals, cfg, stop=train_stop, masks=fp.masks,
                             dims=fp.dims)


def encode_with_estimate(img, model: CascadeModel, stops=None, *, mask=None):
    """Cascade-encode ``img`` with the global dictionary.

    Returns ``(codes, estimate)`` where ``estimate`` is the running
    reconstruction after the finest level.
    """
    cfg = model.config
    img = as_image(img)
    dims = tuple(cfg.check_dims(*img.shape))
    stops = _level_stops(cfg, stops)
    if mask is None:
        pyr, masks = build_pyramid(img, cfg.levels).levels, None
    else:
        pyr, masks = mask_pyramid(img, mask, cfg.levels)
    D = model.dictionary
    N = cfg.levels - 1
    codes = [None] * cfg.levels
    estimate = None
    for n in range(N, -1, -1):
        grid = make_grid(*dims[n], cfg.b, cfg.s)
        up = upsample(estimate, *dims[n]) if estimate is not None else None
        residual = pyr[n] - up if up is not None else pyr[n]
        pmask = extract(masks[n], grid) if masks is not None else None
        codes[n] = encode_batch(D, extract(residual, grid), stops[n], mask=pmask)
        estimate = decode_level(D, codes[n], grid, up)
    return LayerCodes(codes, dims), estimate


def encode(img, model: CascadeModel, stops=None, *, mask=None) -> LayerCodes:
    return encode_with_estimate(img, model, stops, mask=mask)[0]


def decode(codes: LayerCodes, model: CascadeModel) -> np.ndarray:
    cfg = model.config
    if codes.levels != cfg.levels:
        raise ValueError(f"codes have {codes.levels} levels, model has {cfg.levels}")
    dims = codes.dims
    if tuple(dims) != tuple(cfg.check_dims(*dims[0])):
        raise ValueError("code dimensions do not form a factor-2 pyramid")
    D = model.dictionary
    estimate = None
    for n, code in codes.coarse_to_fine():
        grid = make_grid(*dims[n], cfg.b, cfg.s)
        if code.n_columns != len(grid):
            raise ValueError(f"level {n}: {code.n_columns} codes for {len(grid)} patches")
        if code.nnz and code.indices.max() >= D.shape[1]:
            raise ValueError(f"level {n}: atom index out of range")
        up = upsample(estimate, *dims[n]) if estimate is not None else None
        estimate = decode_level(D, code, grid, up)
    return estimate


def level_contributions(codes: LayerCodes, model: CascadeModel) -> list[np.ndarray]:
    """Each level's aggregated decode, upsampled to full resolution (finest-first)."""
    cfg = model.config
    out = []
    for n in range(codes.levels):
        grid = make_grid(*codes.dims[n], cfg.b, cfg.s)
        part = decode_level(model.dictionary, codes.codes[n], grid)
        for lvl in range(n - 1, -1, -1):
            part = upsample(part, *codes.dims[lvl])
        out.append(part)
    return out
