"""Overlapping square patch extraction and weighted-average aggregation.

Patches are flattened column-major (pixel ``(r, c)`` of a patch lands at
``r + c * b``).  Dictionaries and code files depend on this convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _starts(size: int, b: int, s: int) -> np.ndarray:
    starts = list(range(0, size - b + 1, s))
    if starts[-1] != size - b:
        starts.append(size - b)
    return np.asarray(starts, dtype=np.intp)


@dataclass(frozen=True)
class PatchGrid:
    """Top-left patch positions covering an ``image_h x image_w`` image.

    Locations are the row-major product of ``rows`` and ``cols``; the last row
    and column are clamped so that patches end exactly on the border.
    """

    image_h: int
    image_w: int
    b: int
    s: int
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.b * self.b

    def __len__(self) -> int:
        return len(self.rows) * len(self.cols)

    @property
    def locations(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i in self.rows for j in self.cols]

    def pixel_index(self) -> np.ndarray:
        """Flat pixel indices, shape ``(b*b, len(self))``."""
        w = self.image_w
        base = (self.rows[:, None] * w + self.cols[None, :]).ravel()
        r = np.arange(self.b)
        offsets = (r[:, None] * w + r[None, :]).ravel(order="F")
        return offsets[:, None] + base[None, :]

    def coverage(self) -> np.ndarray:
        """Number of patches covering each pixel."""
        counts = np.bincount(
            self.pixel_index().ravel(), minlength=self.image_h * self.image_w
        )
        return counts.reshape(self.image_h, self.image_w)


def make_grid(h: int, w: int, b: int, s: int) -> PatchGrid:
    if b < 1 or s < 1:
        raise ValueError("patch size and stride must be positive")
    if b > min(h, w):
        raise ValueError(f"{b}x{b} patches do not fit a {h}x{w} image")
    if s > b:
        raise ValueError(f"stride {s} larger than patch size {b} would leave pixels uncovered")
    return PatchGrid(h, w, b, s, _starts(h, b, s), _starts(w, b, s))


def _check(shape: tuple[int, int], grid: PatchGrid) -> None:
    if shape != (grid.image_h, grid.image_w):
        raise ValueError(
            f"grid built for {grid.image_h}x{grid.image_w}, image is {shape[0]}x{shape[1]}"
        )


def extract(img, grid: PatchGrid) -> np.ndarray:
    """Return the ``(b*b, k)`` patch matrix, one column per grid location."""
    img = np.asarray(img, dtype=np.float64)
    _check(img.shape, grid)
    return img.ravel()[grid.pixel_index()]


def aggregate(patches: np.ndarray, grid: PatchGrid, include=None) -> np.ndarray:
    """Average overlapping patch columns back into an image.

    ``include`` optionally selects which columns take part; pixels covered by
    no included patch come out as zero.
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape != (grid.n, len(grid)):
        raise ValueError(
            f"patch matrix {patches.shape} does not match grid {(grid.n, len(grid))}"
        )
    idx = grid.pixel_index()
    size = grid.image_h * grid.image_w
    if include is not None:
        include = np.asarray(include, dtype=bool)
        idx = idx[:, include]
        patches = patches[:, include]
    idx = idx.ravel()
    sums = np.bincount(idx, weights=patches.ravel(), minlength=size)
    counts = np.bincount(idx, minlength=size)
    out = np.zeros(size)
    np.divide(sums, counts, out=out, where=counts > 0)
    return out.reshape(grid.image_h, grid.image_w)
