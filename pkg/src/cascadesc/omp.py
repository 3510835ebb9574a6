"""Orthogonal Matching Pursuit against a fixed dictionary.

The batch kernel is compiled from ``_omp_ext.pyx`` when available; otherwise
the pure-Python mirror in ``_omp_py`` is used.  Set ``CASCADESC_PURE=1`` to
force the fallback.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _omp_py

if os.environ.get("CASCADESC_PURE"):
    _ext = None
else:
    try:
        from . import _omp_ext as _ext
    except ImportError:  # extension not built
        _ext = None

BACKEND = "cython" if _ext is not None else "python"
_KERNELS = {"python": _omp_py.omp_batch}
if _ext is not None:
    _KERNELS["cython"] = _ext.omp_batch

#: Masked patches with fewer known pixels than this are skipped.
MIN_KNOWN = 4
#: Stop when no atom correlates with the residual above this magnitude.
MIN_CORRELATION = 1e-12
#: Masked OMP ignores atoms keeping less than this fraction of the energy a
#: uniformly spread atom would have on the known pixels.
MIN_MASKED_ENERGY = 0.25
#: Squared residual norms at or below this count as exactly represented.
ZERO_RESIDUAL = 1e-18

_threads = os.cpu_count() or 1


def set_num_threads(n: int | None) -> None:
    """Cap the number of worker threads used by batch encoding."""
    global _threads
    _threads = max(1, int(n)) if n else (os.cpu_count() or 1)


def get_num_threads() -> int:
    return _threads


@dataclass(frozen=True)
class StopRule:
    """When OMP stops: coefficient budget, squared-error tolerance, or both.

    ``max_atoms=None`` means no budget (only the tolerance applies, capped at
    the signal dimension); ``eps2=None`` means no tolerance.
    """

    max_atoms: int | None = None
    eps2: float | None = None

    def __post_init__(self):
        if self.max_atoms is None and self.eps2 is None:
            raise ValueError("a stop rule needs a budget, a tolerance, or both")
        if self.max_atoms is not None and self.max_atoms < 1:
            raise ValueError("coefficient budget must be at least 1")
        if self.eps2 is not None and self.eps2 < 0:
            raise ValueError("error tolerance must be non-negative")

    def cap(self, n: int) -> int:
        return n if self.max_atoms is None else min(self.max_atoms, n)

    @property
    def threshold(self) -> float:
        return max(ZERO_RESIDUAL, 0.0 if self.eps2 is None else float(self.eps2))


def Budget(t: int) -> StopRule:
    return StopRule(max_atoms=int(t))


def Tolerance(eps2: float) -> StopRule:
    return StopRule(eps2=float(eps2))


def Both(t: int, eps2: float) -> StopRule:
    return StopRule(max_atoms=int(t), eps2=float(eps2))


@dataclass
class SparseCode:
    """Per-column supports and coefficients.

    ``indices`` and ``coefs`` have shape ``(k, T)``; unused slots hold ``-1``
    and ``0.0``.  ``skipped`` flags masked columns with too few known pixels.
    """

    indices: np.ndarray
    coefs: np.ndarray
    skipped: np.ndarray

    @property
    def n_columns(self) -> int:
        return self.indices.shape[0]

    @property
    def max_support(self) -> int:
        return self.indices.shape[1]

    @property
    def counts(self) -> np.ndarray:
        return np.count_nonzero(self.indices >= 0, axis=1)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.indices >= 0))

    def column(self, i: int) -> list[tuple[int, float]]:
        keep = self.indices[i] >= 0
        return list(zip(self.indices[i][keep].tolist(), self.coefs[i][keep].tolist()))

    def to_dense(self, m: int) -> np.ndarray:
        """Coefficient matrix of shape ``(m, k)``."""
        out = np.zeros((m, self.n_columns))
        rows, slots = np.nonzero(self.indices >= 0)
        out[self.indices[rows, slots], rows] = self.coefs[rows, slots]
        return out

    @classmethod
    def empty(cls, k: int, t: int) -> SparseCode:
        return cls(
            np.full((k, max(t, 0)), -1, dtype=np.int32),
            np.zeros((k, max(t, 0))),
            np.zeros(k, dtype=bool),
        )

    @classmethod
    def from_columns(cls, columns, t: int | None = None) -> SparseCode:
        columns = [list(c) for c in columns]
        if t is None:
            t = max((len(c) for c in columns), default=0)
        code = cls.empty(len(columns), t)
        for i, col in enumerate(columns):
            if len(col) > t:
                raise ValueError(f"column {i} has {len(col)} atoms, budget is {t}")
            for slot, (j, c) in enumerate(col):
                code.indices[i, slot] = j
                code.coefs[i, slot] = c
        return code


def check_dictionary(D, tol: float = 1e-9) -> np.ndarray:
    """Validate an ``n x m`` dictionary with unit-norm columns."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[1] < 1:
        raise ValueError(f"dictionary must be a 2-D n x m matrix, got {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValueError("dictionary contains NaN or Inf")
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0):
        raise ValueError(f"dictionary has zero-norm atoms: {np.flatnonzero(norms == 0)}")
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError("dictionary atoms must have unit norm")
    return D


def encode_batch(D, Y, stop: StopRule, mask=None, *, backend: str | None = None,
                 min_known: int = MIN_KNOWN,
                 min_energy: float = MIN_MASKED_ENERGY) -> SparseCode:
    """OMP-encode every column of ``Y`` (``n x k``).

    With ``mask`` (same shape as ``Y``, 1 = known) the greedy selection and the
    least-squares fit use known rows only, with atoms renormalized on those
    rows.  Coefficients always refer to the full atoms.
    """
    D = check_dictionary(D)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, m = D.shape
    if Y.shape[0] != n:
        raise ValueError(f"signals have dimension {Y.shape[0]}, dictionary has {n}")
    k = Y.shape[1]
    t = stop.cap(n)
    Dt = np.ascontiguousarray(D.T)
    G = Dt @ Dt.T
    Yt = np.ascontiguousarray(Y.T)
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != Y.shape:
            raise ValueError(f"mask shape {mask.shape} does not match signals {Y.shape}")
        masks = np.ascontiguousarray((mask != 0).T, dtype=np.float64)
    else:
        masks = np.zeros((0, n))
    code = SparseCode.empty(k, t)
    skipped = np.zeros(k, dtype=np.uint8)
    kernel = _KERNELS[backend or BACKEND]
    args = (Dt, G, Yt, masks, t, stop.threshold, min_known, MIN_CORRELATION, min_energy,
            code.indices, code.coefs, skipped)

    workers = min(_threads, max(1, k // 256))
    if workers <= 1 or kernel is _omp_py.omp_batch:
        kernel(*args, 0, k)
    else:
        bounds = np.linspace(0, k, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            futures = [pool.submit(kernel, *args, int(a), int(b))
                       for a, b in zip(bounds[:-1], bounds[1:])]
            for f in futures:
                f.result()
    code.skipped = skipped.astype(bool)
    return code


def omp_encode(D, y, stop: StopRule, **kwargs) -> tuple[np.ndarray, np.ndarray]:
    """Encode one signal; returns ``(support, coefficients)`` in selection order."""
    code = encode_batch(D, np.asarray(y, dtype=np.float64).reshape(-1, 1), stop, **kwargs)
    keep = code.indices[0] >= 0
    return code.indices[0][keep].astype(np.intp), code.coefs[0][keep].copy()


def omp_encode_masked(D, y, mask, stop: StopRule, **kwargs):
    """Masked OMP for one signal.

    Returns ``None`` when fewer than ``MIN_KNOWN`` entries are known, so the
    caller can fall back to another estimate.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    mask = np.asarray(mask).reshape(-1, 1)
    code = encode_batch(D, y, stop, mask=mask, **kwargs)
    if code.skipped[0]:
        return None
    keep = code.indices[0] >= 0
    return code.indices[0][keep].astype(np.intp), code.coefs[0][keep].copy()


def reconstruct_column(D, support, coefs) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    support = np.asarray(support, dtype=np.intp)
    if support.size == 0:
        return np.zeros(D.shape[0])
    return D[:, support] @ np.asarray(coefs, dtype=np.float64)


def reconstruct(D, code: SparseCode) -> np.ndarray:
    """``D @ X`` for a whole code, shape ``(n, k)``."""
    D = np.asarray(D, dtype=np.float64)
    out = np.zeros((D.shape[0], code.n_columns))
    for slot in range(code.max_support):
        idx = code.indices[:, slot]
        used = idx >= 0
        if not used.any():
            break
        out[:, used] += D[:, idx[used]] * code.coefs[used, slot]
    return out
