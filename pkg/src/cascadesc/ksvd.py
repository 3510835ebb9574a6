"""KSVD dictionary learning with exact rank-one atom updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .omp import SparseCode, StopRule, Budget, check_dictionary, encode_batch, reconstruct

REPLACE_WORST = "replace-with-worst-patch"
KEEP = "keep"


@dataclass(frozen=True)
class TrainConfig:
    """KSVD settings.

    ``stop`` drives the encoding step.  ``max_patches`` optionally trains on
    a seeded random subset of the columns.
    """

    iterations: int = 20
    stop: StopRule = field(default_factory=lambda: Budget(4))
    seed: int = 0
    unused_atom_policy: str = REPLACE_WORST
    max_patches: int | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.unused_atom_policy not in (REPLACE_WORST, KEEP):
            raise ValueError(f"unknown unused-atom policy {self.unused_atom_policy!r}")


@dataclass
class TrainResult:
    dictionary: np.ndarray
    codes: SparseCode
    #: Per iteration: total squared error after encoding and after the atom sweep.
    objective: list[tuple[float, float]]


def dct_dictionary(b: int, m: int) -> np.ndarray:
    """Overcomplete separable DCT dictionary of shape ``(b*b, m)``.

    ``sqrt(m)`` sampled cosines of length ``b`` are combined by a Kronecker
    product; the first atom is constant.
    """
    k = math.isqrt(m)
    if k * k != m:
        raise ValueError(f"atom count {m} is not a perfect square")
    if k < b:
        raise ValueError(f"need at least {b * b} atoms for {b}x{b} patches")
    t = np.arange(b)[:, None]
    basis = np.cos(t * np.arange(k)[None, :] * np.pi / k)
    basis[:, 1:] -= basis[:, 1:].mean(axis=0)
    basis /= np.linalg.norm(basis, axis=0)
    D = np.kron(basis, basis)
    return D / np.linalg.norm(D, axis=0)


def _canonical_sign(u: np.ndarray, v: np.ndarray):
    if u[np.argmax(np.abs(u))] < 0:
        return -u, -v
    return u, v


def rank_one_svd(E, start=None, *, tol: float = 1e-10, max_iter: int = 100, seed: int = 0):
    """Leading singular pair of ``E`` by power iteration on ``E^T E``.

    Returns ``(u, s * v)`` with unit ``u``, or ``None`` when ``E`` is zero.
    If the iteration has not settled after ``max_iter`` steps the pair is
    taken from an eigendecomposition of the smaller Gram matrix instead.
    ``start`` is a left-side warm start (e.g. the current atom).
    """
    E = np.asarray(E, dtype=np.float64)
    if not np.any(E):
        return None
    v = None
    if start is not None:
        v = E.T @ np.asarray(start, dtype=np.float64)
        if np.linalg.norm(v) <= 1e-12 * np.linalg.norm(E):
            v = None
    if v is None:
        v = np.random.default_rng(seed).normal(size=E.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = E.T @ (E @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return None
        w /= nw
        delta = np.linalg.norm(w - v)
        v = w
        if delta < tol:
            break
    else:
        # Nearly tied leading singular values: solve the small Gram problem exactly.
        small = E @ E.T if E.shape[0] <= E.shape[1] else E.T @ E
        vec = np.linalg.eigh(small)[1][:, -1]
        v = E.T @ vec if E.shape[0] <= E.shape[1] else vec
        v /= np.linalg.norm(v)
    ev = E @ v
    sigma = np.linalg.norm(ev)
    if sigma == 0.0:
        return None
    u = ev / sigma
    return _canonical_sign(u, sigma * v)


def _users(code: SparseCode, m: int):
    """For each atom: (column ids, slot ids) of the codes that use it."""
    flat = code.indices.ravel()
    order = np.argsort(flat, kind="stable")
    starts = np.searchsorted(flat[order], np.arange(-1, m + 1))
    t = code.max_support
    out = []
    for l in range(m):
        pos = order[starts[l + 1]:starts[l + 2]]
        out.append((pos // t, pos % t))
    return out


def _sweep(D, code, patches, residual, cfg, rng):
    """Sequential atom sweep; updates ``D``, ``code.coefs`` and ``residual`` in place."""
    m = D.shape[1]
    taken = np.zeros(patches.shape[1], dtype=bool)
    err = None
    for l, (cols, slots) in enumerate(_users(code, m)):
        if len(cols) == 0:
            if cfg.unused_atom_policy == REPLACE_WORST:
                if err is None:
                    err = np.einsum("ij,ij->j", residual, residual)
                cand = np.where(taken, -1.0, err)
                p = int(np.argmax(cand))
                norm = np.linalg.norm(patches[:, p])
                if cand[p] > 1e-20 and norm > 0:
                    D[:, l] = patches[:, p] / norm
                    taken[p] = True
            continue
        x = code.coefs[cols, slots]
        E = residual[:, cols] + np.outer(D[:, l], x)
        pair = rank_one_svd(E, start=D[:, l], seed=int(rng.integers(2**31)))
        if pair is None:
            u, sv = D[:, l], np.zeros_like(x)
        else:
            u, sv = pair
        D[:, l] = u
        code.coefs[cols, slots] = sv
        residual[:, cols] = E - np.outer(u, sv)
        err = None


def update_atom(D, code: SparseCode, patches, l: int, policy: str = REPLACE_WORST):
    """One KSVD atom update.

    Returns the new atom and the new coefficient row (length ``k``, zeros for
    columns that do not use atom ``l``).  Supports are left unchanged.
    """
    D = check_dictionary(D).copy()
    if not 0 <= l < D.shape[1]:
        raise IndexError(f"atom index {l} out of range")
    patches = np.asarray(patches, dtype=np.float64)
    work = SparseCode(code.indices, code.coefs.copy(), code.skipped)
    residual = patches - reconstruct(D, work)
    cols, slots = np.nonzero(work.indices == l)
    if len(cols) == 0:
        if policy == REPLACE_WORST:
            err = np.einsum("ij,ij->j", residual, residual)
            p = int(np.argmax(err))
            norm = np.linalg.norm(patches[:, p])
            if err[p] > 1e-20 and norm > 0:
                D[:, l] = patches[:, p] / norm
        return D[:, l], np.zeros(work.n_columns)
    x = work.coefs[cols, slots]
    E = residual[:, cols] + np.outer(D[:, l], x)
    pair = rank_one_svd(E, start=D[:, l])
    row = np.zeros(work.n_columns)
    if pair is None:
        return D[:, l], row
    u, sv = pair
    row[cols] = sv
    return u, row


def total_error(D, code: SparseCode, patches, mask=None) -> float:
    r = np.asarray(patches) - reconstruct(D, code)
    if mask is not None:
        r = r * mask
    return float(np.einsum("ij,ij->", r, r))


def train(patches, D0, cfg: TrainConfig = TrainConfig(), mask=None,
          on_iteration=None) -> TrainResult:
    """Learn a dictionary by alternating OMP encoding and KSVD atom sweeps.

    With ``mask`` (1 = known), encoding uses masked OMP and unknown entries
    are imputed from the current reconstruction before each sweep.
    ``on_iteration(i, before, after)`` is called after every sweep.
    """
    patches = np.asarray(patches, dtype=np.float64)
    D = check_dictionary(D0).copy()
    if patches.ndim != 2 or patches.shape[0] != D.shape[0]:
        raise ValueError(f"patches {patches.shape} do not match dictionary {D.shape}")
    rng = np.random.default_rng(cfg.seed)
    if mask is not None:
        mask = (np.asarray(mask) != 0).astype(np.float64)
        if mask.shape != patches.shape:
            raise ValueError("mask must match the patch matrix")
    if cfg.max_patches is not None and patches.shape[1] > cfg.max_patches:
        pick = np.sort(rng.choice(patches.shape[1], cfg.max_patches, replace=False))
        patches = patches[:, pick]
        if mask is not None:
            mask = mask[:, pick]
    if mask is not None:
        keep = mask.sum(axis=0) > 0
        patches, mask = patches[:, keep], mask[:, keep]

    history = []
    code = SparseCode.empty(patches.shape[1], 0)
    for _ in range(cfg.iterations):
        code = encode_batch(D, patches, cfg.stop, mask=mask)
        approx = reconstruct(D, code)
        if mask is not None:
            target = mask * patches + (1.0 - mask) * approx
        else:
            target = patches
        residual = target - approx
        before = float(np.einsum("ij,ij->", residual, residual))
        _sweep(D, code, target, residual, cfg, rng)
        after = float(np.einsum("ij,ij->", residual, residual))
        history.append((before, after))
        if on_iteration is not None:
            on_iteration(len(history), before, after)
    return TrainResult(D, code, history)
