"""Image files (binary PGM, 8-bit PNG) and the binary model/code formats.

Model file (little-endian)::

    "CSCD" | version u16 | b u16 | levels u16 | stride u16 | n u32 | m u32
    | budgets u16 x levels | (height u32, width u32) x levels
    | atoms f64 x (n*m), column-major

Code file (little-endian)::

    "CSCC" | version u16 | sha256(model file) 32 bytes | levels u16
    | (height u32, width u32) x levels | patch count u32 x levels
    | per patch: run u8, then run x (atom u16, coefficient f64)

Per-level fields are stored coarsest level first.  A run byte of 255 marks
a patch skipped by masked coding.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .cascade import CascadeConfig, CascadeModel, LayerCodes
from .omp import SparseCode

MODEL_MAGIC = b"CSCD"
CODE_MAGIC = b"CSCC"
VERSION = 1
SKIPPED_RUN = 0xFF

_MODEL_HEAD = struct.Struct("<4sHHHHII")
_CODE_HEAD = struct.Struct("<4sH32sH")
_PAIR = np.dtype([("atom", "<u2"), ("coef", "<f8")])


class FormatError(ValueError):
    """Malformed or unsupported file contents."""


# -- images -------------------------------------------------------------------

def _read_pgm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"malformed PGM header fields {tokens!r}") from None
    if width < 1 or height < 1:
        raise FormatError(f"invalid PGM size {width}x{height}")
    if not 0 < maxval <= 255:
        raise FormatError(f"unsupported PGM maxval {maxval} (only 8-bit is supported)")
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise FormatError(
            f"PGM raster has {len(raster)} bytes, expected {width * height}"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(np.float64)


def _read_png(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
            raise FormatError(f"unsupported PNG mode {im.mode} (only 8-bit is supported)")
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64)
        if im.mode in ("1", "P", "LA", "PA", "CMYK", "YCbCr"):
            im = im.convert("RGBA" if "A" in im.mode or im.mode == "P" else "RGB")
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    return rgb @ np.array([0.299, 0.587, 0.114])


def load_image(path) -> np.ndarray:
    """Read a binary PGM (P5) or PNG file as a float64 image in [0, 255]."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P5":
        return _read_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    raise FormatError(f"{path}: not a binary PGM or PNG file")


def quantize(img) -> np.ndarray:
    """Clamp to [0, 255] and round half to even."""
    return np.rint(np.clip(np.asarray(img, dtype=np.float64), 0.0, 255.0)).astype(np.uint8)


def save_image(path, img) -> None:
    path = Path(path)
    pixels = quantize(img)
    if pixels.ndim != 2:
        raise ValueError("only 2-D grayscale images can be saved")
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        h, w = pixels.shape
        path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes())
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(pixels).save(path)
    else:
        raise ValueError(f"{path}: unknown image extension (use .pgm or .png)")


# -- model files --------------------------------------------------------------

def model_to_bytes(model: CascadeModel) -> bytes:
    cfg = model.config
    D = np.asarray(model.dictionary, dtype="<f8")
    n, m = D.shape
    levels = cfg.levels
    head = _MODEL_HEAD.pack(MODEL_MAGIC, VERSION, cfg.b, levels, cfg.s, n, m)
    budgets = struct.pack(f"<{levels}H", *reversed(cfg.budgets))
    dims = struct.pack(f"<{2 * levels}I", *[v for d in reversed(model.dims) for v in d])
    return head + budgets + dims + D.tobytes(order="F")


def model_from_bytes(data: bytes) -> CascadeModel:
    if len(data) < _MODEL_HEAD.size:
        raise FormatError("model file is truncated")
    magic, version, b, levels, stride, n, m = _MODEL_HEAD.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad model magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported model version {version}")
    if n != b * b:
        raise FormatError(f"atom dimension {n} does not match {b}x{b} patches")
    expected = _MODEL_HEAD.size + 10 * levels + 8 * n * m
    if len(data) != expected:
        raise FormatError(f"model file has {len(data)} bytes, expected {expected}")
    pos = _MODEL_HEAD.size
    budgets = struct.unpack_from(f"<{levels}H", data, pos)[::-1]
    pos += 2 * levels
    flat = struct.unpack_from(f"<{2 * levels}I", data, pos)
    pos += 8 * levels
    dims = tuple((flat[2 * i], flat[2 * i + 1]) for i in range(levels))[::-1]
    D = np.frombuffer(data, dtype="<f8", count=n * m, offset=pos).reshape(n, m, order="F")
    D = D.astype(np.float64)
    norms = np.linalg.norm(D, axis=0)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise FormatError("model atoms are not unit norm")
    cfg = CascadeConfig(levels=levels, b=b, s=stride, budgets=budgets, global_m=m)
    return CascadeModel(cfg, D, dims)


def model_digest(model: CascadeModel) -> bytes:
    return hashlib.sha256(model_to_bytes(model)).digest()


def save_model(path, model: CascadeModel) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> CascadeModel:
    return model_from_bytes(Path(path).read_bytes())


# -- code files ---------------------------------------------------------------

def codes_to_bytes(codes: LayerCodes, model: CascadeModel) -> bytes:
    levels = codes.levels
    order = list(range(levels - 1, -1, -1))
    parts = [
        _CODE_HEAD.pack(CODE_MAGIC, VERSION, model_digest(model), levels),
        struct.pack(f"<{2 * levels}I", *[v for n in order for v in codes.dims[n]]),
        struct.pack(f"<{levels}I", *[codes.codes[n].n_columns for n in order]),
    ]
    for n in order:
        code = codes.codes[n]
        counts = code.counts
        if np.any(counts >= SKIPPED_RUN):
            raise ValueError("more than 254 atoms in one patch cannot be stored")
        runs = np.where(code.skipped, SKIPPED_RUN, counts).astype(np.uint8)
        used = code.indices >= 0
        pairs = np.empty(int(used.sum()), dtype=_PAIR)
        pairs["atom"] = code.indices[used]
        pairs["coef"] = code.coefs[used]
        sizes = 1 + _PAIR.itemsize * counts
        starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        buf = np.zeros(int(sizes.sum()), dtype=np.uint8)
        buf[starts] = runs
        slot = np.nonzero(used)[1]
        pos = np.repeat(starts + 1, counts) + _PAIR.itemsize * slot
        buf[pos[:, None] + np.arange(_PAIR.itemsize)] = pairs.view(np.uint8).reshape(
            -1, _PAIR.itemsize
        )
        parts.append(buf.tobytes())
    return b"".join(parts)


def codes_from_bytes(data: bytes, model: CascadeModel) -> LayerCodes:
    if len(data) < _CODE_HEAD.size:
        raise FormatError("code file is truncated")
    magic, version, digest, levels = _CODE_HEAD.unpack_from(data)
    if magic != CODE_MAGIC:
        raise FormatError(f"bad code magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported code version {version}")
    if digest != model_digest(model):
        raise FormatError("code file was produced with a different model")
    pos = _CODE_HEAD.size
    flat = struct.unpack_from(f"<{2 * levels}I", data, pos)
    pos += 8 * levels
    counts = struct.unpack_from(f"<{levels}I", data, pos)
    pos += 4 * levels
    m = model.dictionary.shape[1]
    dims = [None] * levels
    codes = [None] * levels
    for i in range(levels):
        n = levels - 1 - i
        dims[n] = (flat[2 * i], flat[2 * i + 1])
        k = counts[i]
        runs = np.zeros(k, dtype=np.int64)
        starts = np.zeros(k, dtype=np.int64)
        for p in range(k):
            if pos >= len(data):
                raise FormatError("code file is truncated")
            starts[p] = pos
            runs[p] = data[pos]
            pos += 1 + (_PAIR.itemsize * runs[p] if runs[p] != SKIPPED_RUN else 0)
        if pos > len(data):
            raise FormatError("code file is truncated")
        skipped = runs == SKIPPED_RUN
        lengths = np.where(skipped, 0, runs)
        t = int(lengths.max(initial=0))
        code = SparseCode.empty(k, t)
        code.skipped = skipped
        if lengths.sum():
            within = np.arange(int(lengths.sum())) - np.repeat(
                np.cumsum(lengths) - lengths, lengths
            )
            offs = np.repeat(starts + 1, lengths) + _PAIR.itemsize * within
            raw = np.frombuffer(data, dtype=np.uint8)[
                offs[:, None] + np.arange(_PAIR.itemsize)
            ]
            pairs = raw.reshape(-1).view(_PAIR)
            if np.any(pairs["atom"] >= m):
                raise FormatError("atom index out of range for this model")
            rows = np.repeat(np.arange(k), lengths)
            code.indices[rows, within] = pairs["atom"]
            code.coefs[rows, within] = pairs["coef"]
        codes[n] = code
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes in code file")
    return LayerCodes(codes, tuple(dims))


def save_codes(path, codes: LayerCodes, model: CascadeModel) -> None:
    Path(path).write_bytes(codes_to_bytes(codes, model))


def load_codes(path, model: CascadeModel) -> LayerCodes:
    return codes_from_bytes(Path(path).read_bytes(), model)
