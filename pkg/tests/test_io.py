import hashlib
from decimal import ROUND_HALF_EVEN, Decimal

import numpy as np
import pytest
from PIL import Image

from cascadesc import io
from cascadesc.cascade import CascadeConfig, encode, fit_model
from cascadesc.ksvd import TrainConfig
from cascadesc.omp import SparseCode


def half_even(v):
    v = min(max(v, 0.0), 255.0)
    return int(Decimal(repr(v)).quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


@pytest.fixture(scope="module")
def model_and_codes(camera):
    img = camera[::4, ::4]
    cfg = CascadeConfig(levels=3, b=8, s=7, budgets=(2, 3, 4), global_m=64,
                        train=TrainConfig(iterations=2))
    model = fit_model(img, cfg)
    return img, model, encode(img, model)


def test_pgm_header_example(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 10, 200, 255]))
    np.testing.assert_array_equal(io.load_image(p), [[0, 10], [200, 255]])


def test_pgm_comments_and_errors(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n3 1\n255\n" + bytes([1, 2, 3]))
    np.testing.assert_array_equal(io.load_image(p), [[1, 2, 3]])
    p.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(io.FormatError, match="8-bit"):
        io.load_image(p)
    p.write_bytes(b"P5\n2 2\n255\n" + bytes(3))
    with pytest.raises(io.FormatError):
        io.load_image(p)
    p.write_bytes(b"P5\nx 2\n255\n")
    with pytest.raises(io.FormatError):
        io.load_image(p)
    p.write_bytes(b"GIF89a")
    with pytest.raises(io.FormatError):
        io.load_image(p)


def test_rounding_table():
    values = [127.5, 126.5, 0.5, 1.5, 254.5, 3.49, -4.0, 300.0, 12.51]
    got = io.quantize(np.array(values)).tolist()
    assert got == [half_even(v) for v in values]
    assert got[:2] == [128, 126]


@pytest.mark.parametrize("suffix", [".pgm", ".png"])
def test_save_load_round_trip(tmp_path, rng, suffix):
    img = rng.integers(0, 256, (17, 23)).astype(float)
    p = tmp_path / f"x{suffix}"
    io.save_image(p, img)
    np.testing.assert_array_equal(io.load_image(p), img)


def test_png_color_and_depth(tmp_path):
    rgb = np.zeros((2, 2, 3), np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[1, 1] = (10, 200, 30)
    Image.fromarray(rgb).save(tmp_path / "c.png")
    out = io.load_image(tmp_path / "c.png")
    assert out[0, 0] == pytest.approx(0.299 * 255)
    assert out[1, 1] == pytest.approx(0.299 * 10 + 0.587 * 200 + 0.114 * 30)
    Image.fromarray(np.full((2, 2), 4000, np.uint16)).save(tmp_path / "d.png")
    with pytest.raises(io.FormatError):
        io.load_image(tmp_path / "d.png")


def test_save_rejects_unknown_extension(tmp_path):
    with pytest.raises(ValueError):
        io.save_image(tmp_path / "x.bmp", np.zeros((2, 2)))


def test_model_byte_layout(model_and_codes):
    _, model, _ = model_and_codes
    data = io.model_to_bytes(model)
    L, n, m = 3, 64, 64
    assert len(data) == 4 + 2 * 4 + 4 * 2 + 2 * L + 8 * L + 8 * n * m
    assert data[:4] == b"CSCD"
    assert int.from_bytes(data[4:6], "little") == 1
    # budgets are stored coarsest first
    assert list(np.frombuffer(data[20:26], "<u2")) == [4, 3, 2]
    atoms = np.frombuffer(data[-8 * n * m:], "<f8").reshape(n, m, order="F")
    np.testing.assert_array_equal(atoms, model.dictionary)


def test_model_round_trip(tmp_path, model_and_codes):
    _, model, _ = model_and_codes
    io.save_model(tmp_path / "m.bin", model)
    back = io.load_model(tmp_path / "m.bin")
    assert io.model_to_bytes(back) == (tmp_path / "m.bin").read_bytes()
    assert back.config.budgets == model.config.budgets and back.dims == model.dims


def test_model_load_errors(model_and_codes):
    _, model, _ = model_and_codes
    data = bytearray(io.model_to_bytes(model))
    with pytest.raises(io.FormatError):
        io.model_from_bytes(b"XXXX" + bytes(data[4:]))
    bumped = bytearray(data)
    bumped[4] = 2
    with pytest.raises(io.FormatError):
        io.model_from_bytes(bytes(bumped))
    with pytest.raises(io.FormatError):
        io.model_from_bytes(bytes(data[:-8]))
    scaled = bytearray(data)
    scaled[-8:] = np.float64(5.0).tobytes()
    with pytest.raises(io.FormatError):
        io.model_from_bytes(bytes(scaled))


def test_codes_round_trip(model_and_codes):
    _, model, codes = model_and_codes
    data = io.codes_to_bytes(codes, model)
    assert data[6:38] == hashlib.sha256(io.model_to_bytes(model)).digest()
    back = io.codes_from_bytes(data, model)
    assert io.codes_to_bytes(back, model) == data
    for a, b in zip(codes.codes, back.codes):
        np.testing.assert_array_equal(a.to_dense(64), b.to_dense(64))
    assert back.dims == codes.dims


def test_codes_size(model_and_codes):
    _, model, codes = model_and_codes
    patches = sum(c.n_columns for c in codes.codes)
    expect = 4 + 2 + 32 + 2 + 8 * 3 + 4 * 3 + patches + 10 * codes.nnz
    assert len(io.codes_to_bytes(codes, model)) == expect


def test_skipped_patches_survive(model_and_codes):
    _, model, codes = model_and_codes
    first = codes.codes[0]
    skipped = first.skipped.copy()
    skipped[[0, 5]] = True
    idx = first.indices.copy()
    idx[[0, 5]] = -1
    alt = type(codes)([SparseCode(idx, np.where(idx >= 0, first.coefs, 0.0), skipped)]
                      + codes.codes[1:], codes.dims)
    back = io.codes_from_bytes(io.codes_to_bytes(alt, model), model)
    np.testing.assert_array_equal(back.codes[0].skipped, skipped)


def test_codes_reject_other_model(model_and_codes, camera):
    _, model, codes = model_and_codes
    other = fit_model(camera[::4, ::4].T.copy(), model.config)
    data = io.codes_to_bytes(codes, model)
    with pytest.raises(io.FormatError, match="different model"):
        io.codes_from_bytes(data, other)
    with pytest.raises(io.FormatError):
        io.codes_from_bytes(data[:-3], model)
    with pytest.raises(io.FormatError):
        io.codes_from_bytes(data + b"\0", model)
