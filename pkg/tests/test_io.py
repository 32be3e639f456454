import struct

import numpy as np
import pytest
from PIL import Image

from sparsesar.denoiser import init_denoiser
from sparsesar.io import (
    FormatError,
    db_gray,
    export_image,
    fit_raster,
    ingest_image,
    load_weights,
    read_csv,
    read_pgm,
    save_weights,
    write_csv,
    write_pgm,
)


def _pgm(path, pixels, maxval=255, comment=False):
    h, w = pixels.shape
    header = f"P5\n{'# made by hand' + chr(10) if comment else ''}{w} {h}\n{maxval}\n".encode()
    dtype = ">u2" if maxval > 255 else "u1"
    path.write_bytes(header + pixels.astype(dtype).tobytes())
    return path


def test_pgm_passthrough(tmp_path, rng):
    pixels = rng.integers(0, 256, (256, 256))
    out = ingest_image(_pgm(tmp_path / "a.pgm", pixels, comment=True))
    np.testing.assert_array_equal(out, pixels)


def test_crop_and_pad_rule(tmp_path):
    pixels = np.arange(300 * 200).reshape(300, 200) % 251
    out = ingest_image(_pgm(tmp_path / "b.pgm", pixels))
    assert out.shape == (256, 256)
    # rows cropped from (300 - 256) // 2 = 22, columns padded with 28 zeros each side
    np.testing.assert_array_equal(out[:, 28:228], pixels[22:278])
    assert np.all(out[:, :28] == 0) and np.all(out[:, 228:] == 0)
    np.testing.assert_array_equal(fit_raster(np.ones((3, 3)), (4, 2)), [[1, 1], [1, 1], [1, 1], [0, 0]])


def test_maxval_rescaled(tmp_path):
    out = ingest_image(_pgm(tmp_path / "c.pgm", np.array([[0, 50], [100, 25]]), maxval=100), (2, 2))
    np.testing.assert_allclose(out, [[0, 127.5], [255, 63.75]])
    out16 = ingest_image(_pgm(tmp_path / "d.pgm", np.array([[1000, 500]]), maxval=1000), (1, 2))
    np.testing.assert_allclose(out16, [[255, 127.5]])


def test_png_grayscale_and_rejections(tmp_path, rng):
    pixels = rng.integers(0, 256, (10, 12)).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(tmp_path / "g.png")
    np.testing.assert_array_equal(ingest_image(tmp_path / "g.png", (10, 12)), pixels)
    Image.fromarray(np.zeros((4, 4, 3), np.uint8), mode="RGB").save(tmp_path / "rgb.png")
    with pytest.raises(FormatError):
        ingest_image(tmp_path / "rgb.png")
    (tmp_path / "x.pgm").write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
    with pytest.raises(FormatError, match="unsupported"):
        ingest_image(tmp_path / "x.pgm")
    (tmp_path / "y.pgm").write_bytes(b"P5\n2 x\n255\n\0\0\0\0")
    with pytest.raises(FormatError, match="header"):
        ingest_image(tmp_path / "y.pgm")
    (tmp_path / "z.pgm").write_bytes(b"P5\n4 4\n255\n\0\0")
    with pytest.raises(FormatError, match="truncated"):
        read_pgm(tmp_path / "z.pgm")


def test_export_mapping(tmp_path):
    assert np.all(db_gray(np.zeros((4, 4))) == 0)
    img = np.zeros((5, 5), dtype=complex)
    img[2, 3] = 3 - 4j
    gray = db_gray(img)
    assert gray[2, 3] == 255 and np.count_nonzero(gray) == 1
    two = np.array([[1.0, 10 ** (-10 / 20)], [1e-3, 1.0]])
    # -10 dB -> 255 * 30 / 40 = 191.25 -> 191; -60 dB clips to the floor
    np.testing.assert_array_equal(db_gray(two), [[255, 191], [0, 255]])
    export_image(two, tmp_path / "e.pgm")
    pixels, maxval = read_pgm(tmp_path / "e.pgm")
    assert maxval == 255
    np.testing.assert_array_equal(pixels, [[255, 191], [0, 255]])
    with pytest.raises(ValueError):
        db_gray(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "f.pgm", np.zeros((2, 2)))


def test_weight_container_roundtrip(tmp_path):
    model = init_denoiser(3, 5, seed=9)
    save_weights(tmp_path / "m.ssdw", model, 0.25)
    back, lam = load_weights(tmp_path / "m.ssdw")
    assert lam == 0.25 and back.residual
    for a, b in zip(model.parameters(), back.parameters()):
        assert a.tobytes() == b.tobytes()
    raw = (tmp_path / "m.ssdw").read_bytes()
    assert raw[:4] == b"SSDW"
    assert struct.unpack_from("<IIId", raw, 4) == (1, 3, 1, 0.25)
    assert struct.unpack_from("<IIII", raw, 24) == (5, 2, 3, 3)
    assert struct.unpack_from("<d", raw, 40)[0] == model.weights[0][0, 0, 0, 0]
    (tmp_path / "bad.ssdw").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        load_weights(tmp_path / "bad.ssdw")
    (tmp_path / "short.ssdw").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        load_weights(tmp_path / "short.ssdw")
    (tmp_path / "long.ssdw").write_bytes(raw + b"\0")
    with pytest.raises(FormatError):
        load_weights(tmp_path / "long.ssdw")


def test_csv_quoting(tmp_path):
    write_csv(tmp_path / "t.csv", ["name", "value"], [['a "quoted", name', 1.5], ["plain", 2]])
    raw = (tmp_path / "t.csv").read_bytes()
    assert raw == b'name,value\r\n"a ""quoted"", name",1.500000\r\nplain,2\r\n'
    header, rows = read_csv(tmp_path / "t.csv")
    assert header == ["name", "value"] and rows[0][0] == 'a "quoted", name'
