"""PPM/PGM and raw float32 file round trips."""

import numpy as np
import pytest

from pathroute.errors import ConfigError
from pathroute.imageio import read_f32, read_image, write_f32, write_image


def test_ppm_roundtrip_bit_exact(tmp_path):
    # 8-bit grid values survive the float round trip exactly
    rng = np.random.default_rng(0)
    img = (rng.integers(0, 256, size=(3, 9, 7)) / 255.0).astype(np.float32)
    path = tmp_path / "img.ppm"
    write_image(path, img)
    back = read_image(path)
    assert back.shape == img.shape
    assert np.array_equal(back, img)


def test_pgm_roundtrip(tmp_path):
    img = (np.arange(30).reshape(1, 5, 6) / 29.0 * (200 / 255.0)).astype(np.float32)
    path = tmp_path / "img.pgm"
    write_image(path, img)
    back = read_image(path)
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 0.5 / 255.0


def test_ppm_header(tmp_path):
    path = tmp_path / "img.ppm"
    write_image(path, np.zeros((3, 4, 5), dtype=np.float32))
    head = path.read_bytes()[:20]
    assert head.startswith(b"P6\n5 4\n255\n")


def test_comment_in_header(tmp_path):
    body = bytes(6)
    (tmp_path / "c.pgm").write_bytes(b"P5\n# a comment\n3 2\n255\n" + body)
    img = read_image(tmp_path / "c.pgm")
    assert img.shape == (1, 2, 3)


def test_values_clamped_on_write(tmp_path):
    img = np.array([[[-0.5, 2.0]]], dtype=np.float32)
    path = tmp_path / "clip.pgm"
    write_image(path, img)
    back = read_image(path)
    assert back[0, 0, 0] == 0.0 and back[0, 0, 1] == 1.0


def test_bad_magic(tmp_path):
    (tmp_path / "x.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(ConfigError):
        read_image(tmp_path / "x.ppm")


def test_f32_roundtrip(tmp_path):
    arr = np.random.default_rng(1).standard_normal((2, 3, 4)).astype(np.float32)
    path = tmp_path / "t.f32"
    write_f32(path, arr)
    back = read_f32(path)
    assert back.shape == arr.shape
    assert np.array_equal(back, arr)


def test_f32_header_layout(tmp_path):
    path = tmp_path / "t.f32"
    write_f32(path, np.zeros((5, 7), dtype=np.float32))
    buf = path.read_bytes()
    import struct

    rank, d0, d1 = struct.unpack_from("<III", buf, 0)
    assert (rank, d0, d1) == (2, 5, 7)
    assert len(buf) == 12 + 4 * 35
