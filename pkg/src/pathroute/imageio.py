"""Image and tensor file I/O.

Images travel as (C, H, W) float32 arrays in [0, 1].  On disk they are
binary PPM (P6) for 3 channels or PGM (P5) for 1, always 8-bit.  Test
fixtures and dataset pairs use a raw float32 dump: u32 rank, rank x u32
extents, then little-endian float32 payload in C order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError


def write_image(path, image: np.ndarray):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise ConfigError(f"write_image: expected (1|3, H, W), got {image.shape}")
    c, h, w = image.shape
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    magic = b"P6" if c == 3 else b"P5"
    body = data.transpose(1, 2, 0).tobytes() if c == 3 else data[0].tobytes()
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode("ascii") + body)


def read_image(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] not in (b"P5", b"P6"):
        raise ConfigError(f"{path}: not a binary PGM/PPM file")
    channels = 3 if buf[:2] == b"P6" else 1
    # header: magic, width, height, maxval as whitespace-separated
    # tokens, # comments allowed, then a single whitespace before data.
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(buf[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ConfigError(f"{path}: only 8-bit images supported (maxval {maxval})")
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * channels, offset=pos)
    if channels == 3:
        img = data.reshape(h, w, 3).transpose(2, 0, 1)
    else:
        img = data.reshape(1, h, w)
    return img.astype(np.float32) / 255.0


def write_f32(path, array: np.ndarray):
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def read_f32(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (rank,) = struct.unpack_from("<I", buf, 0)
    shape = struct.unpack_from(f"<{rank}I", buf, 4)
    n = int(np.prod(shape)) if rank else 1
    return np.frombuffer(buf, dtype="<f4", count=n, offset=4 + 4 * rank).reshape(shape).copy()
