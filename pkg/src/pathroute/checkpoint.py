"""Binary checkpoint format.

Layout (all integers little-endian):

    magic       4 bytes  b"PRST"
    version     u32      currently 1
    entry count u32
    per entry:
        name length     u16
        name            UTF-8 bytes
        rank            u8
        extents         rank x u32
        values          little-endian float32, C order
        adam_m          same size as values
        adam_v          same size as values
        step            u64
    trailer: UTF-8 ``key=value`` lines (one per line) to end of file,
    echoing the run configuration.

Round-trips are bit-exact: loading a checkpoint and saving it again
produces identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autograd import Parameter
from .errors import ConfigError

MAGIC = b"PRST"
VERSION = 1


def save(path, params: list[Parameter], config: dict[str, str]):
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for p in params:
        name = p.name.encode("utf-8")
        arr = np.ascontiguousarray(p.value.data, dtype="<f4")
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
        chunks.append(np.ascontiguousarray(p.adam_m, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(p.adam_v, dtype="<f4").tobytes())
        chunks.append(struct.pack("<Q", p.step))
    trailer = "".join(f"{k}={v}\n" for k, v in config.items())
    chunks.append(trailer.encode("utf-8"))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def load(path) -> tuple[dict[str, dict], dict[str, str]]:
    """Read a checkpoint: ({name: {value, adam_m, adam_v, step}}, config)."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    entries: dict[str, dict] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{rank}I", buf, off)
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        arrays = []
        for _ in range(3):
            arrays.append(np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(shape).copy())
            off += 4 * n
        (step,) = struct.unpack_from("<Q", buf, off)
        off += 8
        entries[name] = {"value": arrays[0], "adam_m": arrays[1], "adam_v": arrays[2], "step": step}
    config: dict[str, str] = {}
    for line in buf[off:].decode("utf-8").splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            config[k] = v
    return entries, config


def apply_to(params: list[Parameter], entries: dict[str, dict]):
    """Load checkpoint entries into an existing parameter list by name."""
    byname = {p.name: p for p in params}
    if set(byname) != set(entries):
        missing = set(byname) - set(entries)
        extra = set(entries) - set(byname)
        raise ConfigError(f"checkpoint/model mismatch: missing={sorted(missing)} extra={sorted(extra)}")
    for name, p in byname.items():
        e = entries[name]
        if e["value"].shape != p.value.data.shape:
            raise ConfigError(f"checkpoint {name}: shape {e['value'].shape} != {p.value.data.shape}")
        p.value.data[:] = e["value"]
        p.adam_m[:] = e["adam_m"]
        p.adam_v[:] = e["adam_v"]
        p.step = int(e["step"])
