"""Little-endian, length-prefixed container for named float64 arrays.

Layout::

    b"SQCK" | version:u8 | meta_len:u32 | meta (utf-8) | count:u32
    then per array: name_len:u16 | name | ndim:u8 | dims:u32*ndim | data:f64*prod(dims)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SQCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(arrays: dict[str, np.ndarray], meta: str = "") -> bytes:
    out = [MAGIC, struct.pack("<B", VERSION)]
    mb = meta.encode("utf-8")
    out.append(struct.pack("<I", len(mb)))
    out.append(mb)
    out.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        nb = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        out.append(struct.pack("<H", len(nb)) + nb)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], str]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    (version,) = struct.unpack_from("<B", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 5
    try:
        (mlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        meta = blob[pos : pos + mlen].decode("utf-8")
        pos += mlen
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            if pos + 8 * size > len(blob):
                raise CheckpointError("truncated checkpoint")
            arrays[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos) \
                .reshape(shape).astype(np.float64)
            pos += 8 * size
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint") from exc
    if pos != len(blob):
        raise CheckpointError("trailing bytes in checkpoint")
    return arrays, meta


def save(path, arrays: dict[str, np.ndarray], meta: str = "") -> None:
    Path(path).write_bytes(dumps(arrays, meta))


def load(path) -> tuple[dict[str, np.ndarray], str]:
    return loads(Path(path).read_bytes())
