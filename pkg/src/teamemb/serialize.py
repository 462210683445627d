"""Binary container formats for checkpoints and map dumps.

Checkpoint ("TEMB"): magic, format version u32, parameter count u32, then
per parameter: name length u32, UTF-8 name, rank u32, one u32 per dim,
little-endian float32 payload.

Dump ("TDMP"): magic, version u32, rank u32, dims, float32 payload; the
same envelope with a single unnamed array, used for segmentation and
embedding map dumps.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint", "save_dump", "load_dump"]

CHECKPOINT_MAGIC = b"TEMB"
DUMP_MAGIC = b"TDMP"
FORMAT_VERSION = 1


def _write_array(fh, arr: np.ndarray) -> None:
    fh.write(struct.pack("<I", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_array(fh) -> np.ndarray:
    (rank,) = struct.unpack("<I", fh.read(4))
    dims = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(fh.read(4 * count), dtype="<f4").astype(np.float32)
    return data.reshape(dims)


def save_checkpoint(path, named_arrays: Mapping[str, np.ndarray]) -> None:
    """Write named float32 arrays in the TEMB container format."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(named_arrays)))
        for name, arr in named_arrays.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            _write_array(fh, np.asarray(arr))


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a TEMB checkpoint (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        out: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            out[name] = _read_array(fh)
        return out


def save_dump(path, arr: np.ndarray) -> None:
    """Write one float32 array in the TDMP container format."""
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        _write_array(fh, np.asarray(arr))


def load_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DUMP_MAGIC:
            raise ValueError(f"{path}: not a TDMP dump (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported dump version {version}")
        return _read_array(fh)
