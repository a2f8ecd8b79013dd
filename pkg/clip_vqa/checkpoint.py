"""CQCK checkpoint files and their JSON metadata sidecar.

Layout: b"CQCK", u32 version, u32 parameter count, then per parameter
u32 name length, UTF-8 name, u32 rank, u32 dims, little-endian float64 data.
All integers are little-endian.
"""

import json
import os
import struct
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np

from .exceptions import FormatError

MAGIC = b"CQCK"
VERSION = 1

PathLike = Union[str, os.PathLike]


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    except OSError as e:
        raise FormatError(path, f"cannot write checkpoint: {e}") from e


def encode_checkpoint(state: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, value in state.items():
        array = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape))
        chunks.append(np.ascontiguousarray(array).tobytes())
    return b"".join(chunks)


def decode_checkpoint(
    payload: bytes, source: object = "<bytes>"
) -> dict[str, np.ndarray]:
    view = memoryview(payload)
    offset = 0

    def read(fmt: str) -> tuple:
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(view):
            raise FormatError(source, "truncated checkpoint")
        values = struct.unpack_from(fmt, view, offset)
        offset += size
        return values

    if bytes(view[:4]) != MAGIC:
        raise FormatError(source, "bad magic, expected CQCK")
    offset = 4
    version, count = read("<II")
    if version != VERSION:
        raise FormatError(source, f"unsupported checkpoint version {version}")

    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = read("<I")
        if offset + name_len > len(view):
            raise FormatError(source, "truncated parameter name")
        name = bytes(view[offset : offset + name_len]).decode("utf-8")
        offset += name_len
        (rank,) = read("<I")
        dims = read(f"<{rank}I") if rank else ()
        nbytes = 8 * int(np.prod(dims, dtype=np.int64))
        if offset + nbytes > len(view):
            raise FormatError(source, f"truncated data for {name}")
        data = np.frombuffer(view[offset : offset + nbytes], dtype="<f8")
        state[name] = data.astype(np.float64).reshape(dims)
        offset += nbytes
    if offset != len(view):
        raise FormatError(source, "trailing bytes after last parameter")
    return state


def save_checkpoint(
    path: PathLike,
    state: Mapping[str, np.ndarray],
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    path = Path(path)
    _atomic_write(path, encode_checkpoint(state))
    if metadata is not None:
        payload = json.dumps(metadata, indent=2, sort_keys=True).encode("utf-8")
        _atomic_write(metadata_path(path), payload)
    return path


def load_checkpoint(path: PathLike) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise FormatError(path, f"cannot read checkpoint: {e}") from e
    return decode_checkpoint(payload, path)


def metadata_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_metadata(path: PathLike) -> dict[str, Any]:
    meta = metadata_path(path)
    try:
        return json.loads(meta.read_text(encoding="utf-8"))
    except OSError as e:
        raise FormatError(meta, f"cannot read checkpoint metadata: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(meta, f"invalid JSON: {e}") from e
