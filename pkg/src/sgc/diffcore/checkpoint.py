"""Checkpoint serialization: little-endian, magic "SGCK", version, then
length-prefixed name / shape / float32 buffer records."""

from __future__ import annotations

import struct

import numpy as np

from ..errors import ParseError

_MAGIC = b"SGCK"
_VERSION = 1


def save_checkpoint(arrays, path):
    """`arrays` is an ordered name -> ndarray mapping."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(arrays)))
        for name, arr in arrays.items():
            encoded = name.encode("utf-8")
            arr = np.asarray(arr, dtype="<f4")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ParseError(f"bad checkpoint magic {magic!r}")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ParseError(f"unsupported checkpoint version {version}")
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            buf = fh.read(4 * n)
            if len(buf) != 4 * n:
                raise ParseError("truncated checkpoint buffer")
            arrays[name] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
        return arrays
