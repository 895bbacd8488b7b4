"""Single-file model container.

Layout: ``b"BMPK"``, u32 version, u32 length + UTF-8 JSON header (network
spec, epoch, metadata), every parameter tensor as little-endian float64
in declaration order, then a u32 CRC-32 of all preceding bytes.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .network import Model, NetworkSpec

MAGIC = b"BMPK"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def dumps(model: Model) -> bytes:
    header = json.dumps({"spec": model.spec.to_dict(), "epoch": model.epoch,
                         "meta": model.meta}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(header)), header]
    parts += [np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.flat_params()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> Model:
    if len(data) < 16 or data[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise ModelFormatError("checksum mismatch: model file is corrupted")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    spec = NetworkSpec.from_dict(header["spec"])
    offset = 12 + hlen
    params = []
    for layer, shp in zip(spec.layers, spec.shapes()):
        tensors = []
        for s in layer.param_shapes(shp):
            n = int(np.prod(s))
            buf = np.frombuffer(data, dtype="<f8", count=n, offset=offset)
            tensors.append(buf.astype(np.float64).reshape(s))
            offset += 8 * n
        params.append(tensors)
    if offset != len(data) - 4:
        raise ModelFormatError("parameter block size does not match the spec")
    return Model(spec, params, header.get("epoch", 0), header.get("meta", {}))


def save(model: Model, path):
    Path(path).write_bytes(dumps(model))


def load(path) -> Model:
    return loads(Path(path).read_bytes())
