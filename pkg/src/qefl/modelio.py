"""Binary model file.

Layout, all little-endian::

    8 bytes   magic b"QEFLMDL1"
    uint32    number of layer widths m (input, hidden..., output)
    int32[m]  layer widths
    float64[] parameters in packing order, exactly as many as the widths imply
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import Architecture

MAGIC = b"QEFLMDL1"


class ModelFormatError(ValueError):
    pass


def dumps(arch: Architecture, params) -> bytes:
    params = np.asarray(params, dtype="<f8")
    if params.shape != (arch.n_params,):
        raise ValueError("parameter count does not match architecture")
    dims = arch.dims
    return MAGIC + struct.pack(f"<I{len(dims)}i", len(dims), *dims) + params.tobytes()


def loads(raw: bytes) -> tuple[Architecture, np.ndarray]:
    if raw[:8] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if len(raw) < 12:
        raise ModelFormatError("truncated header")
    (m,) = struct.unpack_from("<I", raw, 8)
    if m < 3 or len(raw) < 12 + 4 * m:
        raise ModelFormatError("bad or truncated layer list")
    dims = struct.unpack_from(f"<{m}i", raw, 12)
    arch = Architecture(dims[0], tuple(dims[1:-1]), dims[-1])
    body = raw[12 + 4 * m:]
    if len(body) != 8 * arch.n_params:
        raise ModelFormatError(f"expected {arch.n_params} parameters, file holds {len(body) / 8:g}")
    return arch, np.frombuffer(body, dtype="<f8").astype(np.float64)


def save(path, arch: Architecture, params) -> None:
    Path(path).write_bytes(dumps(arch, params))


def load(path) -> tuple[Architecture, np.ndarray]:
    return loads(Path(path).read_bytes())
