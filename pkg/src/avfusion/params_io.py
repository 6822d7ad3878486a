"""Versioned binary serialization of trained parameters.

Layout (all integers little-endian u32):

    magic (4 bytes, one per model kind: JCAP / CONP / VCAP)
    version | L | d_a | d_v | k | head_hidden | n_tensors
    then per tensor, in param_spec order: rows | cols | float64 LE payload

Round-trips are bitwise exact.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import BadMagicError, FormatError, TruncatedFileError, VersionMismatchError
from .models import JcaDims, ModelParams, param_spec

PARAMS_VERSION = 1
MAGIC = {"jca": b"JCAP", "concat": b"CONP", "vanilla-ca": b"VCAP"}
KIND_BY_MAGIC = {v: k for k, v in MAGIC.items()}


def write_params(path, params: ModelParams) -> None:
    spec = param_spec(params.kind, params.dims, params.head_hidden)
    with open(path, "wb") as fh:
        fh.write(MAGIC[params.kind])
        fh.write(struct.pack(
            "<IIIIIII", PARAMS_VERSION, params.dims.L, params.dims.d_a,
            params.dims.d_v, params.dims.k, params.head_hidden, len(spec),
        ))
        for name, shape in spec:
            tensor = params.tensors[name]
            if tuple(tensor.shape) != shape:
                raise FormatError(
                    f"write_params: {name} has shape {tuple(tensor.shape)}, expected {shape}"
                )
            fh.write(struct.pack("<II", *tensor.shape))
            fh.write(tensor.astype("<f8").tobytes())


def read_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] not in KIND_BY_MAGIC:
        raise BadMagicError(
            f"{path}: bad magic {blob[:4]!r}, expected one of {sorted(KIND_BY_MAGIC)}"
        )
    kind = KIND_BY_MAGIC[blob[:4]]
    if len(blob) < 32:
        raise TruncatedFileError(f"{path}: header truncated ({len(blob)} bytes)")
    version, L, d_a, d_v, k, head_hidden, n_tensors = struct.unpack("<IIIIIII", blob[4:32])
    if version != PARAMS_VERSION:
        raise VersionMismatchError(
            f"{path}: unsupported version {version}, expected {PARAMS_VERSION}"
        )
    dims = JcaDims(L=L, d_a=d_a, d_v=d_v, k=k)
    spec = param_spec(kind, dims, head_hidden)
    if n_tensors != len(spec):
        raise FormatError(f"{path}: {n_tensors} tensors declared, expected {len(spec)}")

    tensors = {}
    offset = 32
    for name, shape in spec:
        if len(blob) < offset + 8:
            raise TruncatedFileError(f"{path}: truncated before {name} header")
        rows, cols = struct.unpack("<II", blob[offset:offset + 8])
        if (rows, cols) != shape:
            raise FormatError(
                f"{path}: {name} stored as {(rows, cols)}, expected {shape}"
            )
        offset += 8
        nbytes = rows * cols * 8
        if len(blob) < offset + nbytes:
            raise TruncatedFileError(f"{path}: truncated inside {name} payload")
        data = np.frombuffer(blob, dtype="<f8", offset=offset, count=rows * cols)
        tensors[name] = np.ascontiguousarray(data.reshape(rows, cols))
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return ModelParams(kind, dims, head_hidden, tensors)
