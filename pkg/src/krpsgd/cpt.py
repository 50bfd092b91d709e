"""Reading and writing the CPT1 binary tensor format.

A CPT1 block is an ASCII header ``CPT1 N I_1 ... I_N`` followed by a newline
and ``prod(I_n)`` little-endian float64 values, first index fastest. A model
file is the concatenation of one two-way block per factor matrix.
"""
from __future__ import annotations

import io
from math import prod
from pathlib import Path
from typing import BinaryIO

import numpy as np

from krpsgd.errors import FormatError
from krpsgd.tensor import DenseTensor, KruskalModel

MAGIC = "CPT1"
_LE_F64 = np.dtype("<f8")


def _write_block(fh: BinaryIO, dims, values: np.ndarray) -> None:
    header = " ".join([MAGIC, str(len(dims)), *(str(int(d)) for d in dims)])
    fh.write(header.encode("ascii") + b"\n")
    fh.write(np.ascontiguousarray(values, dtype=_LE_F64).tobytes())


def _read_block(fh: BinaryIO) -> tuple[tuple[int, ...], np.ndarray] | None:
    line = fh.readline()
    if not line:
        return None
    try:
        fields = line.decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise FormatError("header is not ASCII") from exc
    if not fields or fields[0] != MAGIC:
        raise FormatError(f"bad magic {fields[:1]!r}, expected {MAGIC!r}")
    try:
        ndim = int(fields[1])
        dims = tuple(int(f) for f in fields[2:])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed header {line!r}") from exc
    if len(dims) != ndim or ndim < 1 or any(d < 1 for d in dims):
        raise FormatError(f"header declares N={ndim} but lists dims {dims}")
    count = prod(dims)
    payload = fh.read(count * _LE_F64.itemsize)
    if len(payload) != count * _LE_F64.itemsize:
        raise FormatError(
            f"expected {count} values, found {len(payload) // _LE_F64.itemsize}"
        )
    return dims, np.frombuffer(payload, dtype=_LE_F64).astype(np.float64)


def write_tensor(path, X: DenseTensor) -> None:
    with open(path, "wb") as fh:
        _write_block(fh, X.dims, X.values)


def read_tensor(path) -> DenseTensor:
    data = Path(path).read_bytes()
    fh = io.BytesIO(data)
    block = _read_block(fh)
    if block is None:
        raise FormatError("empty file")
    if fh.read(1):
        raise FormatError("trailing bytes after tensor payload")
    return DenseTensor(*block)


def write_model(path, model: KruskalModel) -> None:
    with open(path, "wb") as fh:
        for A in model.factors:
            _write_block(fh, A.shape, A.ravel(order="F"))


def read_model(path) -> KruskalModel:
    fh = io.BytesIO(Path(path).read_bytes())
    factors = []
    while (block := _read_block(fh)) is not None:
        dims, values = block
        if len(dims) != 2:
            raise FormatError(f"factor blocks must be two-way, got dims {dims}")
        factors.append(values.reshape(dims, order="F"))
    if not factors:
        raise FormatError("model file holds no factor blocks")
    return KruskalModel(tuple(factors))
