"""Little-endian binary records for noise realizations and ensemble snapshots.

Layout: 4-byte magic, ``u32`` version, ``u32`` record kind, then the payload.
Every float is IEEE-754 ``f8``; counts and shapes are ``u64``.
"""
from __future__ import annotations

import struct

import numpy as np

from .noise import JumpList, NoiseRealization
from .paths import PathEnsemble, TimeGrid

MAGIC = b"LVRD"
VERSION = 1
KIND_NOISE = 1
KIND_ENSEMBLE = 2


def _array(arr) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    head = struct.pack("<Q", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes()


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ValueError("truncated record")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def array(self):
        (ndim,) = self.take("<Q")
        shape = self.take(f"<{ndim}Q")
        count = int(np.prod(shape)) if ndim else 1
        size = 8 * count
        if self.pos + size > len(self.data):
            raise ValueError("truncated record")
        arr = np.frombuffer(self.data, dtype="<f8", count=count, offset=self.pos).reshape(shape)
        self.pos += size
        return arr.astype(float)


def _header(kind):
    return MAGIC + struct.pack("<II", VERSION, kind)


def _check_header(cur: _Cursor, kind: int):
    magic = cur.data[:4]
    if magic != MAGIC:
        raise ValueError("not a levyrd record")
    cur.pos = 4
    version, got = cur.take("<II")
    if version != VERSION:
        raise ValueError(f"unsupported record version {version}")
    if got != kind:
        raise ValueError(f"expected record kind {kind}, got {got}")


def encode_noise(noise: NoiseRealization) -> bytes:
    parts = [
        _header(KIND_NOISE),
        struct.pack("<dQ", noise.grid.horizon, noise.grid.level),
        struct.pack("<QQQ", noise.truncation, noise.seed & (2**64 - 1), noise.path_id),
        _array(noise.wiener),
        struct.pack("<Q", len(noise.jumps)),
        np.ascontiguousarray(noise.jumps.times, dtype="<f8").tobytes(),
        np.ascontiguousarray(noise.jumps.marks, dtype="<f8").tobytes(),
    ]
    return b"".join(parts)


def decode_noise(data: bytes) -> NoiseRealization:
    cur = _Cursor(data)
    _check_header(cur, KIND_NOISE)
    horizon, level = cur.take("<dQ")
    truncation, seed, path_id = cur.take("<QQQ")
    wiener = cur.array()
    (count,) = cur.take("<Q")
    times = np.array(cur.take(f"<{count}d"))
    marks = np.array(cur.take(f"<{count}d"))
    return NoiseRealization(TimeGrid(horizon, int(level)), wiener, JumpList(times, marks),
                            int(truncation), int(seed), int(path_id))


def encode_ensemble(ens: PathEnsemble) -> bytes:
    parts = [
        _header(KIND_ENSEMBLE),
        struct.pack("<dQB", ens.grid.horizon, ens.grid.level, int(ens.nodal)),
        _array(ens.values),
        _array(np.asarray(ens.path_ids, dtype=float)),
        _array(np.asarray(ens.failed, dtype=float)),
    ]
    return b"".join(parts)


def decode_ensemble(data: bytes, eigenvalues=None) -> PathEnsemble:
    cur = _Cursor(data)
    _check_header(cur, KIND_ENSEMBLE)
    horizon, level, nodal = cur.take("<dQB")
    values = cur.array()
    ids = cur.array().astype(np.int64)
    failed = cur.array().astype(bool)
    return PathEnsemble(TimeGrid(horizon, int(level)), values, bool(nodal), eigenvalues, ids, failed)
