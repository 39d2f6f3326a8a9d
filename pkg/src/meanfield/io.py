"""Binary cache container for states and sector-blocked operators.

Layout (all integers little-endian)::

    magic   4 bytes  b"MFLD"
    version u16      currently 1
    kind    u16      1 = FockState, 2 = BlockOperator
    hlen    u32      length of the UTF-8 JSON header that follows
    header  hlen bytes
    payload complex entries as consecutive little-endian f64 pairs (re, im)

The header records ``d``, ``eps`` and the per-block lengths (state) or
``n_max``, ``shift`` and block shapes (operator); the payload holds the blocks
in increasing sector order, each operator block in row-major order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .fock import BlockOperator, FockState

MAGIC = b"MFLD"
VERSION = 1
KIND_STATE = 1
KIND_OPERATOR = 2

_PREFIX = struct.Struct("<4sHHI")


class ContainerError(ValueError):
    """Malformed or unsupported cache file."""


def _pack(kind: int, header: dict, arrays) -> bytes:
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<c16").tobytes() for a in arrays)
    return _PREFIX.pack(MAGIC, VERSION, kind, len(head)) + head + body


def _unpack(data: bytes, kind: int):
    if len(data) < _PREFIX.size:
        raise ContainerError("file too short")
    magic, version, found, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ContainerError("bad magic")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if found != kind:
        raise ContainerError(f"container holds kind {found}, expected {kind}")
    start = _PREFIX.size
    header = json.loads(data[start : start + hlen].decode())
    payload = np.frombuffer(data[start + hlen :], dtype="<c16")
    return header, payload


def dump_state(u: FockState) -> bytes:
    header = {"d": u.d, "eps": u.eps, "tail_mass": u.tail_mass,
              "lengths": [int(b.shape[0]) for b in u.blocks]}
    return _pack(KIND_STATE, header, u.blocks)


def load_state(data: bytes) -> FockState:
    header, payload = _unpack(data, KIND_STATE)
    blocks, pos = [], 0
    for length in header["lengths"]:
        blocks.append(payload[pos : pos + length].astype(complex))
        pos += length
    if pos != payload.shape[0]:
        raise ContainerError("payload length does not match header")
    return FockState(d=header["d"], eps=header["eps"], blocks=tuple(blocks),
                     tail_mass=header["tail_mass"])


def dump_operator(op: BlockOperator) -> bytes:
    keys = sorted(op.blocks)
    header = {"d": op.d, "n_max": op.n_max, "eps": op.eps, "shift": op.shift,
              "sectors": keys, "shapes": [list(op.blocks[n].shape) for n in keys]}
    return _pack(KIND_OPERATOR, header, [op.blocks[n] for n in keys])


def load_operator(data: bytes) -> BlockOperator:
    header, payload = _unpack(data, KIND_OPERATOR)
    blocks, pos = {}, 0
    for n, (rows, cols) in zip(header["sectors"], header["shapes"]):
        size = rows * cols
        blocks[n] = payload[pos : pos + size].astype(complex).reshape(rows, cols)
        pos += size
    if pos != payload.shape[0]:
        raise ContainerError("payload length does not match header")
    return BlockOperator(header["d"], header["n_max"], header["eps"], header["shift"], blocks)


def save(obj, path) -> None:
    data = dump_state(obj) if isinstance(obj, FockState) else dump_operator(obj)
    Path(path).write_bytes(data)


def load(path):
    data = Path(path).read_bytes()
    if len(data) >= _PREFIX.size and _PREFIX.unpack_from(data)[2] == KIND_OPERATOR:
        return load_operator(data)
    return load_state(data)
