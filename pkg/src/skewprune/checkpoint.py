"""Bit-exact model checkpoints.

Layout (all integers little-endian uint32)::

    offset 0   magic  b"SKPR"
    offset 4   format version (1)
    offset 8   header length in bytes (N)
    offset 12  CRC-32 of everything after this preamble (header + body)
    offset 16  header: N bytes of UTF-8 JSON, sorted keys, no whitespace
    offset 16+N body: float32 little-endian tensors, row-major, in the
               order of the header's tensor directory (sorted by name)

The header holds ``config`` (ModelConfig fields), ``prune_state`` (one
entry per block with the surviving original head / channel ids),
``frozen_stages`` and ``tensors``: ``[name, shape, offset, length]`` with
offsets relative to the start of the body.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .model import BlockPruneState, ModelConfig, SwinMultimodal

MAGIC = b"SKPR"
VERSION = 1
PREAMBLE = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Malformed checkpoint; the message names the failing section."""


def _header(model: SwinMultimodal) -> tuple[bytes, list[np.ndarray]]:
    arrays, directory, offset = [], [], 0
    for name in sorted(model.params):
        a = np.ascontiguousarray(model.params[name].data, dtype="<f4")
        directory.append([name, list(a.shape), offset, a.nbytes])
        arrays.append(a)
        offset += a.nbytes
    header = {
        "config": model.config.to_dict(),
        "frozen_stages": sorted(model.frozen_stages),
        "prune_state": [
            {"stage": s, "block": b, **model.prune_state[(s, b)].to_dict()} for s, b in sorted(model.prune_state)
        ],
        "tensors": directory,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"), arrays


def to_bytes(model: SwinMultimodal) -> bytes:
    head, arrays = _header(model)
    payload = head + b"".join(a.tobytes() for a in arrays)
    return PREAMBLE.pack(MAGIC, VERSION, len(head), zlib.crc32(payload)) + payload


def from_bytes(blob: bytes) -> SwinMultimodal:
    if len(blob) < PREAMBLE.size:
        raise FormatError(f"preamble: truncated ({len(blob)} bytes)")
    magic, version, hlen, crc = PREAMBLE.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"preamble: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"preamble: unsupported version {version}")
    payload = memoryview(blob)[PREAMBLE.size:]
    if hlen > len(payload):
        raise FormatError(f"header: length {hlen} exceeds file")
    if zlib.crc32(payload) != crc:
        raise FormatError("checksum: CRC-32 mismatch (file corrupted or truncated)")
    try:
        header = json.loads(bytes(payload[:hlen]).decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        prune_state = {(int(e["stage"]), int(e["block"])): BlockPruneState.from_dict(e)
                       for e in header["prune_state"]}
        directory = header["tensors"]
        frozen = header["frozen_stages"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"header: {exc}") from None
    body = payload[hlen:]
    params, expect = {}, 0
    for name, shape, offset, length in directory:
        count = int(np.prod(shape, dtype=np.int64))
        if offset != expect or length != 4 * count:
            raise FormatError(f"tensor directory: {name} has offset/length {offset}/{length}, expected {expect}/{4 * count}")
        if offset + length > len(body):
            raise FormatError(f"body: truncated inside tensor {name}")
        params[name] = np.frombuffer(body, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        expect += length
    if expect != len(body):
        raise FormatError(f"body: {len(body) - expect} trailing bytes")
    try:
        return SwinMultimodal(config, params, prune_state, frozen)
    except (ValueError, KeyError) as exc:
        raise FormatError(f"structure: {exc}") from None


def save(model: SwinMultimodal, path) -> int:
    blob = to_bytes(model)
    Path(path).write_bytes(blob)
    return len(blob)


def load(path) -> SwinMultimodal:
    return from_bytes(Path(path).read_bytes())


def header_size(model: SwinMultimodal) -> int:
    """Bytes before the tensor body (preamble + JSON header)."""
    return PREAMBLE.size + len(_header(model)[0])
