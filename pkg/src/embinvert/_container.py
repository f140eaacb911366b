"""Versioned binary container: magic, version, JSON header, raw payload.

Layout (all integers little-endian)::

    8 bytes   magic
    uint32    format version
    uint32    header length in bytes
    ...       UTF-8 JSON header (always carries ``payload_sha256``)
    ...       payload
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

from .errors import CorruptCheckpoint

_PREFIX = struct.Struct("<8sII")


def write_container(path: str | Path, magic: bytes, version: int, header: dict, payload: bytes) -> None:
    header = dict(header, payload_sha256=hashlib.sha256(payload).hexdigest(),
                  payload_bytes=len(payload))
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(magic, version, len(blob)))
        fh.write(blob)
        fh.write(payload)
    tmp.replace(path)


def read_container(path: str | Path, magic: bytes, version: int,
                   error: type[Exception] = CorruptCheckpoint) -> tuple[dict, bytes]:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise error(f"{path}: file too short")
    got_magic, got_version, hlen = _PREFIX.unpack_from(data)
    if got_magic != magic:
        raise error(f"{path}: bad magic {got_magic!r}")
    if got_version != version:
        raise error(f"{path}: unsupported version {got_version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise error(f"{path}: unreadable header") from exc
    payload = data[start + hlen:]
    if len(payload) != header.get("payload_bytes") or \
            hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise error(f"{path}: payload truncated or corrupted")
    return header, payload
