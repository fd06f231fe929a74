"""Message kinds, their field layouts, and bit accounting.

Payloads travel through the simulator as tuples. Each message kind has a
fixed field layout; the byte length of a payload is derived from that
layout with these conventions:

* values are one byte,
* process ids and group indices take ceil(log2 n) bits, padded to bytes
  (id p is written as p - 1),
* view numbers take two bytes,
* bit strings take ceil(len / 8) bytes,
* id sets carry a length prefix wide enough for 0..n plus one id per member,
* every signature (partial or combined) takes kappa bits.

``encode`` materialises the bytes for a payload; ``payload_bytes`` computes
the same length without building them and is what the engine uses.
"""

from __future__ import annotations

import hashlib
import math
from typing import Any, Iterable

import numpy as np

from .crypto import PartialSig, ThresholdSig

VALUE = "value"
PID = "pid"
VIEW = "view"
BITS = "bits"
IDSET = "idset"
SIG = "sig"

SCHEMAS: dict[str, tuple[str, ...]] = {
    # graded consensus / phase king / implicit committee
    "gc1": (VALUE,),
    "gc2": (VALUE,),
    "king": (VALUE,),
    "decision": (VALUE,),
    # elections
    "pred": (BITS,),
    "vote": (BITS,),
    "leader": (PID,),
    "lvote": (IDSET,),
    "concil": (VALUE, IDSET),
    "concil_id": (PID, IDSET),
    "avote": (PID, SIG),
    "vote_proof": (PID, SIG),
    # strong certification
    "certify": (VALUE, SIG),
    "certified": (VALUE, SIG),
    "nocommon": (SIG,),
    # validated agreement
    "val": (VALUE, SIG, SIG),
    "valc": (VALUE, VIEW, SIG, SIG),
    "propose": (VALUE, SIG, SIG, SIG),
    "proposec": (VALUE, VIEW, SIG, SIG, SIG),
    "fwd_propose": (PID, VALUE, SIG, SIG),
    "ack": (VALUE, SIG),
    "commit": (VALUE, SIG, SIG),
    "fwd_commit": (PID, VALUE, SIG, SIG),
    "dshare": (VALUE, SIG),
    "decide": (VALUE, SIG, SIG),
    "final": (VALUE, SIG),
}

VIEW_BYTES = 2
MAX_VIEW = 256**VIEW_BYTES - 1


def pid_bytes(n: int) -> int:
    bits = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    return (bits + 7) // 8


def count_bytes(n: int) -> int:
    """Width of an id-set length prefix, which ranges over 0..n."""
    return (max(1, (n).bit_length()) + 7) // 8


def _field_bytes(ftype: str, value: Any, n: int, kappa: int) -> int:
    if ftype == VALUE:
        return 1
    if ftype == PID:
        return pid_bytes(n)
    if ftype == VIEW:
        return VIEW_BYTES
    if ftype == SIG:
        return (kappa + 7) // 8
    if ftype == BITS:
        return max(1, (len(value) + 7) // 8)
    if ftype == IDSET:
        return count_bytes(n) + pid_bytes(n) * len(value)
    raise ValueError(f"unknown field type {ftype!r}")


def payload_bytes(kind: str, body: tuple, n: int, kappa: int) -> int:
    """Byte length of ``body`` under the wire layout of ``kind``."""
    schema = SCHEMAS[kind]
    return sum(_field_bytes(ft, v, n, kappa) for ft, v in zip(schema, body))


def fixed_payload_bytes(kind: str, n: int, kappa: int) -> int | None:
    """Length for kinds whose size does not depend on content, else None."""
    schema = SCHEMAS[kind]
    if BITS in schema or IDSET in schema:
        return None
    return sum(_field_bytes(ft, None, n, kappa) for ft in schema)


def account_bits(kind: str, body: tuple, n: int, kappa: int) -> int:
    return 8 * payload_bytes(kind, body, n, kappa)


def _sig_bytes(sig: PartialSig | ThresholdSig, kappa: int) -> bytes:
    digest = hashlib.sha256(repr(sig.describe()).encode()).digest()
    size = (kappa + 7) // 8
    return (digest * (size // len(digest) + 1))[:size]


def encode(kind: str, body: tuple, n: int, kappa: int) -> bytes:
    """Serialise a payload. The result has exactly ``payload_bytes`` bytes."""
    schema = SCHEMAS[kind]
    width = pid_bytes(n)
    out = bytearray()
    for ftype, value in zip(schema, body):
        if ftype == VALUE:
            out += bytes([value])
        elif ftype == PID:
            out += (int(value) - 1).to_bytes(width, "big")
        elif ftype == VIEW:
            out += int(value).to_bytes(VIEW_BYTES, "big")
        elif ftype == BITS:
            packed = np.packbits(np.asarray(value, dtype=bool)).tobytes()
            out += packed or b"\x00"
        elif ftype == IDSET:
            out += len(value).to_bytes(count_bytes(n), "big")
            for pid in value:
                out += (int(pid) - 1).to_bytes(width, "big")
        elif ftype == SIG:
            out += _sig_bytes(value, kappa)
    return bytes(out)


def _valid_field(ftype: str, value: Any, n: int) -> bool:
    if ftype == VALUE:
        return type(value) is int and 0 <= value <= 255
    if ftype == PID:
        return type(value) is int and 1 <= value <= n
    if ftype == VIEW:
        return type(value) is int and 0 <= value <= MAX_VIEW
    if ftype == BITS:
        return isinstance(value, np.ndarray) and value.dtype == bool and value.ndim == 1
    if ftype == IDSET:
        if type(value) is not tuple:
            return False
        prev = 0
        for pid in value:
            if type(pid) is not int or pid <= prev or pid > n:
                return False
            prev = pid
        return True
    if ftype == SIG:
        return isinstance(value, (PartialSig, ThresholdSig))
    return False


def well_formed(kind: Any, body: Any, n: int) -> bool:
    """Structural check applied to every payload an honest process reads."""
    schema = SCHEMAS.get(kind) if isinstance(kind, str) else None
    if schema is None or type(body) is not tuple or len(body) != len(schema):
        return False
    return all(_valid_field(ft, v, n) for ft, v in zip(schema, body))


def field_types(kind: str) -> tuple[str, ...]:
    return SCHEMAS[kind]


def kinds() -> Iterable[str]:
    return SCHEMAS.keys()
