"""Versioned structured-text records: byte-stable JSON with exact float round-trip.

Every on-disk artifact (case, surrogate, shapley record, explanation record,
request/response, manifest, summary) is a JSON document with a fixed field
order, ``format_version`` 1, and a sha256 checksum over the payload.  Floats
are written as decimal strings with 17 significant digits, which round-trips
float64 bit-exactly and keeps the output byte-stable across platforms.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

FORMAT_VERSION = 1


class SchemaError(ValueError):
    """A file or in-memory record violates the artifact schema."""


class MissingEntryError(KeyError):
    """A pairs-backed oracle was asked for coalitions it does not hold.

    Carries the full list of missing coalition texts so a request file can
    be emitted in one shot.
    """

    def __init__(self, coalitions: Sequence[str], case_id: str | None = None):
        self.coalitions = sorted(set(coalitions))
        self.case_id = case_id
        super().__init__(
            f"oracle case {case_id or '<unknown>'} is missing {len(self.coalitions)} "
            f"coalition entr{'y' if len(self.coalitions) == 1 else 'ies'}"
        )


class NumericalError(ArithmeticError):
    """A non-finite value appeared in a numeric field during computation."""


def f2s(x: float) -> str:
    """Float64 -> decimal text, 17 significant digits (bit-exact round-trip)."""
    x = float(x)
    if not np.isfinite(x):
        raise NumericalError(f"non-finite value {x!r} cannot be serialized")
    return format(x, ".17g")


def s2f(s: Any, field: str = "") -> float:
    try:
        x = float(s)
    except (TypeError, ValueError):
        raise SchemaError(f"field {field!r}: expected a decimal number, got {s!r}")
    if not np.isfinite(x):
        raise SchemaError(f"field {field!r}: non-finite value {s!r}")
    return x


def vec2s(a) -> list[str]:
    return [f2s(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def mat2s(a) -> list[list[str]]:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    return [[f2s(v) for v in row] for row in m]


def s2vec(rows, field: str, length: int | None = None) -> np.ndarray:
    if not isinstance(rows, list):
        raise SchemaError(f"field {field!r}: expected a list, got {type(rows).__name__}")
    v = np.array([s2f(x, field) for x in rows], dtype=np.float64)
    if length is not None and v.size != length:
        raise SchemaError(f"field {field!r}: expected length {length}, got {v.size}")
    return v


def s2mat(rows, field: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise SchemaError(f"field {field!r}: expected a list of rows")
    m = np.array([[s2f(x, field) for x in row] for row in rows], dtype=np.float64)
    if m.ndim != 2:
        raise SchemaError(f"field {field!r}: ragged or empty matrix")
    if shape is not None and m.shape != shape:
        raise SchemaError(f"field {field!r}: expected shape {shape}, got {m.shape}")
    return m


def _payload_bytes(payload: dict) -> bytes:
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def _checksum(payload: dict) -> str:
    return hashlib.sha256(_payload_bytes(payload)).hexdigest()


def dumps_record(kind: str, payload: dict) -> str:
    doc = {"format_version": FORMAT_VERSION, "kind": kind, "checksum": _checksum(payload)}
    doc.update(payload)
    return json.dumps(doc, indent=1, ensure_ascii=True) + "\n"


def write_record(path: str | Path, kind: str, payload: dict) -> Path:
    path = Path(path)
    path.write_text(dumps_record(kind, payload), encoding="ascii")
    return path


def loads_record(text: str, kind: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"not a well-formed record: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("record root must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaError(f"field 'format_version': expected {FORMAT_VERSION}, got {version!r}")
    if doc.get("kind") != kind:
        raise SchemaError(f"field 'kind': expected {kind!r}, got {doc.get('kind')!r}")
    stored = doc.get("checksum")
    payload = {k: v for k, v in doc.items() if k not in ("format_version", "kind", "checksum")}
    actual = _checksum(payload)
    if stored != actual:
        raise SchemaError(f"field 'checksum': mismatch (stored {stored!r}, computed {actual!r})")
    return payload


def read_record(path: str | Path, kind: str) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except OSError as e:
        raise SchemaError(f"cannot read {path}: {e}") from e
    return loads_record(text, kind)


def require(payload: dict, field: str, typ: type | tuple[type, ...] | None = None) -> Any:
    if field not in payload:
        raise SchemaError(f"field {field!r}: missing")
    value = payload[field]
    if typ is not None and not isinstance(value, typ):
        raise SchemaError(f"field {field!r}: wrong type {type(value).__name__}")
    return value
