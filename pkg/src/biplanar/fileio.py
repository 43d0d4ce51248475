"""
Plain-text ``key = value`` headers with a little-endian raw payload.

A header looks like::

    dims = 64 64 64
    spacing = 1.0 1.0 1.0
    origin = -31.5 -31.5 -31.5
    element_type = float32
    data_file = chest.raw

Values are stored in C order of ``dims``: the last axis varies fastest, so
voxel ``(i, j, k)`` of an ``(nx, ny, nz)`` grid sits at element
``(i * ny + j) * nz + k``. ``data_file`` is resolved relative to the header.
Lines starting with ``#`` are comments.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

ELEMENT_TYPES = {
    "uint8": "<u1",
    "int8": "<i1",
    "uint16": "<u2",
    "int16": "<i2",
    "uint32": "<u4",
    "int32": "<i4",
    "float32": "<f4",
    "float64": "<f8",
}


class FormatError(ValueError):
    """Base class for file-format problems."""


class HeaderError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class UnsupportedElementTypeError(FormatError):
    pass


def parse_key_values(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise HeaderError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise HeaderError(f"{source}:{lineno}: empty key")
        if key in out:
            raise HeaderError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_key_values(items: dict) -> str:
    lines = []
    for key, value in items.items():
        if isinstance(value, (list, tuple)):
            value = " ".join(_fmt(v) for v in value)
        else:
            value = _fmt(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def parse_floats(value: str, key: str, n: int | None = None) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in value.split())
    except ValueError:
        raise HeaderError(f"{key}: cannot parse {value!r} as numbers") from None
    if n is not None and len(vals) != n:
        raise HeaderError(f"{key}: expected {n} values, got {len(vals)}")
    return vals


def parse_ints(value: str, key: str, n: int | None = None) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in value.split())
    except ValueError:
        raise HeaderError(f"{key}: cannot parse {value!r} as integers") from None
    if n is not None and len(vals) != n:
        raise HeaderError(f"{key}: expected {n} values, got {len(vals)}")
    return vals


def raw_path_for(header_path: Path) -> Path:
    header_path = Path(header_path)
    return header_path.with_suffix(".raw") if header_path.suffix else header_path.with_name(header_path.name + ".raw")


def write_array(path, values: np.ndarray, extra: dict | None = None) -> Path:
    """Write ``values`` with a header at ``path``; returns the header path."""
    path = Path(path)
    values = np.asarray(values)
    etype = next((k for k, v in ELEMENT_TYPES.items() if np.dtype(v) == values.dtype.newbyteorder("<")), None)
    if etype is None:
        raise UnsupportedElementTypeError(f"cannot store arrays of dtype {values.dtype}")
    raw = raw_path_for(path)
    header = {"dims": list(values.shape)}
    header.update(extra or {})
    header["element_type"] = etype
    header["data_file"] = raw.name
    path.parent.mkdir(parents=True, exist_ok=True)
    raw.write_bytes(np.ascontiguousarray(values, dtype=ELEMENT_TYPES[etype]).tobytes())
    path.write_text(format_key_values(header))
    return path


def read_array(path) -> tuple[np.ndarray, dict[str, str]]:
    """Read a header and its payload; returns ``(values, header_fields)``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except UnicodeDecodeError:
        raise HeaderError(f"{path}: header is not ASCII text") from None
    fields = parse_key_values(text, str(path))
    for key in ("dims", "element_type", "data_file"):
        if key not in fields:
            raise HeaderError(f"{path}: missing required key {key!r}")
    dims = parse_ints(fields["dims"], "dims")
    if not dims or any(d < 1 for d in dims):
        raise HeaderError(f"{path}: dims must be positive, got {dims}")
    etype = fields["element_type"]
    if etype not in ELEMENT_TYPES:
        raise UnsupportedElementTypeError(
            f"{path}: element_type {etype!r} not one of {sorted(ELEMENT_TYPES)}")
    raw = path.parent / fields["data_file"]
    if not raw.exists():
        raise HeaderError(f"{path}: data_file {raw} does not exist")
    dt = np.dtype(ELEMENT_TYPES[etype])
    payload = raw.read_bytes()
    expected = int(np.prod(dims)) * dt.itemsize
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{raw}: payload has {len(payload)} bytes, dims {dims} of {etype} need {expected}")
    if len(payload) > expected:
        raise HeaderError(f"{raw}: payload has {len(payload) - expected} trailing bytes")
    values = np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
    return values, fields
