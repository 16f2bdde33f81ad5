"""Named-tensor file format: text header plus little-endian flat payload.

Layout, all header lines LF-terminated ASCII:

    tensordump 1 <tensor-count>
    meta <key> <value ...>                  zero or more
    tensor <name> <dtype> <d0,d1,...> <byte-offset>
    end
    <payload>

dtype is one of ``f8`` (little-endian float64) or ``i8`` (little-endian
int64). Offsets index into the payload, which holds each tensor's C-order
bytes back to back. Reading a dump returns arrays bit-identical to the ones
written.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ConfigError, MalformedHeader

_MAGIC = "tensordump 1"
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


def _canonical(arr: np.ndarray) -> tuple[str, np.ndarray]:
    """Map an array to (dtype token, little-endian contiguous array)."""
    if arr.dtype == np.bool_:
        arr = arr.astype(np.int64)
    if np.issubdtype(arr.dtype, np.floating):
        token = "f8"
    elif np.issubdtype(arr.dtype, np.integer):
        token = "i8"
    else:
        raise ConfigError(f"unsupported tensor dtype {arr.dtype}")
    return token, np.ascontiguousarray(arr, dtype=_DTYPES[token])


def write_tensors(path, tensors: dict[str, np.ndarray], meta: dict[str, str] | None = None):
    """Write named tensors (and string metadata) to `path`."""
    lines = [f"{_MAGIC} {len(tensors)}"]
    for key, value in (meta or {}).items():
        if any(c.isspace() for c in key) or not key:
            raise ConfigError(f"bad meta key {key!r}")
        value = str(value)
        if "\n" in value:
            raise ConfigError(f"meta value for {key!r} contains a newline")
        lines.append(f"meta {key} {value}")

    payloads: list[bytes] = []
    offset = 0
    for name, arr in tensors.items():
        if any(c.isspace() for c in name) or not name:
            raise ConfigError(f"bad tensor name {name!r}")
        arr = np.asarray(arr)
        if arr.ndim < 1:
            arr = arr.reshape(1)
        token, canon = _canonical(arr)
        shape = ",".join(str(d) for d in canon.shape)
        lines.append(f"tensor {name} {token} {shape} {offset}")
        raw = canon.tobytes(order="C")
        payloads.append(raw)
        offset += len(raw)
    lines.append("end")

    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for raw in payloads:
            fh.write(raw)


def read_tensors(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read a tensor dump; returns (tensors, meta) in header order."""
    with open(path, "rb") as fh:
        data = fh.read()

    end_marker = b"\nend\n"
    cut = data.find(end_marker)
    if cut < 0:
        raise MalformedHeader("missing end marker")
    try:
        header = data[:cut].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeader("header is not ASCII") from exc
    payload = data[cut + len(end_marker):]

    header_lines = header.split("\n")
    first = header_lines[0].split()
    if len(first) != 3 or " ".join(first[:2]) != _MAGIC:
        raise MalformedHeader(f"bad magic line {header_lines[0]!r}")
    try:
        count = int(first[2])
    except ValueError as exc:
        raise MalformedHeader("bad tensor count") from exc

    meta: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    for line in header_lines[1:]:
        fields = line.split(" ")
        if fields[0] == "meta":
            if len(fields) < 3:
                raise MalformedHeader(f"bad meta line {line!r}")
            meta[fields[1]] = " ".join(fields[2:])
        elif fields[0] == "tensor":
            if len(fields) != 5:
                raise MalformedHeader(f"bad tensor line {line!r}")
            _, name, token, shape_s, offset_s = fields
            dtype = _DTYPES.get(token)
            if dtype is None:
                raise MalformedHeader(f"unknown dtype {token!r}")
            try:
                shape = tuple(int(d) for d in shape_s.split(","))
                offset = int(offset_s)
            except ValueError as exc:
                raise MalformedHeader(f"bad tensor line {line!r}") from exc
            if any(d < 0 for d in shape) or offset < 0:
                raise MalformedHeader(f"bad tensor line {line!r}")
            size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if offset + size > len(payload):
                raise MalformedHeader(f"tensor {name!r} exceeds payload")
            arr = np.frombuffer(payload[offset : offset + size], dtype=dtype).reshape(shape)
            tensors[name] = arr.copy()
        else:
            raise MalformedHeader(f"unknown header line {line!r}")
    if len(tensors) != count:
        raise MalformedHeader(f"header declares {count} tensors, found {len(tensors)}")
    return tensors, meta


def tensors_checksum(tensors: dict[str, np.ndarray], meta: dict[str, str] | None = None) -> str:
    """sha256 over a canonical encoding: sorted names, dtype, shape, raw bytes."""
    h = hashlib.sha256()
    for key in sorted(meta or {}):
        h.update(f"meta {key} {(meta or {})[key]}\n".encode())
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        if arr.ndim < 1:
            arr = arr.reshape(1)
        token, canon = _canonical(arr)
        shape = ",".join(str(d) for d in canon.shape)
        h.update(f"tensor {name} {token} {shape}\n".encode())
        h.update(canon.tobytes(order="C"))
    return h.hexdigest()


def file_checksum(path) -> str:
    """sha256 hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
