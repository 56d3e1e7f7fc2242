"""Single-file array container: structured text header + little-endian blobs.

Layout:

    HEADSPLAT-BLOB v1
    field <name> <dtype> <byte_offset> <dim0> <dim1> ...
    end
    <raw little-endian data>

Offsets are relative to the first byte after the ``end`` line. Supported
dtypes are f4, u4 and i4, which keeps round-trips bit-exact and the
format trivial to parse from any language.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError

MAGIC = "HEADSPLAT-BLOB v1"

_DTYPES = {"f4": np.dtype("<f4"), "u4": np.dtype("<u4"), "i4": np.dtype("<i4")}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}


def save_blob(path, fields: dict[str, np.ndarray]) -> None:
    """Write named arrays; dtype of each must be float32, uint32 or int32."""
    header_lines = [MAGIC]
    blobs = []
    offset = 0
    for name, arr in fields.items():
        arr = np.ascontiguousarray(arr)
        key = _DTYPE_NAMES.get(np.dtype(arr.dtype.str.replace(">", "<")))
        if key is None:
            raise ParseError(f"field {name!r} has unsupported dtype {arr.dtype}")
        arr = arr.astype(_DTYPES[key], copy=False)
        dims = " ".join(str(d) for d in arr.shape) if arr.ndim else "1"
        header_lines.append(f"field {name} {key} {offset} {dims}")
        raw = arr.tobytes()
        blobs.append(raw)
        offset += len(raw)
    header_lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header_lines) + "\n").encode("ascii"))
        for raw in blobs:
            fh.write(raw)


def load_blob(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0 or data[:nl].decode("ascii", "replace") != MAGIC:
        raise ParseError(f"{path}: not a {MAGIC} container")
    # scan header lines until 'end'
    pos = nl + 1
    specs = []
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ParseError(f"{path}: header not terminated by 'end'")
        line = data[pos:nl].decode("ascii", "replace").strip()
        pos = nl + 1
        if line == "end":
            break
        parts = line.split()
        if len(parts) < 5 or parts[0] != "field":
            raise ParseError(f"{path}: malformed header line {line!r}")
        name, key = parts[1], parts[2]
        if key not in _DTYPES:
            raise ParseError(f"{path}: field {name!r} has unknown dtype {key!r}")
        offset = int(parts[3])
        shape = tuple(int(d) for d in parts[4:])
        specs.append((name, key, offset, shape))

    base = pos
    out: dict[str, np.ndarray] = {}
    for name, key, offset, shape in specs:
        dtype = _DTYPES[key]
        count = int(np.prod(shape)) if shape else 1
        start = base + offset
        end = start + count * dtype.itemsize
        if end > len(data):
            raise ParseError(f"{path}: field {name!r} blob is truncated")
        out[name] = np.frombuffer(data[start:end], dtype=dtype).reshape(shape).copy()
    return out
