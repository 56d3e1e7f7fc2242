"""Splat point-file I/O in the de-facto binary PLY layout.

Per-point float32 properties: x y z, nx ny nz (semantically ignored),
f_dc_0..2, f_rest_0..44 (channel-major: all 15 red coefficients, then
green, then blue), opacity (logit), scale_0..2 (log), rot_0..3
(quaternion, wxyz). Values are stored bit-exactly; a canonical file
round-trips byte-identically through load + save.
"""

from __future__ import annotations

import numpy as np

from .cloud import GROUP_BACKGROUND, GROUP_HEAD, GaussianCloud
from .errors import InvalidInputError, ParseError
from .sh import SH_COEFFS

N_REST = (SH_COEFFS - 1) * 3

SPLAT_PROPERTIES = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(N_REST)]
    + ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
)

_IGNORED = {"nx", "ny", "nz"}


def _parse_header(data: bytes, path) -> tuple[int, list[str], int]:
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError(f"{path}: not a binary PLY file")
    header = data[:end].decode("ascii", "replace").splitlines()
    count = -1
    props: list[str] = []
    in_vertex = False
    fmt_ok = False
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "binary_little_endian":
                raise ParseError(f"{path}: unsupported PLY format {parts[1]!r}")
            fmt_ok = True
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                count = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] != "float":
                raise ParseError(f"{path}: property {parts[-1]!r} is not float32")
            props.append(parts[2])
    if not fmt_ok:
        raise ParseError(f"{path}: missing format line")
    if count < 0:
        raise ParseError(f"{path}: missing 'element vertex' declaration")
    return count, props, end + len(b"end_header\n")


def load_splat_file(path, group: str = "background") -> GaussianCloud:
    """Load a splat point file; ``group`` labels every point (head|background)."""
    with open(path, "rb") as fh:
        data = fh.read()
    count, props, offset = _parse_header(data, path)
    for name in SPLAT_PROPERTIES:
        if name not in props and name not in _IGNORED:
            raise ParseError(f"{path}: missing required property {name!r}")
    dtype = np.dtype([(p, "<f4") for p in props])
    body = data[offset:]
    if len(body) < count * dtype.itemsize:
        raise ParseError(f"{path}: expected {count} points, payload is truncated")
    rec = np.frombuffer(body, dtype=dtype, count=count)

    def col(name):
        return rec[name].astype(np.float64)

    positions = np.stack([col("x"), col("y"), col("z")], axis=1)
    sh = np.zeros((count, SH_COEFFS, 3), dtype=np.float64)
    for ch in range(3):
        sh[:, 0, ch] = col(f"f_dc_{ch}")
    for j in range(N_REST):
        ch, coeff = divmod(j, SH_COEFFS - 1)
        sh[:, 1 + coeff, ch] = col(f"f_rest_{j}")
    log_scales = np.stack([col(f"scale_{i}") for i in range(3)], axis=1)
    rotations = np.stack([col(f"rot_{i}") for i in range(4)], axis=1)

    if group not in ("head", "background"):
        raise InvalidInputError(f"unknown group {group!r}")
    gid = GROUP_HEAD if group == "head" else GROUP_BACKGROUND
    return GaussianCloud(
        positions=positions,
        rotations=rotations,
        log_scales=log_scales,
        opacity_logits=col("opacity"),
        sh=sh,
        group=np.full(count, gid, dtype=np.uint8),
    )


def save_splat_file(cloud: GaussianCloud, path) -> None:
    n = cloud.count
    dtype = np.dtype([(p, "<f4") for p in SPLAT_PROPERTIES])
    rec = np.zeros(n, dtype=dtype)
    rec["x"], rec["y"], rec["z"] = (cloud.positions[:, i].astype(np.float32) for i in range(3))
    for ch in range(3):
        rec[f"f_dc_{ch}"] = cloud.sh[:, 0, ch].astype(np.float32)
    for j in range(N_REST):
        ch, coeff = divmod(j, SH_COEFFS - 1)
        rec[f"f_rest_{j}"] = cloud.sh[:, 1 + coeff, ch].astype(np.float32)
    rec["opacity"] = cloud.opacity_logits.astype(np.float32)
    for i in range(3):
        rec[f"scale_{i}"] = cloud.log_scales[:, i].astype(np.float32)
    for i in range(4):
        rec[f"rot_{i}"] = cloud.rotations[:, i].astype(np.float32)

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in SPLAT_PROPERTIES]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())
