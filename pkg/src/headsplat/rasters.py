"""Image I/O: 8-bit PNGs via Pillow and a float32 raster format with a
small text header, used for depth/alpha images and for exchanging loss
gradients with external processes.

Raster layout:

    HEADSPLAT-RASTER v1
    width <W>
    height <H>
    channels <C>
    min <float>
    max <float>
    end
    <float32 little-endian, row-major, channel-interleaved>
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ParseError

RASTER_MAGIC = "HEADSPLAT-RASTER v1"


def to_uint8(image: np.ndarray) -> np.ndarray:
    """[0, 1] float image to uint8 with round-half-away clipping."""
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def save_png(path, image: np.ndarray) -> None:
    """Save HxW (grayscale), HxWx3 (RGB) or HxWx4 (RGBA) float [0,1] or uint8."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    Image.fromarray(arr).save(path, format="PNG")


def load_png(path) -> np.ndarray:
    """Load a PNG as float64 in [0, 1], shape HxW or HxWxC."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    return arr.astype(np.float64) / 255.0


def load_mask_png(path) -> np.ndarray:
    """Load a mask PNG: nonzero pixels (any channel) -> 1.0."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return (arr != 0).astype(np.float64)


def save_raster(path, image: np.ndarray) -> None:
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ParseError(f"raster must be HxW or HxWxC, got shape {arr.shape}")
    h, w, c = arr.shape
    finite = arr[np.isfinite(arr)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    header = (
        f"{RASTER_MAGIC}\nwidth {w}\nheight {h}\nchannels {c}\n"
        f"min {lo:.9g}\nmax {hi:.9g}\nend\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_raster(path) -> np.ndarray:
    """Returns float64, HxW when single-channel else HxWxC."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0 or data[:nl].decode("ascii", "replace") != RASTER_MAGIC:
        raise ParseError(f"{path}: not a {RASTER_MAGIC} file")
    pos = nl + 1
    fields: dict[str, str] = {}
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ParseError(f"{path}: header not terminated by 'end'")
        line = data[pos:nl].decode("ascii", "replace").strip()
        pos = nl + 1
        if line == "end":
            break
        key, _, val = line.partition(" ")
        fields[key] = val
    try:
        w, h, c = int(fields["width"]), int(fields["height"]), int(fields["channels"])
    except KeyError as exc:
        raise ParseError(f"{path}: header missing field {exc}") from exc
    count = w * h * c
    body = data[pos : pos + 4 * count]
    if len(body) < 4 * count:
        raise ParseError(f"{path}: pixel payload is truncated")
    arr = np.frombuffer(body, dtype="<f4").reshape(h, w, c).astype(np.float64)
    return arr[:, :, 0] if c == 1 else arr
