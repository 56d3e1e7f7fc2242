"""Degree-3 real spherical harmonics for view-dependent splat color.

Coefficient layout is band-major: 1 DC, 3 deg-1, 5 deg-2, 7 deg-3 = 16
RGB triples (48 scalars). Colors are decoded as sum(c_lm * Y_lm(dir))
+ 0.5 per channel, clamped at zero, matching the de-facto splat-file
convention so third-party files render with expected colors.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

SH_COEFFS = 16

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

_DIR_TOL = 1e-6


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Evaluate the 16 basis functions at unit direction(s).

    Accepts (3,) or (N, 3); returns (16,) or (N, 16). Directions must be
    unit-norm within 1e-6.
    """
    d = np.asarray(dirs, dtype=np.float64)
    single = d.ndim == 1
    d = np.atleast_2d(d)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(norm - 1.0) > _DIR_TOL):
        raise InvalidInputError("view direction is not unit length")
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z

    B = np.empty((d.shape[0], SH_COEFFS), dtype=np.float64)
    B[:, 0] = SH_C0
    B[:, 1] = -SH_C1 * y
    B[:, 2] = SH_C1 * z
    B[:, 3] = -SH_C1 * x
    B[:, 4] = SH_C2[0] * xy
    B[:, 5] = SH_C2[1] * yz
    B[:, 6] = SH_C2[2] * (2.0 * zz - xx - yy)
    B[:, 7] = SH_C2[3] * xz
    B[:, 8] = SH_C2[4] * (xx - yy)
    B[:, 9] = SH_C3[0] * y * (3.0 * xx - yy)
    B[:, 10] = SH_C3[1] * xy * z
    B[:, 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
    B[:, 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    B[:, 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
    B[:, 14] = SH_C3[5] * z * (xx - yy)
    B[:, 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return B[0] if single else B


def eval_sh(coeffs: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Decode RGB color(s) from SH coefficients at unit view direction(s).

    ``coeffs`` is (16, 3) or (N, 16, 3); ``dirs`` is (3,) or (N, 3).
    Returns (3,) or (N, 3), offset by +0.5 and clamped to [0, inf).
    """
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape[-2:] != (SH_COEFFS, 3):
        raise InvalidInputError(f"SH coefficients must have shape (..., 16, 3), got {c.shape}")
    B = sh_basis(dirs)
    if c.ndim == 2:
        rgb = B @ c + 0.5
    else:
        rgb = np.einsum("nk,nkc->nc", np.atleast_2d(B), c) + 0.5
    return np.maximum(rgb, 0.0)
