"""Forward tile-based splatting with priority compositing, a brute-force
reference renderer, and the analytic backward pass for appearance
gradients (SH coefficients and opacity logits; geometry is never
differentiated).

Blend order sorts by (priority group, depth, source index): head-group
splats blend before background splats regardless of depth, ties break on
the source index so renders are deterministic. The tiled and reference
paths share every cutoff and constant; the support square of a splat is
sized so that anything outside it falls below the alpha cull threshold,
which makes the two paths agree term for term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .camera import CameraRig
from .cloud import GaussianCloud
from .errors import InvalidInputError
from .quaternion import quat_to_rotation
from .sh import SH_COEFFS, sh_basis


@dataclass(frozen=True)
class RenderOptions:
    tile_size: int = 16
    lowpass: float = 0.3  # px^2 added to the cov2d diagonal
    alpha_max: float = 0.99
    alpha_cull: float = 1.0 / 255.0
    t_stop: float = 1e-4
    frustum_margin: float = 1.3
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (0.0 < self.alpha_cull < self.alpha_max <= 1.0):
            raise InvalidInputError("require 0 < alpha_cull < alpha_max <= 1")
        if self.tile_size < 1:
            raise InvalidInputError("tile_size must be >= 1")

    @property
    def radius_factor(self) -> float:
        # support square half-width in units of sqrt(lambda_max); beyond
        # it alpha < alpha_cull for any opacity < 1, so culling is exact
        return math.sqrt(2.0 * math.log(1.0 / self.alpha_cull))


@dataclass
class SplatArrays:
    """World-space splat attributes as consumed by the renderer."""

    positions: np.ndarray  # (N, 3)
    rotations: np.ndarray  # (N, 4) wxyz
    scales: np.ndarray  # (N, 3) linear, meters
    opacities: np.ndarray  # (N,) in (0, 1)
    sh: np.ndarray  # (N, 16, 3)
    group: np.ndarray  # (N,) uint8; 0 = head renders first

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = self.positions.shape[0]
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64).reshape(n, 3)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float64).reshape(n)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float64).reshape(n, SH_COEFFS, 3)
        self.group = np.ascontiguousarray(self.group, dtype=np.uint8).reshape(n)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def from_cloud(cls, cloud: GaussianCloud) -> "SplatArrays":
        return cls(
            cloud.positions,
            cloud.rotations,
            cloud.scales(),
            cloud.opacities(),
            cloud.sh,
            cloud.group,
        )


@dataclass
class Splat2D:
    mean: np.ndarray  # (2,) pixels
    cov2d: np.ndarray  # (2, 2), low-pass dilated
    depth: float
    radius: float
    color: np.ndarray | None = None
    opacity: float | None = None
    priority_group: int = 0
    source_index: int = -1


@dataclass
class RenderOutput:
    color: np.ndarray  # (H, W, 3) in [0, 1]
    alpha: np.ndarray  # (H, W) in [0, 1]
    depth: np.ndarray  # (H, W) meters, +inf where nothing accumulated
    contributors: np.ndarray  # (H, W) int32


@dataclass
class ForwardState:
    """Everything the backward pass needs to replay a forward render."""

    camera: CameraRig
    options: RenderOptions
    n_gaussians: int
    src: np.ndarray  # sorted splat -> source Gaussian index
    means2d: np.ndarray
    conics: np.ndarray
    sigmas: np.ndarray
    colors: np.ndarray
    depths: np.ndarray
    radius: np.ndarray
    group: np.ndarray
    tile_offsets: np.ndarray
    tile_items: np.ndarray
    trans_final: np.ndarray
    last_contributor: np.ndarray
    basis: np.ndarray  # (N, 16) SH basis at each Gaussian's view direction
    color_active: np.ndarray  # (N, 3) False where the raw color clamped at 0


def build_covariance(quaternion: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """World covariance R diag(s) diag(s)^T R^T of one Gaussian."""
    scale = np.asarray(scale, dtype=np.float64).reshape(3)
    if np.any(scale <= 0):
        raise InvalidInputError("scales must be positive")
    R = quat_to_rotation(np.asarray(quaternion, dtype=np.float64))
    M = R * scale[None, :]
    return M @ M.T


def _covariances(rotations: np.ndarray, scales: np.ndarray) -> np.ndarray:
    if np.any(scales <= 0):
        raise InvalidInputError("scales must be positive")
    R = quat_to_rotation(rotations)
    M = R * scales[:, None, :]
    return np.einsum("nij,nkj->nik", M, M)


def _project(
    positions: np.ndarray,
    covariances: np.ndarray,
    camera: CameraRig,
    options: RenderOptions,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Cull + project to screen space.

    Returns (keep indices, means2d, conic triples (a, b, c), depths, radii).
    """
    w2c = camera.world_to_camera
    cam = positions @ w2c.rotation.T + w2c.translation
    z = cam[:, 2]
    limx = options.frustum_margin * camera.tan_half_fov_x
    limy = options.frustum_margin * camera.tan_half_fov_y
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = cam[:, 0] / z
        ry = cam[:, 1] / z
    keep = (z > camera.near) & (z < camera.far) & (np.abs(rx) <= limx) & (np.abs(ry) <= limy)
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        empty2 = np.zeros((0, 2))
        return idx, empty2, np.zeros((0, 3)), np.zeros(0), np.zeros(0)

    cam = cam[idx]
    z = z[idx]
    cov = covariances[idx]

    mean2d = np.stack(
        [camera.fx * cam[:, 0] / z + camera.cx, camera.fy * cam[:, 1] / z + camera.cy], axis=1
    )

    # perspective Jacobian at the (frustum-clamped) camera-space mean
    tx = np.clip(cam[:, 0] / z, -limx, limx) * z
    ty = np.clip(cam[:, 1] / z, -limy, limy) * z
    J = np.zeros((idx.size, 2, 3))
    J[:, 0, 0] = camera.fx / z
    J[:, 0, 2] = -camera.fx * tx / (z * z)
    J[:, 1, 1] = camera.fy / z
    J[:, 1, 2] = -camera.fy * ty / (z * z)

    W = camera.world_to_camera.rotation
    T = J @ W
    cov2d = np.einsum("nij,njk,nlk->nil", T, cov, T)
    cov2d[:, 0, 0] += options.lowpass
    cov2d[:, 1, 1] += options.lowpass

    a = cov2d[:, 0, 0]
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1]
    det = a * c - b * b
    conic = np.stack([c / det, -b / det, a / det], axis=1)

    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radii = np.ceil(options.radius_factor * np.sqrt(lam_max))
    return idx, mean2d, conic, z, radii


def project_gaussian(
    position: np.ndarray,
    covariance: np.ndarray,
    camera: CameraRig,
    options: RenderOptions = RenderOptions(),
) -> Splat2D | None:
    """Project one Gaussian; returns None when culled by the frustum test."""
    pos = np.asarray(position, dtype=np.float64).reshape(1, 3)
    cov = np.asarray(covariance, dtype=np.float64).reshape(1, 3, 3)
    idx, mean2d, conic, depth, radii = _project(pos, cov, camera, options)
    if idx.size == 0:
        return None
    a, b, c = conic[0]
    det_inv = a * c - b * b
    cov2d = np.array([[c, -b], [-b, a]]) / det_inv
    return Splat2D(mean=mean2d[0], cov2d=cov2d, depth=float(depth[0]), radius=float(radii[0]))


def _splat_colors(
    splats: SplatArrays, camera: CameraRig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-Gaussian RGB from SH at the direction camera center -> mean."""
    n = splats.count
    if n == 0:
        z = np.zeros((0, 3))
        return z, np.zeros((0, SH_COEFFS)), np.zeros((0, 3), dtype=bool)
    d = splats.positions - camera.center()[None, :]
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    norm[norm == 0.0] = 1.0
    basis = sh_basis(d / norm)
    raw = np.einsum("nk,nkc->nc", basis, splats.sh) + 0.5
    active = raw > 0.0
    return np.maximum(raw, 0.0), basis, active


def _sort_order(group: np.ndarray, depth: np.ndarray, src: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary
    return np.lexsort((src, depth, group))


def _finalize(out_color, out_alpha, out_depthsum, out_count) -> RenderOutput:
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = np.where(out_alpha > 0.0, out_depthsum / out_alpha, np.inf)
    return RenderOutput(
        color=out_color, alpha=out_alpha, depth=depth, contributors=out_count.astype(np.int32)
    )


def render(
    splats: SplatArrays,
    camera: CameraRig,
    options: RenderOptions = RenderOptions(),
    retain: bool = False,
) -> RenderOutput | tuple[RenderOutput, ForwardState]:
    """Tile-based forward render; set ``retain`` to keep the state needed
    by :func:`render_backward`."""
    h, w = camera.height, camera.width
    colors_full, basis, active = _splat_colors(splats, camera)
    cov = (
        _covariances(splats.rotations, splats.scales)
        if splats.count
        else np.zeros((0, 3, 3))
    )
    idx, mean2d, conic, depth, radii = _project(splats.positions, cov, camera, options)

    order = _sort_order(splats.group[idx], depth, idx)
    src = idx[order]
    means2d = np.ascontiguousarray(mean2d[order])
    conics = np.ascontiguousarray(conic[order])
    depths = np.ascontiguousarray(depth[order])
    radius = np.ascontiguousarray(radii[order])
    sigmas = np.ascontiguousarray(splats.opacities[src])
    colors = np.ascontiguousarray(colors_full[src])
    group = np.ascontiguousarray(splats.group[src])

    offsets, items = _kernels.build_tile_lists(means2d, radius, w, h, options.tile_size)

    out_color = np.zeros((h, w, 3))
    out_alpha = np.zeros((h, w))
    out_depthsum = np.zeros((h, w))
    out_trans = np.ones((h, w))
    out_last = np.zeros((h, w), dtype=np.int64)
    out_count = np.zeros((h, w), dtype=np.int64)
    bg = np.asarray(options.background, dtype=np.float64)

    _kernels.forward_tiled(
        means2d,
        conics,
        sigmas,
        colors,
        depths,
        radius,
        offsets,
        items,
        w,
        h,
        options.tile_size,
        options.alpha_max,
        options.alpha_cull,
        options.t_stop,
        bg,
        out_color,
        out_alpha,
        out_depthsum,
        out_trans,
        out_last,
        out_count,
    )
    output = _finalize(out_color, out_alpha, out_depthsum, out_count)
    if not retain:
        return output
    state = ForwardState(
        camera=camera,
        options=options,
        n_gaussians=splats.count,
        src=src,
        means2d=means2d,
        conics=conics,
        sigmas=sigmas,
        colors=colors,
        depths=depths,
        radius=radius,
        group=group,
        tile_offsets=offsets,
        tile_items=items,
        trans_final=out_trans,
        last_contributor=out_last,
        basis=basis,
        color_active=active,
    )
    return output, state


def render_reference(
    splats: SplatArrays,
    camera: CameraRig,
    options: RenderOptions = RenderOptions(),
) -> RenderOutput:
    """Brute-force oracle: per-pixel blend over the globally sorted splat
    list with no tiling and no support-square culling. Intended for small
    scenes; shares every constant with :func:`render`."""
    h, w = camera.height, camera.width
    colors_full, _, _ = _splat_colors(splats, camera)
    cov = (
        _covariances(splats.rotations, splats.scales)
        if splats.count
        else np.zeros((0, 3, 3))
    )
    idx, mean2d, conic, depth, radii = _project(splats.positions, cov, camera, options)
    order = _sort_order(splats.group[idx], depth, idx)
    src = idx[order]

    out_color = np.zeros((h, w, 3))
    out_alpha = np.zeros((h, w))
    out_depthsum = np.zeros((h, w))
    out_trans = np.ones((h, w))
    out_count = np.zeros((h, w), dtype=np.int64)
    _kernels.forward_reference(
        np.ascontiguousarray(mean2d[order]),
        np.ascontiguousarray(conic[order]),
        np.ascontiguousarray(splats.opacities[src]),
        np.ascontiguousarray(colors_full[src]),
        np.ascontiguousarray(depth[order]),
        w,
        h,
        options.alpha_max,
        options.alpha_cull,
        options.t_stop,
        np.asarray(options.background, dtype=np.float64),
        out_color,
        out_alpha,
        out_depthsum,
        out_trans,
        out_count,
    )
    return _finalize(out_color, out_alpha, out_depthsum, out_count)


def render_backward(
    state: ForwardState, dl_dcolor_image: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a scalar loss w.r.t. SH DC, SH rest and opacity logits.

    ``dl_dcolor_image`` is (H, W, 3), the loss gradient of the rendered
    color image. Returns (dl_dsh_dc (N, 3), dl_dsh_rest (N, 15, 3),
    dl_dopacity_logit (N,)) indexed like the rendered Gaussians; entries
    that were culled or never contributed are zero.
    """
    h, w = state.camera.height, state.camera.width
    dl = np.asarray(dl_dcolor_image, dtype=np.float64)
    if dl.shape != (h, w, 3):
        raise InvalidInputError(
            f"gradient image shape {dl.shape} does not match render size {(h, w, 3)}"
        )
    n_pairs = state.tile_items.shape[0]
    pair_dcolor = np.zeros((n_pairs, 3))
    pair_dsigma = np.zeros(n_pairs)
    _kernels.backward_tiled(
        state.means2d,
        state.conics,
        state.sigmas,
        state.colors,
        state.radius,
        state.tile_offsets,
        state.tile_items,
        w,
        h,
        state.options.tile_size,
        state.options.alpha_max,
        state.options.alpha_cull,
        np.asarray(state.options.background, dtype=np.float64),
        state.trans_final,
        state.last_contributor,
        np.ascontiguousarray(dl),
        pair_dcolor,
        pair_dsigma,
    )
    dcolor_sorted, dsigma_sorted = _kernels.reduce_pairs(
        state.tile_items, pair_dcolor, pair_dsigma, state.src.shape[0]
    )

    n = state.n_gaussians
    dcolor = np.zeros((n, 3))
    dsigma = np.zeros(n)
    dcolor[state.src] = dcolor_sorted
    dsigma[state.src] = dsigma_sorted

    # through the color decode: c = max(0, basis . sh + 0.5)
    dcolor *= state.color_active
    dsh = np.einsum("nc,nk->nkc", dcolor, state.basis)
    # through the opacity decode: sigma = logistic(logit)
    sig_full = np.zeros(n)
    sig_full[state.src] = state.sigmas
    dlogit = dsigma * sig_full * (1.0 - sig_full)
    return dsh[:, 0, :], dsh[:, 1:, :], dlogit
