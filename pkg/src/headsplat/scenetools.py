"""Person labeling by multi-view mask voting, and flagged-point removal.

Each Gaussian's center is reprojected into every view. A view qualifies
for the vote when the center is inside the frustum and visible there
(its depth within a tolerance of the rendered expected-depth image). The
person flag is set when the fraction of qualifying views whose (dilated)
mask contains the projection reaches the inlier threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from .camera import CameraRig
from .cloud import GaussianCloud
from .errors import InvalidInputError
from .rasterizer import RenderOptions, SplatArrays, render


@dataclass(frozen=True)
class MaskVoteConfig:
    inlier_threshold: float = 0.6  # fraction of qualifying views, tau
    min_views: int = 1
    depth_tolerance: float = 0.05  # meters, visibility slack
    dilation_radius: int = 3  # pixels, square structuring element

    def __post_init__(self):
        if not (0.0 < self.inlier_threshold <= 1.0):
            raise InvalidInputError("inlier threshold must be in (0, 1]")
        if self.depth_tolerance <= 0.0:
            raise InvalidInputError("depth tolerance must be positive")
        if self.min_views < 1:
            raise InvalidInputError("min_views must be >= 1")


def dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation with a (2r+1)-square structuring element."""
    mask = np.asarray(mask) != 0
    if radius <= 0:
        return mask
    return binary_dilation(mask, structure=np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool))


def _project_votes(
    cloud: GaussianCloud,
    mask: np.ndarray,
    camera: CameraRig,
    config: MaskVoteConfig,
    options: RenderOptions,
) -> tuple[np.ndarray, np.ndarray]:
    """(qualifies, in_mask) boolean vectors for one view."""
    if mask.shape != (camera.height, camera.width):
        raise InvalidInputError(
            f"mask shape {mask.shape} does not match camera image"
            f" size {(camera.height, camera.width)}"
        )
    uv, z = camera.project(cloud.positions)
    cols = np.floor(uv[:, 0]).astype(np.int64)
    rows = np.floor(uv[:, 1]).astype(np.int64)
    in_frustum = (
        (z > camera.near)
        & (z < camera.far)
        & (cols >= 0)
        & (cols < camera.width)
        & (rows >= 0)
        & (rows < camera.height)
    )

    depth_img = render(SplatArrays.from_cloud(cloud), camera, options).depth
    rows_c = np.clip(rows, 0, camera.height - 1)
    cols_c = np.clip(cols, 0, camera.width - 1)
    visible = in_frustum & (z <= depth_img[rows_c, cols_c] + config.depth_tolerance)

    dilated = dilate_mask(mask, config.dilation_radius)
    in_mask = visible & dilated[rows_c, cols_c]
    return visible, in_mask


def label_person_gaussians(
    cloud: GaussianCloud,
    masks: list[np.ndarray],
    cameras: list[CameraRig],
    config: MaskVoteConfig = MaskVoteConfig(),
    options: RenderOptions = RenderOptions(),
) -> np.ndarray:
    """Boolean person flag per Gaussian from multi-view mask voting."""
    if len(masks) != len(cameras):
        raise InvalidInputError("need one mask per camera")
    if len(masks) < config.min_views:
        raise InvalidInputError(
            f"need at least {config.min_views} views, got {len(masks)}"
        )
    n = cloud.count
    qualifying = np.zeros(n, dtype=np.int64)
    hits = np.zeros(n, dtype=np.int64)
    for mask, camera in zip(masks, cameras):
        vis, in_mask = _project_votes(cloud, mask, camera, config, options)
        qualifying += vis
        hits += in_mask
    if n and not np.any(qualifying):
        raise InvalidInputError("no Gaussian is visible in any view; cannot vote")
    with np.errstate(divide="ignore", invalid="ignore"):
        fraction = np.where(qualifying > 0, hits / np.maximum(qualifying, 1), 0.0)
    return (fraction >= config.inlier_threshold) & (qualifying >= config.min_views)


def remove_flagged(cloud: GaussianCloud, flags: np.ndarray) -> GaussianCloud:
    """Drop flagged Gaussians; survivors keep attributes and relative order."""
    flags = np.asarray(flags, dtype=bool).reshape(-1)
    if flags.shape[0] != cloud.count:
        raise InvalidInputError(
            f"flags length {flags.shape[0]} does not match cloud size {cloud.count}"
        )
    return cloud.select(~flags)


def removal_report(
    cloud: GaussianCloud,
    flags: np.ndarray,
    cameras: list[CameraRig],
    options: RenderOptions = RenderOptions(),
    alpha_threshold: float = 0.5,
) -> list[tuple[str, float]]:
    """Per-view screen coverage of the removed region, for auditing the
    external inpainting step: fraction of pixels where the flagged subset
    alone renders alpha above ``alpha_threshold``."""
    flagged = cloud.select(np.asarray(flags, dtype=bool))
    rows = []
    for k, camera in enumerate(cameras):
        view_id = camera.view_id or str(k)
        if flagged.count == 0:
            rows.append((view_id, 0.0))
            continue
        out = render(SplatArrays.from_cloud(flagged), camera, options)
        rows.append((view_id, float(np.mean(out.alpha > alpha_threshold))))
    return rows


def save_removal_report(path, rows: list[tuple[str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["view_id", "removed_pixel_fraction"])
        for view_id, fraction in rows:
            writer.writerow([view_id, f"{fraction:.6f}"])
