"""Pinhole camera rig: intrinsics in pixels + world-to-camera rigid transform.

Axis convention is OpenCV style: x right, y down, z forward. A world
point X projects to pixel coordinates u = fx*Xc/Zc + cx, v = fy*Yc/Zc + cy
with (Xc, Yc, Zc) = world_to_camera(X). Pixel (row i, col j) has its
center at (u, v) = (j + 0.5, i + 0.5).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError, ParseError
from .rigid import RigidTransform


@dataclass(frozen=True)
class CameraRig:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: RigidTransform
    near: float = 0.01
    far: float = 100.0
    view_id: str = field(default="", compare=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")
        if not (0.0 < self.near < self.far):
            raise InvalidInputError("require 0 < near < far")
        # principal point may drift off-center, but only within a 4x margin
        if abs(self.cx - 0.5 * self.width) > 2.0 * self.width or abs(
            self.cy - 0.5 * self.height
        ) > 2.0 * self.height:
            raise InvalidInputError("principal point outside the 4x image margin")

    @property
    def tan_half_fov_x(self) -> float:
        return 0.5 * self.width / self.fx

    @property
    def tan_half_fov_y(self) -> float:
        return 0.5 * self.height / self.fy

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        w2c = self.world_to_camera
        return -w2c.rotation.T @ w2c.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points to (pixel uv (N, 2), camera-space depth (N,))."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cam = self.world_to_camera.apply(pts)
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * cam[:, 0] / z + self.cx
            v = self.fy * cam[:, 1] / z + self.cy
        return np.stack([u, v], axis=-1), z

    def with_image_size(self, width: int, height: int) -> "CameraRig":
        """Rescale intrinsics to a new image size, keeping the field of view."""
        sx, sy = width / self.width, height / self.height
        return replace(
            self,
            width=width,
            height=height,
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=self.cx * sx,
            cy=self.cy * sy,
        )


def camera_to_dict(cam: CameraRig) -> dict:
    return {
        "id": cam.view_id,
        "width": cam.width,
        "height": cam.height,
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "near": cam.near,
        "far": cam.far,
        "world_to_camera": cam.world_to_camera.as_matrix().tolist(),
    }


def camera_from_dict(entry: dict) -> CameraRig:
    try:
        w2c = RigidTransform.from_matrix(np.asarray(entry["world_to_camera"], dtype=np.float64))
        return CameraRig(
            width=int(entry["width"]),
            height=int(entry["height"]),
            fx=float(entry["fx"]),
            fy=float(entry["fy"]),
            cx=float(entry["cx"]),
            cy=float(entry["cy"]),
            world_to_camera=w2c,
            near=float(entry.get("near", 0.01)),
            far=float(entry.get("far", 100.0)),
            view_id=str(entry.get("id", "")),
        )
    except KeyError as exc:
        raise ParseError(f"camera entry missing field {exc}") from exc


def save_cameras(path, cameras: list[CameraRig]) -> None:
    """Write a cameras.json file (list of per-view intrinsics + 4x4 W2C)."""
    payload = {"views": [camera_to_dict(c) for c in cameras]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_cameras(path) -> list[CameraRig]:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"cameras file is not valid JSON: {exc}") from exc
    if "views" not in payload:
        raise ParseError("cameras file missing 'views' list")
    return [camera_from_dict(v) for v in payload["views"]]
