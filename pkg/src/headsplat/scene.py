"""Scene bundles: one JSON file tying together the assets of a composed
scene (head model + bound cloud + optional background + alignment), with
helpers to drive and render it.

Bundle keys (paths are relative to the bundle file):

    head_asset        head model container (required)
    head_cloud        splat file of the bound head Gaussians (required)
    binding           triangle binding container (required)
    background_cloud  splat file of the background (optional)
    alignment         4x4 head-to-background transform file (optional)
    camera            default render camera, cameras.json style (required)
    params            initial head parameters JSON (optional)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .alignment import load_transform_file
from .binding import TriangleBinding, apply_drive, load_binding
from .camera import CameraRig, camera_from_dict, load_cameras
from .cloud import GaussianCloud, merge_scenes
from .errors import ParseError
from .headmodel import (
    HeadModel,
    HeadParams,
    head_params_from_dict,
    load_head_asset,
    pose_mesh,
)
from .rasterizer import RenderOptions, RenderOutput, SplatArrays, render
from .rigid import RigidTransform
from .splatio import load_splat_file


@dataclass
class ComposedScene:
    model: HeadModel
    head_cloud: GaussianCloud
    binding: TriangleBinding
    background: GaussianCloud
    head_transform: RigidTransform
    camera: CameraRig
    params: HeadParams

    def driven_cloud(self, params: HeadParams | None = None) -> GaussianCloud:
        """Head driven by ``params`` (default: bundle params), aligned and
        merged with the background."""
        params = params or self.params
        mesh = pose_mesh(self.model, params)
        head = apply_drive(self.head_cloud, self.binding, mesh)
        return merge_scenes(head, self.background, self.head_transform)

    def render(
        self,
        params: HeadParams | None = None,
        camera: CameraRig | None = None,
        options: RenderOptions = RenderOptions(),
        retain: bool = False,
    ) -> RenderOutput:
        cloud = self.driven_cloud(params)
        return render(SplatArrays.from_cloud(cloud), camera or self.camera, options, retain=retain)


def load_camera_file(path) -> CameraRig:
    """Single camera from a cameras.json (first view) or bare camera dict."""
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict) and "views" in data:
        cams = load_cameras(path)
        if not cams:
            raise ParseError(f"{path}: empty views list")
        return cams[0]
    return camera_from_dict(data)


def load_scene_bundle(path) -> ComposedScene:
    bundle_path = Path(path)
    with open(bundle_path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    root = bundle_path.parent

    def resolve(key, required=True):
        if key not in spec:
            if required:
                raise ParseError(f"{path}: missing bundle key {key!r}")
            return None
        return root / spec[key]

    model = load_head_asset(resolve("head_asset"))
    head_cloud = load_splat_file(resolve("head_cloud"), group="head")
    binding = load_binding(resolve("binding"))
    camera = load_camera_file(resolve("camera"))

    bg_path = resolve("background_cloud", required=False)
    background = load_splat_file(bg_path) if bg_path else GaussianCloud.empty()

    tc_path = resolve("alignment", required=False)
    head_transform = load_transform_file(tc_path) if tc_path else RigidTransform.identity()

    params_path = resolve("params", required=False)
    if params_path:
        with open(params_path) as fh:
            params = head_params_from_dict(json.load(fh), model=model)
    else:
        params = HeadParams.neutral(model)

    return ComposedScene(
        model=model,
        head_cloud=head_cloud,
        binding=binding,
        background=background,
        head_transform=head_transform,
        camera=camera,
        params=params,
    )


def save_scene_bundle(path, entries: dict) -> None:
    """Write a bundle JSON; ``entries`` maps bundle keys to relative paths."""
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2)


def orbit_camera(
    target: np.ndarray,
    azimuth: float,
    elevation: float,
    radius: float,
    width: int = 512,
    height: int = 512,
    focal: float | None = None,
    near: float = 0.01,
    far: float = 100.0,
) -> CameraRig:
    """Camera orbiting ``target``, looking at it.

    Angles in radians; azimuth 0 looks down -z toward the target from +z,
    increasing azimuth moves the eye toward +x; positive elevation raises
    the eye along -y (image up). This is the documented orbit-to-W2C
    formula mirrored by the browser panel.
    """
    target = np.asarray(target, dtype=np.float64).reshape(3)
    ce, se = np.cos(elevation), np.sin(elevation)
    ca, sa = np.cos(azimuth), np.sin(azimuth)
    eye = target + radius * np.array([ce * sa, -se, ce * ca])

    forward = target - eye
    forward /= np.linalg.norm(forward)
    world_up = np.array([0.0, -1.0, 0.0])  # y points down in camera space
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward], axis=0)  # world -> camera rows
    t = -R @ eye
    if focal is None:
        focal = 1.2 * max(width, height)
    return CameraRig(
        width=width,
        height=height,
        fx=focal,
        fy=focal,
        cx=width / 2.0,
        cy=height / 2.0,
        world_to_camera=RigidTransform(R, t),
        near=near,
        far=far,
    )
