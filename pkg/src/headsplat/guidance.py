"""Guidance sets: per-view swapped imagery driving appearance transfer.

Directory layout:

    images/<id>.png    RGB guidance image
    masks/<id>.png     facial mask, nonzero = inside
    cameras.json       {"views": [{camera fields..., "id", "provenance"}]}
    params/<id>.json   head parameters for the view

Guidance images are assumed pre-refined offline; the per-record
``provenance`` tag (raw|refined) is bookkeeping only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraRig, camera_from_dict, camera_to_dict
from .errors import InvalidInputError, ParseError
from .headmodel import HeadModel, HeadParams, head_params_from_dict, head_params_to_dict
from .rasters import load_mask_png, load_png, save_png


@dataclass
class GuidanceRecord:
    view_id: str
    image: np.ndarray  # (H, W, 3) float in [0, 1]
    mask: np.ndarray  # (H, W) float in {0, 1}
    camera: CameraRig
    params: HeadParams
    provenance: str = "raw"

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        h, w = self.camera.height, self.camera.width
        if self.image.shape != (h, w, 3):
            raise InvalidInputError(
                f"view {self.view_id}: image shape {self.image.shape} != camera size {(h, w, 3)}"
            )
        if self.mask.shape != (h, w):
            raise InvalidInputError(
                f"view {self.view_id}: mask shape {self.mask.shape} != camera size {(h, w)}"
            )
        if self.provenance not in ("raw", "refined"):
            raise InvalidInputError(f"view {self.view_id}: unknown provenance {self.provenance!r}")


@dataclass
class GuidanceSet:
    records: list[GuidanceRecord] = field(default_factory=list)

    def __post_init__(self):
        if not self.records:
            raise InvalidInputError("guidance set needs at least one record")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def save_guidance_dir(path, records: list[GuidanceRecord]) -> None:
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(exist_ok=True)
    (root / "params").mkdir(exist_ok=True)
    views = []
    for rec in records:
        entry = camera_to_dict(rec.camera)
        entry["id"] = rec.view_id
        entry["provenance"] = rec.provenance
        views.append(entry)
        save_png(root / "images" / f"{rec.view_id}.png", rec.image)
        save_png(root / "masks" / f"{rec.view_id}.png", rec.mask)
        with open(root / "params" / f"{rec.view_id}.json", "w") as fh:
            json.dump(head_params_to_dict(rec.params), fh, indent=2)
    with open(root / "cameras.json", "w") as fh:
        json.dump({"views": views}, fh, indent=2)


def load_guidance_dir(path, model: HeadModel | None = None) -> GuidanceSet:
    root = Path(path)
    cams_path = root / "cameras.json"
    if not cams_path.exists():
        raise ParseError(f"{root}: missing cameras.json")
    with open(cams_path) as fh:
        payload = json.load(fh)
    if "views" not in payload:
        raise ParseError(f"{cams_path}: missing 'views' list")
    records = []
    for entry in payload["views"]:
        view_id = str(entry.get("id", len(records)))
        camera = camera_from_dict(entry)
        image_path = root / "images" / f"{view_id}.png"
        mask_path = root / "masks" / f"{view_id}.png"
        params_path = root / "params" / f"{view_id}.json"
        for p in (image_path, mask_path, params_path):
            if not p.exists():
                raise ParseError(f"view {view_id}: missing file {p}")
        image = load_png(image_path)
        if image.ndim == 2:
            image = np.repeat(image[:, :, None], 3, axis=2)
        image = image[:, :, :3]
        with open(params_path) as fh:
            params = head_params_from_dict(json.load(fh), model=model)
        records.append(
            GuidanceRecord(
                view_id=view_id,
                image=image,
                mask=load_mask_png(mask_path),
                camera=camera,
                params=params,
                provenance=str(entry.get("provenance", "raw")),
            )
        )
    return GuidanceSet(records)
