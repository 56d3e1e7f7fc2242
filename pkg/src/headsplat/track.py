"""Animation tracks: timestamped head-parameter (and optional camera)
frames for offline playback and the live service's play_track command.

JSON layout: {"frames": [{"t": seconds, "params": {...}, "camera": {...}?}]}
with strictly increasing timestamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .camera import CameraRig, camera_from_dict, camera_to_dict
from .errors import InvalidInputError, ParseError
from .headmodel import HeadModel, HeadParams, head_params_from_dict, head_params_to_dict


@dataclass
class TrackFrame:
    timestamp: float
    params: HeadParams
    camera: CameraRig | None = None


@dataclass
class AnimationTrack:
    frames: list[TrackFrame]

    def __post_init__(self):
        if not self.frames:
            raise InvalidInputError("animation track has no frames")
        times = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidInputError("track timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)


def save_track(path, track: AnimationTrack) -> None:
    frames = []
    for f in track.frames:
        entry = {"t": f.timestamp, "params": head_params_to_dict(f.params)}
        if f.camera is not None:
            entry["camera"] = camera_to_dict(f.camera)
        frames.append(entry)
    with open(path, "w") as fh:
        json.dump({"frames": frames}, fh, indent=2)


def load_track(path, model: HeadModel | None = None) -> AnimationTrack:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if "frames" not in data:
        raise ParseError(f"{path}: missing 'frames' list")
    frames = []
    for k, entry in enumerate(data["frames"]):
        if "t" not in entry or "params" not in entry:
            raise ParseError(f"{path}: frame {k} missing 't' or 'params'")
        camera = camera_from_dict(entry["camera"]) if "camera" in entry else None
        frames.append(
            TrackFrame(
                timestamp=float(entry["t"]),
                params=head_params_from_dict(entry["params"], model=model),
                camera=camera,
            )
        )
    return AnimationTrack(frames)
