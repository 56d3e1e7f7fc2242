"""Gaussian cloud storage: columnar arrays plus group/person labels.

Scales are stored as logs and opacities as logits, so the decoded values
are positive / in (0, 1) by construction. Rendering and animation treat
a cloud as an immutable snapshot: mutate via ``copy()`` + assignment in
a single writer, never in-place under a concurrent reader.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ParseError
from .quaternion import quat_multiply, rotation_to_quat
from .rigid import RigidTransform
from .sh import SH_COEFFS

GROUP_HEAD = 0
GROUP_BACKGROUND = 1
_GROUP_NAMES = {GROUP_HEAD: "head", GROUP_BACKGROUND: "background"}
_GROUP_IDS = {v: k for k, v in _GROUP_NAMES.items()}


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


@dataclass
class GaussianCloud:
    positions: np.ndarray  # (N, 3) meters
    rotations: np.ndarray  # (N, 4) quaternions, wxyz
    log_scales: np.ndarray  # (N, 3)
    opacity_logits: np.ndarray  # (N,)
    sh: np.ndarray  # (N, 16, 3) band-major coefficients
    group: np.ndarray = None  # (N,) uint8, 0=head 1=background
    person_flag: np.ndarray = None  # (N,) bool

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = self.positions.shape[0]
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.opacity_logits = np.asarray(self.opacity_logits, dtype=np.float64).reshape(n)
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(n, SH_COEFFS, 3)
        if self.group is None:
            self.group = np.full(n, GROUP_BACKGROUND, dtype=np.uint8)
        self.group = np.asarray(self.group, dtype=np.uint8).reshape(n)
        if self.person_flag is None:
            self.person_flag = np.zeros(n, dtype=bool)
        self.person_flag = np.asarray(self.person_flag, dtype=bool).reshape(n)
        if not np.all(np.isfinite(self.log_scales)):
            raise InvalidInputError("log_scales contain non-finite values")

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            self.positions.copy(),
            self.rotations.copy(),
            self.log_scales.copy(),
            self.opacity_logits.copy(),
            self.sh.copy(),
            self.group.copy(),
            self.person_flag.copy(),
        )

    def select(self, index) -> "GaussianCloud":
        """New cloud with the rows selected by a boolean mask or index array."""
        return GaussianCloud(
            self.positions[index],
            self.rotations[index],
            self.log_scales[index],
            self.opacity_logits[index],
            self.sh[index],
            self.group[index],
            self.person_flag[index],
        )

    @classmethod
    def concatenate(cls, parts: list["GaussianCloud"]) -> "GaussianCloud":
        return cls(
            np.concatenate([p.positions for p in parts]),
            np.concatenate([p.rotations for p in parts]),
            np.concatenate([p.log_scales for p in parts]),
            np.concatenate([p.opacity_logits for p in parts]),
            np.concatenate([p.sh for p in parts]),
            np.concatenate([p.group for p in parts]),
            np.concatenate([p.person_flag for p in parts]),
        )

    @classmethod
    def empty(cls) -> "GaussianCloud":
        return cls(
            np.zeros((0, 3)),
            np.zeros((0, 4)),
            np.zeros((0, 3)),
            np.zeros(0),
            np.zeros((0, SH_COEFFS, 3)),
            np.zeros(0, dtype=np.uint8),
            np.zeros(0, dtype=bool),
        )


def transform_cloud(cloud: GaussianCloud, transform: RigidTransform) -> GaussianCloud:
    """Rigidly move a cloud: positions mapped, orientations left-composed.

    Scales are untouched (a rigid map preserves covariance eigenvalues).
    """
    out = cloud.copy()
    out.positions = transform.apply(cloud.positions)
    if cloud.count:
        q_t = rotation_to_quat(transform.rotation)
        out.rotations = quat_multiply(q_t[None, :], cloud.rotations)
    return out


def merge_scenes(
    head: GaussianCloud,
    background: GaussianCloud,
    head_transform: RigidTransform | None = None,
) -> GaussianCloud:
    """Compose a head cloud into a background scene.

    The head block is transformed by ``head_transform`` (identity when
    None) and placed first so its ordering is stable; groups and every
    non-positional attribute are preserved exactly.
    """
    moved = head if head_transform is None else transform_cloud(head, head_transform)
    return GaussianCloud.concatenate([moved, background])


def save_labels(path, cloud: GaussianCloud) -> None:
    """Sidecar label file: one ``index group person`` line per point."""
    with open(path, "w") as fh:
        fh.write("# headsplat labels v1\n")
        fh.write("# index group person\n")
        for i in range(cloud.count):
            fh.write(f"{i} {_GROUP_NAMES[int(cloud.group[i])]} {int(cloud.person_flag[i])}\n")


def load_labels(path, cloud: GaussianCloud) -> None:
    """Apply a sidecar label file onto ``cloud`` in place."""
    group = cloud.group.copy()
    person = cloud.person_flag.copy()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 'index group person'")
            idx = int(parts[0])
            if not (0 <= idx < cloud.count):
                raise ParseError(f"{path}:{lineno}: point index {idx} out of range")
            if parts[1] not in _GROUP_IDS:
                raise ParseError(f"{path}:{lineno}: unknown group {parts[1]!r}")
            group[idx] = _GROUP_IDS[parts[1]]
            person[idx] = parts[2] not in ("0", "false", "False")
    cloud.group = group
    cloud.person_flag = person
