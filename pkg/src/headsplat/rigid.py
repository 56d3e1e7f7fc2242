"""Rigid transforms: 3x3 rotation + translation, acting as x -> R x + t.

All world units are meters. Construction validates orthonormality and
det +1 within 1e-6; pass ``validate=False`` only for transforms already
known to be rigid (e.g. products of validated ones).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if self.validate:
            err = np.max(np.abs(R.T @ R - np.eye(3)))
            if err > _ORTHO_TOL:
                raise InvalidInputError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3g})")
            if np.linalg.det(R) < 0.0:
                raise InvalidInputError("rotation has determinant -1 (reflection)")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), validate=False)

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "RigidTransform":
        """Build from a 4x4 (or 3x4) row-major homogeneous matrix."""
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape not in ((4, 4), (3, 4)):
            raise InvalidInputError(f"expected 4x4 or 3x4 matrix, got {mat.shape}")
        return cls(mat[:3, :3], mat[:3, 3])

    def as_matrix(self) -> np.ndarray:
        """Return the 4x4 row-major homogeneous matrix."""
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to a 3-vector or an (N, 3) array of points."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self o other (other applied first)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            validate=False,
        )

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation, validate=False)


def rigid_apply(transform: RigidTransform, x: np.ndarray) -> np.ndarray:
    return transform.apply(x)


def rigid_compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def rigid_inverse(a: RigidTransform) -> RigidTransform:
    return a.inverse()
