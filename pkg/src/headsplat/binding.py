"""Triangle binding: ride Gaussians on a deforming mesh.

Each Gaussian stores a host triangle plus (position, rotation, log-scale)
in that triangle's orientation frame. Driving with a posed mesh maps the
locals through the frame: rotation composes frame-then-local, position is
k * R_frame * local + barycenter, world scale is k * local scale with k a
single global scale factor per binding (default 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assetio import load_blob, save_blob
from .cloud import GROUP_HEAD, GaussianCloud, logit
from .errors import InvalidInputError, InvariantError
from .headmodel import PosedMesh
from .quaternion import quat_multiply, rotation_to_quat
from .sh import SH_COEFFS


@dataclass
class TriangleBinding:
    triangle_index: np.ndarray  # (N,) int64
    local_positions: np.ndarray  # (N, 3), triangle frame
    local_rotations: np.ndarray  # (N, 4), wxyz
    local_log_scales: np.ndarray  # (N, 3)
    global_scale: float = 1.0  # k
    num_triangles: int = 0  # topology the binding was built against

    def __post_init__(self):
        self.triangle_index = np.asarray(self.triangle_index, dtype=np.int64).reshape(-1)
        n = self.triangle_index.shape[0]
        self.local_positions = np.asarray(self.local_positions, dtype=np.float64).reshape(n, 3)
        self.local_rotations = np.asarray(self.local_rotations, dtype=np.float64).reshape(n, 4)
        self.local_log_scales = np.asarray(self.local_log_scales, dtype=np.float64).reshape(n, 3)
        if self.global_scale <= 0:
            raise InvalidInputError("global scale factor k must be positive")

    @property
    def count(self) -> int:
        return self.triangle_index.shape[0]


def bind_to_mesh(
    mesh: PosedMesh,
    gaussians_per_triangle: int = 1,
    global_scale: float = 1.0,
    opacity: float = 0.1,
) -> tuple[GaussianCloud, TriangleBinding, int]:
    """Seed head Gaussians on a mesh, one group per triangle barycenter.

    Local scale is isotropic, log(0.5 * mean edge length) of the host
    triangle; zero-area triangles get an epsilon scale and are counted in
    the returned warning count.
    """
    if gaussians_per_triangle < 1:
        raise InvalidInputError("gaussians_per_triangle must be >= 1")
    F = mesh.faces.shape[0]
    tri = np.repeat(np.arange(F, dtype=np.int64), gaussians_per_triangle)
    n = tri.shape[0]

    v = mesh.vertices
    f = mesh.faces
    e01 = np.linalg.norm(v[f[:, 1]] - v[f[:, 0]], axis=1)
    e12 = np.linalg.norm(v[f[:, 2]] - v[f[:, 1]], axis=1)
    e20 = np.linalg.norm(v[f[:, 0]] - v[f[:, 2]], axis=1)
    mean_edge = (e01 + e12 + e20) / 3.0
    area = 0.5 * np.linalg.norm(
        np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1
    )
    degenerate = area < 1e-14
    warnings = int(np.count_nonzero(degenerate))
    size = np.where(degenerate, 1e-8, 0.5 * mean_edge)

    local_rot = np.zeros((n, 4))
    local_rot[:, 0] = 1.0
    binding = TriangleBinding(
        triangle_index=tri,
        local_positions=np.zeros((n, 3)),
        local_rotations=local_rot,
        local_log_scales=np.repeat(np.log(size[tri])[:, None], 3, axis=1),
        global_scale=global_scale,
        num_triangles=F,
    )

    mu, q, s = drive(binding, mesh)
    cloud = GaussianCloud(
        positions=mu,
        rotations=q,
        log_scales=np.log(s),
        opacity_logits=np.full(n, float(logit(np.asarray(opacity)))),
        sh=np.zeros((n, SH_COEFFS, 3)),
        group=np.full(n, GROUP_HEAD, dtype=np.uint8),
    )
    return cloud, binding, warnings


def drive(
    binding: TriangleBinding, mesh: PosedMesh
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World-space (positions, rotation quaternions, linear scales) for a
    binding carried by ``mesh``."""
    if binding.num_triangles != mesh.faces.shape[0]:
        raise InvalidInputError(
            f"binding was built for {binding.num_triangles} triangles,"
            f" mesh has {mesh.faces.shape[0]}"
        )
    frames = mesh.face_frames[binding.triangle_index]
    centers = mesh.face_barycenters[binding.triangle_index]
    k = binding.global_scale

    positions = k * np.einsum("nij,nj->ni", frames, binding.local_positions) + centers
    frame_q = rotation_to_quat(frames)
    rotations = quat_multiply(frame_q, binding.local_rotations)
    scales = k * np.exp(binding.local_log_scales)
    return positions, rotations, scales


def apply_drive(cloud: GaussianCloud, binding: TriangleBinding, mesh: PosedMesh) -> GaussianCloud:
    """Copy of ``cloud`` with its geometry re-driven by ``mesh``."""
    if cloud.count != binding.count:
        raise InvalidInputError("cloud and binding sizes differ")
    mu, q, s = drive(binding, mesh)
    out = cloud.copy()
    out.positions = mu
    out.rotations = q
    out.log_scales = np.log(s)
    return out


def save_binding(path, binding: TriangleBinding) -> None:
    save_blob(
        path,
        {
            "triangle_index": binding.triangle_index.astype(np.uint32),
            "local_positions": binding.local_positions.astype(np.float32),
            "local_rotations": binding.local_rotations.astype(np.float32),
            "local_log_scales": binding.local_log_scales.astype(np.float32),
            "global_scale": np.asarray([binding.global_scale], dtype=np.float32),
            "num_triangles": np.asarray([binding.num_triangles], dtype=np.uint32),
        },
    )


def load_binding(path) -> TriangleBinding:
    fields = load_blob(path)
    needed = (
        "triangle_index",
        "local_positions",
        "local_rotations",
        "local_log_scales",
        "global_scale",
        "num_triangles",
    )
    missing = [f for f in needed if f not in fields]
    if missing:
        raise InvariantError(f"binding file missing fields: {', '.join(missing)}")
    return TriangleBinding(
        triangle_index=fields["triangle_index"].astype(np.int64),
        local_positions=fields["local_positions"],
        local_rotations=fields["local_rotations"],
        local_log_scales=fields["local_log_scales"],
        global_scale=float(fields["global_scale"].reshape(-1)[0]),
        num_triangles=int(fields["num_triangles"].reshape(-1)[0]),
    )
