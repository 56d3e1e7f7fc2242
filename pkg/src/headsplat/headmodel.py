"""Parametric head model: blendshape deformation, joint regression and
linear blend skinning, driven by (shape, expression, pose) vectors plus a
global rigid applied about the root joint.

Model dimensions (V, J, number of shape/expression components) are
data-driven from the asset file; real FLAME-shaped assets and the small
synthetic fixtures used in tests load through the same path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assetio import load_blob, save_blob
from .errors import InvalidInputError, InvariantError
from .quaternion import quat_to_rotation, quat_from_axis_angle

_ROW_SUM_TOL = 1e-5
_FRAME_TOL = 1e-5


@dataclass(frozen=True)
class HeadModel:
    template_vertices: np.ndarray  # (V, 3) float32, meters
    faces: np.ndarray  # (F, 3) uint32
    shape_basis: np.ndarray  # (V, 3, n_shape) float32
    pose_basis: np.ndarray  # (V, 3, 9*(J-1)) float32
    expression_basis: np.ndarray  # (V, 3, n_expr) float32
    joint_regressor: np.ndarray  # (J, V) float32, rows sum to 1
    skinning_weights: np.ndarray  # (V, J) float32, rows nonneg, sum to 1
    kinematic_parents: np.ndarray  # (J,) int32, root has parent -1
    root_joint_index: int

    @property
    def num_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def num_joints(self) -> int:
        return self.joint_regressor.shape[0]

    @property
    def num_shape(self) -> int:
        return self.shape_basis.shape[2]

    @property
    def num_expression(self) -> int:
        return self.expression_basis.shape[2]

    def validate(self) -> None:
        V, J = self.num_vertices, self.num_joints
        if self.faces.size and int(self.faces.max()) >= V:
            raise InvariantError("faces: vertex index out of range")
        for name, arr, want in (
            ("shape_basis", self.shape_basis, (V, 3)),
            ("pose_basis", self.pose_basis, (V, 3)),
            ("expression_basis", self.expression_basis, (V, 3)),
        ):
            if arr.shape[:2] != want:
                raise InvariantError(f"{name}: leading shape {arr.shape[:2]} != {want}")
        if self.pose_basis.shape[2] != 9 * (J - 1):
            raise InvariantError(
                f"pose_basis: last dim {self.pose_basis.shape[2]} != 9*(J-1) = {9 * (J - 1)}"
            )
        if self.joint_regressor.shape != (J, V):
            raise InvariantError("joint_regressor: shape mismatch")
        reg_sums = self.joint_regressor.astype(np.float64).sum(axis=1)
        if np.max(np.abs(reg_sums - 1.0)) > _ROW_SUM_TOL:
            raise InvariantError("joint_regressor: rows must sum to 1")
        if self.skinning_weights.shape != (V, J):
            raise InvariantError("skinning_weights: shape mismatch")
        if np.min(self.skinning_weights) < 0.0:
            raise InvariantError("skinning_weights: negative weight")
        skin_sums = self.skinning_weights.astype(np.float64).sum(axis=1)
        if np.max(np.abs(skin_sums - 1.0)) > _ROW_SUM_TOL:
            raise InvariantError("skinning_weights: rows must sum to 1")
        if self.kinematic_parents.shape != (J,):
            raise InvariantError("kinematic_parents: shape mismatch")
        if not (0 <= self.root_joint_index < J):
            raise InvariantError("root_joint_index: out of range")
        _toposort_joints(self.kinematic_parents)  # raises if not a tree


@dataclass
class HeadParams:
    shape: np.ndarray  # (n_shape,)
    expression: np.ndarray  # (n_expr,)
    pose: np.ndarray  # (J, 3) per-joint axis-angle
    global_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    global_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.shape = np.asarray(self.shape, dtype=np.float64).reshape(-1)
        self.expression = np.asarray(self.expression, dtype=np.float64).reshape(-1)
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(-1, 3)
        self.global_rotation = np.asarray(self.global_rotation, dtype=np.float64).reshape(3, 3)
        self.global_translation = np.asarray(self.global_translation, dtype=np.float64).reshape(3)

    @classmethod
    def neutral(cls, model: HeadModel) -> "HeadParams":
        return cls(
            shape=np.zeros(model.num_shape),
            expression=np.zeros(model.num_expression),
            pose=np.zeros((model.num_joints, 3)),
        )


@dataclass(frozen=True)
class PosedMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) uint32, shared with the owning model
    face_frames: np.ndarray  # (F, 3, 3) orthonormal, right-handed
    face_barycenters: np.ndarray  # (F, 3)

    @classmethod
    def from_vertices(cls, vertices: np.ndarray, faces: np.ndarray) -> "PosedMesh":
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces)
        frames, centers = face_frames(vertices, faces)
        return cls(vertices, faces, frames, centers)


def face_frames(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orientation frame and barycenter per triangle.

    Frame columns: (0) normalized first edge v1-v0, (2) unit face normal,
    (1) their cross product, giving a right-handed orthonormal basis.
    Degenerate triangles fall back to the identity frame.
    """
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    e0 = v1 - v0
    n = np.cross(e0, v2 - v0)
    e0_len = np.linalg.norm(e0, axis=1, keepdims=True)
    n_len = np.linalg.norm(n, axis=1, keepdims=True)
    ok = (e0_len[:, 0] > 1e-12) & (n_len[:, 0] > 1e-12)
    with np.errstate(invalid="ignore", divide="ignore"):
        c0 = np.where(ok[:, None], e0 / e0_len, [1.0, 0.0, 0.0])
        c2 = np.where(ok[:, None], n / n_len, [0.0, 0.0, 1.0])
    c1 = np.cross(c2, c0)
    frames = np.stack([c0, c1, c2], axis=-1)
    centers = (v0 + v1 + v2) / 3.0
    return frames, centers


def _toposort_joints(parents: np.ndarray) -> np.ndarray:
    """Parent-before-child evaluation order; raises unless parents form a tree."""
    parents = np.asarray(parents, dtype=np.int64)
    J = parents.shape[0]
    roots = np.flatnonzero(parents == -1)
    if roots.size != 1:
        raise InvariantError(f"kinematic_parents: expected exactly one root, found {roots.size}")
    if np.any((parents < -1) | (parents >= J)):
        raise InvariantError("kinematic_parents: parent index out of range")
    order = [int(roots[0])]
    visited = np.zeros(J, dtype=bool)
    visited[roots[0]] = True
    while len(order) < J:
        grew = False
        for j in range(J):
            if not visited[j] and visited[parents[j]]:
                visited[j] = True
                order.append(j)
                grew = True
        if not grew:
            raise InvariantError("kinematic_parents: graph has a cycle")
    return np.asarray(order, dtype=np.int64)


def _check_dims(model: HeadModel, params: HeadParams) -> None:
    if params.shape.shape[0] != model.num_shape:
        raise InvalidInputError(
            f"shape vector has {params.shape.shape[0]} entries, model expects {model.num_shape}"
        )
    if params.expression.shape[0] != model.num_expression:
        raise InvalidInputError(
            f"expression vector has {params.expression.shape[0]} entries,"
            f" model expects {model.num_expression}"
        )
    if params.pose.shape[0] != model.num_joints:
        raise InvalidInputError(
            f"pose has {params.pose.shape[0]} joints, model expects {model.num_joints}"
        )


def pose_feature(model: HeadModel, pose: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-joint rotations (J, 3, 3) and the flattened (R_j - I) feature of
    the non-root joints, in ascending joint index order."""
    rot = quat_to_rotation(quat_from_axis_angle(pose))
    nonroot = [j for j in range(model.num_joints) if j != model.root_joint_index]
    feat = (rot[nonroot] - np.eye(3)).reshape(-1)
    return rot, feat


def deform_canonical(model: HeadModel, params: HeadParams) -> np.ndarray:
    """Canonical deformation: template + shape/expression/pose blendshapes."""
    _check_dims(model, params)
    V = model.num_vertices
    out = model.template_vertices.astype(np.float64).copy()
    out += (model.shape_basis.reshape(V * 3, -1).astype(np.float64) @ params.shape).reshape(V, 3)
    out += (
        model.expression_basis.reshape(V * 3, -1).astype(np.float64) @ params.expression
    ).reshape(V, 3)
    _, feat = pose_feature(model, params.pose)
    out += (model.pose_basis.reshape(V * 3, -1).astype(np.float64) @ feat).reshape(V, 3)
    return out


def regress_joints(model: HeadModel, shape: np.ndarray) -> np.ndarray:
    """Joint positions regressed from the shaped template."""
    shape = np.asarray(shape, dtype=np.float64).reshape(-1)
    if shape.shape[0] != model.num_shape:
        raise InvalidInputError("shape vector dimension mismatch")
    V = model.num_vertices
    shaped = model.template_vertices.astype(np.float64) + (
        model.shape_basis.reshape(V * 3, -1).astype(np.float64) @ shape
    ).reshape(V, 3)
    return model.joint_regressor.astype(np.float64) @ shaped


def skin(model: HeadModel, canonical: np.ndarray, params: HeadParams) -> PosedMesh:
    """Pose the canonical vertices by linear blend skinning.

    Joint world transforms are composed along the kinematic tree from the
    joints regressed off the shaped template; the global rigid
    (R, t) is applied last, about the root joint.
    """
    _check_dims(model, params)
    canonical = np.asarray(canonical, dtype=np.float64)
    if canonical.shape != (model.num_vertices, 3):
        raise InvalidInputError("canonical vertices shape mismatch")

    joints = regress_joints(model, params.shape)
    rot, _ = pose_feature(model, params.pose)
    parents = model.kinematic_parents
    order = _toposort_joints(parents)

    J = model.num_joints
    world_rot = np.empty((J, 3, 3))
    world_tr = np.empty((J, 3))
    for j in order:
        p = parents[j]
        if p < 0:
            world_rot[j] = rot[j]
            world_tr[j] = joints[j]
        else:
            world_rot[j] = world_rot[p] @ rot[j]
            world_tr[j] = world_rot[p] @ (joints[j] - joints[p]) + world_tr[p]

    # relative-to-rest transforms: x -> world_rot (x - joint) + world_tr
    rel_tr = world_tr - np.einsum("jab,jb->ja", world_rot, joints)

    W = model.skinning_weights.astype(np.float64)
    blended_rot = np.einsum("vj,jab->vab", W, world_rot)
    blended_tr = W @ rel_tr
    posed = np.einsum("vab,vb->va", blended_rot, canonical) + blended_tr

    # global rigid about the root joint (x -> R (x - x_root) + x_root + t)
    x_root = joints[model.root_joint_index]
    posed = (posed - x_root) @ params.global_rotation.T + x_root + params.global_translation

    return PosedMesh.from_vertices(posed, model.faces)


def pose_mesh(model: HeadModel, params: HeadParams) -> PosedMesh:
    """deform_canonical followed by skin, the usual one-call entry point."""
    return skin(model, deform_canonical(model, params), params)


_ASSET_FIELDS = (
    "template_vertices",
    "faces",
    "shape_basis",
    "pose_basis",
    "expression_basis",
    "joint_regressor",
    "skinning_weights",
    "kinematic_parents",
    "root_joint_index",
)


def save_head_asset(model: HeadModel, path) -> None:
    save_blob(
        path,
        {
            "template_vertices": model.template_vertices.astype(np.float32),
            "faces": model.faces.astype(np.uint32),
            "shape_basis": model.shape_basis.astype(np.float32),
            "pose_basis": model.pose_basis.astype(np.float32),
            "expression_basis": model.expression_basis.astype(np.float32),
            "joint_regressor": model.joint_regressor.astype(np.float32),
            "skinning_weights": model.skinning_weights.astype(np.float32),
            "kinematic_parents": model.kinematic_parents.astype(np.int32),
            "root_joint_index": np.asarray([model.root_joint_index], dtype=np.int32),
        },
    )


def load_head_asset(path) -> HeadModel:
    fields = load_blob(path)
    missing = [f for f in _ASSET_FIELDS if f not in fields]
    if missing:
        raise InvariantError(f"head asset missing fields: {', '.join(missing)}")
    model = HeadModel(
        template_vertices=fields["template_vertices"],
        faces=fields["faces"],
        shape_basis=fields["shape_basis"],
        pose_basis=fields["pose_basis"],
        expression_basis=fields["expression_basis"],
        joint_regressor=fields["joint_regressor"],
        skinning_weights=fields["skinning_weights"],
        kinematic_parents=fields["kinematic_parents"],
        root_joint_index=int(fields["root_joint_index"].reshape(-1)[0]),
    )
    model.validate()
    return model


def head_params_to_dict(params: HeadParams) -> dict:
    """JSON-ready dict; the rotation is emitted as a wxyz quaternion."""
    from .quaternion import rotation_to_quat

    return {
        "shape": params.shape.tolist(),
        "expression": params.expression.tolist(),
        "pose": params.pose.tolist(),
        "global_rotation_quat": rotation_to_quat(params.global_rotation).tolist(),
        "global_translation": params.global_translation.tolist(),
    }


def head_params_from_dict(
    data: dict, model: HeadModel | None = None, base: HeadParams | None = None
) -> HeadParams:
    """Build params from a (possibly partial) dict.

    Missing keys fall back to ``base`` when given, else to neutral values;
    dimensions are checked against ``model`` when given.
    """
    from .quaternion import quat_to_rotation

    if base is not None:
        shape, expression = base.shape, base.expression
        pose = base.pose
        rot, tr = base.global_rotation, base.global_translation
    elif model is not None:
        neutral = HeadParams.neutral(model)
        shape, expression, pose = neutral.shape, neutral.expression, neutral.pose
        rot, tr = neutral.global_rotation, neutral.global_translation
    else:
        shape = expression = pose = None
        rot, tr = np.eye(3), np.zeros(3)

    if "shape" in data:
        shape = np.asarray(data["shape"], dtype=np.float64)
    if "expression" in data:
        expression = np.asarray(data["expression"], dtype=np.float64)
    if "pose" in data:
        pose = np.asarray(data["pose"], dtype=np.float64).reshape(-1, 3)
    if "global_rotation_quat" in data:
        rot = quat_to_rotation(np.asarray(data["global_rotation_quat"], dtype=np.float64))
    elif "global_rotation" in data:
        rot = np.asarray(data["global_rotation"], dtype=np.float64).reshape(3, 3)
    if "global_translation" in data:
        tr = np.asarray(data["global_translation"], dtype=np.float64)

    if shape is None or expression is None or pose is None:
        raise InvalidInputError("params dict is partial and no model/base was given")
    params = HeadParams(shape, expression, pose, rot, tr)
    if model is not None:
        _check_dims(model, params)
    return params


def make_synthetic_head(
    seed: int,
    num_vertices: int = 82,
    num_joints: int = 4,
    num_shape: int = 6,
    num_expression: int = 8,
    radius: float = 0.1,
) -> HeadModel:
    """Deterministic small head fixture: a deformed sphere with a random
    joint tree, satisfying every HeadModel invariant. Used throughout the
    test suite and the demo scripts."""
    if min(num_vertices, num_joints, num_shape, num_expression) <= 0:
        raise InvalidInputError("synthetic head dimensions must be positive")
    if num_vertices < 4:
        raise InvalidInputError("need at least 4 vertices to triangulate")
    from scipy.spatial import ConvexHull

    rng = np.random.default_rng(seed)

    # Fibonacci sphere: near-uniform points, convex hull gives the faces.
    k = np.arange(num_vertices, dtype=np.float64)
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    z = 1.0 - 2.0 * (k + 0.5) / num_vertices
    theta = 2.0 * np.pi * k / golden
    r_xy = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    pts = np.stack([r_xy * np.cos(theta), r_xy * np.sin(theta), z], axis=1)
    pts *= radius * (1.0 + 0.05 * rng.standard_normal((num_vertices, 1)))
    faces = ConvexHull(pts).simplices.astype(np.uint32)

    V, J = num_vertices, num_joints
    joints_target = np.zeros((J, 3))
    joints_target[1:] = rng.uniform(-0.4, 0.4, size=(J - 1, 3)) * radius

    # regressor rows: normalized inverse-square distances to target spots
    d2 = np.sum((pts[None, :, :] - joints_target[:, None, :]) ** 2, axis=-1)
    reg = 1.0 / (d2 + (0.3 * radius) ** 2)
    reg /= reg.sum(axis=1, keepdims=True)

    dist = np.sqrt(np.sum((pts[:, None, :] - joints_target[None, :, :]) ** 2, axis=-1))
    w = np.exp(-((dist / (0.8 * radius)) ** 2))
    w /= w.sum(axis=1, keepdims=True)

    parents = np.full(J, -1, dtype=np.int32)
    for j in range(1, J):
        parents[j] = rng.integers(0, j)

    model = HeadModel(
        template_vertices=pts.astype(np.float32),
        faces=faces,
        shape_basis=(0.02 * radius * rng.standard_normal((V, 3, num_shape))).astype(np.float32),
        pose_basis=(0.005 * radius * rng.standard_normal((V, 3, 9 * (J - 1)))).astype(np.float32),
        expression_basis=(0.03 * radius * rng.standard_normal((V, 3, num_expression))).astype(
            np.float32
        ),
        joint_regressor=reg.astype(np.float32),
        skinning_weights=w.astype(np.float32),
        kinematic_parents=parents,
        root_joint_index=0,
    )
    model.validate()
    return model
