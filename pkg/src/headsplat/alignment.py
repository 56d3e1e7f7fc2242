"""Head-to-background rigid alignment.

The head lives in a camera-relative frame: its rigid pose acts about the
root joint, x -> R (x - x_root) + x_root + t, which folds into the affine
form R x + t' with t' = t + (I - R) x_root. Given the head's virtual
camera W2C1 and the background capture camera W2C2, the transform T_c
placing the head in the background's world frame satisfies

    W2C1 (R x + t') = W2C2 (R_c x + t_c)   for all x,

and matching linear and constant terms gives the closed form

    R_c = R2^T R1 R,      t_c = R2^T (R1 t' + t1 - t2).

A general least-squares rigid/similarity solver over point
correspondences is provided as a fallback for when camera pairs are
unavailable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalError, ParseError
from .quaternion import quat_to_rotation
from .rigid import RigidTransform


@dataclass(frozen=True)
class AlignmentProblem:
    w2c_head: RigidTransform  # virtual camera rendering the head
    w2c_background: RigidTransform  # real capture camera of the background
    head_rotation: np.ndarray  # (3, 3) head rigid R
    head_translation: np.ndarray  # (3,) head rigid t
    root_joint: np.ndarray  # (3,) x_root

    def __post_init__(self):
        object.__setattr__(
            self, "head_rotation", np.asarray(self.head_rotation, dtype=np.float64).reshape(3, 3)
        )
        object.__setattr__(
            self,
            "head_translation",
            np.asarray(self.head_translation, dtype=np.float64).reshape(3),
        )
        object.__setattr__(
            self, "root_joint", np.asarray(self.root_joint, dtype=np.float64).reshape(3)
        )


def root_adjusted_translation(
    rotation: np.ndarray, translation: np.ndarray, root_joint: np.ndarray
) -> np.ndarray:
    """Fold the about-the-root rigid into plain affine form: t' = t + (I - R) x_root."""
    R = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
    t = np.asarray(translation, dtype=np.float64).reshape(3)
    x_root = np.asarray(root_joint, dtype=np.float64).reshape(3)
    return t + (np.eye(3) - R) @ x_root


def solve_alignment(problem: AlignmentProblem) -> RigidTransform:
    """Closed-form T_c = (R_c, t_c); exact for rigid inputs."""
    R1, t1 = problem.w2c_head.rotation, problem.w2c_head.translation
    R2, t2 = problem.w2c_background.rotation, problem.w2c_background.translation
    R = problem.head_rotation
    t_adj = root_adjusted_translation(R, problem.head_translation, problem.root_joint)
    R_c = R2.T @ R1 @ R
    t_c = R2.T @ (R1 @ t_adj + t1 - t2)
    return RigidTransform(R_c, t_c, validate=False)


def alignment_residual(problem: AlignmentProblem, solution: RigidTransform, probes: np.ndarray) -> float:
    """Max norm of W2C1(Rx + t') - W2C2(R_c x + t_c) over probe points."""
    R = problem.head_rotation
    t_adj = root_adjusted_translation(R, problem.head_translation, problem.root_joint)
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    lhs = problem.w2c_head.apply(probes @ R.T + t_adj)
    rhs = problem.w2c_background.apply(solution.apply(probes))
    return float(np.max(np.linalg.norm(lhs - rhs, axis=1)))


def solve_alignment_pairs(problems: list[AlignmentProblem], tol: float = 1e-6) -> RigidTransform:
    """Solve over several (W2C1, W2C2) view pairs.

    Consistent inputs yield the same T_c from every pair; pairwise
    disagreement beyond ``tol`` raises instead of silently averaging.
    """
    if not problems:
        raise InvalidInputError("need at least one view pair")
    solutions = [solve_alignment(p) for p in problems]
    first = solutions[0]
    for k, sol in enumerate(solutions[1:], start=1):
        rot_err = np.max(np.abs(sol.rotation - first.rotation))
        tr_err = np.max(np.abs(sol.translation - first.translation))
        if max(rot_err, tr_err) > tol:
            raise NumericalError(
                f"view pair {k} disagrees with pair 0"
                f" (rotation {rot_err:.3g}, translation {tr_err:.3g})"
            )
    return first


def rigid_from_correspondences(
    src: np.ndarray, dst: np.ndarray, with_scale: bool = False
) -> tuple[RigidTransform, float, float]:
    """Least-squares rigid (optionally similarity) transform src -> dst.

    Returns (transform, scale, rms_residual); scale is 1.0 in rigid mode.
    Requires >= 3 non-collinear points.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise InvalidInputError("src and dst must have the same shape")
    m = src.shape[0]
    if m < 3:
        raise InvalidInputError("need at least 3 correspondences")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / m
    U, S, Vt = np.linalg.svd(cov)
    if S[1] < 1e-12 * max(S[0], 1e-300):
        raise NumericalError("correspondences are collinear (rank-deficient)")
    D = np.eye(3)
    if np.linalg.det(U @ Vt) < 0:
        D[2, 2] = -1.0
    R = U @ D @ Vt
    if with_scale:
        var_s = (xs**2).sum() / m
        scale = float(np.trace(np.diag(S) @ D) / var_s)
    else:
        scale = 1.0
    t = mu_d - scale * R @ mu_s
    transform = RigidTransform(R, t, validate=False)
    res = dst - (scale * (src @ R.T) + t)
    rms = float(np.sqrt((res**2).sum() / m))
    return transform, scale, rms


def _parse_vector(text: str, name: str, n: int) -> np.ndarray:
    vals = text.replace(",", " ").split()
    if len(vals) != n:
        raise ParseError(f"field {name!r}: expected {n} numbers, got {len(vals)}")
    try:
        return np.asarray([float(v) for v in vals])
    except ValueError as exc:
        raise ParseError(f"field {name!r}: {exc}") from exc


def load_problem_file(path) -> AlignmentProblem:
    """Problem file: ``key = numbers`` lines with w2c1/w2c2 (16, row-major),
    head_rotation (4, quaternion wxyz), head_translation (3), root_joint (3)."""
    entries: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}: malformed line {line!r}")
            key, val = line.split("=", 1)
            entries[key.strip()] = val.strip()
    required = {"w2c1": 16, "w2c2": 16, "head_rotation": 4, "head_translation": 3, "root_joint": 3}
    for key in required:
        if key not in entries:
            raise ParseError(f"{path}: missing field {key!r}")
    w2c1 = RigidTransform.from_matrix(_parse_vector(entries["w2c1"], "w2c1", 16).reshape(4, 4))
    w2c2 = RigidTransform.from_matrix(_parse_vector(entries["w2c2"], "w2c2", 16).reshape(4, 4))
    quat = _parse_vector(entries["head_rotation"], "head_rotation", 4)
    return AlignmentProblem(
        w2c_head=w2c1,
        w2c_background=w2c2,
        head_rotation=quat_to_rotation(quat),
        head_translation=_parse_vector(entries["head_translation"], "head_translation", 3),
        root_joint=_parse_vector(entries["root_joint"], "root_joint", 3),
    )


def save_transform_file(path, transform: RigidTransform) -> None:
    """Write a 4x4 row-major matrix, one row per line."""
    mat = transform.as_matrix()
    with open(path, "w") as fh:
        for row in mat:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_transform_file(path) -> RigidTransform:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(v) for v in line.split()])
    mat = np.asarray(rows)
    if mat.shape != (4, 4):
        raise ParseError(f"{path}: expected a 4x4 matrix, got shape {mat.shape}")
    return RigidTransform.from_matrix(mat)
