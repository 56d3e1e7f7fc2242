import numpy as np
import pytest

from headsplat.alignment import (
    AlignmentProblem,
    alignment_residual,
    load_problem_file,
    load_transform_file,
    rigid_from_correspondences,
    root_adjusted_translation,
    save_transform_file,
    solve_alignment,
    solve_alignment_pairs,
)
from headsplat.errors import NumericalError, ParseError
from headsplat.quaternion import quat_from_axis_angle, quat_to_rotation
from headsplat.rigid import RigidTransform


def rand_rigid(rng):
    return RigidTransform(
        quat_to_rotation(quat_from_axis_angle(rng.uniform(-np.pi, np.pi, 3))),
        rng.uniform(-2, 2, 3),
    )


def test_root_adjustment_identity_rotation():
    t = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(root_adjusted_translation(np.eye(3), t, [1, 2, 3]), t)


def test_root_adjustment_zero_root():
    rng = np.random.default_rng(0)
    R = quat_to_rotation(quat_from_axis_angle(rng.uniform(-1, 1, 3)))
    t = rng.uniform(-1, 1, 3)
    assert np.array_equal(root_adjusted_translation(R, t, np.zeros(3)), t)


def test_root_adjustment_both_forms_agree():
    rng = np.random.default_rng(1)
    for _ in range(100):
        R = quat_to_rotation(quat_from_axis_angle(rng.uniform(-np.pi, np.pi, 3)))
        t = rng.uniform(-1, 1, 3)
        x_root = rng.uniform(-1, 1, 3)
        t_adj = root_adjusted_translation(R, t, x_root)
        x = rng.uniform(-3, 3, (50, 3))
        about_root = (x - x_root) @ R.T + x_root + t
        affine = x @ R.T + t_adj
        assert np.abs(about_root - affine).max() < 1e-9


def test_solve_degenerate_identity():
    cam = RigidTransform.identity()
    problem = AlignmentProblem(cam, cam, np.eye(3), np.zeros(3), np.zeros(3))
    solution = solve_alignment(problem)
    assert np.allclose(solution.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(solution.translation, 0.0, atol=1e-12)


def test_equal_cameras_reduce_to_head_rigid():
    rng = np.random.default_rng(2)
    cam = rand_rigid(rng)
    R = quat_to_rotation(quat_from_axis_angle(rng.uniform(-1, 1, 3)))
    t = rng.uniform(-1, 1, 3)
    x_root = rng.uniform(-1, 1, 3)
    problem = AlignmentProblem(cam, cam, R, t, x_root)
    solution = solve_alignment(problem)
    t_adj = root_adjusted_translation(R, t, x_root)
    assert np.abs(solution.rotation - R).max() < 1e-12
    assert np.abs(solution.translation - t_adj).max() < 1e-12


def test_substitution_residual_random():
    rng = np.random.default_rng(3)
    for _ in range(200):
        problem = AlignmentProblem(
            rand_rigid(rng),
            rand_rigid(rng),
            quat_to_rotation(quat_from_axis_angle(rng.uniform(-np.pi, np.pi, 3))),
            rng.uniform(-1, 1, 3),
            rng.uniform(-1, 1, 3),
        )
        solution = solve_alignment(problem)
        assert alignment_residual(problem, solution, rng.uniform(-3, 3, (100, 3))) < 1e-9


def test_multi_pair_agreement_and_mismatch():
    rng = np.random.default_rng(4)
    R = quat_to_rotation(quat_from_axis_angle(rng.uniform(-1, 1, 3)))
    t = rng.uniform(-1, 1, 3)
    x_root = rng.uniform(-1, 1, 3)
    # consistent pairs: W2C2 = W2C1 o Tc^-1 for one common Tc
    t_c = rand_rigid(rng)
    head_affine = RigidTransform(R, root_adjusted_translation(R, t, x_root), validate=False)
    problems = []
    for _ in range(4):
        w2c1 = rand_rigid(rng)
        w2c2 = w2c1.compose(head_affine).compose(t_c.inverse())
        problems.append(AlignmentProblem(w2c1, w2c2, R, t, x_root))
    solution = solve_alignment_pairs(problems)
    assert np.abs(solution.rotation - t_c.rotation).max() < 1e-9
    assert np.abs(solution.translation - t_c.translation).max() < 1e-9

    problems.append(
        AlignmentProblem(rand_rigid(rng), rand_rigid(rng), R, t, x_root)
    )
    with pytest.raises(NumericalError):
        solve_alignment_pairs(problems)


def test_correspondences_identity():
    src = np.random.default_rng(5).uniform(-1, 1, (10, 3))
    transform, scale, rms = rigid_from_correspondences(src, src)
    assert np.allclose(transform.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(transform.translation, 0.0, atol=1e-9)
    assert scale == 1.0
    assert rms < 1e-12


def test_correspondences_recover_rigid():
    rng = np.random.default_rng(6)
    src = rng.uniform(-1, 1, (25, 3))
    rig = rand_rigid(rng)
    dst = rig.apply(src)
    transform, _, rms = rigid_from_correspondences(src, dst)
    assert np.abs(transform.rotation - rig.rotation).max() < 1e-9
    assert np.abs(transform.translation - rig.translation).max() < 1e-9
    assert rms < 1e-9


def test_correspondences_recover_similarity():
    rng = np.random.default_rng(7)
    src = rng.uniform(-1, 1, (25, 3))
    rig = rand_rigid(rng)
    dst = 2.5 * (src @ rig.rotation.T) + rig.translation
    transform, scale, rms = rigid_from_correspondences(src, dst, with_scale=True)
    assert abs(scale - 2.5) < 1e-9
    assert np.abs(transform.rotation - rig.rotation).max() < 1e-9
    assert rms < 1e-9


def test_correspondences_collinear_rejected():
    line = np.outer(np.linspace(0, 1, 8), [1.0, 2.0, 3.0])
    with pytest.raises(NumericalError):
        rigid_from_correspondences(line, line + [1, 0, 0])


def test_problem_file_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    w2c1 = rand_rigid(rng)
    w2c2 = rand_rigid(rng)
    quat = rng.standard_normal(4)
    quat /= np.linalg.norm(quat)
    path = tmp_path / "problem.txt"
    lines = [
        "# alignment problem",
        "w2c1 = " + " ".join(f"{v:.17g}" for v in w2c1.as_matrix().reshape(-1)),
        "w2c2 = " + " ".join(f"{v:.17g}" for v in w2c2.as_matrix().reshape(-1)),
        "head_rotation = " + " ".join(f"{v:.17g}" for v in quat),
        "head_translation = 0.1 0.2 0.3",
        "root_joint = 0.0 0.05 0.0",
    ]
    path.write_text("\n".join(lines) + "\n")
    problem = load_problem_file(path)
    assert np.abs(problem.w2c_head.rotation - w2c1.rotation).max() < 1e-15
    assert np.abs(problem.head_rotation - quat_to_rotation(quat)).max() < 1e-12

    solution = solve_alignment(problem)
    out = tmp_path / "solution.txt"
    save_transform_file(out, solution)
    loaded = load_transform_file(out)
    assert np.abs(loaded.rotation - solution.rotation).max() < 1e-15
    assert np.abs(loaded.translation - solution.translation).max() < 1e-15


def test_problem_file_missing_field(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("w2c1 = " + " ".join(["0"] * 16) + "\n")
    with pytest.raises(ParseError, match="w2c2"):
        load_problem_file(path)
