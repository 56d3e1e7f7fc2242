import numpy as np
import pytest

from headsplat.cloud import (
    GROUP_BACKGROUND,
    GROUP_HEAD,
    GaussianCloud,
    load_labels,
    merge_scenes,
    save_labels,
    transform_cloud,
)
from headsplat.errors import ParseError
from headsplat.quaternion import quat_from_axis_angle, quat_to_rotation
from headsplat.rasterizer import build_covariance
from headsplat.rigid import RigidTransform


def make_cloud(n, seed, group=GROUP_HEAD):
    rng = np.random.default_rng(seed)
    return GaussianCloud(
        positions=rng.standard_normal((n, 3)),
        rotations=rng.standard_normal((n, 4)),
        log_scales=rng.uniform(-3, 0, (n, 3)),
        opacity_logits=rng.uniform(-2, 2, n),
        sh=rng.standard_normal((n, 16, 3)),
        group=np.full(n, group, dtype=np.uint8),
    )


def test_merge_identity_empty_background():
    head = make_cloud(10, 0)
    merged = merge_scenes(head, GaussianCloud.empty(), RigidTransform.identity())
    assert merged.count == 10
    assert np.array_equal(merged.positions, head.positions)
    assert np.array_equal(merged.sh, head.sh)


def test_merge_translation_only():
    head = make_cloud(5, 1)
    bg = make_cloud(7, 2, group=GROUP_BACKGROUND)
    t = RigidTransform(np.eye(3), [1.0, 2.0, 3.0])
    merged = merge_scenes(head, bg, t)
    assert merged.count == 12
    assert np.allclose(merged.positions[:5], head.positions + [1, 2, 3])
    assert np.array_equal(merged.positions[5:], bg.positions)
    assert np.array_equal(merged.group[:5], head.group)
    assert np.array_equal(merged.group[5:], bg.group)


def test_merge_preserves_covariance_eigenvalues():
    head = make_cloud(50, 3)
    rig = RigidTransform(
        quat_to_rotation(quat_from_axis_angle([0.4, -0.2, 0.9])), [0.3, -0.1, 0.2]
    )
    moved = transform_cloud(head, rig)
    for i in range(head.count):
        before = np.linalg.eigvalsh(build_covariance(head.rotations[i], head.scales()[i]))
        after = np.linalg.eigvalsh(build_covariance(moved.rotations[i], moved.scales()[i]))
        assert np.abs(np.sort(before) - np.sort(after)).max() < 1e-6


def test_merge_preserves_non_positional_attributes():
    head = make_cloud(20, 4)
    bg = make_cloud(30, 5, group=GROUP_BACKGROUND)
    rig = RigidTransform(quat_to_rotation(quat_from_axis_angle([1.0, 0.2, 0.0])), [1, 0, 0])
    merged = merge_scenes(head, bg, rig)
    assert np.array_equal(merged.sh[:20], head.sh)
    assert np.array_equal(merged.opacity_logits[:20], head.opacity_logits)
    assert np.array_equal(merged.log_scales[:20], head.log_scales)
    assert (merged.group[:20] == GROUP_HEAD).all()
    assert (merged.group[20:] == GROUP_BACKGROUND).all()


def test_labels_sidecar_roundtrip(tmp_path):
    cloud = make_cloud(8, 6)
    cloud.group[3:] = GROUP_BACKGROUND
    cloud.person_flag[2] = True
    cloud.person_flag[5] = True
    path = tmp_path / "labels.txt"
    save_labels(path, cloud)
    other = make_cloud(8, 7)
    load_labels(path, other)
    assert np.array_equal(other.group, cloud.group)
    assert np.array_equal(other.person_flag, cloud.person_flag)


def test_labels_rejects_bad_index(tmp_path):
    cloud = make_cloud(3, 8)
    path = tmp_path / "labels.txt"
    path.write_text("9 head 0\n")
    with pytest.raises(ParseError, match="out of range"):
        load_labels(path, cloud)
