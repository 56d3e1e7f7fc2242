import math

import numpy as np
import pytest

from headsplat.camera import CameraRig
from headsplat.cloud import sigmoid
from headsplat.errors import InvalidInputError
from headsplat.rasterizer import (
    RenderOptions,
    SplatArrays,
    build_covariance,
    project_gaussian,
    render,
    render_reference,
)
from headsplat.rigid import RigidTransform
from headsplat.selfcheck import priority_example, random_scene
from headsplat.sh import SH_C0


def axis_camera(size=32, f=50.0):
    return CameraRig(
        width=size,
        height=size,
        fx=f,
        fy=f,
        cx=size / 2.0,
        cy=size / 2.0,
        world_to_camera=RigidTransform.identity(),
        near=0.1,
        far=50.0,
    )


# --- Eq. 3: covariance construction ---------------------------------------


def test_covariance_identity():
    assert np.allclose(build_covariance([1, 0, 0, 0], [1, 1, 1]), np.eye(3))


def test_covariance_diagonal():
    assert np.allclose(build_covariance([1, 0, 0, 0], [2, 1, 1]), np.diag([4.0, 1.0, 1.0]))


def test_covariance_spectrum_random():
    rng = np.random.default_rng(0)
    for _ in range(500):
        q = rng.standard_normal(4)
        s = np.exp(rng.uniform(-2, 1, 3))
        eig = np.sort(np.linalg.eigvalsh(build_covariance(q, s)))
        assert np.abs(eig - np.sort(s * s)).max() < 1e-6


def test_covariance_rejects_nonpositive_scale():
    with pytest.raises(InvalidInputError):
        build_covariance([1, 0, 0, 0], [1.0, 0.0, 1.0])


# --- projection -------------------------------------------------------------


def test_project_isotropic_on_axis():
    cam = axis_camera()
    eps = 0.01
    d = 4.0
    splat = project_gaussian([0.0, 0.0, d], (eps**2) * np.eye(3), cam)
    assert splat is not None
    assert np.allclose(splat.mean, [cam.cx, cam.cy], atol=1e-9)
    expected = (cam.fx * eps / d) ** 2
    assert abs((splat.cov2d[0, 0] - 0.3) - expected) < 1e-9  # minus the low-pass term
    assert abs(splat.depth - d) < 1e-12


def test_project_inverse_square_depth_scaling():
    cam = axis_camera()
    cov = (0.02**2) * np.eye(3)
    near_splat = project_gaussian([0.0, 0.0, 2.0], cov, cam)
    far_splat = project_gaussian([0.0, 0.0, 4.0], cov, cam)
    ratio = (near_splat.cov2d[0, 0] - 0.3) / (far_splat.cov2d[0, 0] - 0.3)
    assert abs(ratio - 4.0) < 1e-9


def test_project_culls_behind_camera():
    cam = axis_camera()
    assert project_gaussian([0.0, 0.0, -1.0], np.eye(3) * 1e-4, cam) is None
    assert project_gaussian([0.0, 0.0, 100.0], np.eye(3) * 1e-4, cam) is None
    assert project_gaussian([50.0, 0.0, 2.0], np.eye(3) * 1e-4, cam) is None


# --- Eq. 4 blending ---------------------------------------------------------


def center_pixel_splats(opacity_logits, dc_colors, depths, groups=None):
    """Splats dead-center on a 17x17 camera; pixel (8,8) sits at each mean."""
    n = len(depths)
    sh = np.zeros((n, 16, 3))
    for i, color in enumerate(dc_colors):
        sh[i, 0, :] = (np.asarray(color, float) - 0.5) / SH_C0
    return SplatArrays(
        positions=np.array([[0.0, 0.0, z] for z in depths]),
        rotations=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        scales=np.full((n, 3), 0.05),
        opacities=sigmoid(np.asarray(opacity_logits, float)),
        sh=sh,
        group=np.zeros(n, dtype=np.uint8) if groups is None else np.asarray(groups, np.uint8),
    )


def center_camera():
    return CameraRig(
        width=17, height=17, fx=40.0, fy=40.0, cx=8.5, cy=8.5,
        world_to_camera=RigidTransform.identity(), near=0.1, far=50.0,
    )


def test_single_opaque_gaussian_clamps_to_alpha_max():
    # logit 9.2 -> sigma ~ 0.9999, clamped to alpha_max at the mean pixel
    splats = center_pixel_splats([9.21024], [[1.0, 1.0, 1.0]], [2.0])
    out = render(splats, center_camera())
    assert np.allclose(out.color[8, 8], 0.99, atol=1e-6)
    assert np.allclose(out.alpha[8, 8], 0.99, atol=1e-6)


def test_two_term_blend_hand_derived():
    # A red at depth 1, B blue at depth 2, both alpha 0.5 at the center:
    # C = 0.5 red + 0.25 blue
    splats = center_pixel_splats([0.0, 0.0], [[1, 0, 0], [0, 0, 1]], [1.0, 2.0])
    out = render(splats, center_camera())
    assert np.abs(out.color[8, 8] - [0.5, 0.0, 0.25]).max() < 1e-9
    assert abs(out.alpha[8, 8] - 0.75) < 1e-12


def test_priority_overrides_depth():
    plain, prioritized = priority_example()
    assert np.abs(plain - [0.5, 0.0, 0.25]).max() < 1e-9
    assert np.abs(prioritized - [0.25, 0.0, 0.5]).max() < 1e-9


def test_empty_scene_fill_color():
    options = RenderOptions(background=(0.2, 0.4, 0.6))
    splats = SplatArrays(
        np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)),
        np.zeros(0), np.zeros((0, 16, 3)), np.zeros(0, np.uint8),
    )
    out = render(splats, axis_camera(), options)
    assert np.allclose(out.color, [0.2, 0.4, 0.6])
    assert np.all(out.alpha == 0.0)
    assert np.all(np.isinf(out.depth))
    ref = render_reference(splats, axis_camera(), options)
    assert np.array_equal(ref.color, out.color)


def test_expected_depth_two_splats():
    splats = center_pixel_splats([0.0, 0.0], [[1, 1, 1], [1, 1, 1]], [1.0, 3.0])
    out = render(splats, center_camera())
    # weights 0.5 and 0.25 -> E[d] = (0.5*1 + 0.25*3) / 0.75
    assert abs(out.depth[8, 8] - (0.5 * 1.0 + 0.25 * 3.0) / 0.75) < 1e-9


def test_tiled_matches_reference_randomized():
    for seed in range(30):
        splats, camera = random_scene(seed, 150, 48, 48)
        tiled = render(splats, camera)
        ref = render_reference(splats, camera)
        assert np.abs(tiled.color - ref.color).max() < 1e-5
        assert np.abs(tiled.alpha - ref.alpha).max() < 1e-5


def test_single_gaussian_tiled_equals_reference_bitwise():
    splats, camera = random_scene(3, 1, 32, 32)
    tiled = render(splats, camera)
    ref = render_reference(splats, camera)
    assert np.abs(tiled.color - ref.color).max() < 1e-7
    assert np.array_equal(tiled.color, ref.color)


def test_determinism_repeat_renders():
    splats, camera = random_scene(5, 300, 64, 64)
    a = render(splats, camera)
    b = render(splats, camera)
    assert np.array_equal(a.color, b.color)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.contributors, b.contributors)


def test_alpha_monotone_in_opacity():
    splats, camera = random_scene(7, 60, 32, 32)
    base = render(splats, camera).alpha
    for g in (0, 13, 41):
        boosted = SplatArrays(
            splats.positions, splats.rotations, splats.scales,
            np.minimum(splats.opacities + 0.2 * (np.arange(60) == g), 0.995),
            splats.sh, splats.group,
        )
        out = render(boosted, camera).alpha
        assert np.all(out >= base - 1e-12)


def replay_pixel(state, row, col):
    """Independent per-pixel replay of the blend order from forward state."""
    opts = state.options
    t = (row // opts.tile_size) * (
        (state.camera.width + opts.tile_size - 1) // opts.tile_size
    ) + (col // opts.tile_size)
    start, end = state.tile_offsets[t], state.tile_offsets[t + 1]
    px, py = col + 0.5, row + 0.5
    trans = 1.0
    contributions = []
    for pos in range(start, end):
        i = state.tile_items[pos]
        dx, dy = px - state.means2d[i, 0], py - state.means2d[i, 1]
        if abs(dx) > state.radius[i] or abs(dy) > state.radius[i]:
            continue
        power = (
            -0.5 * (state.conics[i, 0] * dx * dx + state.conics[i, 2] * dy * dy)
            - state.conics[i, 1] * dx * dy
        )
        if power > 0:
            continue
        alpha = min(state.sigmas[i] * math.exp(power), opts.alpha_max)
        if alpha < opts.alpha_cull:
            continue
        if trans * (1 - alpha) < opts.t_stop:
            break
        contributions.append((i, alpha, trans))
        trans *= 1 - alpha
    return contributions, trans


def test_priority_order_and_transmittance_telescoping():
    splats, camera = random_scene(11, 120, 32, 32)
    out, state = render(splats, camera, retain=True)
    rng = np.random.default_rng(0)
    for _ in range(200):
        row = int(rng.integers(camera.height))
        col = int(rng.integers(camera.width))
        contributions, trans = replay_pixel(state, row, col)
        groups = [state.group[i] for i, _, _ in contributions]
        # every head contributor precedes every background contributor
        assert groups == sorted(groups)
        # accumulated alpha telescopes
        alpha = 1.0
        for _, a, _ in contributions:
            alpha *= 1 - a
        assert abs((1 - alpha) - out.alpha[row, col]) < 1e-6
        assert abs(trans - (1 - out.alpha[row, col])) < 1e-6


def test_depth_sorted_within_group():
    splats, camera = random_scene(13, 120, 32, 32)
    _, state = render(splats, camera, retain=True)
    rng = np.random.default_rng(1)
    for _ in range(100):
        row = int(rng.integers(camera.height))
        col = int(rng.integers(camera.width))
        contributions, _ = replay_pixel(state, row, col)
        for (i, _, _), (j, _, _) in zip(contributions, contributions[1:]):
            if state.group[i] == state.group[j]:
                assert state.depths[i] <= state.depths[j]
