"""Built-in verification suites behind the CLI ``selftest`` command:
brute-force-oracle equivalence, gradient checks against finite
differences, and the tiled-vs-reference throughput benchmark.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .camera import CameraRig
from .cloud import logit, sigmoid
from .headmodel import HeadParams, make_synthetic_head, pose_mesh
from .binding import bind_to_mesh, drive
from .rasterizer import (
    RenderOptions,
    SplatArrays,
    build_covariance,
    render,
    render_backward,
    render_reference,
)
from .rigid import RigidTransform
from .alignment import AlignmentProblem, alignment_residual, solve_alignment
from .quaternion import quat_from_axis_angle, quat_to_rotation


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_scene(seed: int, n: int, width: int, height: int) -> tuple[SplatArrays, CameraRig]:
    """Randomized test scene in front of an identity-pose camera."""
    rng = np.random.default_rng(seed)
    camera = CameraRig(
        width=width,
        height=height,
        fx=0.9 * width,
        fy=0.9 * width,
        cx=width / 2.0,
        cy=height / 2.0,
        world_to_camera=RigidTransform.identity(),
        near=0.1,
        far=100.0,
    )
    # fills the frustum at z ~ 4 and spills past it nearer the camera
    splats = SplatArrays(
        positions=np.column_stack(
            [
                rng.uniform(-1.2, 1.2, n),
                rng.uniform(-1.2, 1.2, n),
                rng.uniform(2.0, 6.0, n),
            ]
        ),
        rotations=rng.standard_normal((n, 4)) + np.array([1.0, 0, 0, 0]) * 1e-3,
        scales=np.exp(rng.uniform(np.log(0.02), np.log(0.25), (n, 3))),
        opacities=sigmoid(rng.uniform(-2.5, 0.0, n)),
        sh=rng.standard_normal((n, 16, 3)) * np.array([0.6] + [0.05] * 15)[None, :, None],
        group=(rng.random(n) < 0.3).astype(np.uint8),
    )
    return splats, camera


def check_oracle_equivalence(
    seeds: int = 20, n: int = 200, size: int = 64, tol: float = 1e-5
) -> CheckResult:
    worst = 0.0
    for seed in range(seeds):
        splats, camera = random_scene(seed, n, size, size)
        tiled = render(splats, camera)
        ref = render_reference(splats, camera)
        worst = max(worst, float(np.abs(tiled.color - ref.color).max()))
    return CheckResult(
        "rasterizer-oracle-equivalence",
        worst < tol,
        f"max per-channel diff {worst:.3g} over {seeds} scenes (tol {tol:g})",
    )


def gradcheck_scene(seed: int, n: int = 20, size: int = 16):
    splats, camera = random_scene(seed, n, size, size)
    rng = np.random.default_rng(10_000 + seed)
    dl = rng.random((size, size, 3))
    return splats, camera, dl


def _loss(splats: SplatArrays, camera: CameraRig, dl: np.ndarray, options: RenderOptions) -> float:
    return float((render(splats, camera, options).color * dl).sum())


def check_gradients(
    seeds: int = 3,
    n: int = 20,
    size: int = 16,
    tol: float = 1e-3,
    h_sh: float = 1e-4,
    h_logit: float = 1e-3,
) -> CheckResult:
    options = RenderOptions()
    worst = 0.0
    for seed in range(seeds):
        splats, camera, dl = gradcheck_scene(seed, n, size)
        _, state = render(splats, camera, options, retain=True)
        dsh_dc, dsh_rest, dlogit = render_backward(state, dl)

        logits = logit(splats.opacities)
        for g in range(splats.count):
            for delta, out in ((h_logit, 1), (-h_logit, -1)):
                lo = logits.copy()
                lo[g] += delta
                s2 = SplatArrays(
                    splats.positions,
                    splats.rotations,
                    splats.scales,
                    sigmoid(lo),
                    splats.sh,
                    splats.group,
                )
                if out > 0:
                    up = _loss(s2, camera, dl, options)
                else:
                    dn = _loss(s2, camera, dl, options)
            fd = (up - dn) / (2 * h_logit)
            an = dlogit[g]
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-3))

        analytic = np.concatenate([dsh_dc[:, None, :], dsh_rest], axis=1)
        rng = np.random.default_rng(777 + seed)
        for _ in range(30):  # sampled SH coefficients
            g = int(rng.integers(splats.count))
            k = int(rng.integers(16))
            ch = int(rng.integers(3))
            sh_up = splats.sh.copy()
            sh_up[g, k, ch] += h_sh
            sh_dn = splats.sh.copy()
            sh_dn[g, k, ch] -= h_sh
            up = _loss(
                SplatArrays(
                    splats.positions, splats.rotations, splats.scales,
                    splats.opacities, sh_up, splats.group,
                ),
                camera, dl, options,
            )
            dn = _loss(
                SplatArrays(
                    splats.positions, splats.rotations, splats.scales,
                    splats.opacities, sh_dn, splats.group,
                ),
                camera, dl, options,
            )
            fd = (up - dn) / (2 * h_sh)
            an = analytic[g, k, ch]
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-3))
    return CheckResult(
        "gradient-fidelity",
        worst < tol,
        f"max relative error {worst:.3g} over {seeds} scenes (tol {tol:g})",
    )


def check_covariance_spectrum(draws: int = 10_000, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(draws):
        q = rng.standard_normal(4)
        s = np.exp(rng.uniform(-2, 1, 3))
        cov = build_covariance(q, s)
        eig = np.sort(np.linalg.eigvalsh(cov))
        worst = max(worst, float(np.abs(eig - np.sort(s * s)).max()))
    return CheckResult(
        "covariance-spectrum",
        worst < tol,
        f"max eigenvalue deviation {worst:.3g} over {draws} draws (tol {tol:g})",
    )


def check_binding_roundtrip(tol: float = 1e-7) -> CheckResult:
    model = make_synthetic_head(seed=11)
    mesh = pose_mesh(model, HeadParams.neutral(model))
    cloud, binding, _ = bind_to_mesh(mesh, gaussians_per_triangle=1)
    mu, q, s = drive(binding, mesh)
    err = max(
        float(np.abs(mu - cloud.positions).max()),
        float(np.abs(s - cloud.scales()).max()),
        float(np.abs(q - cloud.rotations).max()),
    )
    return CheckResult(
        "binding-roundtrip", err < tol, f"max drive/bind deviation {err:.3g} (tol {tol:g})"
    )


def check_alignment(problems: int = 1000, tol: float = 1e-9) -> CheckResult:
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(problems):
        def rand_rigid():
            return RigidTransform(
                quat_to_rotation(quat_from_axis_angle(rng.uniform(-np.pi, np.pi, 3))),
                rng.uniform(-2, 2, 3),
                validate=False,
            )

        problem = AlignmentProblem(
            w2c_head=rand_rigid(),
            w2c_background=rand_rigid(),
            head_rotation=quat_to_rotation(quat_from_axis_angle(rng.uniform(-np.pi, np.pi, 3))),
            head_translation=rng.uniform(-1, 1, 3),
            root_joint=rng.uniform(-1, 1, 3),
        )
        solution = solve_alignment(problem)
        worst = max(worst, alignment_residual(problem, solution, rng.uniform(-3, 3, (20, 3))))
    return CheckResult(
        "alignment-residual",
        worst < tol,
        f"max substitution residual {worst:.3g} over {problems} problems (tol {tol:g})",
    )


def priority_example() -> tuple[np.ndarray, np.ndarray]:
    """The two-coincident-Gaussian compositing fixture.

    Returns the pixel color at the shared center with and without head
    priority on the farther (blue) splat.
    """
    from .sh import SH_C0

    camera = CameraRig(
        width=17, height=17, fx=40.0, fy=40.0, cx=8.5, cy=8.5,
        world_to_camera=RigidTransform.identity(), near=0.1, far=50.0,
    )

    def splat_pair(groups):
        sh = np.zeros((2, 16, 3))
        sh[0, 0, :] = (np.array([1.0, 0.0, 0.0]) - 0.5) / SH_C0  # red, depth 1
        sh[1, 0, :] = (np.array([0.0, 0.0, 1.0]) - 0.5) / SH_C0  # blue, depth 2
        return SplatArrays(
            positions=np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]),
            rotations=np.tile(np.array([1.0, 0, 0, 0]), (2, 1)),
            scales=np.full((2, 3), 0.05),
            opacities=np.array([0.5, 0.5]),
            sh=sh,
            group=np.asarray(groups, dtype=np.uint8),
        )

    plain = render(splat_pair([0, 0]), camera).color[8, 8]
    prioritized = render(splat_pair([1, 0]), camera).color[8, 8]  # blue is head now
    return plain, prioritized


def check_priority(tol: float = 1e-9) -> CheckResult:
    plain, prioritized = priority_example()
    err = max(
        float(np.abs(plain - [0.5, 0.0, 0.25]).max()),
        float(np.abs(prioritized - [0.25, 0.0, 0.5]).max()),
    )
    return CheckResult(
        "priority-compositing", err < tol, f"max deviation from derived colors {err:.3g}"
    )


def benchmark_tiled_vs_reference(
    n: int = 50_000, size: int = 512, min_speedup: float = 5.0
) -> CheckResult:
    splats, camera = random_scene(42, n, size, size)
    render(splats, camera)  # warm the JIT path at full shape
    t0 = time.perf_counter()
    render(splats, camera)
    tiled_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    render_reference(splats, camera)
    ref_s = time.perf_counter() - t0
    speedup = ref_s / tiled_s
    return CheckResult(
        "tiled-vs-reference-throughput",
        speedup >= min_speedup,
        f"tiled {1.0 / tiled_s:.2f} FPS ({tiled_s * 1e3:.1f} ms), reference "
        f"{1.0 / ref_s:.3f} FPS ({ref_s:.2f} s), speedup {speedup:.1f}x "
        f"(gate {min_speedup:g}x) on {n} Gaussians at {size}x{size}",
    )


def run_all(include_benchmark: bool = True) -> list[CheckResult]:
    checks = [
        check_covariance_spectrum(),
        check_binding_roundtrip(),
        check_alignment(),
        check_priority(),
        check_oracle_equivalence(),
        check_gradients(),
    ]
    if include_benchmark:
        checks.append(benchmark_tiled_vs_reference())
    return checks
