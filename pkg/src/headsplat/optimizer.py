"""Appearance-transfer training loop.

Fits head-Gaussian color (SH) and opacity to multi-view 2D guidance under
facial masks: per iteration one guidance record is sampled, the bound
cloud is driven by that record's head parameters, rendered, scored with
masked pixel losses, and the analytic appearance gradients are stepped
with Adam. Updates are restricted to the trainable set (head Gaussians
whose projection lands inside the facial mask in enough views); the
learning-rate schedule is the configured base rates divided by the
reduction factor with cosine decay to 10% over the run. Opacity reset is
never performed.
"""

from __future__ import annotations

import csv
import math
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .binding import TriangleBinding, apply_drive
from .camera import CameraRig
from .cloud import GaussianCloud
from .errors import InvalidInputError, NumericalError, ParseError
from .guidance import GuidanceSet
from .headmodel import HeadModel, pose_mesh
from .rasterizer import RenderOptions, SplatArrays, render, render_backward
from .rasters import load_raster, save_raster


@dataclass(frozen=True)
class OptimConfig:
    lr_sh_dc: float = 0.0025
    lr_sh_rest: float = 0.000125
    lr_opacity: float = 0.05
    lr_reduction_factor: float = 10.0  # extra /10 for the face-swap stage
    iterations: int = 1000
    w_l1: float = 0.8
    w_ssim: float = 0.2
    reg_lambda: float = 1e-3
    w_hook: float = 0.0
    mask_mode: str = "vote"
    mask_fraction: float = 0.5  # rho: min fraction of in-frustum views inside the mask
    snapshot_interval: int = 0
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.iterations <= 0:
            raise InvalidInputError("iterations must be positive")
        if min(self.lr_sh_dc, self.lr_sh_rest, self.lr_opacity, self.lr_reduction_factor) <= 0:
            raise InvalidInputError("learning rates and reduction factor must be positive")
        if min(self.w_l1, self.w_ssim, self.reg_lambda, self.w_hook) < 0:
            raise InvalidInputError("loss weights must be nonnegative")
        if self.mask_mode != "vote":
            raise InvalidInputError(f"unknown mask mode {self.mask_mode!r}")
        if not (0.0 < self.mask_fraction <= 1.0):
            raise InvalidInputError("mask_fraction must be in (0, 1]")


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for one named parameter block."""

    name: str
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, name: str, param: np.ndarray, config: OptimConfig | None = None) -> "AdamState":
        kw = {}
        if config is not None:
            kw = {"beta1": config.adam_beta1, "beta2": config.adam_beta2, "eps": config.adam_eps}
        return cls(name, np.zeros_like(param, dtype=np.float64),
                   np.zeros_like(param, dtype=np.float64), **kw)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One in-place Adam update; returns ``param``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != param.shape:
        raise InvalidInputError(
            f"parameter block {state.name!r}: gradient shape {grad.shape} != {param.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite gradient in parameter block {state.name!r}")
    state.step += 1
    state.m += (1.0 - state.beta1) * (grad - state.m)
    state.v += (1.0 - state.beta2) * (grad * grad - state.v)
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return param


_SSIM_WIN = 7
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _ssim_filter(image: np.ndarray) -> np.ndarray:
    # zero-padded uniform window; the operator is symmetric, hence its own
    # adjoint, which keeps the gradient below exact
    return uniform_filter(image, size=_SSIM_WIN, mode="constant", cval=0.0)


def ssim_with_gradient(x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean structural similarity of two HxWxC images in [0, 1] plus the
    exact gradient of that mean w.r.t. ``x``.

    Uniform 7x7 window, zero padding, biased variances; the score is
    averaged over pixels and channels.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
        y = y[:, :, None]
    h, w, c = x.shape
    total = 0.0
    grad = np.zeros_like(x)
    inv_count = 1.0 / (h * w * c)
    for ch in range(c):
        xc, yc = x[:, :, ch], y[:, :, ch]
        mu_x = _ssim_filter(xc)
        mu_y = _ssim_filter(yc)
        var_x = _ssim_filter(xc * xc) - mu_x * mu_x
        var_y = _ssim_filter(yc * yc) - mu_y * mu_y
        cov = _ssim_filter(xc * yc) - mu_x * mu_y

        a1 = 2.0 * mu_x * mu_y + _SSIM_C1
        a2 = 2.0 * cov + _SSIM_C2
        b1 = mu_x * mu_x + mu_y * mu_y + _SSIM_C1
        b2 = var_x + var_y + _SSIM_C2
        s = (a1 * a2) / (b1 * b2)
        total += float(s.sum()) * inv_count

        g_mu = inv_count * (2.0 * mu_y * a2 / (b1 * b2) - 2.0 * mu_x * a1 * a2 / (b1 * b1 * b2))
        g_var = inv_count * (-a1 * a2 / (b1 * b2 * b2))
        g_cov = inv_count * (2.0 * a1 / (b1 * b2))
        grad[:, :, ch] = (
            _ssim_filter(g_mu)
            + 2.0 * xc * _ssim_filter(g_var)
            - 2.0 * _ssim_filter(g_var * mu_x)
            + yc * _ssim_filter(g_cov)
            - _ssim_filter(g_cov * mu_y)
        )
    return total, grad


class SubprocessLossHook:
    """Perceptual-loss slot backed by an external process.

    The command is invoked as ``cmd <rendered.raster> <guidance.raster>
    <out_dir>`` and must write ``out_dir/loss.txt`` (one float) and
    ``out_dir/grad.raster`` (HxWx3 float32, d loss / d rendered).
    """

    def __init__(self, command: list[str]):
        self.command = list(command)

    def __call__(self, rendered: np.ndarray, guidance: np.ndarray) -> tuple[float, np.ndarray]:
        with tempfile.TemporaryDirectory(prefix="headsplat-hook-") as tmp:
            tmp = Path(tmp)
            save_raster(tmp / "rendered.raster", rendered)
            save_raster(tmp / "guidance.raster", guidance)
            out_dir = tmp / "out"
            out_dir.mkdir()
            proc = subprocess.run(
                self.command + [str(tmp / "rendered.raster"), str(tmp / "guidance.raster"), str(out_dir)],
                capture_output=True,
                text=True,
            )
            if proc.returncode != 0:
                raise NumericalError(f"loss hook failed: {proc.stderr.strip()[:500]}")
            try:
                loss = float((out_dir / "loss.txt").read_text().strip())
            except (FileNotFoundError, ValueError) as exc:
                raise ParseError(f"loss hook wrote no valid loss.txt: {exc}") from exc
            grad = load_raster(out_dir / "grad.raster")
        if grad.shape != rendered.shape:
            raise ParseError(
                f"loss hook gradient shape {grad.shape} != rendered {rendered.shape}"
            )
        return loss, grad


def compute_loss(
    rendered: np.ndarray,
    guidance: np.ndarray,
    mask: np.ndarray,
    config: OptimConfig,
    hook=None,
) -> tuple[float, np.ndarray, dict]:
    """Masked L1 + structural-dissimilarity (+ optional hook term).

    Returns (total loss, d loss / d rendered image, per-term dict). The L1
    subgradient at zero is 0; the structural term compares mask-multiplied
    images so an all-zero mask yields exactly zero loss and gradient.
    """
    rendered = np.asarray(rendered, dtype=np.float64)
    guidance = np.asarray(guidance, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if rendered.shape != guidance.shape or rendered.shape[:2] != mask.shape:
        raise InvalidInputError(
            f"shape mismatch: rendered {rendered.shape}, guidance {guidance.shape},"
            f" mask {mask.shape}"
        )
    mask3 = mask[:, :, None]
    n_elems = rendered.size
    grad = np.zeros_like(rendered)
    terms: dict[str, float] = {}

    diff = (rendered - guidance) * mask3
    l1 = float(np.abs(diff).sum() / n_elems)
    terms["l1"] = l1
    if config.w_l1 > 0:
        grad += config.w_l1 * np.sign(diff) * mask3 / n_elems

    if config.w_ssim > 0:
        ssim_val, ssim_grad = ssim_with_gradient(rendered * mask3, guidance * mask3)
        terms["ssim"] = float(1.0 - ssim_val)
        grad += config.w_ssim * (-ssim_grad) * mask3
    else:
        terms["ssim"] = 0.0

    terms["hook"] = 0.0
    if hook is not None and config.w_hook > 0:
        hook_loss, hook_grad = hook(rendered, guidance)
        terms["hook"] = float(hook_loss)
        grad += config.w_hook * np.asarray(hook_grad, dtype=np.float64)

    total = config.w_l1 * l1 + config.w_ssim * terms["ssim"] + config.w_hook * terms["hook"]
    return float(total), grad, terms


def select_trainable(
    cloud: GaussianCloud,
    masks: list[np.ndarray],
    cameras: list[CameraRig],
    rho: float = 0.5,
    driven_positions: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Boolean mask of Gaussians eligible for appearance updates.

    A Gaussian is trainable iff it is head-group and its projected center
    lies inside the facial mask in at least ``rho`` of the views where it
    is in-frustum. ``driven_positions`` supplies per-view world positions
    (defaults to the cloud's own positions for every view).
    """
    if not masks:
        raise InvalidInputError("need at least one view")
    if len(masks) != len(cameras):
        raise InvalidInputError("need one mask per camera")
    n = cloud.count
    in_count = np.zeros(n, dtype=np.int64)
    hit_count = np.zeros(n, dtype=np.int64)
    for k, (mask, camera) in enumerate(zip(masks, cameras)):
        mask = np.asarray(mask)
        if mask.shape != (camera.height, camera.width):
            raise InvalidInputError(
                f"view {k}: mask shape {mask.shape} != camera size"
                f" {(camera.height, camera.width)}"
            )
        positions = cloud.positions if driven_positions is None else driven_positions[k]
        uv, z = camera.project(positions)
        cols = np.floor(uv[:, 0]).astype(np.int64)
        rows = np.floor(uv[:, 1]).astype(np.int64)
        inside = (
            (z > camera.near)
            & (z < camera.far)
            & (cols >= 0)
            & (cols < camera.width)
            & (rows >= 0)
            & (rows < camera.height)
        )
        in_count += inside
        rows_c = np.clip(rows, 0, camera.height - 1)
        cols_c = np.clip(cols, 0, camera.width - 1)
        hit_count += inside & (mask[rows_c, cols_c] != 0)

    with np.errstate(invalid="ignore"):
        fraction = np.where(in_count > 0, hit_count / np.maximum(in_count, 1), 0.0)
    return (cloud.group == 0) & (in_count > 0) & (fraction >= rho)


def _lr_schedule(config: OptimConfig, iteration: int) -> float:
    # cosine decay from 1 to 0.1 across the run, on top of the /reduction
    progress = iteration / max(config.iterations - 1, 1)
    return (0.1 + 0.9 * 0.5 * (1.0 + math.cos(math.pi * progress))) / config.lr_reduction_factor


@dataclass
class OptimResult:
    cloud: GaussianCloud
    trainable: np.ndarray
    history: list[dict] = field(default_factory=list)


def save_loss_history(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "total", "l1", "ssim", "reg", "hook"])
        for row in history:
            writer.writerow(
                [row["iteration"]]
                + [f"{row[k]:.9g}" for k in ("total", "l1", "ssim", "reg", "hook")]
            )


def optimize_appearance(
    cloud: GaussianCloud,
    binding: TriangleBinding,
    model: HeadModel,
    guidance: GuidanceSet,
    config: OptimConfig = OptimConfig(),
    options: RenderOptions = RenderOptions(),
    hook=None,
    snapshot_dir=None,
) -> OptimResult:
    """Fit head-Gaussian appearance to the guidance set; fully
    deterministic given ``config.seed``."""
    working = cloud.copy()

    meshes = [pose_mesh(model, rec.params) for rec in guidance]
    driven = [apply_drive(working, binding, mesh) for mesh in meshes]
    trainable = select_trainable(
        working,
        [rec.mask for rec in guidance],
        [rec.camera for rec in guidance],
        rho=config.mask_fraction,
        driven_positions=[d.positions for d in driven],
    )
    if not np.any(trainable):
        raise InvalidInputError("trainable set is empty; check masks and cameras")

    sh0 = working.sh[trainable].copy()
    logit0 = working.opacity_logits[trainable].copy()

    states = {
        "sh_dc": AdamState.like("sh_dc", working.sh[:, 0, :], config),
        "sh_rest": AdamState.like("sh_rest", working.sh[:, 1:, :], config),
        "opacity": AdamState.like("opacity", working.opacity_logits, config),
    }
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []

    for iteration in range(config.iterations):
        rec_idx = int(rng.integers(len(guidance)))
        rec = guidance.records[rec_idx]
        current = apply_drive(working, binding, meshes[rec_idx])
        out, state = render(SplatArrays.from_cloud(current), rec.camera, options, retain=True)
        total, grad_img, terms = compute_loss(out.color, rec.image, rec.mask, config, hook)

        dsh_dc, dsh_rest, dlogit = render_backward(state, grad_img)

        reg = 0.0
        if config.reg_lambda > 0:
            d_sh = working.sh[trainable] - sh0
            d_logit = working.opacity_logits[trainable] - logit0
            reg = config.reg_lambda * (
                float((d_logit**2).mean()) + float((d_sh**2).mean())
            )
            grad_sh_reg = np.zeros_like(working.sh)
            grad_sh_reg[trainable] = 2.0 * config.reg_lambda * d_sh / d_sh.size
            grad_logit_reg = np.zeros_like(working.opacity_logits)
            grad_logit_reg[trainable] = 2.0 * config.reg_lambda * d_logit / d_logit.size
            dsh_dc = dsh_dc + grad_sh_reg[:, 0, :]
            dsh_rest = dsh_rest + grad_sh_reg[:, 1:, :]
            dlogit = dlogit + grad_logit_reg
        total += reg

        # appearance outside the trainable set never moves
        dsh_dc[~trainable] = 0.0
        dsh_rest[~trainable] = 0.0
        dlogit[~trainable] = 0.0

        scale = _lr_schedule(config, iteration)
        adam_step(working.sh[:, 0, :], dsh_dc, states["sh_dc"], config.lr_sh_dc * scale)
        adam_step(working.sh[:, 1:, :], dsh_rest, states["sh_rest"], config.lr_sh_rest * scale)
        adam_step(working.opacity_logits, dlogit, states["opacity"], config.lr_opacity * scale)
        # Adam moves every entry its gradient touched; re-pin the frozen set
        working.sh[~trainable] = cloud.sh[~trainable]
        working.opacity_logits[~trainable] = cloud.opacity_logits[~trainable]

        history.append(
            {
                "iteration": iteration,
                "total": total,
                "l1": terms["l1"],
                "ssim": terms["ssim"],
                "reg": reg,
                "hook": terms["hook"],
            }
        )
        if (
            snapshot_dir is not None
            and config.snapshot_interval > 0
            and (iteration + 1) % config.snapshot_interval == 0
        ):
            from .splatio import save_splat_file

            Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
            save_splat_file(working, Path(snapshot_dir) / f"iter_{iteration + 1:06d}.ply")

    return OptimResult(cloud=working, trainable=trainable, history=history)
