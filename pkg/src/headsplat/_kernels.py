"""Numba kernels behind the splat rasterizer.

All blending is float64 and strictly front-to-back in the caller-supplied
sorted order. Parallel kernels partition output pixels (tiles or rows),
never share accumulators, and therefore produce bit-identical images
regardless of worker count. fastmath stays off: the tiled and reference
paths must agree term-for-term, and the backward pass must replay the
forward arithmetic exactly.
"""

from __future__ import annotations

import math
import os

# prefer OpenMP unless the user picked a layer; the bundled TBB probe is
# noisy on older TBB builds and we need none of its features
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numpy as np
from numba import njit, prange


@njit(cache=True)
def build_tile_lists(means, radius, width, height, tile_size):
    """Bin splats (already in blend order) into tiles.

    Returns (offsets, items): tile t owns items[offsets[t]:offsets[t+1]],
    in blend order. A splat lands in every tile its support square
    [mean - r, mean + r] touches.
    """
    n_tx = (width + tile_size - 1) // tile_size
    n_ty = (height + tile_size - 1) // tile_size
    n_tiles = n_tx * n_ty
    m = means.shape[0]

    counts = np.zeros(n_tiles + 1, dtype=np.int64)
    rects = np.empty((m, 4), dtype=np.int64)
    for i in range(m):
        r = radius[i]
        cmin = int(math.ceil(means[i, 0] - r - 0.5))
        cmax = int(math.floor(means[i, 0] + r - 0.5))
        rmin = int(math.ceil(means[i, 1] - r - 0.5))
        rmax = int(math.floor(means[i, 1] + r - 0.5))
        if cmin < 0:
            cmin = 0
        if rmin < 0:
            rmin = 0
        if cmax > width - 1:
            cmax = width - 1
        if rmax > height - 1:
            rmax = height - 1
        rects[i, 0] = cmin
        rects[i, 1] = cmax
        rects[i, 2] = rmin
        rects[i, 3] = rmax
        if cmin > cmax or rmin > rmax:
            continue
        for ty in range(rmin // tile_size, rmax // tile_size + 1):
            for tx in range(cmin // tile_size, cmax // tile_size + 1):
                counts[ty * n_tx + tx + 1] += 1

    offsets = np.cumsum(counts)
    items = np.empty(offsets[-1], dtype=np.int64)
    cursor = offsets[:-1].copy()
    for i in range(m):
        cmin, cmax, rmin, rmax = rects[i, 0], rects[i, 1], rects[i, 2], rects[i, 3]
        if cmin > cmax or rmin > rmax:
            continue
        for ty in range(rmin // tile_size, rmax // tile_size + 1):
            for tx in range(cmin // tile_size, cmax // tile_size + 1):
                t = ty * n_tx + tx
                items[cursor[t]] = i
                cursor[t] += 1
    return offsets, items


@njit(cache=True, parallel=True)
def forward_tiled(
    means,
    conics,
    sigmas,
    colors,
    depths,
    radius,
    offsets,
    items,
    width,
    height,
    tile_size,
    alpha_max,
    alpha_cull,
    t_stop,
    background,
    out_color,
    out_alpha,
    out_depthsum,
    out_trans,
    out_last,
    out_count,
):
    n_tx = (width + tile_size - 1) // tile_size
    n_ty = (height + tile_size - 1) // tile_size
    for t in prange(n_tx * n_ty):
        ty = t // n_tx
        tx = t % n_tx
        start = offsets[t]
        end = offsets[t + 1]
        row1 = min((ty + 1) * tile_size, height)
        col1 = min((tx + 1) * tile_size, width)
        for row in range(ty * tile_size, row1):
            py = row + 0.5
            for col in range(tx * tile_size, col1):
                px = col + 0.5
                trans = 1.0
                cr = 0.0
                cg = 0.0
                cb = 0.0
                dsum = 0.0
                last = np.int64(0)
                count = np.int64(0)
                for pos in range(start, end):
                    i = items[pos]
                    dx = px - means[i, 0]
                    dy = py - means[i, 1]
                    r = radius[i]
                    if dx > r or dx < -r or dy > r or dy < -r:
                        continue
                    power = (
                        -0.5 * (conics[i, 0] * dx * dx + conics[i, 2] * dy * dy)
                        - conics[i, 1] * dx * dy
                    )
                    if power > 0.0:
                        continue
                    alpha = sigmas[i] * math.exp(power)
                    if alpha > alpha_max:
                        alpha = alpha_max
                    if alpha < alpha_cull:
                        continue
                    test_trans = trans * (1.0 - alpha)
                    if test_trans < t_stop:
                        break
                    w = alpha * trans
                    cr += colors[i, 0] * w
                    cg += colors[i, 1] * w
                    cb += colors[i, 2] * w
                    dsum += depths[i] * w
                    trans = test_trans
                    last = pos - start + 1
                    count += 1
                out_color[row, col, 0] = cr + trans * background[0]
                out_color[row, col, 1] = cg + trans * background[1]
                out_color[row, col, 2] = cb + trans * background[2]
                out_alpha[row, col] = 1.0 - trans
                out_depthsum[row, col] = dsum
                out_trans[row, col] = trans
                out_last[row, col] = last
                out_count[row, col] = count


@njit(cache=True, parallel=True)
def forward_reference(
    means,
    conics,
    sigmas,
    colors,
    depths,
    width,
    height,
    alpha_max,
    alpha_cull,
    t_stop,
    background,
    out_color,
    out_alpha,
    out_depthsum,
    out_trans,
    out_count,
):
    """Brute force: every splat evaluated at every pixel, same cutoffs."""
    m = means.shape[0]
    for row in prange(height):
        py = row + 0.5
        for col in range(width):
            px = col + 0.5
            trans = 1.0
            cr = 0.0
            cg = 0.0
            cb = 0.0
            dsum = 0.0
            count = np.int64(0)
            for i in range(m):
                dx = px - means[i, 0]
                dy = py - means[i, 1]
                power = (
                    -0.5 * (conics[i, 0] * dx * dx + conics[i, 2] * dy * dy)
                    - conics[i, 1] * dx * dy
                )
                if power > 0.0:
                    continue
                alpha = sigmas[i] * math.exp(power)
                if alpha > alpha_max:
                    alpha = alpha_max
                if alpha < alpha_cull:
                    continue
                test_trans = trans * (1.0 - alpha)
                if test_trans < t_stop:
                    break
                w = alpha * trans
                cr += colors[i, 0] * w
                cg += colors[i, 1] * w
                cb += colors[i, 2] * w
                dsum += depths[i] * w
                trans = test_trans
                count += 1
            out_color[row, col, 0] = cr + trans * background[0]
            out_color[row, col, 1] = cg + trans * background[1]
            out_color[row, col, 2] = cb + trans * background[2]
            out_alpha[row, col] = 1.0 - trans
            out_depthsum[row, col] = dsum
            out_trans[row, col] = trans
            out_count[row, col] = count


@njit(cache=True, parallel=True)
def backward_tiled(
    means,
    conics,
    sigmas,
    colors,
    radius,
    offsets,
    items,
    width,
    height,
    tile_size,
    alpha_max,
    alpha_cull,
    background,
    trans_final,
    last,
    dl_dpix,
    pair_dcolor,
    pair_dsigma,
):
    """Per-(tile, splat) partial gradients of the image w.r.t. splat color
    and opacity, replaying the forward blend in reverse order.

    Partials are keyed by position in ``items`` so tiles never share
    slots; the caller reduces them in fixed order.
    """
    n_tx = (width + tile_size - 1) // tile_size
    n_ty = (height + tile_size - 1) // tile_size
    for t in prange(n_tx * n_ty):
        ty = t // n_tx
        tx = t % n_tx
        start = offsets[t]
        row1 = min((ty + 1) * tile_size, height)
        col1 = min((tx + 1) * tile_size, width)
        for row in range(ty * tile_size, row1):
            py = row + 0.5
            for col in range(tx * tile_size, col1):
                px = col + 0.5
                n_last = last[row, col]
                if n_last == 0:
                    continue
                t_fin = trans_final[row, col]
                dl_r = dl_dpix[row, col, 0]
                dl_g = dl_dpix[row, col, 1]
                dl_b = dl_dpix[row, col, 2]
                trans = t_fin
                accum_r = 0.0
                accum_g = 0.0
                accum_b = 0.0
                last_alpha = 0.0
                last_r = 0.0
                last_g = 0.0
                last_b = 0.0
                for pos in range(start + n_last - 1, start - 1, -1):
                    i = items[pos]
                    dx = px - means[i, 0]
                    dy = py - means[i, 1]
                    r = radius[i]
                    if dx > r or dx < -r or dy > r or dy < -r:
                        continue
                    power = (
                        -0.5 * (conics[i, 0] * dx * dx + conics[i, 2] * dy * dy)
                        - conics[i, 1] * dx * dy
                    )
                    if power > 0.0:
                        continue
                    g_val = math.exp(power)
                    raw_alpha = sigmas[i] * g_val
                    alpha = raw_alpha
                    if alpha > alpha_max:
                        alpha = alpha_max
                    if alpha < alpha_cull:
                        continue
                    trans = trans / (1.0 - alpha)
                    w = alpha * trans
                    pair_dcolor[pos, 0] += w * dl_r
                    pair_dcolor[pos, 1] += w * dl_g
                    pair_dcolor[pos, 2] += w * dl_b
                    accum_r = last_alpha * last_r + (1.0 - last_alpha) * accum_r
                    accum_g = last_alpha * last_g + (1.0 - last_alpha) * accum_g
                    accum_b = last_alpha * last_b + (1.0 - last_alpha) * accum_b
                    dalpha = (
                        (colors[i, 0] - accum_r) * dl_r
                        + (colors[i, 1] - accum_g) * dl_g
                        + (colors[i, 2] - accum_b) * dl_b
                    ) * trans
                    dalpha -= (
                        t_fin
                        / (1.0 - alpha)
                        * (background[0] * dl_r + background[1] * dl_g + background[2] * dl_b)
                    )
                    last_r = colors[i, 0]
                    last_g = colors[i, 1]
                    last_b = colors[i, 2]
                    last_alpha = alpha
                    if raw_alpha < alpha_max:  # clamped alpha has zero opacity gradient
                        pair_dsigma[pos] += g_val * dalpha


@njit(cache=True)
def reduce_pairs(items, pair_dcolor, pair_dsigma, n_splats):
    """Fixed-order reduction of per-pair partials to per-splat gradients."""
    dcolor = np.zeros((n_splats, 3))
    dsigma = np.zeros(n_splats)
    for pos in range(items.shape[0]):
        i = items[pos]
        dcolor[i, 0] += pair_dcolor[pos, 0]
        dcolor[i, 1] += pair_dcolor[pos, 1]
        dcolor[i, 2] += pair_dcolor[pos, 2]
        dsigma[i] += pair_dsigma[pos]
    return dcolor, dsigma
