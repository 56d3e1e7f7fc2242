"""Z-buffered depth rasterization of a posed triangle mesh.

Both triangle facings are rendered and the nearest surface wins per
pixel. Depth is perspective-correct (1/z interpolated across the screen
triangle), so planar surfaces reproduce the exact ray-plane depth.
Empty pixels read +inf. Triangles with any vertex at or behind the near
plane are skipped (no clipping), as are zero-area triangles.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .camera import CameraRig
from .headmodel import PosedMesh


@njit(cache=True)
def _raster_depth(uv, z, faces, width, height, near, far, depth):
    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f, 0], faces[f, 1], faces[f, 2]
        z0, z1, z2 = z[i0], z[i1], z[i2]
        if z0 <= near or z1 <= near or z2 <= near:
            continue
        if z0 >= far and z1 >= far and z2 >= far:
            continue
        x0, y0 = uv[i0, 0], uv[i0, 1]
        x1, y1 = uv[i1, 0], uv[i1, 1]
        x2, y2 = uv[i2, 0], uv[i2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        xmin = min(x0, min(x1, x2))
        xmax = max(x0, max(x1, x2))
        ymin = min(y0, min(y1, y2))
        ymax = max(y0, max(y1, y2))
        # pixel centers are at (col + 0.5, row + 0.5)
        c0 = max(0, int(np.ceil(xmin - 0.5)))
        c1 = min(width - 1, int(np.floor(xmax - 0.5)))
        r0 = max(0, int(np.ceil(ymin - 0.5)))
        r1 = min(height - 1, int(np.floor(ymax - 0.5)))
        inv_z0, inv_z1, inv_z2 = 1.0 / z0, 1.0 / z1, 1.0 / z2
        for row in range(r0, r1 + 1):
            py = row + 0.5
            for col in range(c0, c1 + 1):
                px = col + 0.5
                w0 = (x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)
                w1 = (x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)
                w2 = (x0 - px) * (y1 - py) - (x1 - px) * (y0 - py)
                b0 = w0 / area
                b1 = w1 / area
                b2 = w2 / area
                if b0 < 0.0 or b1 < 0.0 or b2 < 0.0:
                    continue
                d = 1.0 / (b0 * inv_z0 + b1 * inv_z1 + b2 * inv_z2)
                if near < d < far and d < depth[row, col]:
                    depth[row, col] = d


def rasterize_mesh_depth(mesh: PosedMesh, camera: CameraRig) -> np.ndarray:
    """Render the mesh's depth as seen from ``camera``; (H, W) float64 meters."""
    uv, z = camera.project(mesh.vertices)
    depth = np.full((camera.height, camera.width), np.inf, dtype=np.float64)
    _raster_depth(
        np.ascontiguousarray(uv),
        np.ascontiguousarray(z),
        np.ascontiguousarray(mesh.faces.astype(np.int64)),
        camera.width,
        camera.height,
        camera.near,
        camera.far,
        depth,
    )
    return depth
