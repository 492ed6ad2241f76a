"""Tile-based CPU splatting rasterizer.

Gaussians are projected to screen-space ellipses (EWA: the 2D covariance
is J W Sigma W^T J^T plus a 0.3-pixel low-pass term, with J the
perspective Jacobian at the center and W the camera rotation), sorted
front to back, binned to 16x16 pixel tiles by their 3-sigma screen
footprint, and alpha-composited per pixel with early termination once
transmittance drops below 1e-4.

The splat kernel has compact support: a Gaussian contributes nothing
beyond its 3-sigma ellipse (Mahalanobis distance squared > 9). The
cutoff is part of the kernel, not an artifact of binning, so a
brute-force all-Gaussians-per-pixel evaluation reproduces the tiled
result exactly.

Pixel (row i, col j) samples the continuous image point (x=j, y=i), so a
Gaussian on the optical axis peaks at (cx, cy). Depth is expected depth:
the alpha-weighted mean of center depths, normalized by accumulated
alpha, 0 where nothing rendered.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .gaussians import GaussianCloud, covariance
from .transforms import quat_from_matrix, quat_to_matrix

TILE = 16
LOWPASS = 0.3
SUPPORT_CHI2 = 9.0  # 3-sigma ellipse
MIN_TRANSMITTANCE = 1e-4


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float
    far: float
    quad: tuple[float, float, float, float]  # world-to-camera rotation
    t: tuple[float, float, float]  # world-to-camera translation

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError("need 0 < near < far")
        if self.width < 1 or self.height < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(np.asarray(self.quad, dtype=float))

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + np.asarray(self.t, dtype=float)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "near": self.near, "far": self.far,
            "pose": {"quad": list(self.quad), "t": list(self.t)},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Camera":
        pose = doc["pose"]
        return cls(
            fx=float(doc["fx"]), fy=float(doc["fy"]),
            cx=float(doc["cx"]), cy=float(doc["cy"]),
            width=int(doc["width"]), height=int(doc["height"]),
            near=float(doc["near"]), far=float(doc["far"]),
            quad=tuple(float(v) for v in pose["quad"]),
            t=tuple(float(v) for v in pose["t"]),
        )


def look_at_camera(
    eye,
    target,
    width: int = 256,
    height: int = 256,
    fov_deg: float = 60.0,
    up=(0.0, 0.0, 1.0),
    near: float | None = None,
    far: float | None = None,
) -> Camera:
    """Pinhole camera at ``eye`` looking toward ``target`` (+z up world)."""
    eye = np.asarray(eye, dtype=float)
    target = np.asarray(target, dtype=float)
    forward = target - eye
    dist = np.linalg.norm(forward)
    if dist < 1e-12:
        raise ValueError("eye and target coincide")
    forward = forward / dist
    up = np.asarray(up, dtype=float)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:  # looking straight along up
        right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])  # rows: camera axes in world frame
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(
        fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height,
        near=near if near is not None else max(1e-3, 0.05 * dist),
        far=far if far is not None else 20.0 * dist,
        quad=tuple(quat_from_matrix(rot)),
        t=tuple(-rot @ eye),
    )


@dataclass
class RenderOutput:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    depth: np.ndarray  # (H, W), 0 where alpha is 0
    alpha: np.ndarray  # (H, W) in [0, 1]


def project(center, sigma, cam: Camera):
    """Project one Gaussian; returns (mean2d, cov2d, depth) or None if culled."""
    mean2d, cov2d, depth, kept = _project_batch(
        np.asarray(center, dtype=float).reshape(1, 3),
        np.asarray(sigma, dtype=float).reshape(1, 3, 3),
        cam,
    )
    if not kept[0]:
        return None
    return mean2d[0], cov2d[0], float(depth[0])


def _project_batch(centers: np.ndarray, sigmas: np.ndarray, cam: Camera):
    """Vectorized EWA projection. Returns screen means, 2D covariances,
    depths and the in-frustum mask (outputs are compacted to kept rows)."""
    rot = cam.rotation
    pc = centers @ rot.T + np.asarray(cam.t, dtype=float)
    z = pc[:, 2]
    kept = (z > cam.near) & (z < cam.far)
    pc = pc[kept]
    z = z[kept]
    if len(pc) == 0:
        return np.zeros((0, 2)), np.zeros((0, 2, 2)), z, kept

    x, y = pc[:, 0], pc[:, 1]
    inv_z = 1.0 / z
    mean2d = np.stack([cam.fx * x * inv_z + cam.cx, cam.fy * y * inv_z + cam.cy], axis=1)

    zeros = np.zeros_like(z)
    jac = np.stack(
        [
            np.stack([cam.fx * inv_z, zeros, -cam.fx * x * inv_z**2], axis=1),
            np.stack([zeros, cam.fy * inv_z, -cam.fy * y * inv_z**2], axis=1),
        ],
        axis=1,
    )  # (N, 2, 3)
    m = jac @ rot
    cov2d = m @ sigmas[kept] @ np.swapaxes(m, 1, 2)
    cov2d[:, 0, 0] += LOWPASS
    cov2d[:, 1, 1] += LOWPASS
    return mean2d, cov2d, z, kept


def render(
    cloud: GaussianCloud,
    cam: Camera,
    background=(0.0, 0.0, 0.0),
    tile_size: int = TILE,
) -> RenderOutput:
    """Rasterize a composed cloud. Deterministic: depth ties break by index."""
    h, w = cam.height, cam.width
    bg = np.asarray(background, dtype=float)
    rgb = np.tile(bg, (h, w, 1))
    depth_img = np.zeros((h, w))
    alpha_img = np.zeros((h, w))
    if len(cloud) == 0:
        return RenderOutput(rgb=rgb, depth=depth_img, alpha=alpha_img)

    sigmas = covariance(cloud.s, cloud.q)
    mean2d, cov2d, z, kept = _project_batch(cloud.p, sigmas, cam)
    if len(z) == 0:
        return RenderOutput(rgb=rgb, depth=depth_img, alpha=alpha_img)
    colors = cloud.c[kept]
    alphas = cloud.alpha[kept]

    order = np.lexsort((np.arange(len(z)), z))  # front to back, ties by index
    mean2d, cov2d, z = mean2d[order], cov2d[order], z[order]
    colors, alphas = colors[order], alphas[order]

    a = cov2d[:, 0, 0]
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1]
    det = a * c - b * b
    conic = np.stack([c / det, -b / det, a / det], axis=1)  # inv: [ia, ib, ic]
    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = 3.0 * np.sqrt(lam_max)

    tiles_x = (w + tile_size - 1) // tile_size
    tiles_y = (h + tile_size - 1) // tile_size
    bins: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]
    for g in range(len(z)):
        x0 = int(np.clip((mean2d[g, 0] - radius[g]) // tile_size, 0, tiles_x - 1))
        x1 = int(np.clip((mean2d[g, 0] + radius[g]) // tile_size, 0, tiles_x - 1))
        y0 = int(np.clip((mean2d[g, 1] - radius[g]) // tile_size, 0, tiles_y - 1))
        y1 = int(np.clip((mean2d[g, 1] + radius[g]) // tile_size, 0, tiles_y - 1))
        if mean2d[g, 0] + radius[g] < 0 or mean2d[g, 0] - radius[g] > w - 1:
            continue
        if mean2d[g, 1] + radius[g] < 0 or mean2d[g, 1] - radius[g] > h - 1:
            continue
        for ty in range(y0, y1 + 1):
            for tx in range(x0, x1 + 1):
                bins[ty * tiles_x + tx].append(g)

    for ty in range(tiles_y):
        rows = np.arange(ty * tile_size, min((ty + 1) * tile_size, h))
        for tx in range(tiles_x):
            ids = bins[ty * tiles_x + tx]
            if not ids:
                continue
            cols = np.arange(tx * tile_size, min((tx + 1) * tile_size, w))
            px, py = np.meshgrid(cols.astype(float), rows.astype(float))
            idx = np.asarray(ids)

            dx = px[..., None] - mean2d[idx, 0]
            dy = py[..., None] - mean2d[idx, 1]
            chi2 = (
                conic[idx, 0] * dx * dx
                + 2.0 * conic[idx, 1] * dx * dy
                + conic[idx, 2] * dy * dy
            )
            gauss = np.where(chi2 <= SUPPORT_CHI2, np.exp(-0.5 * chi2), 0.0)
            contrib = alphas[idx] * gauss  # (th, tw, G), front to back

            trans_after = np.cumprod(1.0 - contrib, axis=-1)
            trans_before = np.concatenate(
                [np.ones_like(trans_after[..., :1]), trans_after[..., :-1]], axis=-1
            )
            weight = np.where(trans_before >= MIN_TRANSMITTANCE, trans_before * contrib, 0.0)

            acc = weight.sum(axis=-1)
            tile_rgb = weight @ colors[idx] + (1.0 - acc)[..., None] * bg
            tile_depth_sum = weight @ z[idx]

            sl = np.s_[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
            rgb[sl] = tile_rgb
            alpha_img[sl] = acc
            depth_img[sl] = np.where(acc > 0, tile_depth_sum / np.maximum(acc, 1e-300), 0.0)

    return RenderOutput(rgb=np.clip(rgb, 0.0, 1.0), depth=depth_img, alpha=alpha_img)


def save_render(out: RenderOutput, rgb_path, depth_path, sidecar_path) -> None:
    """Write rgb as 8-bit PNG, depth as 16-bit PNG + linear-range sidecar."""
    rgb8 = np.round(np.clip(out.rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(rgb8, mode="RGB").save(rgb_path)

    dmax = float(out.depth.max())
    if dmax > 0:
        scaled = np.round(out.depth / dmax * 65535.0).astype(np.uint16)
    else:
        scaled = np.zeros_like(out.depth, dtype=np.uint16)
    Image.fromarray(scaled).save(depth_path)
    with open(sidecar_path, "w") as fh:
        json.dump(
            {"depth_min": 0.0, "depth_max": dmax, "encoding": "linear", "bits": 16},
            fh,
            indent=2,
        )
        fh.write("\n")


def encode_rgb_png(out: RenderOutput) -> bytes:
    import io

    rgb8 = np.round(np.clip(out.rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(rgb8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def encode_depth_png(out: RenderOutput) -> tuple[bytes, dict]:
    import io

    dmax = float(out.depth.max())
    if dmax > 0:
        scaled = np.round(out.depth / dmax * 65535.0).astype(np.uint16)
    else:
        scaled = np.zeros_like(out.depth, dtype=np.uint16)
    buf = io.BytesIO()
    Image.fromarray(scaled).save(buf, format="PNG")
    return buf.getvalue(), {"depth_min": 0.0, "depth_max": dmax, "encoding": "linear", "bits": 16}
