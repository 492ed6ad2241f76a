"""Object initialization, densification and pruning.

Pervasive objects (rain, snow, petals) start from a handful of uniform
random points inside their bounding box: condensation nuclei that later
densification grows. They also densify less often, by the adjustment
factor ``tau`` (frequency scales by tau, so the step interval lengthens
by 1/tau), and are pruned aggressively by scale: any Gaussian whose
largest axis exceeds ``rho`` is removed, which keeps scene-spanning
sparse elements from clumping into oversized blobs.

Conventional objects keep the standard recipe: clone small high-gradient
Gaussians, split large ones into two children at s / 1.6.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch
from .gaussians import GaussianCloud, load_ply
from .guide import InitSpec

SPLIT_SCALE_RATIO = 1.6
CLONE_JITTER = 0.01
INIT_ALPHA = 0.1
INIT_SIGMA_FRACTION = 0.01

DEFAULT_NU = 100
DEFAULT_TAU = 0.25
DEFAULT_ALPHA_MIN = 0.01
DEFAULT_GRAD_THRESHOLD = 2e-4
DEFAULT_RHO_FRACTION = 0.1


@dataclass(frozen=True)
class DensifyConfig:
    nu: int = DEFAULT_NU
    tau: float = DEFAULT_TAU
    rho: float = 0.1
    alpha_min: float = DEFAULT_ALPHA_MIN
    grad_threshold: float = DEFAULT_GRAD_THRESHOLD

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu must be >= 1")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if not 0 <= self.alpha_min < 1:
            raise ValueError("alpha_min must lie in [0, 1)")


def sparse_init(spec: InitSpec, whl, seed: int) -> GaussianCloud:
    """Condensation nuclei: uniform samples inside the whl box.

    Small and dim on purpose (sigma = 0.01 * min(whl), alpha = 0.1) so
    densification decides what grows.
    """
    whl = np.asarray(whl, dtype=float)
    rng = np.random.default_rng(seed)
    half = whl / 2.0
    n = spec.count
    p = rng.uniform(-half, half, size=(n, 3))
    sigma = INIT_SIGMA_FRACTION * float(whl.min())
    return GaussianCloud(
        p=p,
        s=np.full((n, 3), sigma),
        q=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        c=np.tile(np.clip(spec.base_color, 0.0, 1.0), (n, 1)),
        alpha=np.full(n, INIT_ALPHA),
    )


def surface_init(spec: InitSpec, whl, seed: int) -> GaussianCloud:
    """Points on the surface of the whl-inscribed ellipsoid."""
    whl = np.asarray(whl, dtype=float)
    rng = np.random.default_rng(seed)
    n = spec.count
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    p = dirs * (whl / 2.0)
    sigma = INIT_SIGMA_FRACTION * float(whl.min())
    return GaussianCloud(
        p=p,
        s=np.full((n, 3), sigma),
        q=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        c=np.tile(np.clip(spec.base_color, 0.0, 1.0), (n, 1)),
        alpha=np.full(n, INIT_ALPHA),
    )


def init_cloud(spec: InitSpec, whl, seed: int, base_dir=None) -> GaussianCloud:
    """Build an object's starting cloud from its init spec."""
    if spec.method == "uniform-box":
        return sparse_init(spec, whl, seed)
    if spec.method == "sphere-surface":
        return surface_init(spec, whl, seed)
    if spec.method == "external-file":
        path = spec.path
        if base_dir is not None:
            import os

            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
        return load_ply(path)
    raise ValueError(f"unknown init method {spec.method!r}")


def effective_interval(cfg: DensifyConfig, pervasive: bool) -> int:
    if not pervasive:
        return cfg.nu
    return max(1, round(cfg.nu / cfg.tau))


def should_densify(step: int, cfg: DensifyConfig, pervasive: bool) -> bool:
    """True on densification steps; pervasive objects run 1/tau as often."""
    if step < 0:
        raise ValueError("step must be non-negative")
    interval = effective_interval(cfg, pervasive)
    return step > 0 and step % interval == 0


def densify_step(
    cloud: GaussianCloud,
    grad_mags: np.ndarray,
    cfg: DensifyConfig,
    rng: np.random.Generator | None = None,
) -> GaussianCloud:
    """Clone or split Gaussians whose positional gradient is large.

    Small Gaussians (max sigma <= rho / 2) are cloned with a jittered
    copy; large ones are replaced by two children at s / 1.6, positions
    drawn from the parent distribution.
    """
    grad_mags = np.asarray(grad_mags, dtype=float).reshape(-1)
    if len(grad_mags) != len(cloud):
        raise LengthMismatch(
            f"grad_mags has length {len(grad_mags)}, cloud has {len(cloud)}"
        )
    if len(cloud) == 0:
        return cloud.copy()
    if rng is None:
        rng = np.random.default_rng(0)

    over = grad_mags > cfg.grad_threshold
    big = cloud.s.max(axis=1) > cfg.rho / 2.0
    split_mask = over & big
    clone_mask = over & ~big

    parts_p = [cloud.p[~split_mask]]
    parts_s = [cloud.s[~split_mask]]
    parts_q = [cloud.q[~split_mask]]
    parts_c = [cloud.c[~split_mask]]
    parts_a = [cloud.alpha[~split_mask]]

    if np.any(clone_mask):
        jitter = rng.normal(size=(int(clone_mask.sum()), 3)) * CLONE_JITTER * cloud.s[clone_mask]
        parts_p.append(cloud.p[clone_mask] + jitter)
        parts_s.append(cloud.s[clone_mask])
        parts_q.append(cloud.q[clone_mask])
        parts_c.append(cloud.c[clone_mask])
        parts_a.append(cloud.alpha[clone_mask])

    if np.any(split_mask):
        from .transforms import quat_to_matrix

        n_split = int(split_mask.sum())
        rot = quat_to_matrix(cloud.q[split_mask])
        for _ in range(2):
            local = rng.normal(size=(n_split, 3)) * cloud.s[split_mask]
            parts_p.append(cloud.p[split_mask] + np.einsum("nij,nj->ni", rot, local))
            parts_s.append(cloud.s[split_mask] / SPLIT_SCALE_RATIO)
            parts_q.append(cloud.q[split_mask])
            parts_c.append(cloud.c[split_mask])
            parts_a.append(cloud.alpha[split_mask])

    return GaussianCloud(
        p=np.concatenate(parts_p),
        s=np.concatenate(parts_s),
        q=np.concatenate(parts_q),
        c=np.concatenate(parts_c),
        alpha=np.concatenate(parts_a),
    )


def prune(cloud: GaussianCloud, cfg: DensifyConfig, pervasive: bool) -> GaussianCloud:
    """Drop near-transparent Gaussians; for pervasive objects also drop
    any whose largest axis exceeds rho. Survivor order is preserved."""
    if len(cloud) == 0:
        return cloud.copy()
    keep = cloud.alpha >= cfg.alpha_min
    if pervasive:
        keep &= cloud.s.max(axis=1) <= cfg.rho
    return GaussianCloud(
        p=cloud.p[keep], s=cloud.s[keep], q=cloud.q[keep],
        c=cloud.c[keep], alpha=cloud.alpha[keep],
    )
