"""Progressive scale control.

Each object starts at its native size and is ramped toward the target
extent ``whl`` from its guide entry. The ramp is piecewise linear in the
step count k:

    f(k) = 1 + beta * clamp((k - w) / gamma, 0, 1)

with warm-up ``w`` (no stretching before it), saturation ``gamma`` (steps
from ramp start to full stretch) and per-axis factor
``beta = whl / extent - 1`` measured once when the ramp starts. Freezing
beta at ramp start keeps the target fixed even while densification moves
the measured extent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCloud
from .gaussians import GaussianCloud, extent

DEFAULT_WARMUP = 500
DEFAULT_SATURATION = 1000


@dataclass(frozen=True)
class ScaleSchedule:
    w: int
    gamma: int
    beta: tuple[float, float, float]

    def __post_init__(self):
        if self.w < 0:
            raise ValueError("warm-up steps must be non-negative")
        if self.gamma < 1:
            raise ValueError("saturation steps must be >= 1")
        if any(b <= -1 for b in self.beta):
            raise ValueError("beta must stay > -1 so the factor stays positive")


def derive_beta(cloud: GaussianCloud, whl) -> np.ndarray:
    """Per-axis factor carrying the cloud's current extent onto whl."""
    if len(cloud) == 0:
        raise EmptyCloud("cannot derive a scale factor for an empty cloud")
    whl = np.asarray(whl, dtype=float)
    _, e = extent(cloud)
    return whl / e - 1.0


def stretch_factor(k: int, sched: ScaleSchedule) -> np.ndarray:
    """Stretch at step k; exactly 1 for k <= w and 1 + beta for k >= w + gamma."""
    if k < 0:
        raise ValueError("step count must be non-negative")
    ramp = min(max((k - sched.w) / sched.gamma, 0.0), 1.0)
    return 1.0 + np.asarray(sched.beta, dtype=float) * ramp


def apply_stretch(cloud: GaussianCloud, f) -> GaussianCloud:
    """Scale centers (about the centroid) and sigmas by the per-axis factor f."""
    if len(cloud) == 0:
        raise EmptyCloud("cannot stretch an empty cloud")
    f = np.asarray(f, dtype=float)
    mu = cloud.p.mean(axis=0)
    return GaussianCloud(
        p=mu + (cloud.p - mu) * f,
        s=cloud.s * f,
        q=cloud.q.copy(),
        c=cloud.c.copy(),
        alpha=cloud.alpha.copy(),
    )
