"""Pairwise collision penalty between composed objects.

Two objects collide when Gaussian centers from one lie within a threshold
``theta`` of centers from the other. Each such pair contributes a
hinge-squared penetration term, zero at separation and smooth in between:

    loss(A, B) = sum over pairs with d = |a - b| < theta of (theta - d)^2

The gradient with respect to a rigid translation of A is analytic:

    d loss / d t_A = sum  -2 (theta - d) (a - b) / d

and the gradient for B is its negation. Coincident pairs (d below
1e-8 * theta) would blow up the direction term; they contribute a fixed
vector of magnitude 2 * theta along +x instead. Candidate pairs are
enumerated with a KD-tree; a brute-force double loop over the same
arithmetic is the test oracle.

Pervasive objects (rain, snow) are exempt: no report is produced for any
pair involving one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import NonFiniteInput, NonPositiveThreshold
from .gaussians import GaussianScene
from .schedule import derive_beta
from .transforms import compose_to_global

DEGENERATE_FRACTION = 1e-8


@dataclass
class CollisionReport:
    pair: tuple[str, str]
    loss: float
    pair_count: int
    grad_xyz_a: np.ndarray
    grad_xyz_b: np.ndarray

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "loss": self.loss,
            "pair_count": self.pair_count,
            "grad_xyz_a": [float(v) for v in self.grad_xyz_a],
            "grad_xyz_b": [float(v) for v in self.grad_xyz_b],
        }


class SpatialIndex:
    """Fixed-radius neighbor queries over a static point set."""

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        if self.points.size and not np.all(np.isfinite(self.points)):
            raise NonFiniteInput("index points contain non-finite coordinates")
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return len(self.points)

    def query_radius(self, center, radius: float) -> np.ndarray:
        """Indices of all points with distance <= radius, ascending."""
        if self._tree is None:
            return np.zeros(0, dtype=int)
        idx = self._tree.query_ball_point(np.asarray(center, dtype=float), radius)
        return np.sort(np.asarray(idx, dtype=int))

    def query_radius_many(self, centers: np.ndarray, radius: float) -> list:
        if self._tree is None:
            return [np.zeros(0, dtype=int) for _ in range(len(centers))]
        hits = self._tree.query_ball_point(np.asarray(centers, dtype=float), radius)
        return [np.sort(np.asarray(h, dtype=int)) for h in hits]


def build_index(points: np.ndarray) -> SpatialIndex:
    return SpatialIndex(points)


def collision_loss(
    A: np.ndarray, B: np.ndarray, theta: float, pair: tuple[str, str] = ("a", "b")
) -> CollisionReport:
    """Hinge-squared penetration between two global-frame center sets."""
    if not theta > 0:
        raise NonPositiveThreshold(f"theta must be > 0, got {theta}")
    A = np.asarray(A, dtype=float).reshape(-1, 3)
    B = np.asarray(B, dtype=float).reshape(-1, 3)
    for name, arr in (("A", A), ("B", B)):
        if arr.size and not np.all(np.isfinite(arr)):
            raise NonFiniteInput(f"{name} contains non-finite coordinates")

    diffs = []
    dists = []
    if len(A) and len(B):
        index = build_index(B)
        for i, hits in enumerate(index.query_radius_many(A, theta)):
            if len(hits) == 0:
                continue
            diff = A[i] - B[hits]
            d = np.linalg.norm(diff, axis=1)
            close = d < theta
            if np.any(close):
                diffs.append(diff[close])
                dists.append(d[close])

    if not dists:
        zero = np.zeros(3)
        return CollisionReport(pair=pair, loss=0.0, pair_count=0,
                               grad_xyz_a=zero, grad_xyz_b=-zero)

    diff = np.concatenate(diffs)
    d = np.concatenate(dists)
    # summing the sorted terms makes the loss exactly symmetric in (A, B):
    # both orders see the same multiset of pair distances
    loss = float(np.sum(np.sort((theta - d) ** 2)))
    grad_a = np.zeros(3)
    degenerate = d < DEGENERATE_FRACTION * theta
    ok = ~degenerate
    if np.any(ok):
        grad_a += np.sum(-2.0 * (theta - d[ok])[:, None] * diff[ok] / d[ok][:, None], axis=0)
    grad_a[0] += 2.0 * theta * int(degenerate.sum())
    return CollisionReport(
        pair=pair, loss=loss, pair_count=int(len(d)), grad_xyz_a=grad_a, grad_xyz_b=-grad_a
    )


def scene_collision(
    scene: GaussianScene,
    theta: Optional[float] = None,
    stretches: Optional[dict] = None,
    guide=None,
) -> list[CollisionReport]:
    """One report per unordered non-pervasive object pair, sorted by pair id.

    Objects are composed to the global frame first. ``stretches`` carries
    the current schedule factor per object id; absent entries (and a
    missing map) fall back to full stretch, i.e. the factor that carries
    the cloud's extent onto its guide whl. ``guide`` overrides the scene's
    own guide so an optimizer can evaluate a candidate layout.
    """
    g = guide if guide is not None else scene.guide
    if theta is None:
        theta = g.collision_threshold
    points: dict[str, np.ndarray] = {}
    for obj in g.objects:
        if obj.pervasive:
            continue
        cloud = scene.clouds[obj.id]
        if len(cloud) == 0:
            points[obj.id] = np.zeros((0, 3))
            continue
        if stretches is not None and obj.id in stretches:
            f = np.asarray(stretches[obj.id], dtype=float)
        else:
            f = 1.0 + derive_beta(cloud, obj.transform.whl)
        points[obj.id] = compose_to_global(cloud, obj.transform, f).p

    ids = sorted(points)
    reports = []
    for i, id_a in enumerate(ids):
        for id_b in ids[i + 1:]:
            reports.append(
                collision_loss(points[id_a], points[id_b], theta, pair=(id_a, id_b))
            )
    return reports
