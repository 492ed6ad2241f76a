"""Local-global layout optimization over guide transforms.

Local steps treat each object in isolation: advance its step counter,
apply the progressive scale ramp, render it from a random orbit camera,
score the render with the provider, and run densify/prune at the
configured cadence. Global steps compose the whole scene, aggregate the
total loss

    L = l1 * sum of local losses + l2 * L_cross + l3 * L_global

and descend on the guide transforms: the collision term contributes an
analytic translation gradient, the provider term contributes central
finite differences with respect to xyz, whl and (optionally) quad.

The render-based score is a pluggable provider; any generative-guidance
signal slots in behind the same contract. Shipped providers are
NullProvider (constant zero, skips rendering entirely) and
PhotometricProvider (mean squared error against target images registered
per camera).

The scale ramp freezes the measured object extent when the ramp starts
(step w); the per-axis factor tracks the object's *current* whl against
that frozen extent, so refining whl during global steps stays effective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .collision import scene_collision
from .densify import DensifyConfig, densify_step, prune, should_densify
from .errors import EmptyCloud
from .gaussians import GaussianCloud, GaussianScene, extent
from .guide import ObjectTransform, SceneGuide, validate_guide, with_transform
from .renderer import Camera, RenderOutput, look_at_camera, render
from .schedule import DEFAULT_SATURATION, DEFAULT_WARMUP, apply_stretch
from .transforms import compose_to_global, quat_exp_map, quat_mul

ELEVATION_BAND = (math.radians(-10.0), math.radians(45.0))
ORBIT_RADIUS_FACTOR = 1.8
FD_STEP = 1e-3
FD_BATCHES = 8


class ScoreProvider:
    """Scores a render against a prompt; lower is better."""

    needs_render = True

    def evaluate(
        self, out: Optional[RenderOutput], prompt: str, camera_id: Optional[str] = None
    ) -> float:
        raise NotImplementedError

    def camera_ids(self) -> list[str]:
        return []

    def camera(self, camera_id: str) -> Camera:
        raise KeyError(camera_id)


class NullProvider(ScoreProvider):
    """Constant zero score; the optimizer skips rendering for it."""

    needs_render = False

    def evaluate(self, out, prompt, camera_id=None) -> float:
        return 0.0


class PhotometricProvider(ScoreProvider):
    """Mean squared error against target images keyed by camera id."""

    def __init__(self, targets: dict[str, tuple[Camera, np.ndarray]]):
        if not targets:
            raise ValueError("photometric provider needs at least one target")
        self._targets = {
            cid: (cam, np.asarray(img, dtype=float)) for cid, (cam, img) in targets.items()
        }

    def camera_ids(self) -> list[str]:
        return sorted(self._targets)

    def camera(self, camera_id: str) -> Camera:
        return self._targets[camera_id][0]

    def evaluate(self, out, prompt, camera_id=None) -> float:
        if camera_id is None:
            if len(self._targets) != 1:
                raise ValueError("camera_id required with multiple registered targets")
            camera_id = next(iter(self._targets))
        _, target = self._targets[camera_id]
        if out.rgb.shape != target.shape:
            raise ValueError(
                f"render {out.rgb.shape} does not match target {target.shape}"
            )
        return float(np.mean((out.rgb - target) ** 2))


@dataclass
class OptState:
    guide: SceneGuide
    k: dict[str, int]
    global_k: int
    frozen: dict[str, bool]
    lambdas: tuple[float, float, float]
    lr_xyz: float
    lr_whl: float
    lr_quad: float
    warmup: int
    saturation: int
    densify_cfg: DensifyConfig
    optimize_quad: bool = False
    frozen_extent: dict[str, Optional[np.ndarray]] = field(default_factory=dict)
    local_losses: dict[str, float] = field(default_factory=dict)
    stretch_history: dict[str, list] = field(default_factory=dict)
    trace: list[dict] = field(default_factory=list)
    seed: int = 0
    rng: np.random.Generator = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)


def make_state(
    scene: GaussianScene,
    lr_xyz: Optional[float] = None,
    lr_whl: Optional[float] = None,
    lr_quad: float = 1e-3,
    warmup: int = DEFAULT_WARMUP,
    saturation: int = DEFAULT_SATURATION,
    densify_cfg: Optional[DensifyConfig] = None,
    optimize_quad: bool = False,
    seed: int = 0,
) -> OptState:
    """Optimizer state over a working copy of the scene's guide.

    Default learning rates scale with the scene: 1e-2 * theta for xyz and
    1e-3 * mean whl component for whl.
    """
    guide = scene.guide
    whl_comps = [c for o in guide.objects for c in o.transform.whl]
    mean_whl = sum(whl_comps) / len(whl_comps) if whl_comps else 1.0
    if densify_cfg is None:
        min_whl = min(whl_comps) if whl_comps else 1.0
        densify_cfg = DensifyConfig(rho=0.1 * min_whl)
    return OptState(
        guide=guide,
        k={o.id: 0 for o in guide.objects},
        global_k=0,
        frozen={o.id: o.freeze for o in guide.objects},
        lambdas=tuple(guide.loss_weights),
        lr_xyz=lr_xyz if lr_xyz is not None else 1e-2 * guide.collision_threshold,
        lr_whl=lr_whl if lr_whl is not None else 1e-3 * mean_whl,
        lr_quad=lr_quad,
        warmup=warmup,
        saturation=saturation,
        densify_cfg=densify_cfg,
        optimize_quad=optimize_quad,
        frozen_extent={o.id: None for o in guide.objects},
        seed=seed,
    )


def stretch_from_whl(state: OptState, obj_id: str, cloud: GaussianCloud, whl) -> np.ndarray:
    """Scale-ramp factor at the object's current step count for a given
    whl target. The extent is frozen when the ramp starts; the target
    tracks whl, so whl refinement during global steps stays effective."""
    k = state.k[obj_id]
    if k < state.warmup or len(cloud) == 0:
        return np.ones(3)
    if state.frozen_extent.get(obj_id) is None:
        _, e = extent(cloud)
        state.frozen_extent[obj_id] = e
    beta = np.asarray(whl, dtype=float) / state.frozen_extent[obj_id] - 1.0
    ramp = min(max((k - state.warmup) / state.saturation, 0.0), 1.0)
    return 1.0 + beta * ramp


def current_stretch(state: OptState, obj_id: str, cloud: GaussianCloud) -> np.ndarray:
    """Scale-ramp factor for an object at its current step count."""
    obj = _object(state.guide, obj_id)
    return stretch_from_whl(state, obj_id, cloud, obj.transform.whl)


def _object(guide: SceneGuide, obj_id: str):
    for o in guide.objects:
        if o.id == obj_id:
            return o
    raise KeyError(obj_id)


def _orbit_camera(
    center: np.ndarray, diag: float, rng: np.random.Generator,
    width: int, height: int,
) -> Camera:
    azimuth = rng.uniform(0.0, 2.0 * math.pi)
    elevation = rng.uniform(*ELEVATION_BAND)
    radius = max(ORBIT_RADIUS_FACTOR * diag, 1e-3)
    eye = center + radius * np.array(
        [
            math.cos(elevation) * math.cos(azimuth),
            math.cos(elevation) * math.sin(azimuth),
            math.sin(elevation),
        ]
    )
    return look_at_camera(eye, center, width=width, height=height)


def _pick_camera(
    provider: ScoreProvider, state: OptState, center, diag, width, height
) -> tuple[Optional[Camera], Optional[str]]:
    ids = provider.camera_ids()
    if ids:
        cid = ids[int(state.rng.integers(len(ids)))]
        return provider.camera(cid), cid
    return _orbit_camera(np.asarray(center, dtype=float), diag, state.rng, width, height), None


def local_step(
    scene: GaussianScene,
    obj_id: str,
    provider: ScoreProvider,
    state: OptState,
    render_size: int = 64,
) -> float:
    """One per-object step: ramp, render, score, densify at cadence.

    Returns the recorded provider loss. Mutates the scene's cloud in
    place when densification fires.
    """
    obj = _object(state.guide, obj_id)
    cloud = scene.clouds[obj_id]
    if len(cloud) == 0:
        raise EmptyCloud(f"object '{obj_id}' has no Gaussians")

    state.k[obj_id] += 1
    f = current_stretch(state, obj_id, cloud)
    state.stretch_history.setdefault(obj_id, []).append(f.copy())
    stretched = apply_stretch(cloud, f)

    loss = 0.0
    cam = cid = None
    if provider.needs_render:
        centroid, e = extent(stretched)
        cam, cid = _pick_camera(
            provider, state, centroid, float(np.linalg.norm(e)), render_size, render_size
        )
        out = render(stretched, cam)
        loss = provider.evaluate(out, obj.prompt, cid)
    else:
        loss = provider.evaluate(None, obj.prompt)
    state.local_losses[obj_id] = loss

    if should_densify(state.k[obj_id], state.densify_cfg, obj.pervasive):
        if provider.needs_render and cam is not None:
            grad_mags = _batch_grad_mags(cloud, f, cam, cid, provider, obj.prompt, loss)
        else:
            grad_mags = np.zeros(len(cloud))
        updated = densify_step(cloud, grad_mags, state.densify_cfg, state.rng)
        updated = prune(updated, state.densify_cfg, obj.pervasive)
        scene.clouds[obj_id] = updated
    return loss


def _batch_grad_mags(
    cloud: GaussianCloud,
    f: np.ndarray,
    cam: Camera,
    cid: Optional[str],
    provider: ScoreProvider,
    prompt: str,
    base_loss: float,
) -> np.ndarray:
    """Coarse per-Gaussian loss sensitivity: perturb position batches and
    attribute the finite-difference magnitude to every batch member."""
    n = len(cloud)
    mags = np.zeros(n)
    batches = np.array_split(np.arange(n), min(FD_BATCHES, n))
    h = FD_STEP
    for batch in batches:
        if len(batch) == 0:
            continue
        shifted = cloud.copy()
        shifted.p[batch] += h
        out = render(apply_stretch(shifted, f), cam)
        mags[batch] = abs(provider.evaluate(out, prompt, cid) - base_loss) / h
    return mags


def _compose_scene(scene: GaussianScene, guide: SceneGuide, state: OptState) -> GaussianCloud:
    parts = []
    for obj in guide.objects:
        cloud = scene.clouds[obj.id]
        if len(cloud) == 0:
            continue
        f = stretch_from_whl(state, obj.id, cloud, obj.transform.whl)
        parts.append(compose_to_global(cloud, obj.transform, f))
    return GaussianCloud.concat(parts)


def _scene_camera(
    provider: ScoreProvider, state: OptState, composed: GaussianCloud, render_size: int
) -> tuple[Optional[Camera], Optional[str]]:
    if len(composed) == 0:
        return None, None
    centroid, e = extent(composed)
    return _pick_camera(
        provider, state, centroid, float(np.linalg.norm(e)), render_size, render_size
    )


def global_step(
    scene: GaussianScene,
    provider: ScoreProvider,
    state: OptState,
    render_size: int = 64,
) -> dict:
    """One scene-level step: aggregate the total loss and descend on the
    unfrozen guide transforms. Returns the appended trace row."""
    state.global_k += 1
    lam1, lam2, lam3 = state.lambdas
    stretches = {
        o.id: current_stretch(state, o.id, scene.clouds[o.id]) for o in state.guide.objects
    }

    reports = scene_collision(
        scene, state.guide.collision_threshold, stretches=stretches, guide=state.guide
    )
    l_cross = sum(r.loss for r in reports)
    cross_grads = {o.id: np.zeros(3) for o in state.guide.objects}
    for r in reports:
        cross_grads[r.pair[0]] += r.grad_xyz_a
        cross_grads[r.pair[1]] += r.grad_xyz_b

    l_global = 0.0
    cam = cid = None
    if provider.needs_render:
        composed = _compose_scene(scene, state.guide, state)
        cam, cid = _scene_camera(provider, state, composed, render_size)
        if cam is not None:
            l_global = provider.evaluate(
                render(composed, cam), state.guide.scene_prompt, cid
            )

    def fd_loss(obj_id: str, xyz, whl, quad) -> float:
        if cam is None:
            return 0.0
        t = ObjectTransform(tuple(xyz), tuple(whl), tuple(quad))
        guide = with_transform(state.guide, obj_id, t)
        composed = _compose_scene(scene, guide, state)
        return provider.evaluate(render(composed, cam), guide.scene_prompt, cid)

    new_guide = state.guide
    for obj in state.guide.objects:
        if state.frozen[obj.id]:
            continue
        t = obj.transform
        xyz = np.asarray(t.xyz, dtype=float)
        whl = np.asarray(t.whl, dtype=float)
        quad = np.asarray(t.quad, dtype=float)

        grad_xyz = lam2 * cross_grads[obj.id]
        grad_whl = np.zeros(3)
        rotvec_grad = np.zeros(3)
        if cam is not None and lam3 > 0:
            h = FD_STEP
            for axis in range(3):
                delta = np.zeros(3)
                delta[axis] = h
                lp = fd_loss(obj.id, xyz + delta, whl, quad)
                lm = fd_loss(obj.id, xyz - delta, whl, quad)
                grad_xyz[axis] += lam3 * (lp - lm) / (2 * h)
                lp = fd_loss(obj.id, xyz, whl + delta, quad)
                lm = fd_loss(obj.id, xyz, np.maximum(whl - delta, 1e-9), quad)
                grad_whl[axis] += lam3 * (lp - lm) / (2 * h)
                if state.optimize_quad:
                    qp = quat_mul(quat_exp_map(delta), quad)
                    qm = quat_mul(quat_exp_map(-delta), quad)
                    lp = fd_loss(obj.id, xyz, whl, qp)
                    lm = fd_loss(obj.id, xyz, whl, qm)
                    rotvec_grad[axis] = lam3 * (lp - lm) / (2 * h)

        new_xyz = xyz - state.lr_xyz * grad_xyz
        new_whl = whl - state.lr_whl * grad_whl
        new_quad = quad
        if state.optimize_quad and np.any(rotvec_grad != 0):
            new_quad = quat_mul(quat_exp_map(-state.lr_quad * rotvec_grad), quad)
            new_quad = new_quad / np.linalg.norm(new_quad)

        candidate = ObjectTransform(
            xyz=tuple(float(v) for v in new_xyz),
            whl=tuple(float(v) for v in new_whl),
            quad=tuple(float(v) for v in new_quad),
        )
        trial = with_transform(new_guide, obj.id, candidate)
        if validate_guide(trial):
            # step produced an invalid transform (e.g. whl <= 0):
            # reject it for this object and halve the whl rate
            state.lr_whl *= 0.5
            continue
        new_guide = trial
    state.guide = new_guide

    l_local = sum(state.local_losses.values())
    row = {
        "step": state.global_k,
        "local": l_local,
        "cross": l_cross,
        "global": l_global,
        "total": lam1 * l_local + lam2 * l_cross + lam3 * l_global,
    }
    state.trace.append(row)
    return row


def optimize_layout(
    scene: GaussianScene,
    provider: ScoreProvider,
    iters: int,
    state: Optional[OptState] = None,
    render_size: int = 64,
    seed: int = 0,
) -> tuple[SceneGuide, list[dict]]:
    """Round-robin optimization: one local step per object, then one
    global step, ``iters`` times. Returns the refined guide and the
    per-global-step loss trace."""
    if iters < 0:
        raise ValueError("iters must be >= 0")
    if state is None:
        state = make_state(scene, seed=seed)
    for _ in range(iters):
        for obj in state.guide.objects:
            local_step(scene, obj.id, provider, state, render_size=render_size)
        global_step(scene, provider, state, render_size=render_size)
    return state.guide, state.trace
