"""Scene directory layout and run configuration.

A scene directory is the on-disk unit every CLI subcommand and the
service operate on:

    scene_dir/
      guide.json        scene guide
      config.json       optimizer / densify / schedule / render defaults
      objects/<id>.ply  one local-frame cloud per guide object
      renders/          render outputs (created on demand)
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .densify import (
    DEFAULT_ALPHA_MIN,
    DEFAULT_GRAD_THRESHOLD,
    DEFAULT_NU,
    DEFAULT_RHO_FRACTION,
    DEFAULT_TAU,
    DensifyConfig,
    init_cloud,
)
from .gaussians import GaussianScene, load_ply, save_ply
from .guide import SceneGuide, parse_guide, serialize_guide
from .schedule import DEFAULT_SATURATION, DEFAULT_WARMUP

GUIDE_FILE = "guide.json"
CONFIG_FILE = "config.json"
OBJECTS_DIR = "objects"
RENDERS_DIR = "renders"


@dataclass
class SceneConfig:
    seed: int = 0
    iters: int = 100
    provider: str = "null"
    target_dir: str | None = None
    lr_xyz: float = 0.0  # 0 means: derive from the guide on load
    lr_whl: float = 0.0
    lr_quad: float = 1e-3
    optimize_quad: bool = False
    warmup: int = DEFAULT_WARMUP
    saturation: int = DEFAULT_SATURATION
    densify_nu: int = DEFAULT_NU
    densify_tau: float = DEFAULT_TAU
    densify_rho: float = 0.0  # 0 means: derive from the guide on load
    alpha_min: float = DEFAULT_ALPHA_MIN
    grad_threshold: float = DEFAULT_GRAD_THRESHOLD
    render_width: int = 256
    render_height: int = 256
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def resolved(self, guide: SceneGuide) -> "SceneConfig":
        """Fill guide-derived defaults for any zero-valued knobs."""
        whl = [c for o in guide.objects for c in o.transform.whl]
        mean_whl = sum(whl) / len(whl) if whl else 1.0
        min_whl = min(whl) if whl else 1.0
        out = SceneConfig(**asdict(self))
        if out.lr_xyz == 0.0:
            out.lr_xyz = 1e-2 * guide.collision_threshold
        if out.lr_whl == 0.0:
            out.lr_whl = 1e-3 * mean_whl
        if out.densify_rho == 0.0:
            out.densify_rho = DEFAULT_RHO_FRACTION * min_whl
        out.background = tuple(out.background)
        return out

    def densify_config(self) -> DensifyConfig:
        return DensifyConfig(
            nu=self.densify_nu,
            tau=self.densify_tau,
            rho=self.densify_rho,
            alpha_min=self.alpha_min,
            grad_threshold=self.grad_threshold,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["background"] = list(self.background)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in doc.items() if k in known}
        if "background" in kwargs:
            kwargs["background"] = tuple(kwargs["background"])
        return cls(**kwargs)


def init_scene_dir(guide: SceneGuide, out_dir, seed: int = 0, guide_base_dir=None) -> GaussianScene:
    """Create a scene directory: initialize every object's cloud per its
    init spec and persist guide, config and per-object PLYs."""
    os.makedirs(os.path.join(out_dir, OBJECTS_DIR), exist_ok=True)
    os.makedirs(os.path.join(out_dir, RENDERS_DIR), exist_ok=True)

    clouds = {}
    for i, obj in enumerate(guide.objects):
        cloud = init_cloud(obj.init, obj.transform.whl, seed + i, base_dir=guide_base_dir)
        clouds[obj.id] = cloud
        save_ply(cloud, os.path.join(out_dir, OBJECTS_DIR, f"{obj.id}.ply"))

    with open(os.path.join(out_dir, GUIDE_FILE), "w") as fh:
        fh.write(serialize_guide(guide) + "\n")
    config = SceneConfig(seed=seed).resolved(guide)
    with open(os.path.join(out_dir, CONFIG_FILE), "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
    return GaussianScene(guide=guide, clouds=clouds)


def load_scene_dir(scene_dir) -> tuple[GaussianScene, SceneConfig]:
    with open(os.path.join(scene_dir, GUIDE_FILE)) as fh:
        guide = parse_guide(fh.read())
    config_path = os.path.join(scene_dir, CONFIG_FILE)
    if os.path.exists(config_path):
        with open(config_path) as fh:
            config = SceneConfig.from_dict(json.load(fh))
    else:
        config = SceneConfig()
    config = config.resolved(guide)
    clouds = {
        obj.id: load_ply(os.path.join(scene_dir, OBJECTS_DIR, f"{obj.id}.ply"))
        for obj in guide.objects
    }
    return GaussianScene(guide=guide, clouds=clouds), config


def save_guide(guide: SceneGuide, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_guide(guide) + "\n")


def full_stretches(scene: GaussianScene) -> dict[str, np.ndarray]:
    """Per-object factor carrying each cloud's extent onto its guide whl."""
    from .schedule import derive_beta

    out = {}
    for obj in scene.guide.objects:
        cloud = scene.clouds[obj.id]
        if len(cloud) == 0:
            out[obj.id] = np.ones(3)
        else:
            out[obj.id] = 1.0 + derive_beta(cloud, obj.transform.whl)
    return out


def compose_full(scene: GaussianScene):
    """Compose every object to the global frame at full stretch."""
    from .gaussians import GaussianCloud
    from .transforms import compose_to_global

    stretches = full_stretches(scene)
    parts = []
    for obj in scene.guide.objects:
        cloud = scene.clouds[obj.id]
        if len(cloud) == 0:
            continue
        parts.append(compose_to_global(cloud, obj.transform, stretches[obj.id]))
    return GaussianCloud.concat(parts)
