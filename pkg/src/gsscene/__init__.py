"""gsscene: compositional 3D Gaussian scene engine.

A scene is planned by a guide (per-object class, init recipe, transform,
prompt), realized as Gaussian clouds, ramped to target scale, laid out
under a collision penalty and rendered with a CPU splatting rasterizer.
Ships as a library, a CLI (``gsscene``) and an HTTP editing service.
"""

__version__ = "0.1.0"

from .collision import CollisionReport, SpatialIndex, build_index, collision_loss, scene_collision
from .densify import DensifyConfig, densify_step, init_cloud, prune, should_densify, sparse_init
from .gaussians import (
    GaussianCloud,
    GaussianScene,
    covariance,
    extent,
    load_ply,
    save_ply,
)
from .guide import (
    InitSpec,
    LLMEndpoint,
    ObjectSpec,
    ObjectTransform,
    SceneGuide,
    Violation,
    generate_guide,
    parse_guide,
    serialize_guide,
    validate_guide,
)
from .optimizer import (
    NullProvider,
    OptState,
    PhotometricProvider,
    ScoreProvider,
    global_step,
    local_step,
    make_state,
    optimize_layout,
)
from .renderer import Camera, RenderOutput, look_at_camera, project, render
from .schedule import ScaleSchedule, apply_stretch, derive_beta, stretch_factor
from .transforms import (
    compose_to_global,
    quat_from_axis_angle,
    quat_from_matrix,
    quat_mul,
    quat_to_matrix,
    restore_to_local,
)

__all__ = [
    "__version__",
    "CollisionReport", "SpatialIndex", "build_index", "collision_loss", "scene_collision",
    "DensifyConfig", "densify_step", "init_cloud", "prune", "should_densify", "sparse_init",
    "GaussianCloud", "GaussianScene", "covariance", "extent", "load_ply", "save_ply",
    "InitSpec", "LLMEndpoint", "ObjectSpec", "ObjectTransform", "SceneGuide", "Violation",
    "generate_guide", "parse_guide", "serialize_guide", "validate_guide",
    "NullProvider", "OptState", "PhotometricProvider", "ScoreProvider",
    "global_step", "local_step", "make_state", "optimize_layout",
    "Camera", "RenderOutput", "look_at_camera", "project", "render",
    "ScaleSchedule", "apply_stretch", "derive_beta", "stretch_factor",
    "compose_to_global", "quat_from_axis_angle", "quat_from_matrix",
    "quat_mul", "quat_to_matrix", "restore_to_local",
]
