"""HTTP editing service.

Exposes one scene directory as a JSON-over-HTTP API for interactive
editing: read the guide, fetch per-object splats, move/scale/rotate
objects, render previews and run collision-driven layout optimization.

Single-writer semantics: mutations are serialized through a lock and
bump a monotonically increasing revision by exactly 1 when accepted.
Clients may send ``if_revision`` with a mutation; a mismatch yields 409
and no change. Invalid edits (e.g. non-positive whl) yield 422 with the
violation list and no revision bump. Renders and reads never block
mutations for longer than a snapshot copy.

Every successful mutation's response carries a freshly evaluated
collision matrix, so clients never see stale overlap feedback.
"""

from __future__ import annotations

import base64
import math
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .collision import scene_collision
from .gaussians import GaussianScene, dumps_ply
from .guide import ObjectTransform, guide_to_dict, validate_guide, with_transform
from .optimizer import NullProvider, global_step, make_state
from .renderer import Camera, encode_depth_png, encode_rgb_png, render
from .scenedir import SceneConfig, compose_full, full_stretches, load_scene_dir
from .schedule import apply_stretch


@dataclass
class SceneSession:
    scene: GaussianScene
    config: SceneConfig
    revision: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def guide_payload(self) -> dict:
        doc = guide_to_dict(self.scene.guide)
        doc["revision"] = self.revision
        return doc

    def collisions(self) -> list[dict]:
        return [r.to_dict() for r in scene_collision(self.scene)]

    def apply_transform(self, object_id: str, patch: dict) -> list:
        """Validated transform edit; returns violations instead of applying
        when the edit breaks a guide invariant."""
        obj = next((o for o in self.scene.guide.objects if o.id == object_id), None)
        if obj is None:
            raise KeyError(object_id)
        t = obj.transform
        xyz = tuple(float(v) for v in patch.get("xyz", t.xyz))
        whl = tuple(float(v) for v in patch.get("whl", t.whl))
        quad = tuple(float(v) for v in patch.get("quad", t.quad))
        norm = math.sqrt(sum(v * v for v in quad))
        if 0 < abs(norm - 1.0) <= 1e-2:
            quad = tuple(v / norm for v in quad)
        candidate = with_transform(
            self.scene.guide, object_id, ObjectTransform(xyz=xyz, whl=whl, quad=quad)
        )
        violations = validate_guide(candidate)
        if violations:
            return violations
        self.scene.guide = candidate
        self.revision += 1
        return []

    def run_global_steps(self, count: int) -> list[dict]:
        """Collision-driven refinement of the current guide at full scale.

        Each request optimizes from a fresh state whose step counters sit
        past the scale ramp, so the optimizer sees the same fully
        stretched scene the collision matrix reports on.
        """
        state = make_state(
            self.scene,
            lr_xyz=self.config.lr_xyz,
            lr_whl=self.config.lr_whl,
            lr_quad=self.config.lr_quad,
            warmup=self.config.warmup,
            saturation=self.config.saturation,
            densify_cfg=self.config.densify_config(),
            seed=self.config.seed,
        )
        for obj_id in state.k:
            state.k[obj_id] = self.config.warmup + self.config.saturation
        provider = NullProvider()
        for _ in range(count):
            global_step(self.scene, provider, state)
        if count > 0:
            self.scene.guide = state.guide
            self.revision += 1
        return state.trace


def _error(status: int, message: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, **extra})


def create_app(scene_dir=None, session: SceneSession | None = None) -> FastAPI:
    if session is None:
        scene, config = load_scene_dir(scene_dir)
        session = SceneSession(scene=scene, config=config)

    app = FastAPI(title="gsscene", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.session = session

    @app.get("/scene")
    def get_scene():
        with session.lock:
            return session.guide_payload()

    @app.get("/collisions")
    def get_collisions():
        with session.lock:
            return {"revision": session.revision, "collisions": session.collisions()}

    @app.get("/objects/{object_id}/ply")
    def get_object_ply(object_id: str):
        with session.lock:
            if object_id not in session.scene.clouds:
                return _error(404, f"unknown object '{object_id}'")
            cloud = session.scene.clouds[object_id]
            if len(cloud) > 0:
                f = full_stretches(session.scene)[object_id]
                cloud = apply_stretch(cloud, f)
                cloud.p = cloud.p - cloud.p.mean(axis=0)  # center: client re-poses it
            data = dumps_ply(cloud)
        return Response(content=data, media_type="application/octet-stream")

    @app.post("/objects/{object_id}/transform")
    async def post_transform(object_id: str, request: Request):
        body = await request.json()
        with session.lock:
            if object_id not in session.scene.clouds:
                return _error(404, f"unknown object '{object_id}'")
            if_revision = body.get("if_revision")
            if if_revision is not None and if_revision != session.revision:
                return _error(409, "stale revision", revision=session.revision)
            violations = session.apply_transform(object_id, body)
            if violations:
                return _error(
                    422,
                    "invariant violation",
                    violations=[
                        {"object_id": v.object_id, "field": v.field, "message": v.message}
                        for v in violations
                    ],
                    revision=session.revision,
                )
            return {
                "revision": session.revision,
                "collisions": session.collisions(),
            }

    @app.post("/render")
    async def post_render(request: Request):
        body = await request.json()
        try:
            cam = Camera.from_dict(body["camera"])
        except (KeyError, TypeError, ValueError) as exc:
            return _error(422, f"bad camera: {exc}")
        with session.lock:
            composed = compose_full(session.scene)
            background = session.config.background
            revision = session.revision
        out = render(composed, cam, background=background)
        depth_png, depth_range = encode_depth_png(out)
        return {
            "revision": revision,
            "width": cam.width,
            "height": cam.height,
            "rgb_png": base64.b64encode(encode_rgb_png(out)).decode("ascii"),
            "depth_png": base64.b64encode(depth_png).decode("ascii"),
            "depth_range": depth_range,
        }

    @app.post("/optimize/step")
    async def post_optimize(request: Request):
        body = await request.json()
        count = int(body.get("count", 1))
        if count < 0:
            return _error(422, "count must be >= 0")
        with session.lock:
            if_revision = body.get("if_revision")
            if if_revision is not None and if_revision != session.revision:
                return _error(409, "stale revision", revision=session.revision)
            trace = session.run_global_steps(count)
            return {
                "revision": session.revision,
                "trace": trace,
                "scene": session.guide_payload(),
                "collisions": session.collisions(),
            }

    return app
