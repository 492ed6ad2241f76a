"""Scene guide: the per-object plan a scene is built from.

A guide lists the objects of a scene, each with a category, an
initialization recipe, a placement transform (position ``xyz``, target
extent ``whl``, rotation quaternion ``quad``) and a text prompt, plus
scene-level knobs: the collision threshold and the loss-weight triple.

Guides are immutable values. They arrive either from a hand-authored
JSON document (:func:`parse_guide`) or from an LLM endpoint
(:func:`generate_guide`); every constructor path establishes the same
invariants, so downstream modules never re-validate.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Callable, Optional

import requests

from .errors import (
    EndpointUnavailable,
    InvariantViolation,
    MalformedDocument,
    ResponseNotParseable,
    SchemaViolation,
)

INIT_METHODS = ("uniform-box", "sphere-surface", "external-file")

# LLM-authored numbers carry rounding noise: quaternions with a norm this
# close to 1 are silently renormalized, anything further off is rejected.
QUAT_RENORM_BAND = 1e-2

DEFAULT_LOSS_WEIGHTS = (1.0, 10.0, 1.0)
DEFAULT_THRESHOLD_FRACTION = 0.05


@dataclass(frozen=True)
class ObjectTransform:
    xyz: tuple[float, float, float]
    whl: tuple[float, float, float]
    quad: tuple[float, float, float, float]


@dataclass(frozen=True)
class InitSpec:
    method: str
    count: int
    base_color: tuple[float, float, float]
    path: Optional[str] = None


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    cls: str
    init: InitSpec
    transform: ObjectTransform
    prompt: str
    pervasive: bool = False
    freeze: bool = False


@dataclass(frozen=True)
class SceneGuide:
    scene_prompt: str
    objects: tuple[ObjectSpec, ...]
    collision_threshold: float
    loss_weights: tuple[float, float, float]


@dataclass(frozen=True)
class Violation:
    object_id: Optional[str]
    field: str
    message: str


@dataclass(frozen=True)
class LLMEndpoint:
    """Connection settings for a chat-completion style endpoint."""

    base_url: str
    model: str
    api_key_env: str = "GSSCENE_LLM_API_KEY"
    timeout_s: float = 60.0
    retries: int = 2


def _want(obj, key, typ, path):
    if not isinstance(obj, dict):
        raise SchemaViolation(path, f"expected object, got {type(obj).__name__}")
    if key not in obj:
        raise SchemaViolation(f"{path}.{key}" if path else key, "missing field")
    val = obj[key]
    if typ is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaViolation(f"{path}.{key}" if path else key, "expected number")
        return float(val)
    if typ is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise SchemaViolation(f"{path}.{key}" if path else key, "expected integer")
        return val
    if not isinstance(val, typ):
        raise SchemaViolation(
            f"{path}.{key}" if path else key, f"expected {typ.__name__}"
        )
    return val


def _want_vec(obj, key, length, path):
    val = _want(obj, key, list, path)
    here = f"{path}.{key}" if path else key
    if len(val) != length:
        raise SchemaViolation(here, f"expected {length} numbers")
    out = []
    for i, x in enumerate(val):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise SchemaViolation(f"{here}[{i}]", "expected number")
        out.append(float(x))
    return tuple(out)


def _parse_object(doc: dict, idx: int) -> ObjectSpec:
    path = f"objects[{idx}]"
    oid = _want(doc, "id", str, path)
    cls = _want(doc, "cls", str, path)
    prompt = _want(doc, "prompt", str, path)
    pervasive = bool(doc.get("pervasive", False))
    freeze = bool(doc.get("freeze", False))

    init_doc = _want(doc, "init", dict, path)
    method = _want(init_doc, "method", str, f"{path}.init")
    if method not in INIT_METHODS:
        raise SchemaViolation(f"{path}.init.method", f"expected one of {INIT_METHODS}")
    count = _want(init_doc, "count", int, f"{path}.init")
    base_color = _want_vec(init_doc, "base_color", 3, f"{path}.init")
    init_path = init_doc.get("path")
    if init_path is not None and not isinstance(init_path, str):
        raise SchemaViolation(f"{path}.init.path", "expected string")
    init = InitSpec(method=method, count=count, base_color=base_color, path=init_path)

    t_doc = _want(doc, "transform", dict, path)
    xyz = _want_vec(t_doc, "xyz", 3, f"{path}.transform")
    whl = _want_vec(t_doc, "whl", 3, f"{path}.transform")
    quad = _want_vec(t_doc, "quad", 4, f"{path}.transform")

    norm = math.sqrt(sum(x * x for x in quad))
    if abs(norm - 1.0) > QUAT_RENORM_BAND:
        raise InvariantViolation(
            f"object '{oid}': quad norm {norm:.4f} outside the renormalization band"
        )
    if abs(norm - 1.0) > 1e-9:  # skip when already unit: keeps parsing idempotent
        quad = tuple(x / norm for x in quad)

    transform = ObjectTransform(xyz=xyz, whl=whl, quad=quad)
    return ObjectSpec(
        id=oid, cls=cls, init=init, transform=transform,
        prompt=prompt, pervasive=pervasive, freeze=freeze,
    )


def parse_guide(text: str) -> SceneGuide:
    """Parse and validate a guide document; see the JSON schema in README."""
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not a JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("", "top level must be an object")

    scene_prompt = _want(doc, "scene_prompt", str, "")
    objects_doc = _want(doc, "objects", list, "")
    objects = tuple(_parse_object(o, i) for i, o in enumerate(objects_doc))

    if "loss_weights" in doc:
        lw = _want_vec(doc, "loss_weights", 3, "")
    else:
        lw = DEFAULT_LOSS_WEIGHTS

    if "collision_threshold" in doc:
        theta = _want(doc, "collision_threshold", float, "")
    else:
        comps = [c for o in objects for c in o.transform.whl]
        theta = DEFAULT_THRESHOLD_FRACTION * (sum(comps) / len(comps)) if comps else 0.0

    guide = SceneGuide(
        scene_prompt=scene_prompt,
        objects=objects,
        collision_threshold=theta,
        loss_weights=lw,
    )
    violations = validate_guide(guide)
    if violations:
        v = violations[0]
        who = f"object '{v.object_id}' " if v.object_id else ""
        raise InvariantViolation(f"{who}{v.field}: {v.message}")
    return guide


def validate_guide(guide: SceneGuide) -> list[Violation]:
    """Check every guide invariant; violations are data, not failures."""
    out: list[Violation] = []
    if not guide.objects:
        out.append(Violation(None, "objects", "guide must contain at least one object"))
    if not guide.collision_threshold > 0:
        out.append(Violation(None, "collision_threshold", "must be > 0"))
    if len(guide.loss_weights) != 3 or any(w < 0 for w in guide.loss_weights):
        out.append(Violation(None, "loss_weights", "must be three non-negative reals"))

    seen: set[str] = set()
    for obj in guide.objects:
        if obj.id in seen:
            out.append(Violation(obj.id, "id", f"duplicate object id '{obj.id}'"))
        seen.add(obj.id)
        if not obj.prompt:
            out.append(Violation(obj.id, "prompt", "must be non-empty"))
        if obj.init.count < 1:
            out.append(Violation(obj.id, "init.count", "must be >= 1"))
        if obj.init.method not in INIT_METHODS:
            out.append(Violation(obj.id, "init.method", f"unknown method '{obj.init.method}'"))
        if obj.init.method == "external-file" and not obj.init.path:
            out.append(Violation(obj.id, "init.path", "external-file init requires a path"))
        if any(c < 0 or c > 1 for c in obj.init.base_color):
            out.append(Violation(obj.id, "init.base_color", "components must lie in [0, 1]"))
        if any(not (w > 0) for w in obj.transform.whl):
            out.append(Violation(obj.id, "whl", "components must be > 0"))
        norm = math.sqrt(sum(x * x for x in obj.transform.quad))
        if abs(norm - 1.0) > 1e-6:
            out.append(Violation(obj.id, "transform.quad", f"norm {norm:.6f} is not unit"))
        if any(not math.isfinite(v) for v in (*obj.transform.xyz, *obj.transform.whl)):
            out.append(Violation(obj.id, "transform", "non-finite component"))
    return out


def serialize_guide(guide: SceneGuide) -> str:
    """Canonical JSON for a guide; inverse of :func:`parse_guide`."""
    return json.dumps(guide_to_dict(guide), indent=2)


def guide_to_dict(guide: SceneGuide) -> dict:
    return {
        "scene_prompt": guide.scene_prompt,
        "collision_threshold": guide.collision_threshold,
        "loss_weights": list(guide.loss_weights),
        "objects": [
            {
                "id": o.id,
                "cls": o.cls,
                "prompt": o.prompt,
                "pervasive": o.pervasive,
                "freeze": o.freeze,
                "init": {
                    "method": o.init.method,
                    "count": o.init.count,
                    "base_color": list(o.init.base_color),
                    **({"path": o.init.path} if o.init.path is not None else {}),
                },
                "transform": {
                    "xyz": list(o.transform.xyz),
                    "whl": list(o.transform.whl),
                    "quad": list(o.transform.quad),
                },
            }
            for o in guide.objects
        ],
    }


def with_transform(guide: SceneGuide, object_id: str, transform: ObjectTransform) -> SceneGuide:
    """New guide with one object's transform replaced."""
    objects = tuple(
        replace(o, transform=transform) if o.id == object_id else o
        for o in guide.objects
    )
    return replace(guide, objects=objects)


GUIDE_INSTRUCTION = """\
You are a 3D scene planner. Turn the scene description into a JSON document with
exactly this shape and nothing else (no prose, no markdown fences):

{"scene_prompt": string,
 "collision_threshold": number,
 "loss_weights": [number, number, number],
 "objects": [{"id": string, "cls": string, "prompt": string, "pervasive": bool,
              "init": {"method": "uniform-box"|"sphere-surface"|"external-file",
                       "count": int, "base_color": [r, g, b]},
              "transform": {"xyz": [x, y, z], "whl": [w, h, l],
                            "quad": [qw, qx, qy, qz]}}]}

Rules: object ids are unique snake_case; whl components are positive scene-unit
extents; quad is a unit quaternion, scalar first, identity [1,0,0,0] unless the
object is rotated; base_color components lie in [0,1]. Set "pervasive": true
only for scene-spanning particle or weather elements (rain, snow, petals, fog)
and give those "uniform-box" init with a small count (<= 256). Ordinary solid
objects use "sphere-surface" init. Place objects so they do not interpenetrate.
"""

_REPROMPT = (
    "The previous reply could not be parsed as the requested JSON document "
    "({error}). Reply again with only the raw JSON document."
)


def _http_transport(endpoint: LLMEndpoint) -> Callable[[list[dict]], str]:
    def send(messages: list[dict]) -> str:
        key = os.environ.get(endpoint.api_key_env, "")
        try:
            resp = requests.post(
                endpoint.base_url.rstrip("/") + "/chat/completions",
                json={"model": endpoint.model, "messages": messages},
                headers={"Authorization": f"Bearer {key}"},
                timeout=endpoint.timeout_s,
            )
        except requests.RequestException as exc:
            raise EndpointUnavailable(str(exc)) from exc
        if resp.status_code != 200:
            raise EndpointUnavailable(f"endpoint returned HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise EndpointUnavailable(f"unexpected endpoint payload: {exc}") from exc

    return send


def _extract_json(content: str) -> str:
    start = content.find("{")
    end = content.rfind("}")
    if start < 0 or end <= start:
        raise MalformedDocument("no JSON object in response")
    return content[start:end + 1]


def generate_guide(
    scene_prompt: str,
    endpoint: LLMEndpoint,
    transport: Optional[Callable[[list[dict]], str]] = None,
    audit_dir=None,
) -> SceneGuide:
    """Ask an LLM endpoint for a guide and validate the reply.

    ``transport`` maps chat messages to the reply text; tests substitute a
    fixture transport so no network is touched. Raw replies are written to
    ``audit_dir`` (one file per attempt) when given. Structural parse
    failures trigger a bounded number of reprompts; invariant violations in
    an otherwise well-formed document propagate immediately.
    """
    if not scene_prompt:
        raise ValueError("scene_prompt must be non-empty")
    send = transport if transport is not None else _http_transport(endpoint)
    messages = [
        {"role": "system", "content": GUIDE_INSTRUCTION},
        {"role": "user", "content": scene_prompt},
    ]
    last_error = "no attempts made"
    for attempt in range(endpoint.retries + 1):
        content = send(messages)
        if audit_dir is not None:
            os.makedirs(audit_dir, exist_ok=True)
            with open(os.path.join(audit_dir, f"llm_response_{attempt}.txt"), "w") as fh:
                fh.write(content)
        try:
            return parse_guide(_extract_json(content))
        except (MalformedDocument, SchemaViolation) as exc:
            last_error = str(exc)
            messages = messages + [
                {"role": "assistant", "content": content},
                {"role": "user", "content": _REPROMPT.format(error=last_error)},
            ]
    raise ResponseNotParseable(
        f"no parseable guide after {endpoint.retries + 1} attempts: {last_error}"
    )
