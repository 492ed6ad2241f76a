"""Command-line interface.

Subcommands cover the full pipeline: validate a guide, initialize a
scene directory, compose it into a single PLY, render it, optimize the
layout, print the collision matrix, serve the editing API and generate a
guide from an LLM endpoint. Module errors exit 1 with a machine-readable
JSON object on stderr; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import __version__
from .errors import GsSceneError
from .guide import LLMEndpoint, generate_guide, parse_guide, serialize_guide
from .scenedir import (
    RENDERS_DIR,
    compose_full,
    init_scene_dir,
    load_scene_dir,
    save_guide,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsscene", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gsscene {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a guide document")
    p.add_argument("guide")

    p = sub.add_parser("init", help="initialize a scene directory from a guide")
    p.add_argument("guide")
    p.add_argument("-o", "--out", required=True, help="scene directory to create")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("compose", help="compose all objects into one global PLY")
    p.add_argument("scene_dir")
    p.add_argument("-o", "--out", required=True, help="output .ply path")

    p = sub.add_parser("render", help="render the composed scene")
    p.add_argument("scene_dir")
    p.add_argument("--camera", required=True, help="camera JSON file")
    p.add_argument("-o", "--out", default=None, help="output directory (default renders/)")

    p = sub.add_parser("optimize", help="run layout optimization")
    p.add_argument("scene_dir")
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--provider", choices=["null", "photometric"], default=None)
    p.add_argument("--target-dir", default=None, help="photometric targets: <id>.json + <id>.png")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--in-place", action="store_true", help="overwrite guide.json")

    p = sub.add_parser("collide", help="print the collision matrix")
    p.add_argument("scene_dir")
    p.add_argument("--theta", type=float, default=None)

    p = sub.add_parser("serve", help="serve the scene editing API")
    p.add_argument("scene_dir")
    p.add_argument("--port", type=int, default=7878)
    p.add_argument("--host", default="127.0.0.1")

    p = sub.add_parser("generate", help="generate a guide from an LLM endpoint")
    p.add_argument("prompt")
    p.add_argument("--base-url", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--api-key-env", default="GSSCENE_LLM_API_KEY")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("-o", "--out", required=True, help="output guide.json")
    p.add_argument("--audit-dir", default=None)
    return parser


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _load_photometric(target_dir: str):
    from .optimizer import PhotometricProvider
    from .renderer import Camera

    import numpy as np
    from PIL import Image

    targets = {}
    for name in sorted(os.listdir(target_dir)):
        if not name.endswith(".json"):
            continue
        cid = name[:-5]
        png = os.path.join(target_dir, cid + ".png")
        if not os.path.exists(png):
            continue
        cam = Camera.from_dict(json.loads(_read(os.path.join(target_dir, name))))
        img = np.asarray(Image.open(png).convert("RGB"), dtype=float) / 255.0
        targets[cid] = (cam, img)
    return PhotometricProvider(targets)


def _cmd_validate(args) -> int:
    guide = parse_guide(_read(args.guide))
    print(json.dumps({"ok": True, "objects": len(guide.objects)}))
    return 0


def _cmd_init(args) -> int:
    guide = parse_guide(_read(args.guide))
    base = os.path.dirname(os.path.abspath(args.guide))
    init_scene_dir(guide, args.out, seed=args.seed, guide_base_dir=base)
    print(json.dumps({"ok": True, "scene_dir": args.out, "objects": len(guide.objects)}))
    return 0


def _cmd_compose(args) -> int:
    from .gaussians import save_ply

    scene, _ = load_scene_dir(args.scene_dir)
    composed = compose_full(scene)
    save_ply(composed, args.out)
    print(json.dumps({"ok": True, "gaussians": len(composed), "out": args.out}))
    return 0


def _cmd_render(args) -> int:
    from .renderer import Camera, render, save_render

    scene, config = load_scene_dir(args.scene_dir)
    cam = Camera.from_dict(json.loads(_read(args.camera)))
    out_dir = args.out or os.path.join(args.scene_dir, RENDERS_DIR)
    os.makedirs(out_dir, exist_ok=True)
    composed = compose_full(scene)
    result = render(composed, cam, background=config.background)
    save_render(
        result,
        os.path.join(out_dir, "rgb.png"),
        os.path.join(out_dir, "depth.png"),
        os.path.join(out_dir, "depth.json"),
    )
    print(json.dumps({"ok": True, "out": out_dir}))
    return 0


def _cmd_optimize(args) -> int:
    from .optimizer import NullProvider, make_state, optimize_layout

    scene, config = load_scene_dir(args.scene_dir)
    seed = args.seed if args.seed is not None else config.seed
    provider_name = args.provider or config.provider
    target_dir = args.target_dir or config.target_dir
    if provider_name == "photometric":
        if not target_dir:
            raise GsSceneError("photometric provider needs --target-dir")
        provider = _load_photometric(target_dir)
    else:
        provider = NullProvider()

    state = make_state(
        scene,
        lr_xyz=config.lr_xyz,
        lr_whl=config.lr_whl,
        lr_quad=config.lr_quad,
        warmup=config.warmup,
        saturation=config.saturation,
        densify_cfg=config.densify_config(),
        optimize_quad=config.optimize_quad,
        seed=seed,
    )
    guide, trace = optimize_layout(scene, provider, args.iters, state=state)

    out_guide = os.path.join(
        args.scene_dir, "guide.json" if args.in_place else "guide.refined.json"
    )
    save_guide(guide, out_guide)
    trace_path = os.path.join(args.scene_dir, "trace.csv")
    with open(trace_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["step", "local", "cross", "global", "total"])
        writer.writeheader()
        writer.writerows(trace)
    print(json.dumps({"ok": True, "guide": out_guide, "trace": trace_path, "steps": len(trace)}))
    return 0


def _cmd_collide(args) -> int:
    from .collision import scene_collision

    scene, _ = load_scene_dir(args.scene_dir)
    reports = scene_collision(scene, args.theta)
    print(json.dumps({"collisions": [r.to_dict() for r in reports]}, indent=2))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.scene_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_generate(args) -> int:
    endpoint = LLMEndpoint(
        base_url=args.base_url,
        model=args.model,
        api_key_env=args.api_key_env,
        timeout_s=args.timeout,
        retries=args.retries,
    )
    audit = args.audit_dir or os.path.dirname(os.path.abspath(args.out))
    guide = generate_guide(args.prompt, endpoint, audit_dir=audit)
    with open(args.out, "w") as fh:
        fh.write(serialize_guide(guide) + "\n")
    print(json.dumps({"ok": True, "out": args.out, "objects": len(guide.objects)}))
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "init": _cmd_init,
    "compose": _cmd_compose,
    "render": _cmd_render,
    "optimize": _cmd_optimize,
    "collide": _cmd_collide,
    "serve": _cmd_serve,
    "generate": _cmd_generate,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (GsSceneError, FileNotFoundError, ValueError) as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
