import { describe, expect, it } from "vitest";

import {
  ApiError,
  type CameraDoc,
  type CollisionDoc,
  type OptimizeDoc,
  type RenderDoc,
  type SceneApi,
  type SceneDoc,
  type TransformPatch,
} from "../src/api.js";
import { EditorSceneModel, pairKey } from "../src/model.js";

/** In-memory stand-in for the service with real revision/validation rules. */
class FakeApi implements SceneApi {
  scene: SceneDoc;
  collisionFn: (scene: SceneDoc) => CollisionDoc[];
  plyBytes: ArrayBuffer;

  constructor(scene: SceneDoc, collisionFn: (scene: SceneDoc) => CollisionDoc[]) {
    this.scene = scene;
    this.collisionFn = collisionFn;
    this.plyBytes = buildMinimalPly();
  }

  async getScene(): Promise<SceneDoc> {
    return structuredClone(this.scene);
  }

  async getCollisions(): Promise<{ revision: number; collisions: CollisionDoc[] }> {
    return { revision: this.scene.revision, collisions: this.collisionFn(this.scene) };
  }

  async getObjectPly(id: string): Promise<ArrayBuffer> {
    if (!this.scene.objects.some((o) => o.id === id)) throw new ApiError(404, {});
    return this.plyBytes.slice(0);
  }

  async postTransform(
    id: string,
    patch: TransformPatch,
    ifRevision: number,
  ): Promise<{ revision: number; collisions: CollisionDoc[] }> {
    const obj = this.scene.objects.find((o) => o.id === id);
    if (!obj) throw new ApiError(404, {});
    if (ifRevision !== this.scene.revision) {
      throw new ApiError(409, { revision: this.scene.revision });
    }
    const next = { ...obj.transform, ...patch };
    if (next.whl.some((v) => !(v > 0))) {
      throw new ApiError(422, {
        violations: [{ object_id: id, field: "whl", message: "components must be > 0" }],
      });
    }
    obj.transform = next;
    this.scene.revision += 1;
    return { revision: this.scene.revision, collisions: this.collisionFn(this.scene) };
  }

  async postRender(camera: CameraDoc): Promise<RenderDoc> {
    return {
      revision: this.scene.revision,
      width: camera.width,
      height: camera.height,
      rgb_png: "cmdi",
      depth_png: "ZGVwdGg=",
      depth_range: { depth_min: 0, depth_max: 1 },
    };
  }

  async postOptimizeStep(count: number, ifRevision: number): Promise<OptimizeDoc> {
    if (ifRevision !== this.scene.revision) {
      throw new ApiError(409, { revision: this.scene.revision });
    }
    // pretend optimization separates everything
    if (count > 0) {
      this.scene.objects[0].transform.xyz = [-5, 0, 0];
      this.scene.revision += 1;
    }
    const trace = Array.from({ length: count }, (_, i) => ({
      step: i + 1,
      local: 0,
      cross: i === count - 1 ? 0 : 1 / (i + 1),
      global: 0,
      total: 0,
    }));
    return {
      revision: this.scene.revision,
      trace,
      scene: structuredClone(this.scene),
      collisions: this.collisionFn(this.scene),
    };
  }
}

function buildMinimalPly(): ArrayBuffer {
  const attrs = [
    "x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3", "f_dc_0", "f_dc_1", "f_dc_2",
  ];
  const header =
    "ply\nformat binary_little_endian 1.0\nelement vertex 1\n" +
    attrs.map((a) => `property float ${a}`).join("\n") +
    "\nend_header\n";
  const head = new TextEncoder().encode(header);
  const body = new Float32Array([0, 0, 0, 0, -3, -3, -3, 1, 0, 0, 0, 1, 0.5, 0.25]);
  const out = new Uint8Array(head.length + body.byteLength);
  out.set(head, 0);
  out.set(new Uint8Array(body.buffer), head.length);
  return out.buffer;
}

function twoObjectScene(): SceneDoc {
  return {
    revision: 0,
    scene_prompt: "two things",
    collision_threshold: 0.3,
    loss_weights: [1, 10, 1],
    objects: [
      {
        id: "a", cls: "thing", prompt: "a", pervasive: false, freeze: false,
        transform: { xyz: [-1, 0, 0], whl: [1, 1, 1], quad: [1, 0, 0, 0] },
      },
      {
        id: "rain", cls: "weather", prompt: "rain", pervasive: true, freeze: false,
        transform: { xyz: [0, 0, 2], whl: [4, 4, 2], quad: [1, 0, 0, 0] },
      },
      {
        id: "b", cls: "thing", prompt: "b", pervasive: false, freeze: false,
        transform: { xyz: [1, 0, 0], whl: [1, 1, 1], quad: [1, 0, 0, 0] },
      },
    ],
  };
}

/** Overlap iff the two non-pervasive objects sit within 1 unit. */
function proximityCollisions(scene: SceneDoc): CollisionDoc[] {
  const a = scene.objects.find((o) => o.id === "a")!.transform.xyz;
  const b = scene.objects.find((o) => o.id === "b")!.transform.xyz;
  const d = Math.hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
  const loss = d < 1 ? (1 - d) ** 2 : 0;
  return [
    {
      pair: ["a", "b"],
      loss,
      pair_count: loss > 0 ? 1 : 0,
      grad_xyz_a: [0, 0, 0],
      grad_xyz_b: [0, 0, 0],
    },
  ];
}

async function loadedModel(): Promise<{ model: EditorSceneModel; api: FakeApi }> {
  const api = new FakeApi(twoObjectScene(), proximityCollisions);
  const model = new EditorSceneModel(api);
  await model.loadScene();
  return { model, api };
}

describe("editor scene model", () => {
  it("loads objects, splats and badges", async () => {
    const { model } = await loadedModel();
    expect(model.revision).toBe(0);
    expect(model.objectIds()).toEqual(["a", "rain", "b"]);
    expect(model.splats.get("a")?.count).toBe(1);
    expect(model.badgeFor("a", "b")?.red).toBe(false);
    expect(model.hasBadges("rain")).toBe(false); // pervasive: no badges
    expect(model.hasBadges("a")).toBe(true);
  });

  it("commits a translate edit and refreshes badges from the response", async () => {
    const { model } = await loadedModel();
    const result = await model.applyGizmoEdit("b", "translate", { offset: [-1.5, 0, 0] });
    expect(result.ok).toBe(true);
    expect(model.revision).toBe(1);
    expect(model.objects.get("b")?.transform.xyz).toEqual([-0.5, 0, 0]);
    const badge = model.badgeFor("a", "b")!;
    expect(badge.red).toBe(true);
    expect(badge.loss).toBeGreaterThan(0);
  });

  it("rolls back on 422 and surfaces the violation", async () => {
    const { model, api } = await loadedModel();
    const before = structuredClone(model.objects.get("b")!.transform);
    const result = await model.applyGizmoEdit("b", "scale", { factors: [0, 1, 1] });
    expect(result.ok).toBe(false);
    expect(result.status).toBe(422);
    expect(result.violations[0]).toMatch(/> 0/);
    expect(model.objects.get("b")!.transform).toEqual(before);
    expect(model.revision).toBe(0);
    expect(api.scene.objects.find((o) => o.id === "b")!.transform).toEqual(before);
  });

  it("reloads on 409 when the revision is stale", async () => {
    const { model, api } = await loadedModel();
    // another writer commits behind our back
    await api.postTransform("a", { xyz: [-2, 0, 0] }, 0);
    expect(model.revision).toBe(0); // model does not know yet
    const result = await model.applyGizmoEdit("b", "translate", { offset: [0.1, 0, 0] });
    expect(result.ok).toBe(false);
    expect(result.status).toBe(409);
    expect(model.revision).toBe(1); // resynced
    expect(model.objects.get("a")?.transform.xyz).toEqual([-2, 0, 0]);
  });

  it("composes rotations client-side with the shared convention", async () => {
    const { model } = await loadedModel();
    const patch = model.patchForGizmo("a", "rotate", {
      axis: [0, 0, 1],
      angle: Math.PI / 2,
    });
    const q = patch.quad!;
    expect(q[0]).toBeCloseTo(Math.SQRT1_2, 12);
    expect(q[3]).toBeCloseTo(Math.SQRT1_2, 12);
  });

  it("keeps a render with its camera", async () => {
    const { model } = await loadedModel();
    const cam = {
      fx: 10, fy: 10, cx: 5, cy: 5, width: 10, height: 10, near: 0.1, far: 10,
      pose: { quad: [1, 0, 0, 0] as [number, number, number, number], t: [0, 0, 5] as [number, number, number] },
    };
    const doc = await model.requestRender(cam);
    expect(doc.rgb_png.length).toBeGreaterThan(0);
    expect(model.lastRender?.camera).toEqual(cam);
  });

  it("folds optimize results into transforms, badges and the sparkline", async () => {
    const { model } = await loadedModel();
    await model.applyGizmoEdit("b", "translate", { offset: [-1.5, 0, 0] });
    expect(model.badgeFor("a", "b")?.red).toBe(true);
    const cross = await model.runOptimize(5);
    expect(cross).toBe(0);
    expect(model.objects.get("a")?.transform.xyz).toEqual([-5, 0, 0]);
    expect(model.badgeFor("a", "b")?.red).toBe(false);
    expect(model.lossHistory.length).toBe(5);
  });

  it("optimize with count 0 changes nothing", async () => {
    const { model } = await loadedModel();
    const before = model.toSceneDoc();
    await model.runOptimize(0);
    expect(model.toSceneDoc()).toEqual(before);
    expect(model.lossHistory.length).toBe(0);
  });

  it("pair keys are order-independent", () => {
    expect(pairKey("x", "y")).toBe(pairKey("y", "x"));
  });
});
