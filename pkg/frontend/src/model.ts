/**
 * Editor scene model: the client-side mirror of the service state.
 *
 * The server is the only authority. Gizmo edits update the mirror
 * optimistically for smooth dragging, but every commit carries the
 * revision it was based on; the mirror rolls back on 422 (invariant
 * violation) and reloads on 409 (someone else won the revision race).
 * Collision badges always come from server responses, never from local
 * geometry.
 */

import {
  ApiError,
  type CameraDoc,
  type CollisionDoc,
  type ObjectDoc,
  type RenderDoc,
  type SceneApi,
  type SceneDoc,
  type TransformPatch,
} from "./api.js";
import { parsePly, type SplatPoints } from "./ply.js";
import { quatMul, quatFromAxisAngle, type Quat, type Vec3 } from "./quat.js";

export type GizmoMode = "translate" | "scale" | "rotate";

export interface GizmoDelta {
  /** translate: world-space offset added to xyz */
  offset?: Vec3;
  /** scale: per-axis factor multiplied into whl */
  factors?: Vec3;
  /** rotate: axis-angle composed onto quad (client-side Hamilton product) */
  axis?: Vec3;
  angle?: number;
}

export interface EditResult {
  ok: boolean;
  status: number;
  /** violation messages on 422, empty otherwise */
  violations: string[];
}

export interface BadgeState {
  pair: [string, string];
  loss: number;
  pairCount: number;
  red: boolean;
}

const BADGE_RED_THRESHOLD = 1e-9;

export function pairKey(a: string, b: string): string {
  return a < b ? `${a}|${b}` : `${b}|${a}`;
}

export class EditorSceneModel {
  revision = -1;
  scenePrompt = "";
  collisionThreshold = 0;
  lossWeights: [number, number, number] = [0, 0, 0];
  objects = new Map<string, ObjectDoc>();
  splats = new Map<string, SplatPoints>();
  badges = new Map<string, BadgeState>();
  lastRender: { doc: RenderDoc; camera: CameraDoc } | null = null;
  lossHistory: number[] = []; // cross-loss sparkline, appended per optimize batch
  lastError = "";

  constructor(private api: SceneApi) {}

  /** Full (re)load: scene document plus per-object splats for preview. */
  async loadScene(): Promise<void> {
    const doc = await this.api.getScene();
    this.applySceneDoc(doc);
    const splats = new Map<string, SplatPoints>();
    for (const obj of doc.objects) {
      splats.set(obj.id, parsePly(await this.api.getObjectPly(obj.id)));
    }
    this.splats = splats;
    const coll = await this.api.getCollisions();
    if (coll.revision === this.revision) this.applyCollisions(coll.collisions);
  }

  private applySceneDoc(doc: SceneDoc): void {
    this.revision = doc.revision;
    this.scenePrompt = doc.scene_prompt;
    this.collisionThreshold = doc.collision_threshold;
    this.lossWeights = [...doc.loss_weights];
    this.objects = new Map(doc.objects.map((o) => [o.id, structuredClone(o)]));
    for (const key of [...this.badges.keys()]) {
      const [a, b] = key.split("|");
      if (!this.objects.has(a) || !this.objects.has(b)) this.badges.delete(key);
    }
  }

  private applyCollisions(collisions: CollisionDoc[]): void {
    this.badges = new Map(
      collisions.map((c) => [
        pairKey(c.pair[0], c.pair[1]),
        {
          pair: c.pair,
          loss: c.loss,
          pairCount: c.pair_count,
          red: c.loss > BADGE_RED_THRESHOLD,
        },
      ]),
    );
  }

  objectIds(): string[] {
    return [...this.objects.keys()];
  }

  badgeFor(a: string, b: string): BadgeState | undefined {
    return this.badges.get(pairKey(a, b));
  }

  /** Pervasive objects carry no collision badges; mirror of the server rule. */
  hasBadges(id: string): boolean {
    const obj = this.objects.get(id);
    return obj !== undefined && !obj.pervasive;
  }

  patchForGizmo(id: string, mode: GizmoMode, delta: GizmoDelta): TransformPatch {
    const obj = this.objects.get(id);
    if (!obj) throw new Error(`unknown object '${id}'`);
    const t = obj.transform;
    if (mode === "translate") {
      const d = delta.offset ?? [0, 0, 0];
      return { xyz: [t.xyz[0] + d[0], t.xyz[1] + d[1], t.xyz[2] + d[2]] };
    }
    if (mode === "scale") {
      const f = delta.factors ?? [1, 1, 1];
      return { whl: [t.whl[0] * f[0], t.whl[1] * f[1], t.whl[2] * f[2]] };
    }
    const dq: Quat = quatFromAxisAngle(delta.axis ?? [0, 0, 1], delta.angle ?? 0);
    return { quad: quatMul(dq, t.quad) };
  }

  /**
   * Optimistic preview during drag: mutate the local mirror only.
   * Call commitEdit on release to make it real (or roll back).
   */
  previewGizmo(id: string, mode: GizmoMode, delta: GizmoDelta): TransformPatch {
    const patch = this.patchForGizmo(id, mode, delta);
    const obj = this.objects.get(id)!;
    obj.transform = { ...obj.transform, ...patch };
    return patch;
  }

  /** Commit a patch with the current revision; rollback/reload on refusal. */
  async commitEdit(id: string, patch: TransformPatch): Promise<EditResult> {
    const before = structuredClone(this.objects.get(id));
    if (!before) throw new Error(`unknown object '${id}'`);
    // show the pending state while the request is in flight
    this.objects.get(id)!.transform = { ...before.transform, ...patch };
    try {
      const resp = await this.api.postTransform(id, patch, this.revision);
      this.revision = resp.revision;
      // server may have normalized values (e.g. quaternion renormalization)
      const scene = await this.api.getScene();
      if (scene.revision === this.revision) this.applySceneDoc(scene);
      this.applyCollisions(resp.collisions);
      this.lastError = "";
      return { ok: true, status: 200, violations: [] };
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        this.objects.set(id, before); // snap back
        const violations = (err.body.violations as Array<{ message: string }> | undefined) ?? [];
        this.lastError = violations.map((v) => v.message).join("; ");
        return { ok: false, status: 422, violations: violations.map((v) => v.message) };
      }
      if (err instanceof ApiError && err.status === 409) {
        await this.loadScene(); // someone else moved first: resync
        this.lastError = "stale revision, reloaded";
        return { ok: false, status: 409, violations: [] };
      }
      this.objects.set(id, before);
      throw err;
    }
  }

  /** One-shot gizmo edit: build the patch from the base state and commit. */
  async applyGizmoEdit(id: string, mode: GizmoMode, delta: GizmoDelta): Promise<EditResult> {
    return this.commitEdit(id, this.patchForGizmo(id, mode, delta));
  }

  async requestRender(camera: CameraDoc): Promise<RenderDoc> {
    const doc = await this.api.postRender(camera);
    this.lastRender = { doc, camera };
    return doc;
  }

  /** Drive server-side layout optimization and fold the result back in. */
  async runOptimize(count: number): Promise<number> {
    const resp = await this.api.postOptimizeStep(count, this.revision);
    this.revision = resp.revision;
    this.applySceneDoc(resp.scene);
    this.applyCollisions(resp.collisions);
    for (const row of resp.trace) this.lossHistory.push(row.cross);
    return resp.trace.length ? resp.trace[resp.trace.length - 1].cross : 0;
  }

  /** The model as a scene document, for reconciliation against GET /scene. */
  toSceneDoc(): SceneDoc {
    return {
      revision: this.revision,
      scene_prompt: this.scenePrompt,
      collision_threshold: this.collisionThreshold,
      loss_weights: [...this.lossWeights],
      objects: this.objectIds().map((id) => structuredClone(this.objects.get(id)!)),
    };
  }
}
