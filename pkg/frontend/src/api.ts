/**
 * Typed client for the scene service. Everything the editor knows about
 * the backend goes through the SceneApi interface so tests can swap in a
 * scripted fake; HttpSceneApi is the fetch-backed implementation.
 */

import type { Quat, Vec3 } from "./quat.js";

export interface TransformDoc {
  xyz: Vec3;
  whl: Vec3;
  quad: Quat;
}

export interface ObjectDoc {
  id: string;
  cls: string;
  prompt: string;
  pervasive: boolean;
  freeze: boolean;
  transform: TransformDoc;
}

export interface SceneDoc {
  revision: number;
  scene_prompt: string;
  collision_threshold: number;
  loss_weights: [number, number, number];
  objects: ObjectDoc[];
}

export interface CollisionDoc {
  pair: [string, string];
  loss: number;
  pair_count: number;
  grad_xyz_a: Vec3;
  grad_xyz_b: Vec3;
}

export interface CameraDoc {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
  near: number;
  far: number;
  pose: { quad: Quat; t: Vec3 };
}

export interface RenderDoc {
  revision: number;
  width: number;
  height: number;
  rgb_png: string; // base64
  depth_png: string; // base64
  depth_range: { depth_min: number; depth_max: number };
}

export interface OptimizeDoc {
  revision: number;
  trace: Array<{ step: number; local: number; cross: number; global: number; total: number }>;
  scene: SceneDoc;
  collisions: CollisionDoc[];
}

export interface TransformPatch {
  xyz?: Vec3;
  whl?: Vec3;
  quad?: Quat;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: Record<string, unknown>,
  ) {
    super(`${status}: ${JSON.stringify(body)}`);
  }
}

export interface SceneApi {
  getScene(): Promise<SceneDoc>;
  getCollisions(): Promise<{ revision: number; collisions: CollisionDoc[] }>;
  getObjectPly(id: string): Promise<ArrayBuffer>;
  /** Rejects with ApiError(409 | 422 | 404) on refused edits. */
  postTransform(
    id: string,
    patch: TransformPatch,
    ifRevision: number,
  ): Promise<{ revision: number; collisions: CollisionDoc[] }>;
  postRender(camera: CameraDoc): Promise<RenderDoc>;
  postOptimizeStep(count: number, ifRevision: number): Promise<OptimizeDoc>;
}

export class HttpSceneApi implements SceneApi {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let body: Record<string, unknown> = {};
      try {
        body = (await resp.json()) as Record<string, unknown>;
      } catch {
        // non-JSON error body: keep the status only
      }
      throw new ApiError(resp.status, body);
    }
    return (await resp.json()) as T;
  }

  getScene(): Promise<SceneDoc> {
    return this.request<SceneDoc>("/scene");
  }

  getCollisions(): Promise<{ revision: number; collisions: CollisionDoc[] }> {
    return this.request("/collisions");
  }

  async getObjectPly(id: string): Promise<ArrayBuffer> {
    const resp = await this.fetchFn(`${this.baseUrl}/objects/${encodeURIComponent(id)}/ply`);
    if (!resp.ok) throw new ApiError(resp.status, {});
    return resp.arrayBuffer();
  }

  postTransform(
    id: string,
    patch: TransformPatch,
    ifRevision: number,
  ): Promise<{ revision: number; collisions: CollisionDoc[] }> {
    return this.request(`/objects/${encodeURIComponent(id)}/transform`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ ...patch, if_revision: ifRevision }),
    });
  }

  postRender(camera: CameraDoc): Promise<RenderDoc> {
    return this.request("/render", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ camera }),
    });
  }

  postOptimizeStep(count: number, ifRevision: number): Promise<OptimizeDoc> {
    return this.request("/optimize/step", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ count, if_revision: ifRevision }),
    });
  }
}
