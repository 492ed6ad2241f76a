/**
 * Scalar-first quaternion helpers matching the server's Hamilton
 * convention. A shared vector file (tests/fixtures/quat_vectors.json in
 * the Python package) pins both sides to the same products.
 */

export type Quat = [number, number, number, number]; // (w, x, y, z)
export type Vec3 = [number, number, number];

export const IDENTITY: Quat = [1, 0, 0, 0];

export function quatMul(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  const out: Quat = [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
  return quatNormalize(out);
}

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function quatFromAxisAngle(axis: Vec3, angle: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  const s = Math.sin(angle / 2) / n;
  return [Math.cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s];
}

/** Rotate a vector by a unit quaternion. */
export function quatRotate(q: Quat, v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  // v' = v + 2 * r x (r x v + w v), r = (x, y, z)
  const rx = y * v[2] - z * v[1] + w * v[0];
  const ry = z * v[0] - x * v[2] + w * v[1];
  const rz = x * v[1] - y * v[0] + w * v[2];
  return [
    v[0] + 2 * (y * rz - z * ry),
    v[1] + 2 * (z * rx - x * rz),
    v[2] + 2 * (x * ry - y * rx),
  ];
}

/** Angular difference ignoring the double cover (q and -q are the same rotation). */
export function quatDistance(a: Quat, b: Quat): number {
  let direct = 0;
  let flipped = 0;
  for (let i = 0; i < 4; i++) {
    direct = Math.max(direct, Math.abs(a[i] - b[i]));
    flipped = Math.max(flipped, Math.abs(a[i] + b[i]));
  }
  return Math.min(direct, flipped);
}
