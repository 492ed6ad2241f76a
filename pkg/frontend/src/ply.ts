/**
 * Minimal binary PLY reader for the splat layout the service emits:
 * little-endian float vertex attributes located by name. Only what the
 * point-sprite preview needs is decoded (positions, RGB, opacity).
 */

export interface SplatPoints {
  count: number;
  positions: Float32Array; // xyz interleaved
  colors: Float32Array; // rgb interleaved, [0, 1]
  opacities: Float32Array;
}

const TYPE_SIZES: Record<string, number> = {
  char: 1, int8: 1, uchar: 1, uint8: 1,
  short: 2, int16: 2, ushort: 2, uint16: 2,
  int: 4, int32: 4, uint: 4, uint32: 4,
  float: 4, float32: 4, double: 8, float64: 8,
};

export function parsePly(buffer: ArrayBuffer): SplatPoints {
  const bytes = new Uint8Array(buffer);
  const marker = "end_header\n";
  const headerEnd = findAscii(bytes, marker);
  if (headerEnd < 0) throw new Error("not a PLY file");
  const header = asciiSlice(bytes, 0, headerEnd).split("\n");

  let count = 0;
  let inVertex = false;
  const props: Array<{ name: string; type: string; offset: number }> = [];
  let stride = 0;
  for (const line of header) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === "format" && parts[1] !== "binary_little_endian") {
      throw new Error(`unsupported PLY format ${parts[1]}`);
    }
    if (parts[0] === "element") {
      inVertex = parts[1] === "vertex";
      if (inVertex) count = parseInt(parts[2], 10);
    } else if (parts[0] === "property" && inVertex) {
      if (parts[1] === "list") throw new Error("list properties unsupported");
      props.push({ name: parts[2], type: parts[1], offset: stride });
      stride += TYPE_SIZES[parts[1]] ?? NaN;
    }
  }
  if (!Number.isFinite(stride)) throw new Error("unknown property type");

  const need = (name: string) => {
    const p = props.find((q) => q.name === name);
    if (!p) throw new Error(`missing attribute ${name}`);
    if (p.type !== "float" && p.type !== "float32") {
      throw new Error(`attribute ${name} is not float`);
    }
    return p.offset;
  };
  const offsets = {
    x: need("x"), y: need("y"), z: need("z"),
    r: need("f_dc_0"), g: need("f_dc_1"), b: need("f_dc_2"),
    opacity: need("opacity"),
  };

  const view = new DataView(buffer, headerEnd + marker.length);
  const positions = new Float32Array(count * 3);
  const colors = new Float32Array(count * 3);
  const opacities = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    const base = i * stride;
    positions[i * 3] = view.getFloat32(base + offsets.x, true);
    positions[i * 3 + 1] = view.getFloat32(base + offsets.y, true);
    positions[i * 3 + 2] = view.getFloat32(base + offsets.z, true);
    colors[i * 3] = clamp01(view.getFloat32(base + offsets.r, true));
    colors[i * 3 + 1] = clamp01(view.getFloat32(base + offsets.g, true));
    colors[i * 3 + 2] = clamp01(view.getFloat32(base + offsets.b, true));
    // stored in the logit domain
    opacities[i] = 1 / (1 + Math.exp(-view.getFloat32(base + offsets.opacity, true)));
  }
  return { count, positions, colors, opacities };
}

function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v));
}

function findAscii(bytes: Uint8Array, needle: string): number {
  outer: for (let i = 0; i + needle.length <= bytes.length; i++) {
    for (let j = 0; j < needle.length; j++) {
      if (bytes[i + j] !== needle.charCodeAt(j)) continue outer;
    }
    return i;
  }
  return -1;
}

function asciiSlice(bytes: Uint8Array, start: number, end: number): string {
  let out = "";
  for (let i = start; i < end; i++) out += String.fromCharCode(bytes[i]);
  return out;
}
