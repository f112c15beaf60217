/** Minimal binary little-endian PLY reader for the preview clouds. */

export interface Cloud {
  count: number;
  /** xyz triplets, length 3 * count */
  points: Float64Array;
  /** rgb triplets, length 3 * count, when the file carries colors */
  colors: Uint8Array | null;
}

const TYPE_SIZES: Record<string, number> = {
  double: 8,
  float64: 8,
  float: 4,
  float32: 4,
  uchar: 1,
  uint8: 1,
};

export function parsePly(buffer: ArrayBuffer): Cloud {
  const bytes = new Uint8Array(buffer);
  const marker = "end_header\n";
  const headerEnd = findAscii(bytes, marker);
  if (headerEnd < 0) throw new Error("not a PLY file: missing end_header");
  const header = asciiSlice(bytes, 0, headerEnd).split("\n");
  if (header[0] !== "ply") throw new Error("not a PLY file");

  let count = -1;
  let littleEndian = false;
  const props: { name: string; type: string }[] = [];
  for (const line of header) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === "format") littleEndian = parts[1] === "binary_little_endian";
    else if (parts[0] === "element" && parts[1] === "vertex") count = parseInt(parts[2], 10);
    else if (parts[0] === "property") {
      if (!(parts[1] in TYPE_SIZES)) throw new Error(`unsupported PLY property type ${parts[1]}`);
      props.push({ type: parts[1], name: parts[2] });
    }
  }
  if (!littleEndian || count < 0) throw new Error("expected a binary_little_endian PLY with vertices");

  const stride = props.reduce((acc, p) => acc + TYPE_SIZES[p.type], 0);
  const dataStart = headerEnd + marker.length;
  if (buffer.byteLength - dataStart < count * stride) throw new Error("truncated PLY payload");

  const view = new DataView(buffer, dataStart);
  const points = new Float64Array(3 * count);
  const hasColor = ["red", "green", "blue"].every((n) => props.some((p) => p.name === n));
  const colors = hasColor ? new Uint8Array(3 * count) : null;

  for (let i = 0; i < count; i++) {
    let offset = i * stride;
    for (const p of props) {
      const size = TYPE_SIZES[p.type];
      let value: number;
      if (size === 8) value = view.getFloat64(offset, true);
      else if (size === 4) value = view.getFloat32(offset, true);
      else value = view.getUint8(offset);
      offset += size;
      switch (p.name) {
        case "x":
          points[3 * i] = value;
          break;
        case "y":
          points[3 * i + 1] = value;
          break;
        case "z":
          points[3 * i + 2] = value;
          break;
        case "red":
          if (colors) colors[3 * i] = value;
          break;
        case "green":
          if (colors) colors[3 * i + 1] = value;
          break;
        case "blue":
          if (colors) colors[3 * i + 2] = value;
          break;
      }
    }
  }
  return { count, points, colors };
}

function findAscii(bytes: Uint8Array, needle: string): number {
  outer: for (let i = 0; i <= bytes.length - needle.length; i++) {
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
