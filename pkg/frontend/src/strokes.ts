/**
 * Stroke document model and pure rasterization.
 *
 * The canvas is 512 px; exports downsample to 256 px RGB where each stroke
 * tool owns exactly one channel: ridge -> red, levelset -> green,
 * valley -> blue. The eraser clears all three channels along its path.
 * Rasterization is a pure function of the stroke list, so replaying a
 * document always yields pixel-identical output.
 */

export type Tool = "ridge" | "valley" | "levelset" | "eraser";

export interface Point {
  x: number;
  y: number;
}

export interface Stroke {
  tool: Tool;
  thicknessPx: number; // 1..32 at canvas resolution
  points: Point[]; // >= 1
}

export interface StrokeDocument {
  canvasPx: number;
  strokes: Stroke[];
}

export const CANVAS_PX = 512;
export const EXPORT_PX = 256;
export const MIN_THICKNESS = 1;
export const MAX_THICKNESS = 32;

export const DEFAULT_THICKNESS: Record<Exclude<Tool, "eraser">, number> = {
  levelset: 8, // dense contours drawn with few strokes
  ridge: 2,
  valley: 2,
};

export function emptyDocument(canvasPx: number = CANVAS_PX): StrokeDocument {
  return { canvasPx, strokes: [] };
}

export function clampThickness(t: number): number {
  return Math.min(MAX_THICKNESS, Math.max(MIN_THICKNESS, Math.round(t)));
}

/** Binary channel masks at canvas resolution. */
export interface ChannelMasks {
  size: number;
  red: Uint8Array;
  green: Uint8Array;
  blue: Uint8Array;
}

function stampSegment(
  mask: Uint8Array,
  size: number,
  a: Point,
  b: Point,
  radius: number,
  value: 0 | 1,
  extra?: Uint8Array[],
): void {
  const minX = Math.max(0, Math.floor(Math.min(a.x, b.x) - radius));
  const maxX = Math.min(size - 1, Math.ceil(Math.max(a.x, b.x) + radius));
  const minY = Math.max(0, Math.floor(Math.min(a.y, b.y) - radius));
  const maxY = Math.min(size - 1, Math.ceil(Math.max(a.y, b.y) + radius));
  const dx = b.x - a.x;
  const dy = b.y - a.y;
  const len2 = dx * dx + dy * dy;
  const r2 = radius * radius;
  for (let y = minY; y <= maxY; y++) {
    for (let x = minX; x <= maxX; x++) {
      // squared distance from pixel center to the segment
      let t = len2 > 0 ? ((x - a.x) * dx + (y - a.y) * dy) / len2 : 0;
      t = Math.max(0, Math.min(1, t));
      const px = a.x + t * dx;
      const py = a.y + t * dy;
      const d2 = (x - px) * (x - px) + (y - py) * (y - py);
      if (d2 <= r2) {
        const idx = y * size + x;
        mask[idx] = value;
        if (extra) for (const m of extra) m[idx] = value;
      }
    }
  }
}

/** Rasterize strokes in order onto per-channel binary masks. */
export function rasterize(doc: StrokeDocument): ChannelMasks {
  const size = doc.canvasPx;
  const red = new Uint8Array(size * size);
  const green = new Uint8Array(size * size);
  const blue = new Uint8Array(size * size);
  const byTool: Record<Exclude<Tool, "eraser">, Uint8Array> = {
    ridge: red,
    levelset: green,
    valley: blue,
  };
  for (const stroke of doc.strokes) {
    if (stroke.points.length === 0) continue;
    const radius = clampThickness(stroke.thicknessPx) / 2;
    const pts = stroke.points;
    const segments: Array<[Point, Point]> = [];
    if (pts.length === 1) {
      segments.push([pts[0], pts[0]]);
    } else {
      for (let i = 1; i < pts.length; i++) segments.push([pts[i - 1], pts[i]]);
    }
    for (const [a, b] of segments) {
      if (stroke.tool === "eraser") {
        stampSegment(red, size, a, b, radius, 0, [green, blue]);
      } else {
        stampSegment(byTool[stroke.tool], size, a, b, radius, 1);
      }
    }
  }
  return { size, red, green, blue };
}

/** 8-bit RGB image buffer (no alpha semantics beyond opaque). */
export interface RgbImage {
  width: number;
  height: number;
  /** RGBA byte layout compatible with canvas ImageData */
  data: Uint8ClampedArray;
}

function downsampleMask(mask: Uint8Array, size: number, out: number): Uint8Array {
  // a target pixel is set when any pixel of its 2x2 block is set, so thin
  // strokes survive the 512 -> 256 reduction
  const factor = size / out;
  const result = new Uint8Array(out * out);
  for (let y = 0; y < out; y++) {
    for (let x = 0; x < out; x++) {
      let v = 0;
      for (let dy = 0; dy < factor && !v; dy++) {
        for (let dx = 0; dx < factor && !v; dx++) {
          v = mask[(y * factor + dy) * size + (x * factor + dx)];
        }
      }
      result[y * out + x] = v;
    }
  }
  return result;
}

/** Export the document as a 256 x 256 RGB image with pure channels. */
export function exportTopoMap(doc: StrokeDocument, outPx: number = EXPORT_PX): RgbImage {
  const masks = rasterize(doc);
  const red = downsampleMask(masks.red, masks.size, outPx);
  const green = downsampleMask(masks.green, masks.size, outPx);
  const blue = downsampleMask(masks.blue, masks.size, outPx);
  const data = new Uint8ClampedArray(outPx * outPx * 4);
  for (let i = 0; i < outPx * outPx; i++) {
    data[i * 4] = red[i] ? 255 : 0;
    data[i * 4 + 1] = green[i] ? 255 : 0;
    data[i * 4 + 2] = blue[i] ? 255 : 0;
    data[i * 4 + 3] = 255;
  }
  return { width: outPx, height: outPx, data };
}

/** Full-resolution RGBA rendering for the on-screen canvas. */
export function renderCanvas(doc: StrokeDocument): RgbImage {
  const masks = rasterize(doc);
  const n = masks.size * masks.size;
  const data = new Uint8ClampedArray(n * 4);
  for (let i = 0; i < n; i++) {
    data[i * 4] = masks.red[i] ? 255 : 0;
    data[i * 4 + 1] = masks.green[i] ? 255 : 0;
    data[i * 4 + 2] = masks.blue[i] ? 255 : 0;
    data[i * 4 + 3] = 255;
  }
  return { width: masks.size, height: masks.size, data };
}
