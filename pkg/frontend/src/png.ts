/**
 * Minimal deterministic PNG encoder (8-bit RGB, zlib stored blocks).
 *
 * Used instead of canvas.toDataURL so the exported bytes are identical in
 * the browser and in headless tests, and so export determinism can be
 * asserted byte-for-byte.
 */

import type { RgbImage } from "./strokes.js";

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32(value: number): Uint8Array {
  return new Uint8Array([
    (value >>> 24) & 0xff,
    (value >>> 16) & 0xff,
    (value >>> 8) & 0xff,
    value & 0xff,
  ]);
}

function chunk(type: string, body: Uint8Array): Uint8Array {
  const tag = new Uint8Array(4);
  for (let i = 0; i < 4; i++) tag[i] = type.charCodeAt(i);
  const payload = new Uint8Array(tag.length + body.length);
  payload.set(tag);
  payload.set(body, 4);
  const out = new Uint8Array(4 + payload.length + 4);
  out.set(u32(body.length));
  out.set(payload, 4);
  out.set(u32(crc32(payload)), 4 + payload.length);
  return out;
}

/** zlib stream with uncompressed (stored) deflate blocks. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const MAX = 65535;
  for (let off = 0; off < raw.length; off += MAX) {
    const len = Math.min(MAX, raw.length - off);
    const final = off + len >= raw.length ? 1 : 0;
    const header = new Uint8Array([
      final,
      len & 0xff,
      (len >>> 8) & 0xff,
      ~len & 0xff,
      (~len >>> 8) & 0xff,
    ]);
    blocks.push(header, raw.subarray(off, off + len));
  }
  blocks.push(u32(adler32(raw)));
  const total = blocks.reduce((s, b) => s + b.length, 0);
  const out = new Uint8Array(total);
  let pos = 0;
  for (const b of blocks) {
    out.set(b, pos);
    pos += b.length;
  }
  return out;
}

/** Encode an RGB image (alpha dropped) as PNG bytes. */
export function encodePng(image: RgbImage): Uint8Array {
  const { width, height, data } = image;
  const raw = new Uint8Array(height * (1 + width * 3));
  let pos = 0;
  for (let y = 0; y < height; y++) {
    raw[pos++] = 0; // filter: none
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 4;
      raw[pos++] = data[i];
      raw[pos++] = data[i + 1];
      raw[pos++] = data[i + 2];
    }
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32(width));
  ihdr.set(u32(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 2; // color type: truecolor
  const signature = new Uint8Array([137, 80, 78, 71, 13, 10, 26, 10]);
  const parts = [
    signature,
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  const total = parts.reduce((s, p) => s + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

export function toBase64(bytes: Uint8Array): string {
  if (typeof btoa === "function") {
    let bin = "";
    const CHUNK = 8192;
    for (let i = 0; i < bytes.length; i += CHUNK) {
      bin += String.fromCharCode(...bytes.subarray(i, i + CHUNK));
    }
    return btoa(bin);
  }
  // node
  return Buffer.from(bytes).toString("base64");
}

export function exportPngBase64(image: RgbImage): string {
  return toBase64(encodePng(image));
}
