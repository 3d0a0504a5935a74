/**
 * Client-side reader for the coordinate bundle's binary payload.
 *
 * The server stores the bundle gzip-compressed and serves it with
 * `Content-Encoding: gzip`, so fetch() hands us the decompressed payload:
 *
 *   "WVB1" | u32 dataset count | per dataset:
 *     u16 name len + UTF-8 | u32 point count | per point:
 *       u16 id len + UTF-8 | f32 x | f32 y | u16 preview len + UTF-8
 *
 * All integers little-endian.
 */

import type { BundleDataset, ParsedBundle } from "./types.js";

const MAGIC = 0x31425657; // "WVB1" read as LE u32

export function parseBundle(buffer: ArrayBuffer): ParsedBundle {
  const view = new DataView(buffer);
  const decoder = new TextDecoder("utf-8");
  let pos = 0;

  if (buffer.byteLength < 8 || view.getUint32(0, true) !== MAGIC) {
    throw new Error("not a coordinate bundle (bad magic)");
  }
  pos += 4;

  const readString = (lengthBytes: 2): string => {
    const length = view.getUint16(pos, true);
    pos += lengthBytes;
    const text = decoder.decode(new Uint8Array(buffer, pos, length));
    pos += length;
    return text;
  };

  const datasetCount = view.getUint32(pos, true);
  pos += 4;
  const datasets: BundleDataset[] = [];
  for (let d = 0; d < datasetCount; d++) {
    const name = readString(2);
    const pointCount = view.getUint32(pos, true);
    pos += 4;
    const points = new Array(pointCount);
    for (let p = 0; p < pointCount; p++) {
      const conversationId = readString(2);
      const x = view.getFloat32(pos, true);
      const y = view.getFloat32(pos + 4, true);
      pos += 8;
      const preview = readString(2);
      points[p] = { conversationId, x, y, preview };
    }
    datasets.push({ name, points });
  }
  if (pos !== buffer.byteLength) {
    throw new Error(`trailing bytes after bundle payload (${buffer.byteLength - pos})`);
  }
  return { datasets };
}
