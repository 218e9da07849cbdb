/** Minimal NPY (format version 1.0) writer and reader.
 *
 * Only what the probe artifacts need: little-endian float arrays, C order.
 * The header is padded so the data section starts on a 64-byte boundary,
 * matching what standard tooling emits.
 */

import { readFileSync, writeFileSync } from "node:fs";

const MAGIC = Buffer.from("\x93NUMPY", "latin1");

export function encodeNpy(data: Float64Array, shape: number[]): Buffer {
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new Error(`shape [${shape}] does not match ${data.length} elements`);
  }
  const shapeStr = shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(", ")})`;
  let header = `{'descr': '<f8', 'fortran_order': False, 'shape': ${shapeStr}, }`;
  const unpadded = MAGIC.length + 2 + 2 + header.length + 1;
  header += " ".repeat((64 - (unpadded % 64)) % 64);
  header += "\n";
  const head = Buffer.alloc(MAGIC.length + 2 + 2 + header.length);
  MAGIC.copy(head, 0);
  head[6] = 1;
  head[7] = 0;
  head.writeUInt16LE(header.length, 8);
  head.write(header, 10, "latin1");
  const body = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  return Buffer.concat([head, body]);
}

export function writeNpy(path: string, data: Float64Array, shape: number[]): void {
  writeFileSync(path, encodeNpy(data, shape));
}

export interface NpyArray {
  shape: number[];
  data: Float64Array;
}

export function decodeNpy(blob: Buffer): NpyArray {
  if (!blob.subarray(0, 6).equals(MAGIC)) throw new Error("not an NPY buffer");
  const major = blob[6];
  if (major !== 1) throw new Error(`unsupported NPY version ${major}`);
  const headerLen = blob.readUInt16LE(8);
  const header = blob.subarray(10, 10 + headerLen).toString("latin1");
  const descr = /'descr':\s*'([^']+)'/.exec(header);
  const fortran = /'fortran_order':\s*(True|False)/.exec(header);
  const shapeMatch = /'shape':\s*\(([^)]*)\)/.exec(header);
  if (!descr || !fortran || !shapeMatch) throw new Error("malformed NPY header");
  if (fortran[1] === "True") throw new Error("fortran order not supported");
  const shape = shapeMatch[1]
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map(Number);
  const count = shape.reduce((a, b) => a * b, 1);
  const body = blob.subarray(10 + headerLen);
  const data = new Float64Array(count);
  if (descr[1] === "<f8") {
    for (let i = 0; i < count; i++) data[i] = body.readDoubleLE(8 * i);
  } else if (descr[1] === "<f4") {
    for (let i = 0; i < count; i++) data[i] = body.readFloatLE(4 * i);
  } else {
    throw new Error(`unsupported NPY dtype ${descr[1]}`);
  }
  return { shape, data };
}

export function readNpy(path: string): NpyArray {
  return decodeNpy(readFileSync(path));
}
