/** Binary PGM (P5) reader for dataset frames and ground-truth masks. */

import { readFileSync } from "node:fs";

export interface GrayImage {
  width: number;
  height: number;
  /** Row-major intensities scaled to [0, 1]. */
  data: Float32Array;
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d || byte === 0x0b || byte === 0x0c;
}

/** Parse a P5 buffer. Comments (# to end of line) may appear between header
 * tokens; exactly one whitespace byte separates the maxval from pixel data. */
export function parsePgm(blob: Buffer): GrayImage {
  if (blob.length < 2 || blob[0] !== 0x50 || blob[1] !== 0x35) {
    throw new Error("not a binary PGM (P5) buffer");
  }
  const tokens: string[] = [];
  let pos = 2;
  while (tokens.length < 3) {
    while (pos < blob.length && isSpace(blob[pos])) pos++;
    if (pos < blob.length && blob[pos] === 0x23) {
      while (pos < blob.length && blob[pos] !== 0x0a) pos++;
      continue;
    }
    const start = pos;
    while (pos < blob.length && !isSpace(blob[pos])) pos++;
    if (start === pos) throw new Error("truncated PGM header");
    tokens.push(blob.subarray(start, pos).toString("ascii"));
  }
  pos++;
  const width = Number(tokens[0]);
  const height = Number(tokens[1]);
  const maxval = Number(tokens[2]);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`bad PGM dimensions ${tokens[0]} x ${tokens[1]}`);
  }
  if (maxval !== 255) throw new Error(`unsupported PGM maxval ${maxval}`);
  const n = width * height;
  if (blob.length < pos + n) throw new Error("PGM pixel data truncated");
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = blob[pos + i] / 255;
  return { width, height, data };
}

export function readPgm(path: string): GrayImage {
  return parsePgm(readFileSync(path));
}
