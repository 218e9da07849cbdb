/** Dataset loading and crop sampling.
 *
 * A dataset directory follows the generator layout: frames/frame_NNNN.pgm
 * plus masks/ring_NNNN.pgm and masks/reflector_NNNN.pgm. Training never sees
 * whole frames; it samples square crops, biased toward mask-positive regions
 * because the targets cover a tiny fraction of each frame and plain BCE on
 * uniform crops would starve the positive class.
 */

import { readdirSync } from "node:fs";
import { join } from "node:path";

import type { Target } from "./model.js";
import { readPgm, type GrayImage } from "./pgm.js";
import type { Rng } from "./rng.js";

export interface Sample {
  img: GrayImage;
  mask: GrayImage;
  /** Packed (y, x) pairs of mask-positive pixels on a stride-2 grid. */
  pos: Int32Array;
}

/** Positive-pixel anchor list; stride 2 keeps it small without losing coverage. */
export function positivePixels(mask: GrayImage): Int32Array {
  const found: number[] = [];
  for (let i = 0; i < mask.height; i += 2) {
    for (let j = 0; j < mask.width; j += 2) {
      if (mask.data[i * mask.width + j] >= 0.5) found.push(i, j);
    }
  }
  return Int32Array.from(found);
}

export function loadDataset(root: string, target: Target): Sample[] {
  const names = readdirSync(join(root, "frames"))
    .filter((f) => f.endsWith(".pgm"))
    .sort();
  if (names.length === 0) throw new Error(`${root}: no frames found`);
  const out: Sample[] = [];
  for (const name of names) {
    const m = /(\d+)/.exec(name);
    if (!m) throw new Error(`${root}: frame name ${name} carries no index`);
    const img = readPgm(join(root, "frames", name));
    const mask = readPgm(join(root, "masks", `${target}_${m[1]}.pgm`));
    if (mask.width !== img.width || mask.height !== img.height) {
      throw new Error(`${root}: mask size mismatch for ${name}`);
    }
    out.push({ img, mask, pos: positivePixels(mask) });
  }
  return out;
}

export interface Crop {
  /** (inCh, size, size) input planes, grayscale replicated. */
  x: Float32Array;
  /** (size, size) binary labels. */
  t: Float32Array;
}

export const POSITIVE_CROP_RATE = 0.7;
const CENTER_JITTER = 40; // px span around a positive anchor

/** Draws one training crop. Consumes 1 or 3 rng values plus none for layout. */
export function sampleCrop(rng: Rng, sample: Sample, inCh: number, size: number): Crop {
  const { width: w, height: h } = sample.img;
  if (size > w || size > h) throw new Error("crop larger than frame");
  let cy: number;
  let cx: number;
  if (sample.pos.length > 0 && rng() < POSITIVE_CROP_RATE) {
    const k = Math.floor(rng() * (sample.pos.length / 2));
    cy = sample.pos[2 * k] + Math.floor((rng() - 0.5) * CENTER_JITTER);
    cx = sample.pos[2 * k + 1] + Math.floor((rng() - 0.5) * CENTER_JITTER);
  } else {
    cy = Math.floor(rng() * h);
    cx = Math.floor(rng() * w);
  }
  const y0 = Math.max(0, Math.min(h - size, cy - size / 2));
  const x0 = Math.max(0, Math.min(w - size, cx - size / 2));
  const x = new Float32Array(inCh * size * size);
  const t = new Float32Array(size * size);
  for (let i = 0; i < size; i++) {
    for (let j = 0; j < size; j++) {
      const v = sample.img.data[(y0 + i) * w + x0 + j];
      for (let c = 0; c < inCh; c++) x[c * size * size + i * size + j] = v;
      t[i * size + j] = sample.mask.data[(y0 + i) * w + x0 + j] >= 0.5 ? 1 : 0;
    }
  }
  return { x, t };
}
