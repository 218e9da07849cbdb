/** PORTCNN1 weight container writer and reader.
 *
 * Little-endian layout:
 *
 *     magic    8 bytes  "PORTCNN1"
 *     version  u32
 *     modality u8       1 = event (1 input channel), 3 = rgb (3 channels)
 *     target   u8       0 = ring, 1 = reflector
 *     layers   u32
 *     per layer:
 *         kind u8       1 conv, 2 maxpool, 3 deconv, 4 sigmoid
 *         out, in, kh, kw, stride, padding   6 x u32
 *         bias f32 x out, weight f32 x out*in*kh*kw   (conv/deconv only)
 *     crc32    u32 over everything between the magic and this field
 *
 * The reader exists for round-trip tests and inspection; the real consumer
 * is the python inference engine.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { crc32 } from "node:zlib";

import { KIND_CONV, KIND_DECONV, type LayerSpec, type Modality, type Target } from "./model.js";

const MAGIC = Buffer.from("PORTCNN1", "ascii");
const VERSION = 1;

export const MODALITY_BYTE: Record<Modality, number> = { event: 1, rgb: 3 };
export const TARGET_BYTE: Record<Target, number> = { ring: 0, reflector: 1 };

export function encodeWeights(modality: Modality, target: Target, layers: LayerSpec[]): Buffer {
  const parts: Buffer[] = [];
  const head = Buffer.alloc(10);
  head.writeUInt32LE(VERSION, 0);
  head.writeUInt8(MODALITY_BYTE[modality], 4);
  head.writeUInt8(TARGET_BYTE[target], 5);
  head.writeUInt32LE(layers.length, 6);
  parts.push(head);
  for (const layer of layers) {
    const meta = Buffer.alloc(25);
    meta.writeUInt8(layer.kind, 0);
    meta.writeUInt32LE(layer.outChannels, 1);
    meta.writeUInt32LE(layer.inChannels, 5);
    meta.writeUInt32LE(layer.kh, 9);
    meta.writeUInt32LE(layer.kw, 13);
    meta.writeUInt32LE(layer.stride, 17);
    meta.writeUInt32LE(layer.padding, 21);
    parts.push(meta);
    if (layer.kind === KIND_CONV || layer.kind === KIND_DECONV) {
      const bias = layer.bias;
      const weight = layer.weight;
      if (!bias || !weight) throw new Error("conv/deconv layer missing tensors");
      if (bias.length !== layer.outChannels) throw new Error("bias length mismatch");
      if (weight.length !== layer.outChannels * layer.inChannels * layer.kh * layer.kw) {
        throw new Error("weight length mismatch");
      }
      parts.push(float32Buffer(bias), float32Buffer(weight));
    }
  }
  const payload = Buffer.concat(parts);
  const tail = Buffer.alloc(4);
  tail.writeUInt32LE(crc32(payload) >>> 0, 0);
  return Buffer.concat([MAGIC, payload, tail]);
}

export function saveWeights(path: string, modality: Modality, target: Target, layers: LayerSpec[]): void {
  writeFileSync(path, encodeWeights(modality, target, layers));
}

function float32Buffer(a: Float32Array): Buffer {
  // Copy through a fresh little-endian buffer rather than aliasing a.buffer,
  // which may be a larger backing store.
  const out = Buffer.alloc(4 * a.length);
  for (let i = 0; i < a.length; i++) out.writeFloatLE(a[i], 4 * i);
  return out;
}

export interface WeightFile {
  modality: number;
  target: number;
  layers: LayerSpec[];
}

export function decodeWeights(blob: Buffer): WeightFile {
  if (!blob.subarray(0, 8).equals(MAGIC)) throw new Error("bad magic");
  if (blob.length < 8 + 10 + 4) throw new Error("truncated container");
  const payload = blob.subarray(8, blob.length - 4);
  const stored = blob.readUInt32LE(blob.length - 4);
  const actual = crc32(payload) >>> 0;
  if (stored !== actual) throw new Error("crc mismatch");
  const version = payload.readUInt32LE(0);
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const modality = payload.readUInt8(4);
  const target = payload.readUInt8(5);
  const layerCount = payload.readUInt32LE(6);
  let pos = 10;
  const layers: LayerSpec[] = [];
  for (let i = 0; i < layerCount; i++) {
    if (pos + 25 > payload.length) throw new Error(`truncated at layer ${i}`);
    const layer: LayerSpec = {
      kind: payload.readUInt8(pos),
      outChannels: payload.readUInt32LE(pos + 1),
      inChannels: payload.readUInt32LE(pos + 5),
      kh: payload.readUInt32LE(pos + 9),
      kw: payload.readUInt32LE(pos + 13),
      stride: payload.readUInt32LE(pos + 17),
      padding: payload.readUInt32LE(pos + 21),
    };
    pos += 25;
    if (layer.kind === KIND_CONV || layer.kind === KIND_DECONV) {
      const nb = layer.outChannels;
      const nw = layer.outChannels * layer.inChannels * layer.kh * layer.kw;
      if (pos + 4 * (nb + nw) > payload.length) throw new Error(`truncated tensors at layer ${i}`);
      const bias = new Float32Array(nb);
      for (let k = 0; k < nb; k++) bias[k] = payload.readFloatLE(pos + 4 * k);
      pos += 4 * nb;
      const weight = new Float32Array(nw);
      for (let k = 0; k < nw; k++) weight[k] = payload.readFloatLE(pos + 4 * k);
      pos += 4 * nw;
      layer.bias = bias;
      layer.weight = weight;
    }
    layers.push(layer);
  }
  if (pos !== payload.length) throw new Error("trailing bytes after layers");
  return { modality, target, layers };
}

export function loadWeightFile(path: string): WeightFile {
  return decodeWeights(readFileSync(path));
}
