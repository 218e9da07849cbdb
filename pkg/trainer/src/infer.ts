/** Full-frame float64 inference over a serialized layer list.
 *
 * This mirrors the consumer engine step for step: grayscale frames are
 * replicated across the expected input channels, the frame is reflect-padded
 * on the bottom and right to a multiple of 8, the layer chain runs in double
 * precision (stored f32 weights widened once), and the result is cropped back
 * to frame size. Kept separate from the training kernels because training is
 * f32 crop-based while probe generation must match the consumer bit-for-bit
 * at f64 resolution.
 */

import { KIND_CONV, KIND_DECONV, KIND_MAXPOOL, KIND_SIGMOID, type LayerSpec } from "./model.js";
import type { GrayImage } from "./pgm.js";

interface Tensor3 {
  data: Float64Array;
  C: number;
  H: number;
  W: number;
}

function convF64(x: Tensor3, layer: LayerSpec, w: Float64Array, b: Float64Array): Tensor3 {
  // validated containers only carry stride-1 same-padding convs
  const { C, H, W } = x;
  const K = layer.kh;
  const P = layer.padding;
  const O = layer.outChannels;
  const y = new Float64Array(O * H * W);
  for (let o = 0; o < O; o++) {
    const bias = b[o];
    for (let i = 0; i < H; i++) {
      for (let j = 0; j < W; j++) {
        let acc = bias;
        for (let c = 0; c < C; c++) {
          const xoff = c * H * W;
          const woff = (o * C + c) * K * K;
          for (let u = 0; u < K; u++) {
            const ii = i + u - P;
            if (ii < 0 || ii >= H) continue;
            for (let v = 0; v < K; v++) {
              const jj = j + v - P;
              if (jj < 0 || jj >= W) continue;
              acc += x.data[xoff + ii * W + jj] * w[woff + u * K + v];
            }
          }
        }
        y[o * H * W + i * W + j] = acc;
      }
    }
  }
  return { data: y, C: O, H, W };
}

function deconvF64(x: Tensor3, layer: LayerSpec, w: Float64Array, b: Float64Array): Tensor3 {
  const { C, H, W } = x;
  const K = layer.kh;
  const S = layer.stride;
  const P = layer.padding;
  const O = layer.outChannels;
  const Ho = (H - 1) * S - 2 * P + K;
  const Wo = (W - 1) * S - 2 * P + K;
  const y = new Float64Array(O * Ho * Wo);
  for (let o = 0; o < O; o++) {
    const bias = b[o];
    for (let p = o * Ho * Wo; p < (o + 1) * Ho * Wo; p++) y[p] = bias;
    for (let c = 0; c < C; c++) {
      const xoff = c * H * W;
      const woff = (o * C + c) * K * K;
      for (let i = 0; i < H; i++) {
        for (let j = 0; j < W; j++) {
          const xv = x.data[xoff + i * W + j];
          for (let u = 0; u < K; u++) {
            const ii = i * S - P + u;
            if (ii < 0 || ii >= Ho) continue;
            for (let v = 0; v < K; v++) {
              const jj = j * S - P + v;
              if (jj < 0 || jj >= Wo) continue;
              y[o * Ho * Wo + ii * Wo + jj] += xv * w[woff + u * K + v];
            }
          }
        }
      }
    }
  }
  return { data: y, C: O, H: Ho, W: Wo };
}

function maxpoolF64(x: Tensor3): Tensor3 {
  const { C, H, W } = x;
  const Ho = H >> 1;
  const Wo = W >> 1;
  const y = new Float64Array(C * Ho * Wo);
  for (let c = 0; c < C; c++) {
    const base = c * H * W;
    for (let i = 0; i < Ho; i++) {
      for (let j = 0; j < Wo; j++) {
        const p = base + 2 * i * W + 2 * j;
        y[c * Ho * Wo + i * Wo + j] = Math.max(x.data[p], x.data[p + 1], x.data[p + W], x.data[p + W + 1]);
      }
    }
  }
  return { data: y, C, H: Ho, W: Wo };
}

export interface MaskImage {
  width: number;
  height: number;
  data: Float64Array;
}

/** Reflect-pad (no edge repeat) a grayscale frame and replicate channels. */
function packInput(frame: GrayImage, inCh: number): Tensor3 {
  const H = frame.height;
  const W = frame.width;
  const Hp = H + ((-H % 8) + 8) % 8;
  const Wp = W + ((-W % 8) + 8) % 8;
  const plane = new Float64Array(Hp * Wp);
  for (let i = 0; i < Hp; i++) {
    const ii = i < H ? i : 2 * H - 2 - i;
    for (let j = 0; j < Wp; j++) {
      const jj = j < W ? j : 2 * W - 2 - j;
      plane[i * Wp + j] = frame.data[ii * W + jj];
    }
  }
  const data = new Float64Array(inCh * Hp * Wp);
  for (let c = 0; c < inCh; c++) data.set(plane, c * Hp * Wp);
  return { data, C: inCh, H: Hp, W: Wp };
}

/** Runs the 11-layer chain on one grayscale frame, returning per-pixel probabilities. */
export function runLayers(layers: LayerSpec[], modalityByte: number, frame: GrayImage): MaskImage {
  const inCh = modalityByte === 1 ? 1 : 3;
  let x = packInput(frame, inCh);
  const lastWeighted = layers.length - 2; // the head conv feeds the sigmoid unactivated
  for (let li = 0; li < layers.length; li++) {
    const layer = layers[li];
    if (layer.kind === KIND_CONV || layer.kind === KIND_DECONV) {
      if (!layer.weight || !layer.bias) throw new Error(`layer ${li} missing tensors`);
      const w = Float64Array.from(layer.weight);
      const b = Float64Array.from(layer.bias);
      x = layer.kind === KIND_CONV ? convF64(x, layer, w, b) : deconvF64(x, layer, w, b);
      if (li !== lastWeighted) {
        for (let i = 0; i < x.data.length; i++) if (x.data[i] < 0) x.data[i] = 0;
      }
    } else if (layer.kind === KIND_MAXPOOL) {
      x = maxpoolF64(x);
    } else if (layer.kind === KIND_SIGMOID) {
      for (let i = 0; i < x.data.length; i++) {
        const z = x.data[i];
        x.data[i] = z >= 0 ? 1 / (1 + Math.exp(-z)) : Math.exp(z) / (1 + Math.exp(z));
      }
    } else {
      throw new Error(`layer ${li}: unknown kind ${layer.kind}`);
    }
  }
  const H = frame.height;
  const W = frame.width;
  const out = new Float64Array(H * W);
  for (let i = 0; i < H; i++) {
    for (let j = 0; j < W; j++) out[i * W + j] = x.data[i * x.W + j];
  }
  return { width: W, height: H, data: out };
}
