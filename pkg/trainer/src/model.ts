/** The pixel-filter network: encoder-decoder over single-frame input.
 *
 * Fixed shape: 3 x (conv3x3 + ReLU + maxpool2) down, 3 x (deconv2x2 stride 2
 * + ReLU) up, then a 1x1 conv head. Training works on raw logits; the sigmoid
 * is only a serialized layer so the inference engine produces probabilities.
 * Channel widths are configurable but the layer pattern is not, because the
 * weight container only admits this one architecture.
 */

import { Adam, type ParamMap } from "./adam.js";
import {
  bceGrad,
  convBwd,
  convFwd,
  deconvBwd,
  deconvFwd,
  maxpoolBwd,
  maxpoolFwd,
  relu,
  reluBwd,
  type DeconvResult,
  type PoolResult,
} from "./layers.js";
import { gaussian, mulberry32 } from "./rng.js";

export type Modality = "rgb" | "event";
export type Target = "ring" | "reflector";

export const KIND_CONV = 1;
export const KIND_MAXPOOL = 2;
export const KIND_DECONV = 3;
export const KIND_SIGMOID = 4;

export interface LayerSpec {
  kind: number;
  outChannels: number;
  inChannels: number;
  kh: number;
  kw: number;
  stride: number;
  padding: number;
  bias?: Float32Array;
  weight?: Float32Array;
}

export interface ModelConfig {
  modality: Modality;
  /** Feature widths after each encoder conv. */
  channels: [number, number, number];
  seed: number;
}

export const DEFAULT_CHANNELS: [number, number, number] = [8, 16, 24];

export function inputChannels(modality: Modality): number {
  return modality === "event" ? 1 : 3;
}

export interface ForwardState {
  x: Float32Array;
  H: number;
  W: number;
  a1: Float32Array;
  p1: PoolResult;
  a2: Float32Array;
  p2: PoolResult;
  a3: Float32Array;
  p3: PoolResult;
  u1: DeconvResult;
  r1: Float32Array;
  u2: DeconvResult;
  r2: Float32Array;
  u3: DeconvResult;
  r3: Float32Array;
  logits: Float32Array;
}

export class FilterNet {
  readonly modality: Modality;
  readonly channels: [number, number, number];
  readonly inCh: number;
  readonly params: ParamMap;

  constructor(cfg: ModelConfig) {
    this.modality = cfg.modality;
    this.channels = cfg.channels;
    this.inCh = inputChannels(cfg.modality);
    const [c0, c1, c2] = cfg.channels;
    const rng = mulberry32(cfg.seed);
    const he = (n: number, fanIn: number): Float32Array => {
      const a = new Float32Array(n);
      const s = Math.sqrt(2 / fanIn);
      for (let i = 0; i < n; i++) a[i] = gaussian(rng) * s;
      return a;
    };
    const zeros = (n: number) => new Float32Array(n);
    this.params = {
      c1w: he(c0 * this.inCh * 9, this.inCh * 9),
      c1b: zeros(c0),
      c2w: he(c1 * c0 * 9, c0 * 9),
      c2b: zeros(c1),
      c3w: he(c2 * c1 * 9, c1 * 9),
      c3b: zeros(c2),
      d1w: he(c1 * c2 * 4, c2 * 4),
      d1b: zeros(c1),
      d2w: he(c0 * c1 * 4, c1 * 4),
      d2b: zeros(c0),
      d3w: he(c0 * c0 * 4, c0 * 4),
      d3b: zeros(c0),
      hw: he(c0, c0),
      hb: zeros(1),
    };
  }

  /** H and W must be multiples of 8 so the three pools divide evenly. */
  forward(x: Float32Array, H: number, W: number): Float32Array;
  forward(x: Float32Array, H: number, W: number, keep: true): ForwardState;
  forward(x: Float32Array, H: number, W: number, keep?: boolean): Float32Array | ForwardState {
    if (H % 8 !== 0 || W % 8 !== 0) throw new Error("input size must be a multiple of 8");
    if (x.length !== this.inCh * H * W) throw new Error("input buffer size mismatch");
    const [c0, c1, c2] = this.channels;
    const m = this.params;
    const a1 = relu(convFwd(x, this.inCh, H, W, m.c1w, m.c1b, c0, 3));
    const p1 = maxpoolFwd(a1, c0, H, W);
    const a2 = relu(convFwd(p1.y, c0, p1.Ho, p1.Wo, m.c2w, m.c2b, c1, 3));
    const p2 = maxpoolFwd(a2, c1, p1.Ho, p1.Wo);
    const a3 = relu(convFwd(p2.y, c1, p2.Ho, p2.Wo, m.c3w, m.c3b, c2, 3));
    const p3 = maxpoolFwd(a3, c2, p2.Ho, p2.Wo);
    const u1 = deconvFwd(p3.y, c2, p3.Ho, p3.Wo, m.d1w, m.d1b, c1);
    const r1 = relu(u1.y);
    const u2 = deconvFwd(r1, c1, u1.Ho, u1.Wo, m.d2w, m.d2b, c0);
    const r2 = relu(u2.y);
    const u3 = deconvFwd(r2, c0, u2.Ho, u2.Wo, m.d3w, m.d3b, c0);
    const r3 = relu(u3.y);
    const logits = convFwd(r3, c0, u3.Ho, u3.Wo, m.hw, m.hb, 1, 1);
    if (!keep) return logits;
    return { x, H, W, a1, p1, a2, p2, a3, p3, u1, r1, u2, r2, u3, r3, logits };
  }

  /** Accumulates parameter gradients for mean BCE-with-logits into grads. */
  backward(f: ForwardState, target: Float32Array, grads: ParamMap): void {
    const [c0, c1, c2] = this.channels;
    const m = this.params;
    const { H, W } = f;
    const gl = bceGrad(f.logits, target);
    const gR3 = new Float32Array(f.r3.length);
    convBwd(f.r3, c0, H, W, m.hw, 1, 1, gl, grads.hw, grads.hb, gR3);
    reluBwd(f.r3, gR3);
    const gR2 = new Float32Array(f.r2.length);
    deconvBwd(f.r2, c0, H >> 1, W >> 1, m.d3w, c0, gR3, grads.d3w, grads.d3b, gR2);
    reluBwd(f.r2, gR2);
    const gR1 = new Float32Array(f.r1.length);
    deconvBwd(f.r1, c1, H >> 2, W >> 2, m.d2w, c0, gR2, grads.d2w, grads.d2b, gR1);
    reluBwd(f.r1, gR1);
    const gP3 = new Float32Array(f.p3.y.length);
    deconvBwd(f.p3.y, c2, H >> 3, W >> 3, m.d1w, c1, gR1, grads.d1w, grads.d1b, gP3);
    const gA3 = new Float32Array(f.a3.length);
    maxpoolBwd(f.p3.idx, gP3, gA3);
    reluBwd(f.a3, gA3);
    const gP2 = new Float32Array(f.p2.y.length);
    convBwd(f.p2.y, c1, H >> 2, W >> 2, m.c3w, c2, 3, gA3, grads.c3w, grads.c3b, gP2);
    const gA2 = new Float32Array(f.a2.length);
    maxpoolBwd(f.p2.idx, gP2, gA2);
    reluBwd(f.a2, gA2);
    const gP1 = new Float32Array(f.p1.y.length);
    convBwd(f.p1.y, c0, H >> 1, W >> 1, m.c2w, c1, 3, gA2, grads.c2w, grads.c2b, gP1);
    const gA1 = new Float32Array(f.a1.length);
    maxpoolBwd(f.p1.idx, gP1, gA1);
    reluBwd(f.a1, gA1);
    // no input gradient needed: the frame is data, not a parameter
    convBwd(f.x, this.inCh, H, W, m.c1w, c0, 3, gA1, grads.c1w, grads.c1b, null);
  }

  optimizer(learningRate: number): Adam {
    return new Adam(this.params, { learningRate });
  }

  /** Deep copy of the parameters, for best-so-far snapshots. */
  snapshot(): ParamMap {
    const out: ParamMap = {};
    for (const k of Object.keys(this.params)) out[k] = this.params[k].slice();
    return out;
  }

  restore(snap: ParamMap): void {
    for (const k of Object.keys(this.params)) this.params[k].set(snap[k]);
  }

  /** The serialized layer sequence the inference container expects. */
  layerSpecs(): LayerSpec[] {
    const [c0, c1, c2] = this.channels;
    const m = this.params;
    const conv = (o: number, i: number, k: number, w: Float32Array, b: Float32Array): LayerSpec => ({
      kind: KIND_CONV,
      outChannels: o,
      inChannels: i,
      kh: k,
      kw: k,
      stride: 1,
      padding: (k - 1) >> 1,
      weight: w,
      bias: b,
    });
    const pool = (): LayerSpec => ({
      kind: KIND_MAXPOOL,
      outChannels: 0,
      inChannels: 0,
      kh: 2,
      kw: 2,
      stride: 2,
      padding: 0,
    });
    const deconv = (o: number, i: number, w: Float32Array, b: Float32Array): LayerSpec => ({
      kind: KIND_DECONV,
      outChannels: o,
      inChannels: i,
      kh: 2,
      kw: 2,
      stride: 2,
      padding: 0,
      weight: w,
      bias: b,
    });
    return [
      conv(c0, this.inCh, 3, m.c1w, m.c1b),
      pool(),
      conv(c1, c0, 3, m.c2w, m.c2b),
      pool(),
      conv(c2, c1, 3, m.c3w, m.c3b),
      pool(),
      deconv(c1, c2, m.d1w, m.d1b),
      deconv(c0, c1, m.d2w, m.d2b),
      deconv(c0, c0, m.d3w, m.d3b),
      conv(1, c0, 1, m.hw, m.hb),
      { kind: KIND_SIGMOID, outChannels: 0, inChannels: 0, kh: 0, kw: 0, stride: 1, padding: 0 },
    ];
  }
}
