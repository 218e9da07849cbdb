import { describe, expect, it } from "vitest";

import { Adam } from "../src/adam.js";
import { runLayers } from "../src/infer.js";
import { bceWithLogits, sigmoid } from "../src/layers.js";
import { FilterNet, KIND_CONV, KIND_DECONV, KIND_MAXPOOL, KIND_SIGMOID } from "../src/model.js";
import { mulberry32 } from "../src/rng.js";

function tinyNet(seed = 5): FilterNet {
  return new FilterNet({ modality: "rgb", channels: [2, 3, 4], seed });
}

function randInput(net: FilterNet, H: number, W: number, seed: number): Float32Array {
  const rng = mulberry32(seed);
  const x = new Float32Array(net.inCh * H * W);
  for (let i = 0; i < x.length; i++) x[i] = rng();
  return x;
}

describe("FilterNet", () => {
  it("initializes deterministically from the seed", () => {
    const a = tinyNet(5);
    const b = tinyNet(5);
    const c = tinyNet(6);
    for (const k of Object.keys(a.params)) {
      expect(Array.from(a.params[k])).toEqual(Array.from(b.params[k]));
    }
    expect(Array.from(a.params.c1w)).not.toEqual(Array.from(c.params.c1w));
  });

  it("maps (3, H, W) input to (H, W) logits", () => {
    const net = tinyNet();
    const logits = net.forward(randInput(net, 16, 24, 2), 16, 24);
    expect(logits.length).toBe(16 * 24);
    expect(logits.every((v) => Number.isFinite(v))).toBe(true);
  });

  it("rejects sizes the pooling chain cannot divide", () => {
    const net = tinyNet();
    expect(() => net.forward(new Float32Array(3 * 12 * 12), 12, 12)).toThrow(/multiple of 8/);
  });

  it("snapshot and restore round-trip the parameters", () => {
    const net = tinyNet();
    const snap = net.snapshot();
    net.params.c1w[0] += 1;
    net.restore(snap);
    expect(net.params.c1w[0]).toBe(snap.c1w[0]);
    snap.c1w[0] += 5; // snapshots are copies, not views
    expect(net.params.c1w[0]).not.toBe(snap.c1w[0]);
  });

  it("serializes the fixed 11-layer pattern with a consistent channel chain", () => {
    const net = tinyNet();
    const specs = net.layerSpecs();
    expect(specs.map((s) => s.kind)).toEqual([
      KIND_CONV, KIND_MAXPOOL, KIND_CONV, KIND_MAXPOOL, KIND_CONV, KIND_MAXPOOL,
      KIND_DECONV, KIND_DECONV, KIND_DECONV, KIND_CONV, KIND_SIGMOID,
    ]);
    let ch = 3;
    for (const s of specs) {
      if (s.kind === KIND_CONV || s.kind === KIND_DECONV) {
        expect(s.inChannels).toBe(ch);
        expect(s.weight!.length).toBe(s.outChannels * s.inChannels * s.kh * s.kw);
        expect(s.bias!.length).toBe(s.outChannels);
        ch = s.outChannels;
      }
    }
    expect(specs[9].outChannels).toBe(1);
    expect(specs[9].kh).toBe(1);
  });

  it("f64 inference through the serialized layers matches the f32 forward", () => {
    const net = tinyNet(9);
    const H = 24;
    const W = 32;
    const rng = mulberry32(3);
    const gray = new Float32Array(H * W);
    for (let i = 0; i < gray.length; i++) gray[i] = rng();
    const x = new Float32Array(3 * H * W);
    for (let c = 0; c < 3; c++) x.set(gray, c * H * W);
    const logits = net.forward(x, H, W);
    const mask = runLayers(net.layerSpecs(), 3, { width: W, height: H, data: gray });
    let worst = 0;
    for (let i = 0; i < logits.length; i++) {
      worst = Math.max(worst, Math.abs(sigmoid(logits[i]) - mask.data[i]));
    }
    expect(worst).toBeLessThan(1e-4);
  });

  it("backward gradients agree with directional finite differences", () => {
    const net = tinyNet(8);
    const H = 16;
    const W = 16;
    const x = randInput(net, H, W, 21);
    const rng = mulberry32(22);
    const target = new Float32Array(H * W);
    for (let i = 0; i < target.length; i++) target[i] = rng() < 0.3 ? 1 : 0;

    const adamShim = new Adam(net.params, { learningRate: 0 });
    const grads = adamShim.zeroGrads();
    const fw = net.forward(x, H, W, true);
    net.backward(fw, target, grads);

    // random direction over all parameters; kinks make exact agreement
    // impossible, so expect a few percent, not machine precision
    const dir: Record<string, Float32Array> = {};
    for (const k of Object.keys(net.params)) {
      const d = new Float32Array(net.params[k].length);
      for (let i = 0; i < d.length; i++) d[i] = rng() - 0.5;
      dir[k] = d;
    }
    let analytic = 0;
    for (const k of Object.keys(grads)) {
      const g = grads[k];
      const d = dir[k];
      for (let i = 0; i < g.length; i++) analytic += g[i] * d[i];
    }
    const eps = 1e-3;
    const move = (sign: number) => {
      for (const k of Object.keys(net.params)) {
        const p = net.params[k];
        const d = dir[k];
        for (let i = 0; i < p.length; i++) p[i] += sign * eps * d[i];
      }
    };
    move(+1);
    const lp = bceWithLogits(net.forward(x, H, W), target);
    move(-2);
    const lm = bceWithLogits(net.forward(x, H, W), target);
    move(+1);
    const fd = (lp - lm) / (2 * eps);
    expect(Math.abs(fd - analytic)).toBeLessThan(0.03 * Math.max(Math.abs(fd), Math.abs(analytic), 1e-3));
  });
});

describe("Adam", () => {
  it("takes a first step of size lr against a unit gradient", () => {
    const p = Float32Array.from([1]);
    const adam = new Adam({ p }, { learningRate: 0.1 });
    adam.step({ p: Float32Array.from([1]) });
    expect(p[0]).toBeCloseTo(0.9, 5);
  });

  it("minimizes a quadratic bowl", () => {
    const p = Float32Array.from([3, -2]);
    const adam = new Adam({ p }, { learningRate: 0.05 });
    for (let t = 0; t < 500; t++) {
      adam.step({ p: Float32Array.from([2 * p[0], 2 * p[1]]) });
    }
    expect(Math.abs(p[0])).toBeLessThan(1e-2);
    expect(Math.abs(p[1])).toBeLessThan(1e-2);
  });
});
