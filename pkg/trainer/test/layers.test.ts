import { describe, expect, it } from "vitest";

import {
  bceGrad,
  bceWithLogits,
  convBwd,
  convFwd,
  deconvBwd,
  deconvFwd,
  maxpoolBwd,
  maxpoolFwd,
  relu,
  reluBwd,
  sigmoid,
} from "../src/layers.js";
import { mulberry32 } from "../src/rng.js";

function randArray(n: number, rng: () => number, scale = 1): Float32Array {
  const a = new Float32Array(n);
  for (let i = 0; i < n; i++) a[i] = (rng() - 0.5) * 2 * scale;
  return a;
}

function dot(a: Float32Array, b: Float32Array): number {
  let s = 0;
  for (let i = 0; i < a.length; i++) s += a[i] * b[i];
  return s;
}

describe("convFwd", () => {
  it("matches a hand-computed 3x3 case", () => {
    // single channel, single output, identity-ish kernel with one off-center tap
    const x = Float32Array.from([1, 2, 3, 4, 5, 6, 7, 8, 9]);
    const w = Float32Array.from([0, 0, 0, 0, 1, 2, 0, 0, 0]); // center + right neighbor
    const y = convFwd(x, 1, 3, 3, w, Float32Array.from([10]), 1, 3);
    // y[i,j] = 10 + x[i,j] + 2*x[i,j+1], right column loses the neighbor
    expect(Array.from(y)).toEqual([15, 18, 13, 24, 27, 16, 33, 36, 19]);
  });

  it("applies bias per output channel", () => {
    const x = new Float32Array(16); // zeros
    const w = new Float32Array(2 * 1 * 9);
    const y = convFwd(x, 1, 4, 4, w, Float32Array.from([3, -2]), 2, 3);
    expect(y[0]).toBe(3);
    expect(y[16]).toBe(-2);
  });
});

describe("conv gradients", () => {
  const rng = mulberry32(11);
  const C = 2,
    H = 6,
    W = 5,
    O = 3,
    K = 3;
  const x = randArray(C * H * W, rng);
  const wt = randArray(O * C * K * K, rng);
  const bias = randArray(O, rng);
  const R = randArray(O * H * W, rng); // fixed cotangent: L = <conv(x), R>

  function loss(): number {
    return dot(convFwd(x, C, H, W, wt, bias, O, K), R);
  }

  const gw = new Float32Array(wt.length);
  const gb = new Float32Array(bias.length);
  const gx = new Float32Array(x.length);
  convBwd(x, C, H, W, wt, O, K, R, gw, gb, gx);

  // L is linear in each argument, so central differences are exact up to
  // f32 rounding noise
  it("finite differences agree on weights, bias, and input", () => {
    const eps = 1e-2;
    for (const [param, grad] of [
      [wt, gw],
      [bias, gb],
      [x, gx],
    ] as const) {
      for (let k = 0; k < 12; k++) {
        const i = Math.floor(rng() * param.length);
        const orig = param[i];
        param[i] = orig + eps;
        const lp = loss();
        param[i] = orig - eps;
        const lm = loss();
        param[i] = orig;
        expect(Math.abs((lp - lm) / (2 * eps) - grad[i])).toBeLessThan(1e-3);
      }
    }
  });

  it("input gradient is the adjoint map", () => {
    // <conv(x; w, 0), R> == <x, convBwd_x(R)> when bias is zero
    const y = convFwd(x, C, H, W, wt, new Float32Array(O), O, K);
    const gx2 = new Float32Array(x.length);
    convBwd(x, C, H, W, wt, O, K, R, new Float32Array(wt.length), new Float32Array(O), gx2);
    expect(dot(y, R)).toBeCloseTo(dot(x, gx2), 3);
  });
});

describe("deconv", () => {
  it("doubles resolution with the scatter rule", () => {
    const x = Float32Array.from([1, 2, 3, 4]); // 1x2x2
    const wt = Float32Array.from([5, 6, 7, 8]); // 1x1x2x2
    const { y, Ho, Wo } = deconvFwd(x, 1, 2, 2, wt, Float32Array.from([0]), 1);
    expect([Ho, Wo]).toEqual([4, 4]);
    // each input pixel paints its own 2x2 block
    expect(Array.from(y)).toEqual([5, 6, 10, 12, 7, 8, 14, 16, 15, 18, 20, 24, 21, 24, 28, 32]);
  });

  it("gradients agree with finite differences", () => {
    const rng = mulberry32(12);
    const C = 3,
      H = 4,
      W = 4,
      O = 2;
    const x = randArray(C * H * W, rng);
    const wt = randArray(O * C * 4, rng);
    const bias = randArray(O, rng);
    const R = randArray(O * 2 * H * 2 * W, rng);
    const loss = () => dot(deconvFwd(x, C, H, W, wt, bias, O).y, R);
    const gw = new Float32Array(wt.length);
    const gb = new Float32Array(bias.length);
    const gx = new Float32Array(x.length);
    deconvBwd(x, C, H, W, wt, O, R, gw, gb, gx);
    const eps = 1e-2;
    for (const [param, grad] of [
      [wt, gw],
      [bias, gb],
      [x, gx],
    ] as const) {
      for (let k = 0; k < 8; k++) {
        const i = Math.floor(rng() * param.length);
        const orig = param[i];
        param[i] = orig + eps;
        const lp = loss();
        param[i] = orig - eps;
        const lm = loss();
        param[i] = orig;
        expect(Math.abs((lp - lm) / (2 * eps) - grad[i])).toBeLessThan(1e-3);
      }
    }
  });

  it("is the adjoint of a stride-2 convolution", () => {
    // <deconv(x), R> equals <x, conv-style gather of R>, which deconvBwd computes
    const rng = mulberry32(13);
    const x = randArray(2 * 3 * 3, rng);
    const wt = randArray(4 * 2 * 4, rng);
    const R = randArray(4 * 6 * 6, rng);
    const y = deconvFwd(x, 2, 3, 3, wt, new Float32Array(4), 4).y;
    const gx = new Float32Array(x.length);
    deconvBwd(x, 2, 3, 3, wt, 4, R, new Float32Array(wt.length), new Float32Array(4), gx);
    expect(dot(y, R)).toBeCloseTo(dot(x, gx), 3);
  });
});

describe("maxpool", () => {
  it("keeps the window maximum and routes gradients to it", () => {
    const x = Float32Array.from([
      1, 5, 2, 0,
      3, 4, 1, 9,
      0, 0, 7, 1,
      2, 0, 0, 0,
    ]);
    const { y, idx, Ho, Wo } = maxpoolFwd(x, 1, 4, 4);
    expect([Ho, Wo]).toEqual([2, 2]);
    expect(Array.from(y)).toEqual([5, 9, 2, 7]);
    const gx = new Float32Array(16);
    maxpoolBwd(idx, Float32Array.from([10, 20, 30, 40]), gx);
    expect(gx[1]).toBe(10); // the 5
    expect(gx[7]).toBe(20); // the 9
    expect(gx[12]).toBe(30); // the 2
    expect(gx[10]).toBe(40); // the 7
    expect(Array.from(gx).reduce((a, b) => a + b, 0)).toBe(100);
  });

  it("pools each channel independently", () => {
    const x = new Float32Array(2 * 2 * 2);
    x[3] = 4; // channel 0
    x[4] = -1; // channel 1 (all others 0)
    const { y } = maxpoolFwd(x, 2, 2, 2);
    expect(Array.from(y)).toEqual([4, 0]);
  });
});

describe("relu", () => {
  it("clamps forward and masks backward", () => {
    const y = relu(Float32Array.from([-1, 0, 2]));
    expect(Array.from(y)).toEqual([0, 0, 2]);
    const g = reluBwd(y, Float32Array.from([5, 5, 5]));
    expect(Array.from(g)).toEqual([0, 0, 5]);
  });
});

describe("bce with logits", () => {
  it("matches the direct formula on moderate logits", () => {
    const z = Float32Array.from([0.3, -1.2, 2.0]);
    const t = Float32Array.from([1, 0, 1]);
    let want = 0;
    for (let i = 0; i < 3; i++) {
      const p = sigmoid(z[i]);
      want += -(t[i] * Math.log(p) + (1 - t[i]) * Math.log(1 - p));
    }
    expect(bceWithLogits(z, t)).toBeCloseTo(want / 3, 6);
  });

  it("stays finite for extreme logits", () => {
    const z = Float32Array.from([500, -500]);
    const t = Float32Array.from([0, 1]);
    const loss = bceWithLogits(z, t);
    expect(Number.isFinite(loss)).toBe(true);
    expect(loss).toBeCloseTo(500, 3);
  });

  it("gradient matches finite differences of the loss", () => {
    const rng = mulberry32(14);
    const z = randArray(16, rng, 2);
    const t = Float32Array.from(Array.from({ length: 16 }, () => (rng() < 0.5 ? 0 : 1)));
    const g = bceGrad(z, t);
    const eps = 1e-3;
    for (let i = 0; i < z.length; i++) {
      const orig = z[i];
      z[i] = orig + eps;
      const lp = bceWithLogits(z, t);
      z[i] = orig - eps;
      const lm = bceWithLogits(z, t);
      z[i] = orig;
      expect(Math.abs((lp - lm) / (2 * eps) - g[i])).toBeLessThan(1e-4);
    }
  });
});
