/** Dense NCHW layer kernels with hand-written backward passes.
 *
 * Everything operates on flat Float32Array buffers in channel-major order
 * (c * H * W + i * W + j). The shapes involved are small enough that plain
 * loop nests under the JIT beat any generic tensor library by a wide margin
 * for this workload, and keeping the math explicit makes the gradient tests
 * straightforward.
 */

/** Stride-1 same-padding cross-correlation. Weights are (O, C, K, K) row-major. */
export function convFwd(
  x: Float32Array,
  C: number,
  H: number,
  W: number,
  wt: Float32Array,
  bias: Float32Array,
  O: number,
  K: number,
): Float32Array {
  const P = (K - 1) >> 1;
  const y = new Float32Array(O * H * W);
  for (let o = 0; o < O; o++) {
    const b = bias[o];
    for (let i = 0; i < H; i++) {
      for (let j = 0; j < W; j++) {
        let acc = b;
        for (let c = 0; c < C; c++) {
          const xoff = c * H * W;
          const woff = (o * C + c) * K * K;
          for (let u = 0; u < K; u++) {
            const ii = i + u - P;
            if (ii < 0 || ii >= H) continue;
            for (let v = 0; v < K; v++) {
              const jj = j + v - P;
              if (jj < 0 || jj >= W) continue;
              acc += x[xoff + ii * W + jj] * wt[woff + u * K + v];
            }
          }
        }
        y[o * H * W + i * W + j] = acc;
      }
    }
  }
  return y;
}

/** Accumulates conv gradients into gw/gb and, when given, gx. */
export function convBwd(
  x: Float32Array,
  C: number,
  H: number,
  W: number,
  wt: Float32Array,
  O: number,
  K: number,
  gy: Float32Array,
  gw: Float32Array,
  gb: Float32Array,
  gx: Float32Array | null,
): void {
  const P = (K - 1) >> 1;
  for (let o = 0; o < O; o++) {
    let bacc = 0;
    for (let i = 0; i < H; i++) {
      for (let j = 0; j < W; j++) {
        const g = gy[o * H * W + i * W + j];
        if (g === 0) continue;
        bacc += g;
        for (let c = 0; c < C; c++) {
          const xoff = c * H * W;
          const woff = (o * C + c) * K * K;
          for (let u = 0; u < K; u++) {
            const ii = i + u - P;
            if (ii < 0 || ii >= H) continue;
            for (let v = 0; v < K; v++) {
              const jj = j + v - P;
              if (jj < 0 || jj >= W) continue;
              gw[woff + u * K + v] += g * x[xoff + ii * W + jj];
              if (gx) gx[xoff + ii * W + jj] += g * wt[woff + u * K + v];
            }
          }
        }
      }
    }
    gb[o] += bacc;
  }
}

export interface PoolResult {
  y: Float32Array;
  /** Flat input index of each pooled maximum, for gradient routing. */
  idx: Int32Array;
  Ho: number;
  Wo: number;
}

/** 2x2 stride-2 max pooling. H and W must be even. */
export function maxpoolFwd(x: Float32Array, C: number, H: number, W: number): PoolResult {
  const Ho = H >> 1;
  const Wo = W >> 1;
  const y = new Float32Array(C * Ho * Wo);
  const idx = new Int32Array(C * Ho * Wo);
  for (let c = 0; c < C; c++) {
    const base = c * H * W;
    for (let i = 0; i < Ho; i++) {
      for (let j = 0; j < Wo; j++) {
        let best = -Infinity;
        let bi = 0;
        for (let u = 0; u < 2; u++) {
          for (let v = 0; v < 2; v++) {
            const p = base + (2 * i + u) * W + (2 * j + v);
            if (x[p] > best) {
              best = x[p];
              bi = p;
            }
          }
        }
        y[c * Ho * Wo + i * Wo + j] = best;
        idx[c * Ho * Wo + i * Wo + j] = bi;
      }
    }
  }
  return { y, idx, Ho, Wo };
}

/** Scatters pooled gradients back to the argmax positions. */
export function maxpoolBwd(idx: Int32Array, gy: Float32Array, gx: Float32Array): void {
  for (let i = 0; i < gy.length; i++) gx[idx[i]] += gy[i];
}

export interface DeconvResult {
  y: Float32Array;
  Ho: number;
  Wo: number;
}

/** Transposed conv, kernel 2, stride 2, no padding: exact 2x upsample.
 *
 * out[o, 2i+u, 2j+v] += x[c, i, j] * w[o, c, u, v], weights (O, C, 2, 2).
 */
export function deconvFwd(
  x: Float32Array,
  C: number,
  H: number,
  W: number,
  wt: Float32Array,
  bias: Float32Array,
  O: number,
): DeconvResult {
  const Ho = 2 * H;
  const Wo = 2 * W;
  const y = new Float32Array(O * Ho * Wo);
  for (let o = 0; o < O; o++) {
    const b = bias[o];
    for (let p = o * Ho * Wo; p < (o + 1) * Ho * Wo; p++) y[p] = b;
    for (let c = 0; c < C; c++) {
      const woff = (o * C + c) * 4;
      const xoff = c * H * W;
      const w00 = wt[woff];
      const w01 = wt[woff + 1];
      const w10 = wt[woff + 2];
      const w11 = wt[woff + 3];
      for (let i = 0; i < H; i++) {
        for (let j = 0; j < W; j++) {
          const xv = x[xoff + i * W + j];
          const yoff = o * Ho * Wo + 2 * i * Wo + 2 * j;
          y[yoff] += xv * w00;
          y[yoff + 1] += xv * w01;
          y[yoff + Wo] += xv * w10;
          y[yoff + Wo + 1] += xv * w11;
        }
      }
    }
  }
  return { y, Ho, Wo };
}

export function deconvBwd(
  x: Float32Array,
  C: number,
  H: number,
  W: number,
  wt: Float32Array,
  O: number,
  gy: Float32Array,
  gw: Float32Array,
  gb: Float32Array,
  gx: Float32Array | null,
): void {
  const Ho = 2 * H;
  const Wo = 2 * W;
  for (let o = 0; o < O; o++) {
    let bacc = 0;
    for (let p = o * Ho * Wo; p < (o + 1) * Ho * Wo; p++) bacc += gy[p];
    gb[o] += bacc;
    for (let c = 0; c < C; c++) {
      const woff = (o * C + c) * 4;
      const xoff = c * H * W;
      const w00 = wt[woff];
      const w01 = wt[woff + 1];
      const w10 = wt[woff + 2];
      const w11 = wt[woff + 3];
      let a00 = 0;
      let a01 = 0;
      let a10 = 0;
      let a11 = 0;
      for (let i = 0; i < H; i++) {
        for (let j = 0; j < W; j++) {
          const yoff = o * Ho * Wo + 2 * i * Wo + 2 * j;
          const g00 = gy[yoff];
          const g01 = gy[yoff + 1];
          const g10 = gy[yoff + Wo];
          const g11 = gy[yoff + Wo + 1];
          const xv = x[xoff + i * W + j];
          a00 += g00 * xv;
          a01 += g01 * xv;
          a10 += g10 * xv;
          a11 += g11 * xv;
          if (gx) gx[xoff + i * W + j] += g00 * w00 + g01 * w01 + g10 * w10 + g11 * w11;
        }
      }
      gw[woff] += a00;
      gw[woff + 1] += a01;
      gw[woff + 2] += a10;
      gw[woff + 3] += a11;
    }
  }
}

export function relu(a: Float32Array): Float32Array {
  const y = new Float32Array(a.length);
  for (let i = 0; i < a.length; i++) y[i] = a[i] > 0 ? a[i] : 0;
  return y;
}

/** Masks gradients in place where the activation was clamped. */
export function reluBwd(y: Float32Array, g: Float32Array): Float32Array {
  for (let i = 0; i < g.length; i++) if (y[i] <= 0) g[i] = 0;
  return g;
}

export function sigmoid(z: number): number {
  return z >= 0 ? 1 / (1 + Math.exp(-z)) : Math.exp(z) / (1 + Math.exp(z));
}

/** Mean binary cross-entropy evaluated on logits; stable for large |z|. */
export function bceWithLogits(logits: Float32Array, target: Float32Array): number {
  let s = 0;
  for (let i = 0; i < logits.length; i++) {
    const z = logits[i];
    s += Math.max(z, 0) - z * target[i] + Math.log1p(Math.exp(-Math.abs(z)));
  }
  return s / logits.length;
}

/** dL/dlogits for mean BCE: (sigmoid(z) - t) / n. */
export function bceGrad(logits: Float32Array, target: Float32Array): Float32Array {
  const n = logits.length;
  const g = new Float32Array(n);
  for (let i = 0; i < n; i++) g[i] = (sigmoid(logits[i]) - target[i]) / n;
  return g;
}
