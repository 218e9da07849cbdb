/** Adam optimizer over a map of named Float32Array parameters. */

export type ParamMap = Record<string, Float32Array>;

export interface AdamConfig {
  learningRate: number;
  beta1?: number;
  beta2?: number;
  epsilon?: number;
}

export class Adam {
  private readonly params: ParamMap;
  private readonly lr: number;
  private readonly b1: number;
  private readonly b2: number;
  private readonly eps: number;
  private readonly m: ParamMap = {};
  private readonly v: ParamMap = {};
  private t = 0;

  constructor(params: ParamMap, cfg: AdamConfig) {
    this.params = params;
    this.lr = cfg.learningRate;
    this.b1 = cfg.beta1 ?? 0.9;
    this.b2 = cfg.beta2 ?? 0.999;
    this.eps = cfg.epsilon ?? 1e-8;
    for (const k of Object.keys(params)) {
      this.m[k] = new Float32Array(params[k].length);
      this.v[k] = new Float32Array(params[k].length);
    }
  }

  /** Fresh zero gradient buffers matching the parameter map. */
  zeroGrads(): ParamMap {
    const g: ParamMap = {};
    for (const k of Object.keys(this.params)) g[k] = new Float32Array(this.params[k].length);
    return g;
  }

  /** One bias-corrected update; mutates the parameters in place. */
  step(grads: ParamMap): void {
    this.t++;
    const c1 = 1 - Math.pow(this.b1, this.t);
    const c2 = 1 - Math.pow(this.b2, this.t);
    for (const k of Object.keys(this.params)) {
      const p = this.params[k];
      const gm = this.m[k];
      const gv = this.v[k];
      const gk = grads[k];
      for (let i = 0; i < p.length; i++) {
        gm[i] = this.b1 * gm[i] + (1 - this.b1) * gk[i];
        gv[i] = this.b2 * gv[i] + (1 - this.b2) * gk[i] * gk[i];
        p[i] -= (this.lr * (gm[i] / c1)) / (Math.sqrt(gv[i] / c2) + this.eps);
      }
    }
  }
}
