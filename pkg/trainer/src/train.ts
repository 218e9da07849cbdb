/** Crop-based trainer for the pixel-filter network.
 *
 * One run: pool the frames of every dataset, hold out a validation fraction
 * by seeded shuffle, then iterate epochs of mini-batch Adam on biased crops.
 * Validation crops are drawn from a fixed side stream so the metric sequence
 * is comparable across epochs, and the best-validation parameters are what
 * the run returns.
 */

import { loadDataset, sampleCrop, type Sample } from "./data.js";
import { bceWithLogits } from "./layers.js";
import { DEFAULT_CHANNELS, FilterNet, inputChannels, type Modality, type Target } from "./model.js";
import { mulberry32, shuffle } from "./rng.js";

export interface TrainConfig {
  /** Dataset roots, each holding frames/ and masks/. */
  datasets: string[];
  target: Target;
  modality: Modality;
  channels?: [number, number, number];
  epochs: number;
  batchSize: number;
  learningRate: number;
  /** Crops drawn per training frame per epoch. */
  cropsPerFrame: number;
  /** Square crop side, a multiple of 8. */
  cropSize: number;
  /** Fraction of frames held out for validation, in (0, 1). */
  valFraction: number;
  /** Drives the split, the epoch order, and crop placement. */
  seed: number;
  /** Weight initialization stream; defaults to seed + 1. */
  initSeed?: number;
}

export interface EpochStats {
  epoch: number;
  trainLoss: number;
  valLoss: number;
}

export interface TrainResult {
  model: FilterNet;
  history: EpochStats[];
  bestEpoch: number;
  bestValLoss: number;
  trainFrames: number;
  valFrames: number;
}

// fixed stream for validation crops, so every epoch scores identical patches
const VAL_CROP_SEED = 99;

export function train(cfg: TrainConfig, log?: (line: string) => void): TrainResult {
  if (cfg.cropSize % 8 !== 0 || cfg.cropSize < 8) throw new Error("cropSize must be a positive multiple of 8");
  if (!(cfg.valFraction > 0 && cfg.valFraction < 1)) throw new Error("valFraction must be in (0, 1)");
  if (cfg.epochs < 1 || cfg.batchSize < 1 || cfg.cropsPerFrame < 1) throw new Error("bad loop sizes");

  const samples: Sample[] = [];
  for (const root of cfg.datasets) samples.push(...loadDataset(root, cfg.target));
  const rng = mulberry32(cfg.seed);
  const order = samples.map((_, i) => i);
  shuffle(order, rng);
  const nVal = Math.round(samples.length * cfg.valFraction);
  if (nVal < 1 || samples.length - nVal < 1) {
    throw new Error(`cannot split ${samples.length} frames at valFraction ${cfg.valFraction}`);
  }
  const valIdx = order.slice(0, nVal);
  const trainIdx = order.slice(nVal);

  const inCh = inputChannels(cfg.modality);
  const model = new FilterNet({
    modality: cfg.modality,
    channels: cfg.channels ?? DEFAULT_CHANNELS,
    seed: cfg.initSeed ?? cfg.seed + 1,
  });
  const adam = model.optimizer(cfg.learningRate);

  const valLoss = (): number => {
    const vr = mulberry32(VAL_CROP_SEED);
    let s = 0;
    for (const vi of valIdx) {
      const { x, t } = sampleCrop(vr, samples[vi], inCh, cfg.cropSize);
      s += bceWithLogits(model.forward(x, cfg.cropSize, cfg.cropSize), t);
    }
    return s / valIdx.length;
  };

  const history: EpochStats[] = [];
  let best = model.snapshot();
  let bestValLoss = Infinity;
  let bestEpoch = -1;
  for (let ep = 0; ep < cfg.epochs; ep++) {
    const ord: number[] = [];
    for (let r = 0; r < cfg.cropsPerFrame; r++) ord.push(...trainIdx);
    shuffle(ord, rng);
    let lossSum = 0;
    let steps = 0;
    for (let b = 0; b < ord.length; b += cfg.batchSize) {
      const nb = Math.min(cfg.batchSize, ord.length - b);
      const grads = adam.zeroGrads();
      let loss = 0;
      for (let k = 0; k < nb; k++) {
        const { x, t } = sampleCrop(rng, samples[ord[b + k]], inCh, cfg.cropSize);
        const fw = model.forward(x, cfg.cropSize, cfg.cropSize, true);
        loss += bceWithLogits(fw.logits, t);
        model.backward(fw, t, grads);
      }
      for (const key of Object.keys(grads)) {
        const g = grads[key];
        for (let i = 0; i < g.length; i++) g[i] /= nb;
      }
      adam.step(grads);
      lossSum += loss / nb;
      steps++;
    }
    const stats: EpochStats = { epoch: ep, trainLoss: lossSum / steps, valLoss: valLoss() };
    history.push(stats);
    if (stats.valLoss < bestValLoss) {
      bestValLoss = stats.valLoss;
      bestEpoch = ep;
      best = model.snapshot();
    }
    log?.(`epoch ${ep}: train ${stats.trainLoss.toFixed(4)} val ${stats.valLoss.toFixed(4)}`);
  }
  model.restore(best);
  return {
    model,
    history,
    bestEpoch,
    bestValLoss,
    trainFrames: trainIdx.length,
    valFrames: valIdx.length,
  };
}

export function historyCsv(history: EpochStats[]): string {
  const lines = ["epoch,train_bce,val_bce"];
  for (const h of history) lines.push(`${h.epoch},${h.trainLoss.toFixed(6)},${h.valLoss.toFixed(6)}`);
  return lines.join("\n") + "\n";
}
