/** Command line entry: train one filter network and export its weights.
 *
 *   node dist/cli.js --target ring --out ring.portcnn1 [options] DATASET...
 */

import { writeFileSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import type { Modality, Target } from "./model.js";
import { saveWeights } from "./portcnn.js";
import { historyCsv, train } from "./train.js";

const USAGE = `usage: train --target ring|reflector --out FILE [options] DATASET...

Trains a pixel-filter network on one or more synthetic datasets and writes
the weights as a PORTCNN1 container.

options:
  --target NAME        ring or reflector (required)
  --out FILE           weight container path (required)
  --modality NAME      rgb or event (default rgb)
  --epochs N           training epochs (default 10)
  --batch N            crops per optimizer step (default 4)
  --lr X               Adam learning rate (default 0.002)
  --crops N            crops per frame per epoch (default 3)
  --crop-size N        square crop side, multiple of 8 (default 64)
  --val X              validation fraction (default 0.2)
  --seed N             data order seed (default 1234)
  --init-seed N        weight init seed (default seed + 1)
  --log FILE           write per-epoch loss CSV here
`;

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        target: { type: "string" },
        out: { type: "string" },
        modality: { type: "string", default: "rgb" },
        epochs: { type: "string", default: "10" },
        batch: { type: "string", default: "4" },
        lr: { type: "string", default: "0.002" },
        crops: { type: "string", default: "3" },
        "crop-size": { type: "string", default: "64" },
        val: { type: "string", default: "0.2" },
        seed: { type: "string", default: "1234" },
        "init-seed": { type: "string" },
        log: { type: "string" },
        help: { type: "boolean", default: false },
      },
    });
  } catch (err) {
    process.stderr.write(`${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  const { values, positionals } = parsed;
  if (values.help) {
    process.stdout.write(USAGE);
    return 0;
  }
  const target = values.target as Target | undefined;
  if (target !== "ring" && target !== "reflector") {
    process.stderr.write(`--target must be ring or reflector\n${USAGE}`);
    return 2;
  }
  const modality = values.modality as Modality;
  if (modality !== "rgb" && modality !== "event") {
    process.stderr.write(`--modality must be rgb or event\n${USAGE}`);
    return 2;
  }
  if (!values.out) {
    process.stderr.write(`--out is required\n${USAGE}`);
    return 2;
  }
  if (positionals.length === 0) {
    process.stderr.write(`at least one dataset directory is required\n${USAGE}`);
    return 2;
  }
  const seed = Number(values.seed);
  const result = train(
    {
      datasets: positionals,
      target,
      modality,
      epochs: Number(values.epochs),
      batchSize: Number(values.batch),
      learningRate: Number(values.lr),
      cropsPerFrame: Number(values.crops),
      cropSize: Number(values["crop-size"]),
      valFraction: Number(values.val),
      seed,
      initSeed: values["init-seed"] !== undefined ? Number(values["init-seed"]) : undefined,
    },
    (line) => process.stdout.write(line + "\n"),
  );
  process.stdout.write(
    `best epoch ${result.bestEpoch} (val ${result.bestValLoss.toFixed(4)}), ` +
      `${result.trainFrames} train / ${result.valFrames} val frames\n`,
  );
  saveWeights(values.out, modality, target, result.model.layerSpecs());
  process.stdout.write(`wrote ${values.out}\n`);
  if (values.log) writeFileSync(values.log, historyCsv(result.history));
  return 0;
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
