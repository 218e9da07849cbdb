/** End-to-end artifact build: corpus generation, training, weight export,
 * and cross-engine probe files.
 *
 * The training corpus is rendered by the python simulator so the labels are
 * exactly the masks the pose pipeline is scored against. Two clean sequences
 * (one approach, one orbit) give scale and viewpoint coverage; noise is left
 * off because the filters see enough variation from geometry alone and the
 * downstream fit is robust to residual speckle.
 *
 * Probe files pin the numeric contract between this trainer and the python
 * inference engine: for each exported container we store one raw frame and
 * the mask this package computes for it in double precision. The consumer
 * must reproduce that mask from the same container to within 1e-4.
 */

import { execFileSync } from "node:child_process";
import { mkdirSync, mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

import { loadDataset } from "./data.js";
import { runLayers } from "./infer.js";
import { type Target } from "./model.js";
import { writeNpy } from "./npy.js";
import { MODALITY_BYTE, saveWeights } from "./portcnn.js";
import { historyCsv, train } from "./train.js";

const TRAINER_ROOT = resolve(dirname(fileURLToPath(import.meta.url)), "..");

const APPROACH_CONFIG = `trajectory.kind = approach
trajectory.duration_s = 10.0
trajectory.rate_hz = 10.0
trajectory.seed = 41
trajectory.start_distance = 1.1
trajectory.end_distance = 0.4
trajectory.inclination_deg = 25.0
scene.noise_sigma = 0.0
scene.texture_amplitude = 0.0
`;

const ORBIT_CONFIG = `trajectory.kind = orbit
trajectory.duration_s = 10.0
trajectory.rate_hz = 10.0
trajectory.seed = 42
trajectory.start_distance = 0.6
trajectory.inclination_deg = 20.0
trajectory.azimuth_rate_deg_s = 31.0
scene.noise_sigma = 0.0
scene.texture_amplitude = 0.0
`;

// short clean sequence, disjoint seed: probe frames must not be training frames
const PROBE_CONFIG = `trajectory.kind = orbit
trajectory.duration_s = 0.5
trajectory.rate_hz = 10.0
trajectory.seed = 77
trajectory.start_distance = 0.55
trajectory.inclination_deg = 30.0
trajectory.azimuth_rate_deg_s = 40.0
scene.noise_sigma = 0.0
scene.texture_amplitude = 0.0
`;

function simulate(work: string, name: string, config: string): string {
  const cfgPath = join(work, `${name}.kv`);
  const outDir = join(work, name);
  writeFileSync(cfgPath, config);
  execFileSync("python3", ["-m", "portvision.cli", "simulate", "--config", cfgPath, "--out", outDir], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  return outDir;
}

function main(): void {
  const artifacts = join(TRAINER_ROOT, "artifacts");
  mkdirSync(artifacts, { recursive: true });
  const work = mkdtempSync(join(tmpdir(), "portvision-trainer-"));
  console.log(`rendering training corpus under ${work}`);
  const dsApproach = simulate(work, "approach", APPROACH_CONFIG);
  const dsOrbit = simulate(work, "orbit", ORBIT_CONFIG);
  const dsProbe = simulate(work, "probe", PROBE_CONFIG);

  const manifest: string[] = [];
  for (const target of ["ring", "reflector"] as Target[]) {
    console.log(`training ${target} filter`);
    const t0 = Date.now();
    const result = train(
      {
        datasets: [dsApproach, dsOrbit],
        target,
        modality: "rgb",
        epochs: 10,
        batchSize: 4,
        learningRate: 2e-3,
        cropsPerFrame: 3,
        cropSize: 64,
        valFraction: 0.2,
        seed: 1234,
        initSeed: 7,
      },
      (line) => console.log(`  ${line}`),
    );
    console.log(
      `  best epoch ${result.bestEpoch} (val ${result.bestValLoss.toFixed(4)}), ` +
        `${((Date.now() - t0) / 1000).toFixed(0)} s`,
    );
    const weightsName = `${target}_rgb.portcnn1`;
    const specs = result.model.layerSpecs();
    saveWeights(join(artifacts, weightsName), "rgb", target, specs);
    writeFileSync(join(artifacts, `${target}_training.csv`), historyCsv(result.history));
    manifest.push(`${target}_weights = ${weightsName}`);

    // probe pair: frame 2 of the held-out sequence, mask computed in f64
    const probe = loadDataset(dsProbe, target)[2];
    const frame64 = Float64Array.from(probe.img.data);
    const mask = runLayers(specs, MODALITY_BYTE.rgb, probe.img);
    const inName = `${target}_probe_input.npy`;
    const outName = `${target}_probe_output.npy`;
    writeNpy(join(artifacts, inName), frame64, [probe.img.height, probe.img.width]);
    writeNpy(join(artifacts, outName), mask.data, [mask.height, mask.width]);
    manifest.push(`${target}_probe_input = ${inName}`);
    manifest.push(`${target}_probe_output = ${outName}`);

    // coarse quality readout against the simulator's ground-truth mask
    let inter = 0;
    let union = 0;
    for (let i = 0; i < mask.data.length; i++) {
      const pred = mask.data[i] >= 0.5;
      const truth = probe.mask.data[i] >= 0.5;
      if (pred && truth) inter++;
      if (pred || truth) union++;
    }
    console.log(`  probe frame IoU ${(union ? inter / union : 1).toFixed(3)}`);
  }
  writeFileSync(join(artifacts, "export_manifest.kv"), manifest.join("\n") + "\n");
  console.log(`wrote ${join(artifacts, "export_manifest.kv")}`);
}

main();
