import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, describe, expect, it } from "vitest";

import { loadDataset, positivePixels, sampleCrop, type Sample } from "../src/data.js";
import { mulberry32 } from "../src/rng.js";
import { diskFrame, writeDiskDataset } from "./helpers.js";

const tmp = mkdtempSync(join(tmpdir(), "trainer-data-test-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

function diskSample(size: number, cy: number, cx: number): Sample {
  const { frame, mask } = diskFrame(size, cy, cx, 5);
  const img = { width: size, height: size, data: frame };
  const m = { width: size, height: size, data: mask };
  return { img, mask: m, pos: positivePixels(m) };
}

describe("positivePixels", () => {
  it("collects stride-2 anchors inside the mask only", () => {
    const s = diskSample(40, 20, 20);
    expect(s.pos.length).toBeGreaterThan(0);
    for (let k = 0; k < s.pos.length; k += 2) {
      const y = s.pos[k];
      const x = s.pos[k + 1];
      expect(y % 2).toBe(0);
      expect(x % 2).toBe(0);
      expect(s.mask.data[y * 40 + x]).toBe(1);
    }
  });
});

describe("sampleCrop", () => {
  it("stays in bounds and binarizes labels over many draws", () => {
    const s = diskSample(48, 12, 36);
    const rng = mulberry32(31);
    for (let k = 0; k < 200; k++) {
      const { x, t } = sampleCrop(rng, s, 3, 16);
      expect(x.length).toBe(3 * 16 * 16);
      expect(t.length).toBe(16 * 16);
      for (let i = 0; i < t.length; i++) expect(t[i] === 0 || t[i] === 1).toBe(true);
      // replicated channels carry the same plane
      expect(x[5]).toBe(x[16 * 16 + 5]);
      expect(x[5]).toBe(x[2 * 16 * 16 + 5]);
    }
  });

  it("biases crops toward the positive region", () => {
    // disk far from center: unbiased crops of 1/9 the area would rarely hit it
    const s = diskSample(96, 10, 86);
    const rng = mulberry32(32);
    let hits = 0;
    const draws = 100;
    for (let k = 0; k < draws; k++) {
      const { t } = sampleCrop(rng, s, 1, 32);
      if (t.some((v) => v === 1)) hits++;
    }
    expect(hits).toBeGreaterThan(draws * 0.55);
  });

  it("is deterministic for a fixed stream", () => {
    const s = diskSample(48, 24, 24);
    const a = sampleCrop(mulberry32(33), s, 1, 16);
    const b = sampleCrop(mulberry32(33), s, 1, 16);
    expect(Array.from(a.x)).toEqual(Array.from(b.x));
    expect(Array.from(a.t)).toEqual(Array.from(b.t));
  });
});

describe("loadDataset", () => {
  it("pairs frames with the requested target masks", () => {
    const root = join(tmp, "set_a");
    writeDiskDataset(root, "ring", 4, 40);
    const samples = loadDataset(root, "ring");
    expect(samples.length).toBe(4);
    for (const s of samples) {
      expect(s.img.width).toBe(40);
      expect(s.mask.width).toBe(40);
      expect(s.pos.length).toBeGreaterThan(0);
    }
  });

  it("fails cleanly when the target masks are absent", () => {
    const root = join(tmp, "set_b");
    writeDiskDataset(root, "ring", 2, 40);
    expect(() => loadDataset(root, "reflector")).toThrow();
  });
});
