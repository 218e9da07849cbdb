import { describe, expect, it } from "vitest";

import { parsePgm } from "../src/pgm.js";
import { pgmBuffer } from "./helpers.js";

describe("parsePgm", () => {
  it("reads a plain P5 buffer", () => {
    const img = parsePgm(pgmBuffer(3, 2, [0, 0.5, 1, 1, 0.5, 0]));
    expect(img.width).toBe(3);
    expect(img.height).toBe(2);
    expect(img.data[0]).toBe(0);
    expect(img.data[2]).toBe(1);
    expect(img.data[1]).toBeCloseTo(128 / 255, 10);
  });

  it("skips header comments", () => {
    const blob = Buffer.concat([
      Buffer.from("P5\n# rendered by a simulator\n2 1\n# another\n255\n", "ascii"),
      Buffer.from([10, 250]),
    ]);
    const img = parsePgm(blob);
    expect(img.width).toBe(2);
    expect(img.height).toBe(1);
    expect(img.data[1]).toBeCloseTo(250 / 255, 10);
  });

  it("rejects non-P5 magic", () => {
    expect(() => parsePgm(Buffer.from("P6\n1 1\n255\nx", "ascii"))).toThrow(/P5/);
  });

  it("rejects maxval other than 255", () => {
    const blob = Buffer.concat([Buffer.from("P5\n1 1\n65535\n", "ascii"), Buffer.from([0, 0])]);
    expect(() => parsePgm(blob)).toThrow(/maxval/);
  });

  it("rejects truncated pixel data", () => {
    const full = pgmBuffer(4, 4, new Float32Array(16));
    expect(() => parsePgm(full.subarray(0, full.length - 3))).toThrow(/truncated/);
  });
});
