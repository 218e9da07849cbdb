import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

/** Compose a binary P5 buffer from [0,1] intensities. */
export function pgmBuffer(width: number, height: number, data: ArrayLike<number>): Buffer {
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, "ascii");
  const pixels = Buffer.alloc(width * height);
  for (let i = 0; i < width * height; i++) {
    pixels[i] = Math.max(0, Math.min(255, Math.round(data[i] * 255)));
  }
  return Buffer.concat([header, pixels]);
}

export interface DiskFrame {
  frame: Float32Array;
  mask: Float32Array;
}

/** Bright disk on a dim background; the mask marks the disk. */
export function diskFrame(size: number, cy: number, cx: number, r: number): DiskFrame {
  const frame = new Float32Array(size * size);
  const mask = new Float32Array(size * size);
  for (let i = 0; i < size; i++) {
    for (let j = 0; j < size; j++) {
      const inside = (i - cy) ** 2 + (j - cx) ** 2 <= r * r;
      frame[i * size + j] = inside ? 0.9 : 0.1;
      mask[i * size + j] = inside ? 1 : 0;
    }
  }
  return { frame, mask };
}

/** Write a dataset directory in the generator layout: NUM frames with a disk
 * whose center walks deterministically, masks for one target name. */
export function writeDiskDataset(root: string, target: string, count: number, size: number): void {
  mkdirSync(join(root, "frames"), { recursive: true });
  mkdirSync(join(root, "masks"), { recursive: true });
  for (let k = 0; k < count; k++) {
    const cy = 10 + ((k * 7) % (size - 20));
    const cx = 10 + ((k * 11) % (size - 20));
    const { frame, mask } = diskFrame(size, cy, cx, 5);
    const idx = String(k).padStart(4, "0");
    writeFileSync(join(root, "frames", `frame_${idx}.pgm`), pgmBuffer(size, size, frame));
    writeFileSync(join(root, "masks", `${target}_${idx}.pgm`), pgmBuffer(size, size, mask));
  }
}
