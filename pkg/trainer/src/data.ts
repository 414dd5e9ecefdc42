/** Patch extraction and stratified splitting over HSIC/HSIL scenes. */
import { Cube, Labels } from "./format";
import { Rng } from "./rng";

export interface Coord {
  x: number;
  y: number;
}

export interface Split {
  train: Coord[];
  val: Coord[];
  test: Coord[];
}

/** p x p x bands window centered at (x, y), zero-padded at the borders. */
export function extractPatch(cube: Cube, x: number, y: number, p: number): Float64Array {
  const half = (p - 1) / 2;
  const out = new Float64Array(p * p * cube.bands);
  for (let dy = -half; dy <= half; dy++) {
    const yy = y + dy;
    if (yy < 0 || yy >= cube.height) continue;
    for (let dx = -half; dx <= half; dx++) {
      const xx = x + dx;
      if (xx < 0 || xx >= cube.width) continue;
      const src = (yy * cube.width + xx) * cube.bands;
      const dst = ((dy + half) * p + (dx + half)) * cube.bands;
      for (let b = 0; b < cube.bands; b++) out[dst + b] = cube.data[src + b];
    }
  }
  return out;
}

export function labelAt(labels: Labels, x: number, y: number): number {
  return labels.data[y * labels.width + x];
}

export function nClasses(labels: Labels): number {
  let m = 0;
  for (const v of labels.data) m = Math.max(m, v);
  return m;
}

export function labeledCoords(labels: Labels): Coord[] {
  const out: Coord[] = [];
  for (let y = 0; y < labels.height; y++) {
    for (let x = 0; x < labels.width; x++) {
      if (labels.data[y * labels.width + x] > 0) out.push({ x, y });
    }
  }
  return out;
}

/**
 * Per-class stratified split: classes with fewer than minSamples pixels are
 * dropped, the rest shuffle with the seeded generator and cut into
 * round(n*train) / round(n*val) / remainder.
 */
export function stratifiedSplit(
  labels: Labels,
  trainRatio: number,
  valRatio: number,
  seed: number,
  minSamples = 10,
): Split {
  const rng = new Rng(seed ^ 0x5eed);
  const byClass = new Map<number, Coord[]>();
  for (const c of labeledCoords(labels)) {
    const cls = labelAt(labels, c.x, c.y);
    if (!byClass.has(cls)) byClass.set(cls, []);
    byClass.get(cls)!.push(c);
  }
  const split: Split = { train: [], val: [], test: [] };
  let survivors = 0;
  for (const cls of [...byClass.keys()].sort((a, b) => a - b)) {
    const coords = byClass.get(cls)!;
    if (coords.length < minSamples) continue;
    survivors += 1;
    rng.shuffle(coords);
    const nTrain = Math.floor(coords.length * trainRatio + 0.5);
    const nVal = Math.floor(coords.length * valRatio + 0.5);
    split.train.push(...coords.slice(0, nTrain));
    split.val.push(...coords.slice(nTrain, nTrain + nVal));
    split.test.push(...coords.slice(nTrain + nVal));
  }
  if (survivors === 0) {
    throw new Error(`no class has at least ${minSamples} labeled pixels`);
  }
  return split;
}
