/** Synthetic striped scenes with Gaussian-bump class spectra (test data). */
import { Cube, Labels } from "./format";
import { Rng } from "./rng";

export function makeSyntheticScene(
  width: number,
  height: number,
  bands: number,
  nClasses: number,
  noise = 0.05,
  seed = 0,
  unlabeledFrac = 0.1,
): { cube: Cube; labels: Labels } {
  const rng = new Rng(seed + 101);
  const centers: number[] = [];
  for (let k = 0; k < nClasses; k++) {
    centers.push((0.15 + (0.7 * k) / Math.max(1, nClasses - 1)) * (bands - 1));
  }
  const sigma = bands / (2.5 * nClasses);
  const sigs: Float64Array[] = centers.map((c) => {
    const s = new Float64Array(bands);
    for (let b = 0; b < bands; b++) {
      s[b] = 0.2 + Math.exp(-((b - c) * (b - c)) / (2 * sigma * sigma));
    }
    return s;
  });

  const data = new Float64Array(width * height * bands);
  const lab = new Uint16Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const cls = 1 + Math.floor((x * nClasses) / width);
      lab[y * width + x] = rng.next() < unlabeledFrac ? 0 : cls;
      const sig = sigs[cls - 1];
      const base = (y * width + x) * bands;
      for (let b = 0; b < bands; b++) {
        data[base + b] = Math.abs(sig[b] + noise * rng.gauss());
      }
    }
  }
  return {
    cube: { width, height, bands, data },
    labels: { width, height, data: lab },
  };
}
