/**
 * The classifier network and its gradients, all explicit loops over flat
 * arrays. Layout contract (must match the inference toolkit bit for bit):
 * activations are (h, w, c) C-order, conv kernels (cOut, cIn, kh, kw),
 * fc matrices (out, in); the 3x3 Block-1 output flattens row-major into a
 * 9-long axis and splits into nB spectral bands processed by one shared
 * Block-2 weight set; ReLU follows each Block-2 conv and fc1 only.
 */
import { WeightLayer } from "./format";
import { BLOCK2_CHANNELS, NetConfig, Shapes, deriveShapes } from "./network";
import { Rng } from "./rng";

export interface ConvParam {
  cOut: number;
  cIn: number;
  k: number;
  w: Float64Array;
  b: Float64Array;
}

export interface FcParam {
  nOut: number;
  nIn: number;
  w: Float64Array;
  b: Float64Array;
}

function convForward(
  x: Float64Array,
  h: number,
  w: number,
  c: number,
  p: ConvParam,
): Float64Array {
  const k = p.k;
  const hOut = h - k + 1;
  const wOut = w - k + 1;
  const out = new Float64Array(hOut * wOut * p.cOut);
  for (let i = 0; i < hOut; i++) {
    for (let j = 0; j < wOut; j++) {
      for (let f = 0; f < p.cOut; f++) {
        let s = p.b[f];
        for (let ci = 0; ci < p.cIn; ci++) {
          for (let a = 0; a < k; a++) {
            for (let bb = 0; bb < k; bb++) {
              s += x[((i + a) * w + (j + bb)) * c + ci] * p.w[((f * p.cIn + ci) * k + a) * k + bb];
            }
          }
        }
        out[(i * wOut + j) * p.cOut + f] = s;
      }
    }
  }
  return out;
}

/** Accumulates dW/dB into gw/gb and returns dX. */
function convBackward(
  x: Float64Array,
  h: number,
  w: number,
  c: number,
  p: ConvParam,
  dy: Float64Array,
  gw: Float64Array,
  gb: Float64Array,
): Float64Array {
  const k = p.k;
  const hOut = h - k + 1;
  const wOut = w - k + 1;
  const dx = new Float64Array(h * w * c);
  for (let i = 0; i < hOut; i++) {
    for (let j = 0; j < wOut; j++) {
      for (let f = 0; f < p.cOut; f++) {
        const g = dy[(i * wOut + j) * p.cOut + f];
        if (g === 0) continue;
        gb[f] += g;
        for (let ci = 0; ci < p.cIn; ci++) {
          for (let a = 0; a < k; a++) {
            for (let bb = 0; bb < k; bb++) {
              const xi = ((i + a) * w + (j + bb)) * c + ci;
              const wi = ((f * p.cIn + ci) * k + a) * k + bb;
              gw[wi] += g * x[xi];
              dx[xi] += g * p.w[wi];
            }
          }
        }
      }
    }
  }
  return dx;
}

interface BandCache {
  inputs: Float64Array[]; // input of each conv layer
  zs: Float64Array[]; // pre-ReLU outputs
}

interface SampleCache {
  x: Float64Array;
  block1Out: Float64Array;
  bands: BandCache[];
  concat: Float64Array;
  concatKept: Float64Array | null;
  fc1z: Float64Array;
  fc1h: Float64Array;
  fc1Kept: Float64Array | null;
  dropMaskIn: Float64Array | null;
  dropMaskHidden: Float64Array | null;
}

export interface Gradients {
  block1w: Float64Array;
  block1b: Float64Array;
  block2w: Float64Array[];
  block2b: Float64Array[];
  fc1w: Float64Array;
  fc1b: Float64Array;
  fc2w: Float64Array;
  fc2b: Float64Array;
}

export class Model {
  readonly cfg: NetConfig;
  readonly shapes: Shapes;
  block1: ConvParam;
  block2: ConvParam[];
  fc1: FcParam;
  fc2: FcParam;

  constructor(cfg: NetConfig, seed: number) {
    this.cfg = cfg;
    this.shapes = deriveShapes(cfg);
    const rng = new Rng(seed);
    const k1 = cfg.block1Kernel === "3x3" ? 3 : 1;
    this.block1 = Model.initConv(cfg.nC, cfg.nC, k1, rng);
    this.block2 = [];
    for (let i = 0; i < 4; i++) {
      this.block2.push(Model.initConv(BLOCK2_CHANNELS[i + 1], BLOCK2_CHANNELS[i], 3, rng));
    }
    this.fc1 = Model.initFc(this.shapes.hidden, this.shapes.concatLen, rng);
    this.fc2 = Model.initFc(cfg.nClasses, this.shapes.hidden, rng);
  }

  private static initConv(cOut: number, cIn: number, k: number, rng: Rng): ConvParam {
    const fanIn = cIn * k * k;
    const bound = 1 / Math.sqrt(fanIn);
    const w = new Float64Array(cOut * cIn * k * k);
    for (let i = 0; i < w.length; i++) w[i] = rng.uniform(-bound, bound);
    return { cOut, cIn, k, w, b: new Float64Array(cOut) };
  }

  private static initFc(nOut: number, nIn: number, rng: Rng): FcParam {
    const bound = 1 / Math.sqrt(nIn);
    const w = new Float64Array(nOut * nIn);
    for (let i = 0; i < w.length; i++) w[i] = rng.uniform(-bound, bound);
    return { nOut, nIn, w, b: new Float64Array(nOut) };
  }

  /**
   * Forward one patch (p*p*nC, C-order). In training mode inverted dropout
   * masks the fc1 input and fc1 output with the given keep probability.
   */
  forwardSample(
    x: Float64Array,
    train: boolean,
    dropRate: number,
    dropRng: Rng | null,
  ): { logits: Float64Array; cache: SampleCache } {
    const { cfg, shapes } = this;
    const p = cfg.p;
    const a1 = convForward(x, p, p, cfg.nC, this.block1);
    // a1 is (3, 3, nC); flat spatial index r*3+col forms the 9-axis
    const bands: BandCache[] = [];
    const bandOuts: Float64Array[] = [];
    const bw = shapes.bandWidth;
    for (let b = 0; b < cfg.nB; b++) {
      let t = new Float64Array(9 * bw);
      for (let s = 0; s < 9; s++) {
        for (let ch = 0; ch < bw; ch++) {
          t[s * bw + ch] = a1[s * cfg.nC + (b * bw + ch)];
        }
      }
      const inputs: Float64Array[] = [];
      const zs: Float64Array[] = [];
      let h = 9;
      let w = bw;
      for (let li = 0; li < 4; li++) {
        inputs.push(t);
        const z = convForward(t, h, w, BLOCK2_CHANNELS[li], this.block2[li]);
        zs.push(z);
        const act = new Float64Array(z.length);
        for (let i = 0; i < z.length; i++) act[i] = z[i] > 0 ? z[i] : 0;
        t = act;
        h -= 2;
        w -= 2;
      }
      bands.push({ inputs, zs });
      bandOuts.push(t);
    }
    const concat = new Float64Array(shapes.concatLen);
    const perBand = shapes.concatLen / cfg.nB;
    for (let b = 0; b < cfg.nB; b++) concat.set(bandOuts[b], b * perBand);

    let fcIn = concat;
    let dropMaskIn: Float64Array | null = null;
    if (train && dropRate > 0 && dropRng) {
      dropMaskIn = new Float64Array(concat.length);
      const keep = 1 - dropRate;
      fcIn = new Float64Array(concat.length);
      for (let i = 0; i < concat.length; i++) {
        dropMaskIn[i] = dropRng.next() < keep ? 1 / keep : 0;
        fcIn[i] = concat[i] * dropMaskIn[i];
      }
    }

    const fc1z = new Float64Array(this.fc1.nOut);
    for (let r = 0; r < this.fc1.nOut; r++) {
      let s = this.fc1.b[r];
      const row = r * this.fc1.nIn;
      for (let i = 0; i < this.fc1.nIn; i++) s += this.fc1.w[row + i] * fcIn[i];
      fc1z[r] = s;
    }
    const fc1h = new Float64Array(fc1z.length);
    for (let i = 0; i < fc1z.length; i++) fc1h[i] = fc1z[i] > 0 ? fc1z[i] : 0;

    let hidden = fc1h;
    let dropMaskHidden: Float64Array | null = null;
    if (train && dropRate > 0 && dropRng) {
      dropMaskHidden = new Float64Array(fc1h.length);
      const keep = 1 - dropRate;
      hidden = new Float64Array(fc1h.length);
      for (let i = 0; i < fc1h.length; i++) {
        dropMaskHidden[i] = dropRng.next() < keep ? 1 / keep : 0;
        hidden[i] = fc1h[i] * dropMaskHidden[i];
      }
    }

    const logits = new Float64Array(this.fc2.nOut);
    for (let r = 0; r < this.fc2.nOut; r++) {
      let s = this.fc2.b[r];
      const row = r * this.fc2.nIn;
      for (let i = 0; i < this.fc2.nIn; i++) s += this.fc2.w[row + i] * hidden[i];
      logits[r] = s;
    }
    return {
      logits,
      cache: {
        x,
        block1Out: a1,
        bands,
        concat,
        concatKept: dropMaskIn ? fcIn : null,
        fc1z,
        fc1h,
        fc1Kept: dropMaskHidden ? hidden : null,
        dropMaskIn,
        dropMaskHidden,
      },
    };
  }

  zeroGradients(): Gradients {
    return {
      block1w: new Float64Array(this.block1.w.length),
      block1b: new Float64Array(this.block1.b.length),
      block2w: this.block2.map((p) => new Float64Array(p.w.length)),
      block2b: this.block2.map((p) => new Float64Array(p.b.length)),
      fc1w: new Float64Array(this.fc1.w.length),
      fc1b: new Float64Array(this.fc1.b.length),
      fc2w: new Float64Array(this.fc2.w.length),
      fc2b: new Float64Array(this.fc2.b.length),
    };
  }

  /** Accumulates one sample's gradients; shared Block-2 tensors receive the
   * sum of all band contributions. */
  backwardSample(cache: SampleCache, dlogits: Float64Array, g: Gradients): void {
    const { cfg, shapes } = this;
    const hidden = cache.fc1Kept ?? cache.fc1h;
    for (let r = 0; r < this.fc2.nOut; r++) {
      const gr = dlogits[r];
      if (gr !== 0) {
        g.fc2b[r] += gr;
        const row = r * this.fc2.nIn;
        for (let i = 0; i < this.fc2.nIn; i++) g.fc2w[row + i] += gr * hidden[i];
      }
    }
    const dHidden = new Float64Array(this.fc2.nIn);
    for (let i = 0; i < this.fc2.nIn; i++) {
      let s = 0;
      for (let r = 0; r < this.fc2.nOut; r++) s += dlogits[r] * this.fc2.w[r * this.fc2.nIn + i];
      dHidden[i] = s;
    }
    if (cache.dropMaskHidden) {
      for (let i = 0; i < dHidden.length; i++) dHidden[i] *= cache.dropMaskHidden[i];
    }
    const dFc1z = new Float64Array(cache.fc1z.length);
    for (let i = 0; i < dFc1z.length; i++) dFc1z[i] = cache.fc1z[i] > 0 ? dHidden[i] : 0;

    const fcIn = cache.concatKept ?? cache.concat;
    for (let r = 0; r < this.fc1.nOut; r++) {
      const gr = dFc1z[r];
      if (gr !== 0) {
        g.fc1b[r] += gr;
        const row = r * this.fc1.nIn;
        for (let i = 0; i < this.fc1.nIn; i++) g.fc1w[row + i] += gr * fcIn[i];
      }
    }
    const dConcat = new Float64Array(this.fc1.nIn);
    for (let i = 0; i < this.fc1.nIn; i++) {
      let s = 0;
      for (let r = 0; r < this.fc1.nOut; r++) s += dFc1z[r] * this.fc1.w[r * this.fc1.nIn + i];
      dConcat[i] = s;
    }
    if (cache.dropMaskIn) {
      for (let i = 0; i < dConcat.length; i++) dConcat[i] *= cache.dropMaskIn[i];
    }

    const bw = shapes.bandWidth;
    const perBand = shapes.concatLen / cfg.nB;
    const dA1 = new Float64Array(9 * cfg.nC);
    for (let b = 0; b < cfg.nB; b++) {
      let dy: Float64Array = dConcat.slice(b * perBand, (b + 1) * perBand);
      for (let li = 3; li >= 0; li--) {
        const sh = shapes.block2[li];
        const z = cache.bands[b].zs[li];
        for (let i = 0; i < dy.length; i++) if (z[i] <= 0) dy[i] = 0;
        dy = convBackward(
          cache.bands[b].inputs[li],
          sh.hIn,
          sh.wIn,
          sh.cIn,
          this.block2[li],
          dy,
          g.block2w[li],
          g.block2b[li],
        );
      }
      for (let s = 0; s < 9; s++) {
        for (let ch = 0; ch < bw; ch++) {
          dA1[s * cfg.nC + (b * bw + ch)] = dy[s * bw + ch];
        }
      }
    }
    convBackward(cache.x, cfg.p, cfg.p, cfg.nC, this.block1, dA1, g.block1w, g.block1b);
  }

  paramArrays(): Float64Array[] {
    return [
      this.block1.w,
      this.block1.b,
      ...this.block2.map((p) => p.w),
      ...this.block2.map((p) => p.b),
      this.fc1.w,
      this.fc1.b,
      this.fc2.w,
      this.fc2.b,
    ];
  }

  gradArrays(g: Gradients): Float64Array[] {
    return [
      g.block1w,
      g.block1b,
      ...g.block2w,
      ...g.block2b,
      g.fc1w,
      g.fc1b,
      g.fc2w,
      g.fc2b,
    ];
  }

  /** Export in the HSIW layer order: Block-1 conv, shared Block-2 convs, fc. */
  toWeightLayers(): WeightLayer[] {
    const k1 = this.block1.k;
    const layers: WeightLayer[] = [
      {
        kind: k1 === 3 ? "conv3x3" : "conv1x1",
        w: { dims: [this.block1.cOut, this.block1.cIn, k1, k1], data: this.block1.w },
        b: { dims: [this.block1.cOut], data: this.block1.b },
      },
    ];
    for (const p of this.block2) {
      layers.push({
        kind: "conv3x3",
        w: { dims: [p.cOut, p.cIn, 3, 3], data: p.w },
        b: { dims: [p.cOut], data: p.b },
      });
    }
    layers.push({
      kind: "fc",
      w: { dims: [this.fc1.nOut, this.fc1.nIn], data: this.fc1.w },
      b: { dims: [this.fc1.nOut], data: this.fc1.b },
    });
    layers.push({
      kind: "fc",
      w: { dims: [this.fc2.nOut, this.fc2.nIn], data: this.fc2.w },
      b: { dims: [this.fc2.nOut], data: this.fc2.b },
    });
    return layers;
  }

  static fromWeightLayers(cfg: NetConfig, layers: WeightLayer[], seed = 0): Model {
    const m = new Model(cfg, seed);
    const expect = 1 + 4 + 2;
    if (layers.length !== expect) {
      throw new Error(`expected ${expect} weighted layers, file has ${layers.length}`);
    }
    m.block1.w.set(layers[0].w.data);
    m.block1.b.set(layers[0].b.data);
    for (let i = 0; i < 4; i++) {
      m.block2[i].w.set(layers[1 + i].w.data);
      m.block2[i].b.set(layers[1 + i].b.data);
    }
    m.fc1.w.set(layers[5].w.data);
    m.fc1.b.set(layers[5].b.data);
    m.fc2.w.set(layers[6].w.data);
    m.fc2.b.set(layers[6].b.data);
    return m;
  }
}

export function softmax(logits: Float64Array): Float64Array {
  let max = -Infinity;
  for (const v of logits) max = Math.max(max, v);
  const out = new Float64Array(logits.length);
  let sum = 0;
  for (let i = 0; i < logits.length; i++) {
    out[i] = Math.exp(logits[i] - max);
    sum += out[i];
  }
  for (let i = 0; i < out.length; i++) out[i] /= sum;
  return out;
}

/** Cross-entropy loss of one sample; fills dlogits with probs - onehot. */
export function crossEntropy(logits: Float64Array, label0: number, dlogits: Float64Array): number {
  const probs = softmax(logits);
  for (let i = 0; i < probs.length; i++) dlogits[i] = probs[i];
  dlogits[label0] -= 1;
  return -Math.log(probs[label0] + 1e-300);
}
