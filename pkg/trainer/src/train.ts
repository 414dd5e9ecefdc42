/**
 * Training loop: cross-entropy loss, adaptive-moment updates (lr 0.0005,
 * beta1 0.9, beta2 0.999), dropout on the Block-3 fully-connected layers,
 * one shared Block-2 weight set across all bands.
 */
import { Adam } from "./adam";
import { Coord, extractPatch, labelAt, stratifiedSplit } from "./data";
import { Cube, Labels } from "./format";
import { Model, crossEntropy } from "./model";
import { NetConfig } from "./network";
import { Rng } from "./rng";

export interface TrainConfig {
  lr: number;
  beta1: number;
  beta2: number;
  dropout: number;
  epochs: number;
  batchSize: number;
  seed: number;
  trainRatio: number;
  valRatio: number;
  minSamples: number;
}

export const DEFAULT_TRAIN: TrainConfig = {
  lr: 0.0005,
  beta1: 0.9,
  beta2: 0.999,
  dropout: 0.5,
  epochs: 200,
  batchSize: 64,
  seed: 0,
  trainRatio: 0.15,
  valRatio: 0.05,
  minSamples: 10,
};

export interface Metrics {
  epochs: number;
  steps: number;
  finalLoss: number;
  epochLosses: number[];
  trainOa: number;
  valOa: number;
  testOa: number;
}

export interface Sample {
  x: Float64Array;
  label0: number;
}

export function gatherSamples(cube: Cube, labels: Labels, coords: Coord[], p: number): Sample[] {
  return coords.map((c) => ({
    x: extractPatch(cube, c.x, c.y, p),
    label0: labelAt(labels, c.x, c.y) - 1,
  }));
}

export function evaluate(model: Model, samples: Sample[]): number {
  if (samples.length === 0) return NaN;
  let correct = 0;
  for (const s of samples) {
    const { logits } = model.forwardSample(s.x, false, 0, null);
    let best = 0;
    for (let i = 1; i < logits.length; i++) if (logits[i] > logits[best]) best = i;
    if (best === s.label0) correct += 1;
  }
  return correct / samples.length;
}

export function trainSteps(
  model: Model,
  batchOf: (step: number) => Sample[],
  steps: number,
  tc: TrainConfig,
): number[] {
  const opt = new Adam(model.paramArrays(), tc.lr, tc.beta1, tc.beta2);
  const dropRng = new Rng(tc.seed + 7);
  const losses: number[] = [];
  const dlogits = new Float64Array(model.cfg.nClasses);
  for (let step = 0; step < steps; step++) {
    const batch = batchOf(step);
    const grads = model.zeroGradients();
    let loss = 0;
    for (const s of batch) {
      const { logits, cache } = model.forwardSample(s.x, true, tc.dropout, dropRng);
      loss += crossEntropy(logits, s.label0, dlogits);
      for (let i = 0; i < dlogits.length; i++) dlogits[i] /= batch.length;
      model.backwardSample(cache, dlogits, grads);
    }
    loss /= batch.length;
    if (!Number.isFinite(loss)) {
      throw new Error(`training diverged: loss=${loss} at step ${step}`);
    }
    losses.push(loss);
    opt.step(model.paramArrays(), model.gradArrays(grads));
  }
  return losses;
}

export function train(
  cube: Cube,
  labels: Labels,
  netCfg: NetConfig,
  tc: TrainConfig,
): { model: Model; metrics: Metrics } {
  const split = stratifiedSplit(labels, tc.trainRatio, tc.valRatio, tc.seed, tc.minSamples);
  const trainSet = gatherSamples(cube, labels, split.train, netCfg.p);
  const valSet = gatherSamples(cube, labels, split.val, netCfg.p);
  const testSet = gatherSamples(cube, labels, split.test, netCfg.p);

  const model = new Model(netCfg, tc.seed + 1);
  const opt = new Adam(model.paramArrays(), tc.lr, tc.beta1, tc.beta2);
  const shuffleRng = new Rng(tc.seed + 3);
  const dropRng = new Rng(tc.seed + 7);
  const dlogits = new Float64Array(netCfg.nClasses);
  const epochLosses: number[] = [];
  let steps = 0;
  let lastLoss = NaN;
  for (let epoch = 0; epoch < tc.epochs; epoch++) {
    const order = trainSet.map((_, i) => i);
    shuffleRng.shuffle(order);
    let epochLoss = 0;
    let nBatches = 0;
    for (let start = 0; start < order.length; start += tc.batchSize) {
      const batch = order.slice(start, start + tc.batchSize).map((i) => trainSet[i]);
      const grads = model.zeroGradients();
      let loss = 0;
      for (const s of batch) {
        const { logits, cache } = model.forwardSample(s.x, true, tc.dropout, dropRng);
        loss += crossEntropy(logits, s.label0, dlogits);
        for (let i = 0; i < dlogits.length; i++) dlogits[i] /= batch.length;
        model.backwardSample(cache, dlogits, grads);
      }
      loss /= batch.length;
      if (!Number.isFinite(loss)) {
        throw new Error(`training diverged: loss=${loss} at step ${steps}`);
      }
      opt.step(model.paramArrays(), model.gradArrays(grads));
      epochLoss += loss;
      nBatches += 1;
      steps += 1;
      lastLoss = loss;
    }
    epochLosses.push(epochLoss / Math.max(1, nBatches));
  }
  return {
    model,
    metrics: {
      epochs: tc.epochs,
      steps,
      finalLoss: lastLoss,
      epochLosses,
      trainOa: evaluate(model, trainSet),
      valOa: evaluate(model, valSet),
      testOa: evaluate(model, testSet),
    },
  };
}
