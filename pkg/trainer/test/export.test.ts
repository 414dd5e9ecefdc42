import assert from "node:assert/strict";
import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { test } from "node:test";

import { labeledCoords } from "../src/data";
import { readWeights, writeCube, writeLabels, writeWeights } from "../src/format";
import { Model, softmax } from "../src/model";
import { NetConfig } from "../src/network";
import { makeSyntheticScene } from "../src/synth";
import { DEFAULT_TRAIN, gatherSamples, train } from "../src/train";

const CFG: NetConfig = { nC: 40, nClasses: 3, nB: 4, p: 5, block1Kernel: "3x3" };
const NET_FLAGS = [
  "--bands", "40", "--classes", "3", "--nb", "4", "--patch", "5", "--block1", "3x3",
];

function runPrimary(args: string[], cwd: string) {
  const proc = spawnSync("python3", ["-m", "hsiaccel.cli", ...args], {
    cwd,
    encoding: "utf8",
  });
  assert.equal(proc.status, 0, `hsiaccel ${args[0]} failed: ${proc.stderr}`);
  return proc.stdout;
}

function setupScene(dir: string) {
  const { cube, labels } = makeSyntheticScene(28, 24, 40, 3, 0.05, 5);
  writeCube(cube, path.join(dir, "scene.hsic"));
  writeLabels(labels, path.join(dir, "scene.hsil"));
  return { cube, labels };
}

test("exported weights round-trip and validate in the primary toolkit", () => {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "hsi-export-"));
  const { cube, labels } = setupScene(dir);
  const tc = { ...DEFAULT_TRAIN, epochs: 8, batchSize: 16, seed: 0 };
  const { model } = train(cube, labels, CFG, tc);
  const weightsPath = path.join(dir, "trained.hsiw");
  writeWeights(model.toWeightLayers(), weightsPath);

  // bitwise round-trip through our own reader
  const back = readWeights(weightsPath);
  assert.equal(back.length, 7);
  const again = Model.fromWeightLayers(CFG, back);
  for (let i = 0; i < 7; i++) {
    assert.deepEqual(back[i].w.dims, model.toWeightLayers()[i].w.dims);
  }
  const s0 = gatherSamples(cube, labels, labeledCoords(labels).slice(0, 1), CFG.p)[0];
  const l1 = model.forwardSample(s0.x, false, 0, null).logits;
  const l2 = again.forwardSample(s0.x, false, 0, null).logits;
  for (let i = 0; i < l1.length; i++) {
    assert.ok(Math.abs(l1[i] - l2[i]) < 1e-5); // float32 export rounding only
  }

  // the primary validates layer shapes via train-import
  runPrimary(
    ["train-import", ...NET_FLAGS, "--weights", "trained.hsiw", "--out", "checked.hsiw"],
    dir,
  );
});

test("primary float inference matches the trainer within 1e-4", () => {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "hsi-probs-"));
  const { cube, labels } = setupScene(dir);
  const tc = { ...DEFAULT_TRAIN, epochs: 8, batchSize: 16, seed: 1 };
  const { model } = train(cube, labels, CFG, tc);
  writeWeights(model.toWeightLayers(), path.join(dir, "trained.hsiw"));

  runPrimary(
    [
      "classify", ...NET_FLAGS, "--mode", "float",
      "--cube", "scene.hsic", "--labels", "scene.hsil", "--weights", "trained.hsiw",
      "--probs-out", "probs.f32",
    ],
    dir,
  );

  // probs.f32: one float32 row of C probabilities per labeled pixel,
  // in row-major coordinate order
  const raw = fs.readFileSync(path.join(dir, "probs.f32"));
  const coords = labeledCoords(labels);
  assert.equal(raw.length, coords.length * CFG.nClasses * 4);

  // compare 50 patches against our own forward pass on the float32-rounded
  // weights (what the file actually carries)
  const rounded = Model.fromWeightLayers(CFG, readWeights(path.join(dir, "trained.hsiw")));
  const samples = gatherSamples(cube, labels, coords, CFG.p);
  let maxDiff = 0;
  for (let i = 0; i < 50; i++) {
    const probs = softmax(rounded.forwardSample(samples[i].x, false, 0, null).logits);
    for (let c = 0; c < CFG.nClasses; c++) {
      const got = raw.readFloatLE((i * CFG.nClasses + c) * 4);
      maxDiff = Math.max(maxDiff, Math.abs(got - probs[c]));
    }
  }
  assert.ok(maxDiff <= 1e-4, `max probability deviation ${maxDiff}`);
});

test("quantized classification agrees with float argmax on 99%+ of pixels", () => {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "hsi-quant-"));
  const scene = setupScene(dir);
  const tc = { ...DEFAULT_TRAIN, epochs: 12, batchSize: 16, seed: 2 };
  const { model, metrics } = train(scene.cube, scene.labels, CFG, tc);
  assert.ok(metrics.testOa >= 0.95, `trained OA ${metrics.testOa}`);
  writeWeights(model.toWeightLayers(), path.join(dir, "trained.hsiw"));

  runPrimary(
    [
      "classify", ...NET_FLAGS, "--mode", "float",
      "--cube", "scene.hsic", "--labels", "scene.hsil", "--weights", "trained.hsiw",
      "--out", "float.hsip",
    ],
    dir,
  );
  runPrimary(
    [
      "classify", ...NET_FLAGS, "--mode", "fixed", "--seed", "3",
      "--cube", "scene.hsic", "--labels", "scene.hsil", "--weights", "trained.hsiw",
      "--out", "fixed.hsip",
    ],
    dir,
  );

  const floatMap = fs.readFileSync(path.join(dir, "float.hsip"));
  const fixedMap = fs.readFileSync(path.join(dir, "fixed.hsip"));
  assert.deepEqual(floatMap.subarray(0, 12), fixedMap.subarray(0, 12));
  let agree = 0;
  let total = 0;
  for (let i = 12; i < floatMap.length; i += 2) {
    const a = floatMap.readUInt16LE(i);
    const b = fixedMap.readUInt16LE(i);
    if (a === 0 && b === 0) continue;
    total += 1;
    if (a === b) agree += 1;
  }
  assert.ok(total > 0);
  assert.ok(agree / total >= 0.99, `fixed-vs-float agreement ${agree}/${total}`);
});
