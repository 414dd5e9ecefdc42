/**
 * Trainer CLI.
 *
 *   train --cube scene.hsic --labels scene.hsil
 *         (--preset NAME | --bands N --classes C --nb N --patch P --block1 1x1|3x3)
 *         --out weights.hsiw [--seed N] [--epochs N] [--batch N] [--lr F]
 *         [--dropout F] [--min-samples N]
 *
 * Emits metrics as key=value lines; exit 1 with a one-line error on failure.
 */
import { readCube, readLabels, writeWeights } from "./format";
import { NetConfig, PRESETS } from "./network";
import { DEFAULT_TRAIN, train } from "./train";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (!a.startsWith("--")) throw new Error(`unexpected argument ${a}`);
    const key = a.slice(2);
    if (i + 1 >= argv.length) throw new Error(`flag ${a} needs a value`);
    out.set(key, argv[++i]);
  }
  return out;
}

function intArg(args: Map<string, string>, key: string, fallback: number): number {
  const v = args.get(key);
  if (v === undefined) return fallback;
  const n = Number(v);
  if (!Number.isFinite(n)) throw new Error(`--${key} expects a number, got ${v}`);
  return Math.trunc(n);
}

function floatArg(args: Map<string, string>, key: string, fallback: number): number {
  const v = args.get(key);
  if (v === undefined) return fallback;
  const n = Number(v);
  if (!Number.isFinite(n)) throw new Error(`--${key} expects a number, got ${v}`);
  return n;
}

function netConfig(args: Map<string, string>): NetConfig {
  const preset = args.get("preset");
  let base: NetConfig | undefined;
  if (preset) {
    base = PRESETS[preset];
    if (!base) throw new Error(`unknown preset ${preset}`);
  }
  const take = (key: string, fb?: number): number => {
    const v = args.get(key);
    if (v !== undefined) return Math.trunc(Number(v));
    if (fb !== undefined) return fb;
    throw new Error(`--preset or --${key} required`);
  };
  const kernel = args.get("block1") ?? base?.block1Kernel;
  if (kernel !== "1x1" && kernel !== "3x3") {
    throw new Error("--block1 must be 1x1 or 3x3");
  }
  return {
    nC: take("bands", base?.nC),
    nClasses: take("classes", base?.nClasses),
    nB: take("nb", base?.nB),
    p: take("patch", base?.p),
    block1Kernel: kernel,
  };
}

export function main(argv: string[]): number {
  try {
    if (argv.length === 0 || argv[0] !== "train") {
      process.stderr.write("usage: cli.js train --cube ... --labels ... --out ...\n");
      return 2;
    }
    const args = parseArgs(argv.slice(1));
    for (const key of ["cube", "labels", "out"]) {
      if (!args.has(key)) throw new Error(`--${key} is required`);
    }
    const cfg = netConfig(args);
    const tc = {
      ...DEFAULT_TRAIN,
      seed: intArg(args, "seed", DEFAULT_TRAIN.seed),
      epochs: intArg(args, "epochs", DEFAULT_TRAIN.epochs),
      batchSize: intArg(args, "batch", DEFAULT_TRAIN.batchSize),
      lr: floatArg(args, "lr", DEFAULT_TRAIN.lr),
      dropout: floatArg(args, "dropout", DEFAULT_TRAIN.dropout),
      minSamples: intArg(args, "min-samples", DEFAULT_TRAIN.minSamples),
    };
    const cube = readCube(args.get("cube")!);
    const labels = readLabels(args.get("labels")!);
    if (labels.width !== cube.width || labels.height !== cube.height) {
      throw new Error("label map dimensions do not match the cube");
    }
    const { model, metrics } = train(cube, labels, cfg, tc);
    writeWeights(model.toWeightLayers(), args.get("out")!);
    const kv: [string, string | number][] = [
      ["weights", args.get("out")!],
      ["epochs", metrics.epochs],
      ["steps", metrics.steps],
      ["final_loss", metrics.finalLoss.toFixed(6)],
      ["train_oa", metrics.trainOa.toFixed(6)],
      ["val_oa", metrics.valOa.toFixed(6)],
      ["test_oa", metrics.testOa.toFixed(6)],
    ];
    for (const [k, v] of kv) process.stdout.write(`${k}=${v}\n`);
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
