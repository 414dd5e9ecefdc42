"""Command-line surface for batch use.

Subcommands: convert, shapes, train-import, quantize, classify, benchmark,
dse, selftest. Every subcommand accepts ``--report PATH`` to write a
machine-readable key=value document (with a per-layer table where it
applies) and ``--config PATH`` to preload defaults from a line-oriented
key=value file; explicit flags override the file.

Exit codes: 0 success, 1 toolkit error (single-line diagnostic on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

import numpy as np

from . import dse as dse_mod
from . import engine, hsi_io, model, oracles, perf, synth
from .errors import HsiAccelError
from .presets import PRESETS, get_preset


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


class Report:
    """Line-oriented key=value document with optional tab-separated tables."""

    def __init__(self):
        self.lines: list[str] = []

    def kv(self, key: str, value) -> None:
        self.lines.append(f"{key}={_fmt(value)}")

    def table(self, name: str, header: list[str], rows: list[list]) -> None:
        self.lines.append(f"[{name}]")
        self.lines.append("\t".join(header))
        for row in rows:
            self.lines.append("\t".join(_fmt(v) for v in row))

    def render(self) -> str:
        return "\n".join(self.lines) + "\n"

    def emit(self, path: str | None) -> None:
        text = self.render()
        sys.stdout.write(text)
        if path:
            with open(path, "w") as fh:
                fh.write(text)


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise HsiAccelError(f"config line without '=': {line!r}")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _add_net_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), help="dataset preset")
    p.add_argument("--bands", type=int, help="spectral band count N_c")
    p.add_argument("--classes", type=int, help="class count C")
    p.add_argument("--nb", type=int, help="band split count N_b")
    p.add_argument("--patch", type=int, help="input patch size p")
    p.add_argument("--block1", choices=["1x1", "3x3"], help="Block-1 kernel")


def _add_hw_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pc", type=int, default=64, help="CONV unit parallelism P_C")
    p.add_argument("--pf", type=int, default=256, help="FC unit parallelism P_F")
    p.add_argument("--clock", type=float, default=250.0, help="clock in MHz")
    p.add_argument("--bus-bytes", type=int, default=8, help="bus bytes per cycle")
    p.add_argument("--dsp-budget", type=int, default=900)
    p.add_argument("--bram-budget", type=int, default=545)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--report", help="also write the report to this path")
    p.add_argument("--config", help="key=value file supplying flag defaults")


def _resolve_spec(args) -> tuple[model.NetworkSpec, str]:
    if args.preset:
        preset = get_preset(args.preset)
        n_c = args.bands if args.bands is not None else preset.n_c
        n_classes = args.classes if args.classes is not None else preset.n_classes
        n_b = args.nb if args.nb is not None else preset.n_b
        p = args.patch if args.patch is not None else preset.p
        kernel = args.block1 if args.block1 is not None else preset.block1_kernel
        name = preset.name
    else:
        missing = [k for k in ("bands", "classes", "nb", "patch", "block1") if getattr(args, k) is None]
        if missing:
            raise HsiAccelError(
                f"need --preset or explicit network flags (missing: {', '.join('--' + m for m in missing)})"
            )
        n_c, n_classes, n_b, p, kernel = args.bands, args.classes, args.nb, args.patch, args.block1
        name = "custom"
    params = model.NetParams(n_b=n_b, p=p, block1_kernel=kernel)
    return model.derive_config(n_c, n_classes, params), name


def _resolve_hw(args) -> engine.HwParams:
    return engine.HwParams(
        p_c=args.pc,
        p_f=args.pf,
        clock_mhz=args.clock,
        bus_bytes_per_cycle=args.bus_bytes,
        dsp_budget=args.dsp_budget,
        bram_budget=args.bram_budget,
    )


def _shape_str(shape) -> str:
    return "x".join(str(d) for d in shape)


def cmd_shapes(args) -> int:
    spec, name = _resolve_spec(args)
    rep = Report()
    rep.kv("network", name)
    rep.kv("n_c", spec.n_c)
    rep.kv("classes", spec.n_classes)
    rep.kv("n_b", spec.n_b)
    rep.kv("patch", spec.p)
    rep.kv("concat_len", spec.concat_len)
    rows = []
    for layer in spec.layers:
        if layer.kind == "relu":
            continue
        in_s = _shape_str(layer.in_shape)
        out_s = _shape_str(layer.out_shape)
        if layer.n_branches > 1:
            if layer.kind == "band_split":
                out_s = f"{layer.n_branches} x {out_s}"
            elif layer.kind == "concat":
                in_s = f"{layer.n_branches} x {in_s}"
            else:
                in_s = f"[per band] {in_s}"
        kernel = _shape_str(layer.weight_shape) if layer.weighted else "-"
        rows.append([layer.name, layer.kind, in_s, out_s, kernel])
    rep.table("layers", ["layer", "kind", "input", "output", "kernel"], rows)
    rep.emit(args.report)
    return 0


def cmd_benchmark(args) -> int:
    spec, name = _resolve_spec(args)
    hw = _resolve_hw(args)
    tl = perf.schedule(spec, hw, args.amortize)
    res = perf.estimate_resources(spec, hw)
    thr = perf.throughput_report(spec, hw, args.amortize)
    rep = Report()
    rep.kv("network", name)
    rep.kv("p_c", hw.p_c)
    rep.kv("p_f", hw.p_f)
    rep.kv("clock_mhz", hw.clock_mhz)
    rep.kv("bus_bytes_per_cycle", hw.bus_bytes_per_cycle)
    rep.kv("amortize_weights_over", args.amortize)
    rep.kv("dsp_used", res.dsp_used)
    rep.kv("bram_used", res.bram_used)
    rep.kv("within_budget", res.within_budget)
    rep.kv("input_cycles", tl.t_in)
    rep.kv("output_cycles", tl.t_out)
    rep.kv("compute_cycles", tl.compute_total)
    rep.kv("stall_cycles", tl.stall_total)
    rep.kv("total_cycles", tl.total_cycles)
    rep.kv("us_per_pixel", tl.us_per_pixel)
    rep.kv("mpixels_per_s", thr["mpixels_per_s"])
    rep.kv("kpixels_per_s_per_dsp", thr["kpixels_per_s_per_dsp"])
    rows = []
    costs = [perf.layer_cycles(l, hw) for l in spec.weighted_layers()]
    for cost, wc, stall in zip(costs, tl.weight_cycles, tl.stalls):
        rows.append(
            [cost.name, cost.kind, cost.kernel_ops, cost.compute_cycles, wc, stall, cost.weight_bytes]
        )
    rep.table(
        "layers",
        ["layer", "kind", "kernel_ops", "compute_cycles", "weight_cycles", "stall_cycles", "weight_bytes"],
        rows,
    )
    rep.emit(args.report)
    return 0


def cmd_dse(args) -> int:
    spec, name = _resolve_spec(args)
    hw = _resolve_hw(args)
    result = dse_mod.explore(spec, hw, amortize_weights_over=args.amortize, pow2=args.pow2_only)
    rep = Report()
    rep.kv("network", name)
    rep.kv("dsp_budget", hw.dsp_budget)
    rep.kv("bram_budget", hw.bram_budget)
    rep.kv("search_space_size", result.search_space_size)
    rep.kv("best_p_c", result.best.p_c)
    rep.kv("best_p_f", result.best.p_f)
    rep.kv("best_total_cycles", result.best.total_cycles)
    rep.kv("best_dsp_used", result.best.dsp_used)
    rep.kv("best_us_per_pixel", float(result.best.total_cycles) / hw.clock_mhz)
    if result.pow2_best is not None:
        rep.kv("pow2_p_c", result.pow2_best.p_c)
        rep.kv("pow2_p_f", result.pow2_best.p_f)
        rep.kv("pow2_total_cycles", result.pow2_best.total_cycles)
        rep.kv("pow2_dsp_used", result.pow2_best.dsp_used)
    rep.table(
        "pareto",
        ["dsp_used", "total_cycles"],
        [[d, c] for d, c in result.pareto],
    )
    rep.emit(args.report)
    return 0


def cmd_convert(args) -> int:
    rep = Report()
    if args.synthetic:
        cube, labels = synth.make_synthetic_scene(
            width=args.width,
            height=args.height,
            bands=args.bands,
            n_classes=args.classes,
            noise=args.noise,
            seed=args.seed,
            unlabeled_frac=args.unlabeled_frac,
        )
    elif args.from_npy:
        data = np.load(args.from_npy)
        if data.ndim != 3:
            raise HsiAccelError(f"expected a (height, width, bands) array, got {data.shape}")
        if not np.isfinite(data).all():
            raise HsiAccelError("input array contains non-finite values")
        h, w, b = data.shape
        cube = hsi_io.HsiCube(w, h, b, np.ascontiguousarray(data, dtype=np.float32))
        labels = None
        if args.labels_npy:
            lab = np.load(args.labels_npy)
            if lab.shape != (h, w):
                raise HsiAccelError(f"label array {lab.shape} does not match cube {h}x{w}")
            labels = hsi_io.LabelMap(w, h, lab.astype(np.uint16))
    else:
        raise HsiAccelError("convert needs --synthetic or --from-npy")
    if args.normalize != "none":
        cube = hsi_io.normalize(cube, args.normalize)
    hsi_io.write_cube(cube, args.out_cube)
    rep.kv("cube", args.out_cube)
    rep.kv("width", cube.width)
    rep.kv("height", cube.height)
    rep.kv("bands", cube.bands)
    if labels is not None:
        if not args.out_labels:
            raise HsiAccelError("labels present but --out-labels not given")
        hsi_io.write_labels(labels, args.out_labels)
        rep.kv("labels", args.out_labels)
        rep.kv("classes", labels.n_classes)
        rep.kv("labeled_pixels", int((labels.labels > 0).sum()))
    rep.emit(args.report)
    return 0


def cmd_train_import(args) -> int:
    spec, name = _resolve_spec(args)
    wset = model.load_weights(args.weights, spec)
    if args.quantize:
        wset = model.attach_quantized(wset)
    model.save_weights(wset, args.out, spec)
    rep = Report()
    rep.kv("network", name)
    rep.kv("weights_in", args.weights)
    rep.kv("weights_out", args.out)
    rep.kv("layers", len(wset.weights))
    rep.kv("quantized", bool(wset.quant))
    rep.emit(args.report)
    return 0


def cmd_quantize(args) -> int:
    spec, name = _resolve_spec(args)
    wset = model.load_weights(args.weights, spec)
    cube = hsi_io.load_cube(args.cube)
    labels = hsi_io.load_labels(args.labels)
    patches = engine.draw_calibration_patches(cube, labels, spec.p, args.seed, args.calib)
    qw = engine.quantize_weights(spec, wset, patches)
    out_wset = model.attach_quantized(wset)
    model.save_weights(out_wset, args.out, spec)

    agree = 0
    for patch in patches:
        probs = model.infer_float(spec, wset, patch)
        cls_fixed, _ = engine.classify_pixel(spec, qw, patch)
        agree += int(int(np.argmax(probs)) + 1 == cls_fixed)
    rep = Report()
    rep.kv("network", name)
    rep.kv("weights_out", args.out)
    rep.kv("calibration_patches", len(patches))
    rep.kv("input_exponent", qw.input_format.exponent)
    rep.kv("calibration_argmax_agreement", agree / len(patches))
    rep.table(
        "formats",
        ["layer", "weight_exponent", "in_exponent", "out_exponent", "relu"],
        [[lw.name, lw.w_e, lw.in_e, lw.out_e, lw.relu] for lw in qw.layers.values()],
    )
    rep.emit(args.report)
    return 0


def cmd_classify(args) -> int:
    spec, name = _resolve_spec(args)
    cube = hsi_io.load_cube(args.cube)
    labels = hsi_io.load_labels(args.labels) if args.labels else None
    wset = model.load_weights(args.weights, spec)
    if cube.bands != spec.n_c:
        raise HsiAccelError(f"cube has {cube.bands} bands, network expects {spec.n_c}")

    coords = None
    if args.test_only:
        if labels is None:
            raise HsiAccelError("--test-only requires --labels")
        split = hsi_io.split_dataset(
            labels, (args.train_ratio, args.val_ratio), args.seed, args.min_samples
        )
        coords = list(split.test)
    if args.strict_border:
        if coords is None:
            if args.all_pixels:
                coords = [(x, y) for y in range(cube.height) for x in range(cube.width)]
            else:
                if labels is None:
                    raise HsiAccelError("--labels required unless --all-pixels")
                coords = hsi_io.labeled_coords(labels)
        coords = [(x, y) for x, y in coords if hsi_io.patch_in_bounds(cube, x, y, spec.p)]

    rep = Report()
    rep.kv("network", name)
    rep.kv("mode", args.mode)
    rep.kv("seed", args.seed)

    if args.mode == "fixed":
        if labels is None:
            raise HsiAccelError("fixed mode calibrates on labeled pixels; --labels required")
        patches = engine.draw_calibration_patches(cube, labels, spec.p, args.seed, args.calib)
        qw = engine.quantize_weights(spec, wset, patches)
        preds, stats = engine.classify_image(
            cube, labels, spec, qw, coords=coords, all_pixels=args.all_pixels, workers=args.threads
        )
        prob_fn = None
        if args.probs_out:
            def prob_fn(patch):
                _, logits = engine.classify_pixel(spec, qw, patch)
                z = logits.astype(np.float64) * 2.0 ** qw.layers["fc2"].out_e
                z = z - z.max()
                ez = np.exp(z)
                return ez / ez.sum()
    else:
        eval_coords = coords
        if eval_coords is None:
            if args.all_pixels:
                eval_coords = [(x, y) for y in range(cube.height) for x in range(cube.width)]
            else:
                if labels is None:
                    raise HsiAccelError("--labels required unless --all-pixels")
                eval_coords = hsi_io.labeled_coords(labels)
        preds = np.zeros((cube.height, cube.width), dtype=np.uint16)
        for x, y in eval_coords:
            patch = hsi_io.extract_patch(cube, labels, x, y, spec.p)
            probs = model.infer_float(spec, wset, patch)
            preds[y, x] = int(np.argmax(probs)) + 1
        stats = {"pixels": len(eval_coords)}
        if labels is not None:
            lab = labels.labels
            pts = [(x, y) for x, y in eval_coords if lab[y, x] > 0]
            correct = sum(int(preds[y, x] == lab[y, x]) for x, y in pts)
            stats["evaluated"] = len(pts)
            stats["correct"] = correct
            stats["overall_accuracy"] = correct / len(pts) if pts else float("nan")
        coords = eval_coords

        def prob_fn(patch):
            return model.infer_float(spec, wset, patch)

    if args.out:
        engine.write_prediction_map(preds, args.out)
        rep.kv("prediction_map", args.out)
    if args.probs_out:
        out_coords = coords
        if out_coords is None:
            out_coords = hsi_io.labeled_coords(labels)
        rows = np.zeros((len(out_coords), spec.n_classes), dtype="<f4")
        for i, (x, y) in enumerate(out_coords):
            patch = hsi_io.extract_patch(cube, labels, x, y, spec.p)
            rows[i] = prob_fn(patch)
        with open(args.probs_out, "wb") as fh:
            fh.write(rows.tobytes())
        rep.kv("probs_out", args.probs_out)
        rep.kv("probs_rows", len(out_coords))

    rep.kv("pixels", stats["pixels"])
    if "overall_accuracy" in stats:
        rep.kv("evaluated", stats["evaluated"])
        rep.kv("correct", stats["correct"])
        rep.kv("overall_accuracy", stats["overall_accuracy"])
    rep.emit(args.report)
    return 0


def cmd_selftest(args) -> int:
    import contextlib
    import io

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        ok = oracles.selftest(verbose=True)
    text = buf.getvalue()
    sys.stdout.write(text)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsiaccel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("shapes", help="print the derived layer table")
    _add_net_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_shapes)

    p = sub.add_parser("benchmark", help="cycle/latency/resource report")
    _add_net_args(p)
    _add_hw_args(p)
    p.add_argument("--amortize", type=int, default=1, help="pixels sharing one weight load")
    _add_common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("dse", help="explore (P_C, P_F) under the DSP budget")
    _add_net_args(p)
    _add_hw_args(p)
    p.add_argument("--amortize", type=int, default=1)
    p.add_argument("--pow2-only", action="store_true", help="also report the best power-of-two point")
    p.add_argument("--dataset-config", help="key=value file with the network parameters")
    _add_common(p)
    p.set_defaults(func=cmd_dse)

    p = sub.add_parser("convert", help="build HSIC/HSIL containers")
    p.add_argument("--synthetic", action="store_true", help="generate a synthetic labeled scene")
    p.add_argument("--from-npy", help="read a (height, width, bands) .npy cube")
    p.add_argument("--labels-npy", help=".npy label map matching --from-npy")
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--bands", type=int, default=40)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unlabeled-frac", type=float, default=0.1)
    p.add_argument("--normalize", choices=["none", "minmax", "standardize"], default="none")
    p.add_argument("--out-cube", required=True)
    p.add_argument("--out-labels")
    _add_common(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train-import", help="validate external weights against a network")
    _add_net_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quantize", action="store_true", help="attach per-tensor int16 sections")
    _add_common(p)
    p.set_defaults(func=cmd_train_import)

    p = sub.add_parser("quantize", help="quantize weights and calibrate activation formats")
    _add_net_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cube", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--calib", type=int, default=engine.DEFAULT_CALIBRATION_PATCHES)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("classify", help="classify a scene and report accuracy")
    _add_net_args(p)
    p.add_argument("--cube", required=True)
    p.add_argument("--labels")
    p.add_argument("--weights", required=True)
    p.add_argument("--out", help="prediction map path (HSIP)")
    p.add_argument("--mode", choices=["fixed", "float"], default="fixed")
    p.add_argument("--probs-out", help="write float32 class probabilities per pixel")
    p.add_argument("--all-pixels", action="store_true")
    p.add_argument("--test-only", action="store_true", help="classify only the test partition")
    p.add_argument(
        "--strict-border", action="store_true",
        help="skip pixels whose window leaves the image instead of zero-padding",
    )
    p.add_argument("--train-ratio", type=float, default=0.15)
    p.add_argument("--val-ratio", type=float, default=0.05)
    p.add_argument("--min-samples", type=int, default=20)
    p.add_argument("--calib", type=int, default=engine.DEFAULT_CALIBRATION_PATCHES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("selftest", help="run the built-in oracle suites")
    _add_common(p)
    p.set_defaults(func=cmd_selftest)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Fold --config and --dataset-config files into subparser defaults."""
    paths = []
    for flag in ("--config", "--dataset-config"):
        if flag in argv:
            idx = argv.index(flag)
            if idx + 1 < len(argv):
                paths.append(argv[idx + 1])
    if not paths or len(argv) < 1:
        return argv
    merged: dict[str, str] = {}
    for path in paths:
        merged.update(_load_config_file(path))
    # apply to the chosen subparser so flag types are respected
    sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    if not sub_actions or argv[0] not in sub_actions[0].choices:
        return argv
    sub = sub_actions[0].choices[argv[0]]
    defaults = {}
    for action in sub._actions:
        if action.dest in merged:
            raw = merged[action.dest]
            if action.type is not None:
                defaults[action.dest] = action.type(raw)
            elif isinstance(action, (argparse._StoreTrueAction,)):
                defaults[action.dest] = raw.lower() in ("1", "true", "yes")
            else:
                defaults[action.dest] = raw
    sub.set_defaults(**defaults)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except HsiAccelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
