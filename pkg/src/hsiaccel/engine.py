"""Bit-exact functional emulation of the accelerator datapath.

The CONV unit is modeled as P_C kernels of 9 multipliers plus an adder tree;
the FC unit as P_F multipliers. Parallelism affects timing only, never
values: every operation here is integer math (64-bit accumulation,
half-away-from-zero requantization, int16 saturation) whose results are
identical for any (P_C, P_F).

Prediction maps use the ``HSIP`` container: magic ``HSIP``, u32 width,
u32 height, one u16 per pixel row-major, 0 where unclassified.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ShapeError, TruncationError
from .hsi_io import HsiCube, LabelMap, Patch, extract_patch, labeled_coords
from .model import NetworkSpec, WeightSet, band_partition, float_taps
from .quant import (
    QFormat,
    QTensor,
    choose_qformat,
    quantize,
    requantize_array,
    round_half_away,
)

PREDICTION_MAGIC = b"HSIP"
THREADS_ENV = "HSIACCEL_THREADS"
DEFAULT_CALIBRATION_PATCHES = 64


@dataclass(frozen=True)
class HwParams:
    """Accelerator configuration: parallelism, clock, bus and budgets."""

    p_c: int = 64
    p_f: int = 256
    clock_mhz: float = 250.0
    bus_bytes_per_cycle: int = 8
    dsp_budget: int = 900
    bram_budget: int = 545

    def __post_init__(self):
        for name in ("p_c", "p_f", "clock_mhz", "bus_bytes_per_cycle", "dsp_budget", "bram_budget"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"HwParams.{name} must be positive")


@dataclass(frozen=True)
class QLayerWeights:
    """Quantized parameters of one weighted layer.

    The bias is held at accumulator scale 2**(in_e + w_e) so it adds into
    the 64-bit accumulator without extra shifting.
    """

    name: str
    kind: str
    w_q: np.ndarray
    w_e: int
    bias_acc: np.ndarray
    in_e: int
    out_e: int
    relu: bool


@dataclass(frozen=True)
class QWeightSet:
    """All quantized layers plus the calibrated input format."""

    layers: dict[str, QLayerWeights]
    input_format: QFormat


@dataclass
class TraceRecord:
    layer: str
    in_words: int
    out_words: int
    kernel_ops: int
    occupancy_words: int


@dataclass
class ExecutionTrace:
    """Per-layer bookkeeping of one classify_pixel run (word = int16)."""

    records: list[TraceRecord] = field(default_factory=list)

    def add(self, layer: str, in_words: int, out_words: int, kernel_ops: int) -> None:
        self.records.append(
            TraceRecord(layer, in_words, out_words, kernel_ops, in_words + out_words)
        )

    @property
    def peak_occupancy_words(self) -> int:
        return max((r.occupancy_words for r in self.records), default=0)

    def merge(self, other: "ExecutionTrace") -> None:
        for r in other.records:
            self.records.append(r)


def _peak_format(peak: float) -> QFormat:
    return choose_qformat(np.asarray([peak], dtype=np.float64))


def quantize_weights(
    spec: NetworkSpec,
    wset: WeightSet,
    calibration_patches,
) -> QWeightSet:
    """Quantize weights per tensor and calibrate activation formats.

    Activation scales come from the float reference run over the calibration
    patches: each weighted layer's output format is the smallest one holding
    the largest post-activation magnitude observed.
    """
    wset.validate(spec)
    if not calibration_patches:
        raise ValueError("calibration requires at least one patch")
    peaks: dict[str, float] = {}
    for patch in calibration_patches:
        taps = float_taps(spec, wset, patch)
        for name, val in taps.items():
            m = float(np.abs(val).max())
            peaks[name] = max(peaks.get(name, 0.0), m)

    input_format = _peak_format(peaks["input"])
    layers: dict[str, QLayerWeights] = {}
    in_e = input_format.exponent
    for layer in spec.weighted_layers():
        w, b = wset.weights[layer.name]
        wq = quantize(w, choose_qformat(w))
        out_e = _peak_format(peaks[layer.name]).exponent
        acc_scale = 2.0 ** -(in_e + wq.qformat.exponent)
        bias_acc = round_half_away(b.astype(np.float64) * acc_scale).astype(np.int64)
        layers[layer.name] = QLayerWeights(
            name=layer.name,
            kind=layer.kind,
            w_q=wq.values,
            w_e=wq.qformat.exponent,
            bias_acc=bias_acc,
            in_e=in_e,
            out_e=out_e,
            relu=spec.relu_after(layer.name),
        )
        in_e = out_e
    return QWeightSet(layers, input_format)


def draw_calibration_patches(
    cube: HsiCube,
    labels: LabelMap,
    p: int,
    seed: int,
    count: int = DEFAULT_CALIBRATION_PATCHES,
) -> list[Patch]:
    """Deterministic calibration batch: ``count`` labeled pixels drawn with
    the seeded generator (with replacement only if fewer exist)."""
    coords = labeled_coords(labels)
    if not coords:
        raise ValueError("no labeled pixels to calibrate on")
    rng = np.random.default_rng(seed)
    if len(coords) >= count:
        picks = rng.choice(len(coords), size=count, replace=False)
    else:
        picks = rng.choice(len(coords), size=count, replace=True)
    return [extract_patch(cube, labels, *coords[i], p) for i in picks]


def _check_input(layer, x: QTensor, lw: QLayerWeights) -> None:
    if tuple(x.dims) != tuple(layer.in_shape):
        raise ShapeError(f"{layer.name}: input {x.dims} != expected {layer.in_shape}")
    if x.qformat.exponent != lw.in_e:
        raise ShapeError(
            f"{layer.name}: input exponent {x.qformat.exponent} != calibrated {lw.in_e}"
        )


def _finish(acc: np.ndarray, lw: QLayerWeights) -> QTensor:
    shift = lw.in_e + lw.w_e - lw.out_e
    v = requantize_array(acc, shift)
    if lw.relu:
        v = np.maximum(v, 0).astype(np.int16)
    return QTensor(v, QFormat(lw.out_e))


def run_conv3x3(layer, x: QTensor, lw: QLayerWeights, hw: HwParams | None = None) -> QTensor:
    """3x3 valid convolution on the CONV unit; mac9 per window per channel."""
    _check_input(layer, x, lw)
    windows = np.lib.stride_tricks.sliding_window_view(x.values, (3, 3), axis=(0, 1))
    acc = np.einsum("ijcab,fcab->ijf", windows.astype(np.int64), lw.w_q.astype(np.int64))
    acc += lw.bias_acc
    return _finish(acc, lw)


def run_conv1x1(layer, x: QTensor, lw: QLayerWeights, hw: HwParams | None = None) -> QTensor:
    """1x1 convolution: per-position channel mix, multipliers reused 9-wide."""
    _check_input(layer, x, lw)
    w = lw.w_q[:, :, 0, 0].astype(np.int64)
    acc = np.einsum("ijc,fc->ijf", x.values.astype(np.int64), w)
    acc += lw.bias_acc
    return _finish(acc, lw)


def run_fc(layer, x: QTensor, lw: QLayerWeights, hw: HwParams | None = None) -> QTensor:
    """Fully-connected layer: row dot products in 64-bit accumulation."""
    _check_input(layer, x, lw)
    acc = lw.w_q.astype(np.int64) @ x.values.astype(np.int64)
    acc += lw.bias_acc
    return _finish(acc, lw)


_RUNNERS = {"conv3x3": run_conv3x3, "conv1x1": run_conv1x1, "fc": run_fc}


def _words(shape) -> int:
    return int(np.prod(shape))


def _kernel_ops(layer) -> int:
    if layer.kind == "conv3x3":
        h, w, _ = layer.out_shape
        return layer.n_branches * h * w * layer.in_shape[2] * layer.out_shape[2]
    if layer.kind == "conv1x1":
        h, w, _ = layer.out_shape
        return layer.n_branches * h * w * layer.in_shape[2] * layer.out_shape[2]
    if layer.kind == "fc":
        return layer.weight_shape[0] * layer.weight_shape[1]
    return 0


def classify_pixel(
    spec: NetworkSpec,
    qw: QWeightSet,
    patch,
    trace: ExecutionTrace | None = None,
) -> tuple[int, np.ndarray]:
    """Run the fixed-point pipeline on one patch.

    Returns (class id, int16 logit vector). The class is the integer argmax
    of the final logits, ties broken toward the lowest class id.
    """
    data = patch.data if hasattr(patch, "data") else np.asarray(patch)
    if tuple(data.shape) != spec.layers[0].in_shape:
        raise ShapeError(
            f"patch shape {tuple(data.shape)} != expected {spec.layers[0].in_shape}"
        )
    act: QTensor | list[QTensor] = quantize(data, qw.input_format)
    for layer in spec.layers:
        if layer.kind in ("conv3x3", "conv1x1", "fc"):
            lw = qw.layers[layer.name]
            run = _RUNNERS[layer.kind]
            if layer.band_shared:
                act = [run(layer, a, lw) for a in act]
            else:
                act = run(layer, act, lw)
            if trace is not None:
                trace.add(
                    layer.name,
                    layer.n_branches * _words(layer.in_shape),
                    layer.n_branches * _words(layer.out_shape),
                    _kernel_ops(layer),
                )
        elif layer.kind == "relu":
            pass  # fused into the preceding compute layer
        elif layer.kind == "band_split":
            bands = band_partition(act.values, layer.n_branches)
            act = [QTensor(np.ascontiguousarray(b), act.qformat) for b in bands]
        elif layer.kind == "concat":
            fmt = act[0].qformat
            act = QTensor(
                np.concatenate([a.values.reshape(-1) for a in act]), fmt
            )
        elif layer.kind == "softmax":
            pass  # hardware prediction is integer argmax of the logits
        else:
            raise ShapeError(f"unknown layer kind {layer.kind}")
    logits = act.values
    cls = int(np.argmax(logits)) + 1  # np.argmax takes the first (lowest) maximum
    return cls, logits


def classify_image(
    cube: HsiCube,
    labels: LabelMap | None,
    spec: NetworkSpec,
    qw: QWeightSet,
    coords: list[tuple[int, int]] | None = None,
    all_pixels: bool = False,
    workers: int | None = None,
) -> tuple[np.ndarray, dict]:
    """Classify pixels of a scene; returns (prediction map, report).

    Default coverage is every labeled pixel; ``all_pixels`` classifies the
    whole scene. Work is sharded over a thread pool and assembled by pixel
    index, so results are identical for any worker count.
    """
    if cube.bands != spec.n_c:
        raise ConfigError(f"cube has {cube.bands} bands, network expects {spec.n_c}")
    if coords is None:
        if all_pixels:
            coords = [(x, y) for y in range(cube.height) for x in range(cube.width)]
        else:
            if labels is None:
                raise ValueError("labels required unless all_pixels or coords given")
            coords = labeled_coords(labels)
    preds = np.zeros((cube.height, cube.width), dtype=np.uint16)

    n_workers = _worker_count(workers)
    chunks = [coords[i::n_workers] for i in range(n_workers)]

    def work(chunk):
        for x, y in chunk:
            patch = extract_patch(cube, labels, x, y, spec.p)
            cls, _ = classify_pixel(spec, qw, patch)
            preds[y, x] = cls

    if n_workers == 1:
        work(coords)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(work, chunks))

    report: dict = {"pixels": len(coords)}
    if labels is not None:
        truth = labels.labels
        mask = np.zeros_like(preds, dtype=bool)
        for x, y in coords:
            mask[y, x] = truth[y, x] > 0
        n_eval = int(mask.sum())
        n_correct = int((preds[mask] == truth[mask]).sum())
        report["evaluated"] = n_eval
        report["correct"] = n_correct
        report["overall_accuracy"] = n_correct / n_eval if n_eval else float("nan")
        per_class = {}
        for cls in range(1, labels.n_classes + 1):
            cmask = mask & (truth == cls)
            total = int(cmask.sum())
            if total:
                per_class[cls] = int((preds[cmask] == cls).sum()) / total
        report["per_class_accuracy"] = per_class
    return preds, report


def _worker_count(requested: int | None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested if requested else (os.cpu_count() or 1)
    if cap is not None:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, n)


def write_prediction_map(preds: np.ndarray, path) -> None:
    height, width = preds.shape
    with open(path, "wb") as fh:
        fh.write(PREDICTION_MAGIC + struct.pack("<II", width, height))
        fh.write(np.ascontiguousarray(preds, dtype="<u2").tobytes())


def load_prediction_map(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PREDICTION_MAGIC:
            raise FormatError(f"bad prediction magic {magic!r}")
        head = fh.read(8)
        if len(head) < 8:
            raise TruncationError("prediction file ends inside header")
        width, height = struct.unpack("<II", head)
        payload = fh.read(2 * width * height)
        if len(payload) < 2 * width * height:
            raise TruncationError("prediction payload truncated")
    return np.frombuffer(payload, dtype="<u2").reshape(height, width).copy()
