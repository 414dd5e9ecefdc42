"""Analytic cycle, latency and resource model of the accelerator.

Compute: a conv3x3 layer issues one 9-wide MAC group per (output position,
input channel, filter) and finishes in ceil(groups / P_C) cycles. A 1x1
convolution reuses the 9 multipliers of each kernel, so its scalar
multiplies run at 9*P_C per cycle. FC layers run rows*cols scalar MACs at
P_F per cycle.

Transfers: one shared bus moves bus_bytes_per_cycle. Weights of layer i+1
are prefetched while layer i computes (prefetch depth 1), so one pixel
costs T_in + T_w1 + sum_i max(compute_i, T_w(i+1)) + compute_last + T_out.
Weight transfer time divides by ``amortize_weights_over`` when one weight
load is reused across a batch of pixels.

Resources: dsp_used = 9*P_C + P_F. BRAM is sized for the largest layer's
activations (input + output words) plus a double buffer for the largest
weight tensor, in 18 kbit blocks of int16 words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ModelError
from .engine import HwParams
from .model import LayerSpec, NetworkSpec

BRAM_BLOCK_BITS = 18432
WORD_BITS = 16
WORD_BYTES = 2


@dataclass(frozen=True)
class LayerCost:
    """Static per-layer cost: kernel_ops counts 9-wide MAC groups for 3x3
    convolutions and scalar multiplies for 1x1/fc."""

    name: str
    kind: str
    kernel_ops: int
    weight_bytes: int
    in_bytes: int
    out_bytes: int
    compute_cycles: int
    transfer_cycles: int


@dataclass(frozen=True)
class ResourceEstimate:
    dsp_used: int
    bram_used: int
    within_budget: bool


@dataclass(frozen=True)
class Timeline:
    """Cycle schedule of one pixel. Cycle figures are ints, or Fractions
    when weight loads are amortized over a batch."""

    layer_names: tuple[str, ...]
    computes: tuple[int, ...]
    weight_cycles: tuple  # amortized, aligned with layer_names
    compute_starts: tuple
    compute_ends: tuple
    weight_starts: tuple
    weight_ends: tuple
    stalls: tuple
    t_in: int
    t_out: int
    total_cycles: int | Fraction
    clock_mhz: float

    @property
    def compute_total(self) -> int:
        return sum(self.computes)

    @property
    def stall_total(self):
        return sum(self.stalls)

    @property
    def transfer_total(self):
        return self.t_in + self.t_out + sum(self.weight_cycles)

    @property
    def us_per_pixel(self) -> float:
        return float(self.total_cycles) / self.clock_mhz


def weight_words(layer: LayerSpec) -> int:
    """Kernel plus bias words; band-shared tensors are stored (and moved) once."""
    if layer.weight_shape is None:
        return 0
    return int(np.prod(layer.weight_shape)) + layer.weight_shape[0]


def activation_words(layer: LayerSpec) -> tuple[int, int]:
    """(input words, output words) aggregated over band branches."""
    return (
        layer.n_branches * int(np.prod(layer.in_shape)),
        layer.n_branches * int(np.prod(layer.out_shape)),
    )


def layer_cycles(layer: LayerSpec, hw: HwParams) -> LayerCost:
    """Compute and transfer cost of one weighted layer."""
    if layer.kind == "conv3x3":
        h, w, c_out = layer.out_shape
        ops = layer.n_branches * h * w * layer.in_shape[2] * c_out
        compute = math.ceil(ops / hw.p_c)
    elif layer.kind == "conv1x1":
        h, w, c_out = layer.out_shape
        ops = layer.n_branches * h * w * layer.in_shape[2] * c_out
        compute = math.ceil(ops / (9 * hw.p_c))
    elif layer.kind == "fc":
        ops = layer.weight_shape[0] * layer.weight_shape[1]
        compute = math.ceil(ops / hw.p_f)
    else:
        raise ModelError(f"no cost model for layer kind {layer.kind!r}")
    wbytes = WORD_BYTES * weight_words(layer)
    in_words, out_words = activation_words(layer)
    return LayerCost(
        name=layer.name,
        kind=layer.kind,
        kernel_ops=ops,
        weight_bytes=wbytes,
        in_bytes=WORD_BYTES * in_words,
        out_bytes=WORD_BYTES * out_words,
        compute_cycles=compute,
        transfer_cycles=transfer_cycles(wbytes, hw),
    )


def transfer_cycles(nbytes: int, hw: HwParams) -> int:
    """Bus cycles to move nbytes off-chip <-> on-chip."""
    if nbytes < 0:
        raise ValueError("byte count must be non-negative")
    return math.ceil(nbytes / hw.bus_bytes_per_cycle)


def schedule(spec: NetworkSpec, hw: HwParams, amortize_weights_over: int = 1) -> Timeline:
    """Cycle timeline of one pixel under depth-1 weight prefetching.

    The weight load of layer i+1 starts exactly when layer i's compute
    starts; compute i+1 then starts at max(end of compute i, end of that
    load). Stalls are the cycles a compute start waits on its weights.
    """
    if amortize_weights_over < 1:
        raise ValueError("amortize_weights_over must be >= 1")
    layers = spec.weighted_layers()
    costs = [layer_cycles(l, hw) for l in layers]
    computes = [c.compute_cycles for c in costs]

    def amort(cycles: int):
        if amortize_weights_over == 1:
            return cycles
        f = Fraction(cycles, amortize_weights_over)
        return int(f) if f.denominator == 1 else f

    tws = [amort(c.transfer_cycles) for c in costs]
    t_in = transfer_cycles(WORD_BYTES * int(np.prod(layers[0].in_shape)), hw)
    t_out = transfer_cycles(WORD_BYTES * spec.n_classes, hw)
    return timeline_from_costs(
        t_in, computes, tws, t_out, hw.clock_mhz, tuple(l.name for l in layers)
    )


def timeline_from_costs(
    t_in, computes, weight_loads, t_out, clock_mhz: float = 250.0, names=None
) -> Timeline:
    """Assemble the prefetch timeline from raw per-layer cycle costs."""
    if names is None:
        names = tuple(f"layer{i + 1}" for i in range(len(computes)))
    computes = list(computes)
    tws = list(weight_loads)

    weight_starts = [t_in]
    weight_ends = [t_in + tws[0]]
    compute_starts = [weight_ends[0]]
    compute_ends = [compute_starts[0] + computes[0]]
    stalls = [0]
    for i in range(1, len(computes)):
        ws = compute_starts[i - 1]  # prefetch starts with previous compute
        we = ws + tws[i]
        cs = max(compute_ends[i - 1], we)
        weight_starts.append(ws)
        weight_ends.append(we)
        compute_starts.append(cs)
        compute_ends.append(cs + computes[i])
        stalls.append(max(0, cs - compute_ends[i - 1]))
    total = compute_ends[-1] + t_out
    return Timeline(
        layer_names=tuple(names),
        computes=tuple(computes),
        weight_cycles=tuple(tws),
        compute_starts=tuple(compute_starts),
        compute_ends=tuple(compute_ends),
        weight_starts=tuple(weight_starts),
        weight_ends=tuple(weight_ends),
        stalls=tuple(stalls),
        t_in=t_in,
        t_out=t_out,
        total_cycles=total,
        clock_mhz=clock_mhz,
    )


def estimate_resources(spec: NetworkSpec, hw: HwParams) -> ResourceEstimate:
    """DSP and 18Kb-BRAM usage: 9 multipliers per CONV kernel plus the FC
    multipliers; buffers sized for the largest layer's activations plus a
    double-buffered copy of the largest weight tensor."""
    dsp = 9 * hw.p_c + hw.p_f
    act_peak = 0
    w_peak = 0
    for layer in spec.weighted_layers():
        in_w, out_w = activation_words(layer)
        act_peak = max(act_peak, in_w + out_w)
        w_peak = max(w_peak, weight_words(layer))
    total_words = act_peak + 2 * w_peak
    bram = math.ceil(total_words * WORD_BITS / BRAM_BLOCK_BITS)
    within = dsp <= hw.dsp_budget and bram <= hw.bram_budget
    return ResourceEstimate(dsp_used=dsp, bram_used=bram, within_budget=within)


def throughput_report(
    spec: NetworkSpec, hw: HwParams, amortize_weights_over: int = 1
) -> dict:
    """Latency and rate figures derived from the schedule."""
    tl = schedule(spec, hw, amortize_weights_over)
    res = estimate_resources(spec, hw)
    us = tl.us_per_pixel
    pixels_per_s = 1e6 / us
    return {
        "total_cycles": tl.total_cycles,
        "compute_cycles": tl.compute_total,
        "stall_cycles": tl.stall_total,
        "input_cycles": tl.t_in,
        "output_cycles": tl.t_out,
        "us_per_pixel": us,
        "pixels_per_s": pixels_per_s,
        "mpixels_per_s": pixels_per_s / 1e6,
        "kpixels_per_s_per_dsp": pixels_per_s / 1e3 / res.dsp_used,
        "dsp_used": res.dsp_used,
        "bram_used": res.bram_used,
        "within_budget": res.within_budget,
    }
