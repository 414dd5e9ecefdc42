"""Exhaustive design-space exploration over (P_C, P_F).

The search evaluates the latency model on every grid point under the DSP
budget (9*P_C + P_F) and the BRAM fit, and returns the fastest feasible
point plus the (dsp, cycles) Pareto frontier. The grid is small enough
(about 10^5 points at the default budget) that exhaustive scan is exact and
cheap; evaluation is vectorized but arithmetic stays in integers so a plain
per-point re-scan reproduces it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .errors import InfeasibleError
from .engine import HwParams
from .model import NetworkSpec
from .perf import estimate_resources, layer_cycles, transfer_cycles, WORD_BYTES


@dataclass(frozen=True)
class DesignPoint:
    p_c: int
    p_f: int
    total_cycles: object  # int, or Fraction when weights are amortized
    dsp_used: int
    feasible: bool


@dataclass(frozen=True)
class DseResult:
    best: DesignPoint
    pareto: tuple[tuple[int, object], ...]  # (dsp_used, total_cycles), by dsp
    search_space_size: int
    pow2_best: DesignPoint | None = None


def default_ranges(dsp_budget: int) -> tuple[np.ndarray, np.ndarray]:
    """Largest single-axis ranges that can be feasible under the budget."""
    pc_max = (dsp_budget - 1) // 9
    pf_max = dsp_budget - 9
    if pc_max < 1 or pf_max < 1:
        raise InfeasibleError(f"DSP budget {dsp_budget} cannot host 9*P_C + P_F")
    return np.arange(1, pc_max + 1), np.arange(1, pf_max + 1)


def _grid_totals(
    spec: NetworkSpec, hw: HwParams, pcs: np.ndarray, pfs: np.ndarray, amortize: int
) -> np.ndarray:
    """amortize * total_cycles for every (P_C, P_F), exact in int64.

    Scaling by the amortization factor clears the fractional weight-load
    shares: A*max(c, tw/A) = max(A*c, tw).
    """
    base = HwParams(
        p_c=1,
        p_f=1,
        clock_mhz=hw.clock_mhz,
        bus_bytes_per_cycle=hw.bus_bytes_per_cycle,
        dsp_budget=hw.dsp_budget,
        bram_budget=hw.bram_budget,
    )
    layers = spec.weighted_layers()
    costs = [layer_cycles(l, base) for l in layers]
    pcs64 = pcs.astype(np.int64)
    pfs64 = pfs.astype(np.int64)
    a = np.int64(amortize)

    def compute_grid(cost, layer):
        if cost.kind == "conv3x3":
            c = -(-np.int64(cost.kernel_ops) // pcs64)
            return c[:, None]
        if cost.kind == "conv1x1":
            c = -(-np.int64(cost.kernel_ops) // (9 * pcs64))
            return c[:, None]
        c = -(-np.int64(cost.kernel_ops) // pfs64)
        return c[None, :]

    t_in = transfer_cycles(WORD_BYTES * int(np.prod(layers[0].in_shape)), hw)
    t_out = transfer_cycles(WORD_BYTES * spec.n_classes, hw)
    tws = [np.int64(transfer_cycles(c.weight_bytes, hw)) for c in costs]

    total = np.zeros((len(pcs64), len(pfs64)), dtype=np.int64)
    total += a * np.int64(t_in + t_out)
    total += tws[0]
    grids = [compute_grid(c, l) for c, l in zip(costs, layers)]
    for i in range(len(layers) - 1):
        total = total + np.maximum(a * grids[i], tws[i + 1])
    total = total + a * grids[-1]
    return total


def explore(
    spec: NetworkSpec,
    hw_base: HwParams,
    pc_values=None,
    pf_values=None,
    amortize_weights_over: int = 1,
    pow2: bool = False,
) -> DseResult:
    """Scan the (P_C, P_F) grid, minimize modeled cycles under the budgets.

    Ties break toward fewer DSPs, then smaller P_C, then smaller P_F. With
    ``pow2`` the result also carries the best power-of-two point.
    """
    if pc_values is None or pf_values is None:
        d_pc, d_pf = default_ranges(hw_base.dsp_budget)
        pcs = np.asarray(pc_values if pc_values is not None else d_pc, dtype=np.int64)
        pfs = np.asarray(pf_values if pf_values is not None else d_pf, dtype=np.int64)
    else:
        pcs = np.asarray(pc_values, dtype=np.int64)
        pfs = np.asarray(pf_values, dtype=np.int64)
    if pcs.size == 0 or pfs.size == 0:
        raise InfeasibleError("empty parameter range")

    amortize = amortize_weights_over
    scaled = _grid_totals(spec, hw_base, pcs, pfs, amortize)
    dsp = 9 * pcs[:, None] + pfs[None, :]
    feasible = dsp <= hw_base.dsp_budget
    # BRAM sizing does not depend on the parallelism, so it gates all points
    bram_ok = estimate_resources(spec, hw_base).bram_used <= hw_base.bram_budget
    if not bram_ok:
        feasible &= False

    def to_cycles(scaled_value: int):
        if amortize == 1:
            return int(scaled_value)
        f = Fraction(int(scaled_value), amortize)
        return int(f) if f.denominator == 1 else f

    def pick_best(mask: np.ndarray) -> DesignPoint | None:
        if not mask.any():
            return None
        ii, jj = np.nonzero(mask)
        keys = np.lexsort((pfs[jj], pcs[ii], dsp[ii, jj], scaled[ii, jj]))
        i, j = ii[keys[0]], jj[keys[0]]
        return DesignPoint(
            p_c=int(pcs[i]),
            p_f=int(pfs[j]),
            total_cycles=to_cycles(scaled[i, j]),
            dsp_used=int(dsp[i, j]),
            feasible=True,
        )

    best = pick_best(feasible)
    if best is None:
        raise InfeasibleError(
            f"no feasible (P_C, P_F) under dsp_budget={hw_base.dsp_budget}, "
            f"bram_budget={hw_base.bram_budget}"
        )

    # Pareto frontier over (dsp_used, cycles), nondominated, sorted by dsp
    ii, jj = np.nonzero(feasible)
    order = np.lexsort((scaled[ii, jj], dsp[ii, jj]))
    pareto: list[tuple[int, object]] = []
    best_seen = None
    for k in order:
        d, n = int(dsp[ii[k], jj[k]]), int(scaled[ii[k], jj[k]])
        if best_seen is None or n < best_seen:
            pareto.append((d, to_cycles(n)))
            best_seen = n

    pow2_best = None
    if pow2:
        pc_mask = (pcs & (pcs - 1)) == 0
        pf_mask = (pfs & (pfs - 1)) == 0
        pow2_best = pick_best(feasible & pc_mask[:, None] & pf_mask[None, :])

    return DseResult(
        best=best,
        pareto=tuple(pareto),
        search_space_size=int(pcs.size * pfs.size),
        pow2_best=pow2_best,
    )
