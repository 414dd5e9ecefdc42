"""Acceptance suite: one check per criterion, at its stated tolerance.

Each test prints one `[criterion] name: PASS/FAIL` line (visible with -v -s
or in captured output on failure) and then asserts.
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from hsiaccel import (
    HwParams,
    NetParams,
    classify_pixel,
    derive_config,
    estimate_resources,
    explore,
    infer_float,
    save_weights,
    schedule,
)
from hsiaccel.engine import QLayerWeights, quantize_weights, run_conv1x1, run_conv3x3, run_fc
from hsiaccel.hsi_io import extract_patch, write_cube, write_labels
from hsiaccel.model import LayerSpec
from hsiaccel.oracles import (
    conv1x1_fixed_naive,
    conv3x3_fixed_naive,
    dse_rescan,
    fc_fixed_naive,
    simulate_pixel_schedule,
)
from hsiaccel.perf import timeline_from_costs
from hsiaccel.presets import PRESETS
from hsiaccel.quant import QFormat, QTensor

# Measured FPGA us/pixel for the four benchmark scenes (reference hardware)
MEASURED_US = {"indian-pines": 25.2, "salinas": 26.0, "ksc": 16.4, "botswana": 11.2}


def report_line(name: str, passed: bool, detail: str, t0: float) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[criterion] {name}: {status} ({time.monotonic() - t0:.2f}s) {detail}")


class TestShapeReproduction:
    def test_reference_network_rows_exact(self):
        t0 = time.monotonic()
        spec = derive_config(220, 9, NetParams(4, 5, "3x3"))
        rows = {
            "block1_conv": ((5, 5, 220), (3, 3, 220), (220, 220, 3, 3)),
            "block2_conv1": ((9, 55, 1), (7, 53, 2), (2, 1, 3, 3)),
            "block2_conv2": ((7, 53, 2), (5, 51, 4), (4, 2, 3, 3)),
            "block2_conv3": ((5, 51, 4), (3, 49, 4), (4, 4, 3, 3)),
            "block2_conv4": ((3, 49, 4), (1, 47, 4), (4, 4, 3, 3)),
            "fc1": ((752,), (120,), (120, 752)),
            "fc2": ((120,), (9,), (9, 120)),
        }
        ok = spec.concat_len == 752
        for name, (in_s, out_s, w_s) in rows.items():
            layer = spec.layer(name)
            ok = ok and layer.in_shape == in_s and layer.out_shape == out_s
            ok = ok and layer.weight_shape == w_s
        elapsed = time.monotonic() - t0
        report_line("shape-reproduction", ok and elapsed < 1.0, f"concat_len={spec.concat_len}", t0)
        assert ok
        assert elapsed < 1.0


class TestResourceAnchor:
    def test_dsp_832_and_bram_fit(self):
        t0 = time.monotonic()
        hw = HwParams(p_c=64, p_f=256)
        details = []
        ok = True
        for preset in PRESETS.values():
            res = estimate_resources(preset.spec(), hw)
            ok = ok and res.dsp_used == 832 and res.bram_used <= 545
            details.append(f"{preset.name}:dsp={res.dsp_used},bram={res.bram_used}")
        elapsed = time.monotonic() - t0
        report_line("resource-anchor", ok and elapsed < 1.0, " ".join(details), t0)
        assert ok
        assert elapsed < 1.0


class TestOracleEquivalence:
    N_LAYERS = 1000

    def _conv3x3_case(self, rng):
        h, w = int(rng.integers(3, 8)), int(rng.integers(3, 8))
        c_in, c_out = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        x = rng.integers(-32768, 32768, size=(h, w, c_in)).astype(np.int16)
        k = rng.integers(-32768, 32768, size=(c_out, c_in, 3, 3)).astype(np.int16)
        bias = rng.integers(-(1 << 24), 1 << 24, size=c_out).astype(np.int64)
        in_e, w_e, out_e = (int(rng.integers(-20, -6)) for _ in range(3))
        relu = bool(rng.integers(0, 2))
        layer = LayerSpec("conv3x3", "t", (h, w, c_in), (h - 2, w - 2, c_out), (c_out, c_in, 3, 3))
        lw = QLayerWeights("t", "conv3x3", k, w_e, bias, in_e, out_e, relu)
        got = run_conv3x3(layer, QTensor(x, QFormat(in_e)), lw).values
        want = conv3x3_fixed_naive(x, k, bias, in_e, w_e, out_e, relu)
        return np.array_equal(got, want)

    def _conv1x1_case(self, rng):
        h, w = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        c_in, c_out = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        x = rng.integers(-32768, 32768, size=(h, w, c_in)).astype(np.int16)
        k = rng.integers(-32768, 32768, size=(c_out, c_in, 1, 1)).astype(np.int16)
        bias = rng.integers(-(1 << 24), 1 << 24, size=c_out).astype(np.int64)
        in_e, w_e, out_e = (int(rng.integers(-20, -6)) for _ in range(3))
        relu = bool(rng.integers(0, 2))
        layer = LayerSpec("conv1x1", "t", (h, w, c_in), (h, w, c_out), (c_out, c_in, 1, 1))
        lw = QLayerWeights("t", "conv1x1", k, w_e, bias, in_e, out_e, relu)
        got = run_conv1x1(layer, QTensor(x, QFormat(in_e)), lw).values
        want = conv1x1_fixed_naive(x, k, bias, in_e, w_e, out_e, relu)
        return np.array_equal(got, want)

    def _fc_case(self, rng):
        rows, cols = int(rng.integers(1, 50)), int(rng.integers(1, 50))
        x = rng.integers(-32768, 32768, size=cols).astype(np.int16)
        k = rng.integers(-32768, 32768, size=(rows, cols)).astype(np.int16)
        bias = rng.integers(-(1 << 24), 1 << 24, size=rows).astype(np.int64)
        in_e, w_e, out_e = (int(rng.integers(-20, -6)) for _ in range(3))
        relu = bool(rng.integers(0, 2))
        layer = LayerSpec("fc", "t", (cols,), (rows,), (rows, cols))
        lw = QLayerWeights("t", "fc", k, w_e, bias, in_e, out_e, relu)
        got = run_fc(layer, QTensor(x, QFormat(in_e)), lw).values
        want = fc_fixed_naive(x, k, bias, in_e, w_e, out_e, relu)
        return np.array_equal(got, want)

    def test_integer_exact_vs_bruteforce(self):
        t0 = time.monotonic()
        rng = np.random.default_rng(2024)
        fails = {"conv3x3": 0, "conv1x1": 0, "fc": 0}
        for _ in range(self.N_LAYERS):
            fails["conv3x3"] += 0 if self._conv3x3_case(rng) else 1
            fails["conv1x1"] += 0 if self._conv1x1_case(rng) else 1
            fails["fc"] += 0 if self._fc_case(rng) else 1
        elapsed = time.monotonic() - t0
        ok = all(v == 0 for v in fails.values()) and elapsed < 120
        report_line(
            "oracle-equivalence",
            ok,
            f"{self.N_LAYERS} layers/kind, mismatches={fails}",
            t0,
        )
        assert all(v == 0 for v in fails.values()), fails
        assert elapsed < 120


class TestScheduleCorrectness:
    def test_analytic_equals_event_sim(self):
        t0 = time.monotonic()
        rng = np.random.default_rng(7)
        mismatches = 0
        for _ in range(1000):
            n = int(rng.integers(1, 12))
            computes = [int(v) for v in rng.integers(1, 10_000, size=n)]
            weights = [int(v) for v in rng.integers(0, 10_000, size=n)]
            t_in = int(rng.integers(0, 2000))
            t_out = int(rng.integers(0, 500))
            tl = timeline_from_costs(t_in, computes, weights, t_out)
            if tl.total_cycles != simulate_pixel_schedule(t_in, computes, weights, t_out):
                mismatches += 1
        elapsed = time.monotonic() - t0
        ok = mismatches == 0 and elapsed < 60
        report_line("schedule-correctness", ok, f"1000 instances, mismatches={mismatches}", t0)
        assert mismatches == 0
        assert elapsed < 60


class TestDseOptimality:
    def test_full_grid_rescan_and_monotonicity(self):
        t0 = time.monotonic()
        hw = HwParams()
        ok = True
        details = []
        for preset in PRESETS.values():
            spec = preset.spec()
            result = explore(spec, hw)
            pcs = range(1, (hw.dsp_budget - 1) // 9 + 1)
            pfs = range(1, hw.dsp_budget - 9 + 1)
            want = dse_rescan(spec, hw, pcs, pfs)
            got = (
                result.best.total_cycles,
                result.best.dsp_used,
                result.best.p_c,
                result.best.p_f,
            )
            ok = ok and want == got
            details.append(f"{preset.name}:PC={result.best.p_c},PF={result.best.p_f}")
            prev = None
            for budget in (100, 300, 500, 700, 900):
                cyc = explore(spec, HwParams(dsp_budget=budget)).best.total_cycles
                if prev is not None and cyc > prev:
                    ok = False
                    details.append(f"{preset.name}: non-monotone at budget {budget}")
                prev = cyc
        elapsed = time.monotonic() - t0
        ok = ok and elapsed < 120
        report_line("dse-optimality", ok, " ".join(details), t0)
        assert ok
        assert elapsed < 120


class TestLatencyBracketing:
    """Modeled us/pixel within [0.1x, 10x] of the measured FPGA figures,
    with the default 250 MHz clock, 8 B/cycle bus and per-pixel weights."""

    @pytest.mark.parametrize("name", list(PRESETS))
    def test_within_band(self, name):
        t0 = time.monotonic()
        tl = schedule(PRESETS[name].spec(), HwParams())
        us = tl.us_per_pixel
        measured = MEASURED_US[name]
        ratio = us / measured
        ok = 0.1 <= ratio <= 10.0
        # the report separates compute-only cycles from stall cycles
        has_split = tl.compute_total > 0 and tl.stall_total >= 0
        report_line(
            f"latency-bracket[{name}]",
            ok and has_split,
            f"model={us:.1f}us measured={measured}us ratio={ratio:.2f} "
            f"compute={tl.compute_total} stalls={tl.stall_total}",
            t0,
        )
        assert has_split
        assert ok, (
            f"{name}: modeled {us:.1f} us/pixel is {ratio:.2f}x the measured "
            f"{measured} us/pixel, outside [0.1x, 10x]"
        )


class TestQuantizationRobustness:
    def test_fixed_vs_float_argmax(self, small_spec, scene, trained):
        t0 = time.monotonic()
        cube, labels = scene
        model, metrics = trained
        wset = model.to_weight_set()
        calib = [
            extract_patch(cube, labels, x, y, small_spec.p)
            for x, y in metrics["split"].train[:64]
        ]
        qw = quantize_weights(small_spec, wset, calib)
        agree = 0
        correct = 0
        test_coords = metrics["split"].test
        for x, y in test_coords:
            patch = extract_patch(cube, labels, x, y, small_spec.p)
            cls_fixed, _ = classify_pixel(small_spec, qw, patch)
            cls_float = int(np.argmax(infer_float(small_spec, wset, patch))) + 1
            agree += int(cls_fixed == cls_float)
            correct += int(cls_fixed == labels.labels[y, x])
        agreement = agree / len(test_coords)
        fixed_oa = correct / len(test_coords)
        elapsed = time.monotonic() - t0
        ok = agreement >= 0.99 and fixed_oa >= 0.95 and elapsed < 60
        report_line(
            "quantization-robustness",
            ok,
            f"agreement={agreement:.4f} fixed_oa={fixed_oa:.4f} n={len(test_coords)}",
            t0,
        )
        assert agreement >= 0.99
        assert fixed_oa >= 0.95
        assert elapsed < 60


class TestDeterminism:
    def test_byte_identical_across_runs_and_threads(self, tmp_path, scene, small_spec, trained):
        t0 = time.monotonic()
        cube, labels = scene
        model, _ = trained
        write_cube(cube, tmp_path / "scene.hsic")
        write_labels(labels, tmp_path / "scene.hsil")
        save_weights(model.to_weight_set(), tmp_path / "w.hsiw", small_spec)
        flags = ["--bands", "40", "--classes", "3", "--nb", "4", "--patch", "5", "--block1", "3x3"]
        blobs = []
        for run in range(2):
            for threads in (1, 8):
                rundir = tmp_path / f"run{run}_{threads}"
                rundir.mkdir()
                env = dict(os.environ, HSIACCEL_THREADS=str(threads))
                proc = subprocess.run(
                    [
                        sys.executable, "-m", "hsiaccel.cli", "classify", *flags,
                        "--cube", str(tmp_path / "scene.hsic"),
                        "--labels", str(tmp_path / "scene.hsil"),
                        "--weights", str(tmp_path / "w.hsiw"),
                        "--seed", "11",
                        "--out", "pred.hsip",
                        "--report", "report.txt",
                    ],
                    env=env,
                    cwd=rundir,
                    capture_output=True,
                    text=True,
                )
                assert proc.returncode == 0, proc.stderr
                blobs.append(
                    ((rundir / "pred.hsip").read_bytes(), (rundir / "report.txt").read_bytes())
                )
        ok = all(b == blobs[0] for b in blobs[1:])
        report_line("determinism", ok, f"{len(blobs)} runs compared", t0)
        assert ok


@pytest.mark.skip(reason="full-scene reproduction needs the downloaded benchmark scenes and hours of training; not part of the default suite")
class TestFullDatasetReproduction:
    def test_full_scenes(self):
        pass
