import numpy as np
import pytest

from hsiaccel import (
    ConfigError,
    NetParams,
    ShapeError,
    WeightShapeError,
    band_partition,
    derive_config,
    infer_float,
    load_weights,
    random_weights,
    save_weights,
)
from hsiaccel.model import WeightSet, attach_quantized
from hsiaccel.presets import PRESETS

from float_oracle import naive_infer

REF220_PARAMS = NetParams(n_b=4, p=5, block1_kernel="3x3")


def ref220_spec():
    return derive_config(220, 9, REF220_PARAMS)


class TestDeriveConfig:
    def test_ref220_block1(self):
        spec = ref220_spec()
        b1 = spec.layer("block1_conv")
        assert b1.kind == "conv3x3"
        assert b1.in_shape == (5, 5, 220)
        assert b1.out_shape == (3, 3, 220)
        assert b1.weight_shape == (220, 220, 3, 3)

    def test_ref220_block2_chain(self):
        spec = ref220_spec()
        expect = [
            ("block2_conv1", (9, 55, 1), (7, 53, 2), (2, 1, 3, 3)),
            ("block2_conv2", (7, 53, 2), (5, 51, 4), (4, 2, 3, 3)),
            ("block2_conv3", (5, 51, 4), (3, 49, 4), (4, 4, 3, 3)),
            ("block2_conv4", (3, 49, 4), (1, 47, 4), (4, 4, 3, 3)),
        ]
        for name, in_s, out_s, w_s in expect:
            layer = spec.layer(name)
            assert layer.in_shape == in_s
            assert layer.out_shape == out_s
            assert layer.weight_shape == w_s
            assert layer.band_shared and layer.n_branches == 4

    def test_ref220_block3(self):
        spec = ref220_spec()
        assert spec.concat_len == 752
        assert spec.layer("fc1").weight_shape == (120, 752)
        assert spec.layer("fc2").weight_shape == (9, 120)
        assert spec.layers[-1].kind == "softmax"

    def test_ksc_row(self):
        # 176 bands / 8 = 22 per band; chain 9x22x1 .. 1x14x4; concat 8*56=448
        spec = derive_config(176, 13, NetParams(8, 5, "3x3"))
        assert spec.layer("block2_conv1").in_shape == (9, 22, 1)
        assert spec.layer("block2_conv4").out_shape == (1, 14, 4)
        assert spec.concat_len == 448
        assert spec.layer("fc1").weight_shape == (120, 448)
        assert spec.layer("fc2").weight_shape == (13, 120)

    def test_divisibility_error(self):
        with pytest.raises(ConfigError):
            derive_config(221, 9, NetParams(4, 5, "3x3"))

    def test_block1_output_not_3x3(self):
        with pytest.warns(UserWarning):
            bad = NetParams(4, 3, "3x3")  # 3x3 conv on p=3 leaves 1x1
        with pytest.raises(ConfigError):
            derive_config(220, 9, bad)

    def test_band_too_narrow(self):
        # 16/4 = 4 spectral channels per band cannot survive four 3x3 convs
        with pytest.raises(ConfigError):
            derive_config(16, 3, NetParams(4, 5, "3x3"))

    def test_shape_chaining_all_presets(self):
        for preset in PRESETS.values():
            spec = preset.spec()
            branch_depth = 0
            prev = None
            for layer in spec.layers:
                if prev is not None:
                    if prev.kind == "band_split" or (prev.n_branches > 1 and layer.n_branches > 1):
                        assert layer.in_shape == prev.out_shape
                    elif layer.kind == "concat":
                        assert layer.in_shape == prev.out_shape
                    elif prev.kind == "concat":
                        assert layer.in_shape == prev.out_shape
                    else:
                        assert layer.in_shape == prev.out_shape
                prev = layer
            assert spec.layers[-2].out_shape == (spec.n_classes,)

    def test_concat_len_formula(self):
        # concat_len = N_b * 4 * (N_c/N_b - 8); reference network: 4*4*(55-8) = 752
        for preset in PRESETS.values():
            spec = preset.spec()
            assert spec.concat_len == spec.n_b * 4 * (spec.n_c // spec.n_b - 8)
        assert ref220_spec().concat_len == 4 * 4 * 47 == 752

    def test_netparams_validation(self):
        with pytest.raises(ConfigError):
            NetParams(3, 5, "3x3")
        with pytest.raises(ConfigError):
            NetParams(4, 7, "3x3")
        with pytest.warns(UserWarning):
            NetParams(4, 5, "1x1")


class TestBandPartition:
    def test_ref220_split(self):
        x = np.arange(9 * 220, dtype=np.float64).reshape(3, 3, 220)
        bands = band_partition(x, 4)
        assert len(bands) == 4
        assert all(b.shape == (9, 55, 1) for b in bands)

    def test_degenerate_single_band(self):
        x = np.random.default_rng(0).random((3, 3, 12))
        bands = band_partition(x, 1)
        assert len(bands) == 1
        np.testing.assert_array_equal(bands[0].reshape(9, 12), x.reshape(9, 12))

    def test_index_arithmetic(self):
        # element at spatial (1,2), channel 57 with N_c=220, N_b=4:
        # flat spatial index 1*3+2 = 5; 57 = 55 + 2 -> band 1, offset 2
        x = np.zeros((3, 3, 220))
        x[1, 2, 57] = 42.0
        bands = band_partition(x, 4)
        assert bands[1][5, 2, 0] == 42.0
        assert sum(float(np.abs(b).sum()) for b in bands) == 42.0

    def test_divisibility(self):
        with pytest.raises(ConfigError):
            band_partition(np.zeros((3, 3, 10)), 4)

    def test_spectral_ranges(self):
        x = np.zeros((3, 3, 8))
        x[0, 0, :] = np.arange(8)
        bands = band_partition(x, 2)
        np.testing.assert_array_equal(bands[0][0, :, 0], [0, 1, 2, 3])
        np.testing.assert_array_equal(bands[1][0, :, 0], [4, 5, 6, 7])


class TestWeightFiles:
    def test_round_trip_bitwise(self, tmp_path, small_spec):
        wset = random_weights(small_spec, seed=3)
        path = tmp_path / "w.hsiw"
        save_weights(wset, path, small_spec)
        back = load_weights(path, small_spec)
        for name in wset.weights:
            np.testing.assert_array_equal(back.weights[name][0], wset.weights[name][0])
            np.testing.assert_array_equal(back.weights[name][1], wset.weights[name][1])

    def test_file_round_trip_bytes(self, tmp_path, small_spec):
        wset = attach_quantized(random_weights(small_spec, seed=4))
        p1, p2 = tmp_path / "a.hsiw", tmp_path / "b.hsiw"
        save_weights(wset, p1, small_spec)
        save_weights(load_weights(p1, small_spec), p2, small_spec)
        assert p1.read_bytes() == p2.read_bytes()

    def test_shape_mismatch_against_other_spec(self, tmp_path):
        # Table-1 weights (fc1 752x120) against the KSC network (448x120)
        ref220 = ref220_spec()
        wset = random_weights(ref220, seed=5)
        path = tmp_path / "w.hsiw"
        save_weights(wset, path, ref220)
        ksc = derive_config(176, 13, NetParams(8, 5, "3x3"))
        with pytest.raises(WeightShapeError):
            load_weights(path, ksc)

    def test_weighted_layer_count(self, tmp_path):
        # the reference network has 7 weighted layers: Block-1 conv, 4 shared
        # Block-2 convs, 2 fully-connected
        spec = ref220_spec()
        assert len(spec.weighted_layers()) == 7
        wset = random_weights(spec, seed=6)
        path = tmp_path / "w.hsiw"
        save_weights(wset, path, spec)
        import struct

        blob = path.read_bytes()
        assert blob[:4] == b"HSIW"
        version, count = struct.unpack("<II", blob[4:12])
        assert version == 1 and count == 7

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.hsiw"
        path.write_bytes(b"JUNK" + b"\x00" * 40)
        with pytest.raises(Exception) as exc_info:
            load_weights(path)
        from hsiaccel import FormatError

        assert isinstance(exc_info.value, FormatError)

    def test_quant_sections_round_trip(self, tmp_path, small_spec):
        wset = attach_quantized(random_weights(small_spec, seed=7))
        path = tmp_path / "w.hsiw"
        save_weights(wset, path, small_spec)
        back = load_weights(path, small_spec)
        assert set(back.quant) == set(wset.quant)
        for name in wset.quant:
            np.testing.assert_array_equal(back.quant[name][0], wset.quant[name][0])
            assert back.quant[name][1] == wset.quant[name][1]


class TestInferFloat:
    def test_zero_weights_uniform(self, small_spec):
        zero = WeightSet(
            {
                l.name: (
                    np.zeros(l.weight_shape, dtype=np.float32),
                    np.zeros(l.bias_shape, dtype=np.float32),
                )
                for l in small_spec.weighted_layers()
            }
        )
        patch = np.random.default_rng(0).random((5, 5, 40)).astype(np.float32)
        probs = infer_float(small_spec, zero, patch)
        np.testing.assert_allclose(probs, np.full(3, 1 / 3), atol=1e-12)

    def test_delta_kernel_center_crop(self):
        from hsiaccel.model import conv2d_valid

        rng = np.random.default_rng(1)
        x = rng.random((6, 7, 1))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        out = conv2d_valid(x, w, np.zeros(1))
        np.testing.assert_allclose(out, x[1:-1, 1:-1, :])

    def test_softmax_normalized(self, small_spec, small_weights):
        rng = np.random.default_rng(2)
        for _ in range(5):
            patch = rng.random((5, 5, 40)).astype(np.float32)
            probs = infer_float(small_spec, small_weights, patch)
            assert probs.min() >= 0
            assert abs(probs.sum() - 1.0) < 1e-6

    def test_matches_naive_oracle(self, small_spec, small_weights):
        rng = np.random.default_rng(3)
        for _ in range(10):
            patch = rng.standard_normal((5, 5, 40)).astype(np.float32)
            got = infer_float(small_spec, small_weights, patch)
            want = naive_infer(small_spec, small_weights, patch)
            np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-9)

    def test_shape_mismatch(self, small_spec, small_weights):
        with pytest.raises(ShapeError):
            infer_float(small_spec, small_weights, np.zeros((3, 3, 40), dtype=np.float32))

    def test_band_weight_sharing(self, small_spec_1x1):
        """Identical band inputs must produce identical branch outputs."""
        spec = small_spec_1x1
        wset = random_weights(spec, seed=8)
        # zero Block-1 weights with constant bias: every spectral channel of
        # the split input is identical, so all four branches see the same data
        w1, _ = wset.weights["block1_conv"]
        wset.weights["block1_conv"] = (
            np.zeros_like(w1),
            np.full(spec.n_c, 0.7, dtype=np.float32),
        )
        patch = np.random.default_rng(9).random((3, 3, 40)).astype(np.float32)
        from hsiaccel.model import float_taps

        taps = float_taps(spec, wset, patch)
        per_band = taps["block2_conv4"]  # stacked (N_b, 1, w-8, 4)
        for b in range(1, spec.n_b):
            np.testing.assert_array_equal(per_band[b], per_band[0])
