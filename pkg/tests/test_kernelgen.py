import json

import numpy as np
import pytest

from rocket_forge.kernelgen import (KERNEL_LENGTHS, Kernel, KernelFormatError,
                                    generate_kernels, load_kernels, save_kernels)


def kernel_sets_equal(a, b):
    if (a.num_channels, a.input_length_hint, a.seed, a.count) != \
            (b.num_channels, b.input_length_hint, b.seed, b.count):
        return False
    for ka, kb in zip(a.kernels, b.kernels):
        if (ka.length, ka.dilation, ka.padding, ka.channel_indices) != \
                (kb.length, kb.dilation, kb.padding, kb.channel_indices):
            return False
        if np.float32(ka.bias).tobytes() != np.float32(kb.bias).tobytes():
            return False
        if ka.weights.tobytes() != kb.weights.tobytes():
            return False
    return True


class TestGeneration:
    def test_reproducible_bit_identical(self):
        a = generate_kernels(123, 200, 300, 5)
        b = generate_kernels(123, 200, 300, 5)
        assert kernel_sets_equal(a, b)

    def test_different_seeds_differ(self):
        a = generate_kernels(1, 50, 300, 5)
        b = generate_kernels(2, 50, 300, 5)
        assert not kernel_sets_equal(a, b)

    def test_full_scale_bank(self):
        ks = generate_kernels(0, 10_000, 50_000, 20)
        assert ks.count == 10_000
        assert {k.length for k in ks} <= set(KERNEL_LENGTHS)

    def test_empty(self):
        ks = generate_kernels(0, 0, 100, 1)
        assert ks.count == 0
        assert ks.kernels == ()

    def test_univariate_channels_and_dilation(self):
        ks = generate_kernels(7, 1000, 512, 1)
        for k in ks:
            assert k.channel_indices == (0,)
            assert (k.length - 1) * k.dilation <= 511

    def test_weights_mean_centered(self):
        ks = generate_kernels(3, 500, 400, 6)
        for k in ks:
            assert abs(float(np.sum(k.weights))) <= 1e-4

    def test_padding_zero_or_same(self):
        ks = generate_kernels(4, 500, 400, 3)
        for k in ks:
            assert k.padding in (0, ((k.length - 1) * k.dilation) // 2)

    def test_biases_in_range(self):
        ks = generate_kernels(5, 500, 400, 3)
        biases = np.array([k.bias for k in ks])
        assert np.all(biases >= -1.0) and np.all(biases <= 1.0)

    def test_channel_indices_sorted_distinct(self):
        ks = generate_kernels(6, 500, 400, 8)
        for k in ks:
            assert list(k.channel_indices) == sorted(set(k.channel_indices))
            assert all(0 <= c < 8 for c in k.channel_indices)

    @pytest.mark.parametrize("kwargs", [
        dict(seed=0, num_kernels=-1, input_length=100, num_channels=1),
        dict(seed=0, num_kernels=10, input_length=10, num_channels=1),
        dict(seed=0, num_kernels=10, input_length=100, num_channels=0),
    ])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ValueError):
            generate_kernels(**kwargs)


class TestKernelConstruction:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="weights"):
            Kernel(length=3, weights=np.zeros(5, np.float32), bias=0.0,
                   dilation=1, padding=0, channel_indices=(0,))

    def test_duplicate_channels(self):
        with pytest.raises(ValueError, match="sorted and distinct"):
            Kernel(length=3, weights=np.zeros(6, np.float32), bias=0.0,
                   dilation=1, padding=0, channel_indices=(1, 1))

    def test_bad_dilation(self):
        with pytest.raises(ValueError, match="dilation"):
            Kernel(length=3, weights=np.zeros(3, np.float32), bias=0.0,
                   dilation=0, padding=0, channel_indices=(0,))


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        ks = generate_kernels(42, 64, 300, 4)
        path = tmp_path / "kernels.json"
        save_kernels(ks, path)
        loaded = load_kernels(path)
        assert kernel_sets_equal(ks, loaded)

    def test_empty_round_trip(self, tmp_path):
        ks = generate_kernels(0, 0, 100, 2)
        path = tmp_path / "empty.json"
        save_kernels(ks, path)
        loaded = load_kernels(path)
        assert loaded.count == 0
        assert json.loads(path.read_text())["kernels"] == []

    def test_order_preserved(self, tmp_path):
        ks = generate_kernels(9, 3, 200, 3)
        path = tmp_path / "three.json"
        save_kernels(ks, path)
        doc = json.loads(path.read_text())
        for entry, kernel in zip(doc["kernels"], ks.kernels):
            assert entry["length"] == kernel.length
            assert entry["dilation"] == kernel.dilation
            assert np.array_equal(np.array(entry["weights"], np.float32),
                                  kernel.weights)

    def test_save_twice_identical_bytes(self, tmp_path):
        ks = generate_kernels(11, 20, 150, 2)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_kernels(ks, p1)
        save_kernels(ks, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestLoadValidation:
    def _doc(self, seed=0, count=2):
        ks = generate_kernels(seed, count, 200, 3)
        return {
            "format_version": 1,
            "seed": ks.seed,
            "num_channels": ks.num_channels,
            "input_length_hint": ks.input_length_hint,
            "kernels": [
                {"length": k.length, "dilation": k.dilation, "padding": k.padding,
                 "bias": k.bias, "channel_indices": list(k.channel_indices),
                 "weights": [float(w) for w in k.weights]}
                for k in ks.kernels
            ],
        }

    def _write(self, tmp_path, doc):
        path = tmp_path / "kernels.json"
        path.write_text(json.dumps(doc))
        return path

    def test_bias_out_of_range(self, tmp_path):
        doc = self._doc()
        doc["kernels"][1]["bias"] = 1.5
        with pytest.raises(KernelFormatError, match=r"kernel 1.*bias"):
            load_kernels(self._write(tmp_path, doc))

    def test_duplicate_channel_index(self, tmp_path):
        doc = self._doc()
        k = doc["kernels"][0]
        k["channel_indices"] = [0, 0]
        k["weights"] = [0.0] * (2 * k["length"])
        with pytest.raises(KernelFormatError, match="kernel 0"):
            load_kernels(self._write(tmp_path, doc))

    def test_channel_out_of_range(self, tmp_path):
        doc = self._doc()
        k = doc["kernels"][0]
        k["channel_indices"] = [5]
        k["weights"] = [0.0] * k["length"]
        with pytest.raises(KernelFormatError, match="out of range"):
            load_kernels(self._write(tmp_path, doc))

    def test_uncentered_weights(self, tmp_path):
        doc = self._doc()
        k = doc["kernels"][0]
        k["channel_indices"] = [0]
        k["weights"] = [1.0] * k["length"]
        with pytest.raises(KernelFormatError, match="mean-centered"):
            load_kernels(self._write(tmp_path, doc))

    def test_receptive_field_too_large(self, tmp_path):
        doc = self._doc()
        k = doc["kernels"][0]
        k["dilation"] = 10_000
        k["padding"] = 0
        with pytest.raises(KernelFormatError, match="receptive field"):
            load_kernels(self._write(tmp_path, doc))

    def test_bad_length(self, tmp_path):
        doc = self._doc()
        k = doc["kernels"][0]
        k["length"] = 5
        k["weights"] = [0.0] * (5 * len(k["channel_indices"]))
        with pytest.raises(KernelFormatError, match="length"):
            load_kernels(self._write(tmp_path, doc))

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(KernelFormatError, match="JSON"):
            load_kernels(path)

    def test_wrong_version(self, tmp_path):
        doc = self._doc()
        doc["format_version"] = 99
        with pytest.raises(KernelFormatError, match="format_version"):
            load_kernels(self._write(tmp_path, doc))

    def test_missing_key(self, tmp_path):
        doc = self._doc()
        del doc["seed"]
        with pytest.raises(KernelFormatError, match="seed"):
            load_kernels(self._write(tmp_path, doc))
