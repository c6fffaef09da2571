import math
import warnings

import numpy as np
import pytest

from flbounds.errors import ParameterError
from flbounds.mi import plugin_bias_hint, plugin_cmi, plugin_mi, stratified_mi


def samples_from_counts(counts):
    xs, ys = [], []
    for (x, y), c in counts.items():
        xs.extend([x] * c)
        ys.extend([y] * c)
    return np.asarray(xs), np.asarray(ys)


def plugin_oracle(counts):
    # independent direct evaluation of the plug-in sum over a count table
    n = sum(counts.values())
    px, py = {}, {}
    for (x, y), c in counts.items():
        px[x] = px.get(x, 0) + c / n
        py[y] = py.get(y, 0) + c / n
    return sum(
        (c / n) * math.log((c / n) / (px[x] * py[y])) for (x, y), c in counts.items() if c
    )


class TestPluginMi:
    def test_perfect_dependence_hits_ln2(self):
        x, y = samples_from_counts({(0, 0): 50, (1, 1): 50})
        assert abs(plugin_mi(x, y) - math.log(2)) < 1e-12

    def test_constant_variable_is_zero_with_warning(self):
        with pytest.warns(RuntimeWarning):
            assert plugin_mi(np.zeros(10), np.arange(10)) == 0.0

    def test_single_sample_is_zero_with_warning(self):
        with pytest.warns(RuntimeWarning):
            assert plugin_mi([1], [2]) == 0.0

    def test_tabulated_counts_oracle(self):
        counts = {(0, 0): 40, (0, 1): 10, (1, 0): 10, (1, 1): 40}
        x, y = samples_from_counts(counts)
        assert abs(plugin_mi(x, y) - plugin_oracle(counts)) < 1e-12
        assert abs(plugin_mi(x, y) - 0.19274475702175753) < 1e-9

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            plugin_mi([0, 1], [0])

    def test_consistency_at_large_samples(self):
        # known binary joint with I = 0.8 ln 1.6 + 0.2 ln 0.4
        probs = {(0, 0): 0.4, (0, 1): 0.1, (1, 0): 0.1, (1, 1): 0.4}
        true_mi = sum(p * math.log(p / 0.25) for p in probs.values())
        cells = list(probs)
        weights = [probs[c] for c in cells]
        for trial in range(10):
            rng = np.random.default_rng(trial)
            picks = rng.choice(len(cells), size=10**5, p=weights)
            x = np.array([cells[i][0] for i in picks])
            y = np.array([cells[i][1] for i in picks])
            assert abs(plugin_mi(x, y) - true_mi) <= 0.01

    def test_entropy_cap_for_binary_variable(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 60))
            x = rng.integers(0, 6, n)
            y = rng.integers(0, 2, n)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                val = plugin_mi(x, y)
            assert 0.0 <= val <= math.log(2) + 1e-12

    def test_miller_madow_reduces_bias_on_independent_table(self):
        rng = np.random.default_rng(1)
        plain, corrected = [], []
        for t in range(200):
            x = rng.integers(0, 2, 60)
            y = rng.integers(0, 2, 60)
            plain.append(plugin_mi(x, y))
            corrected.append(plugin_mi(x, y, miller_madow=True))
        assert np.mean(corrected) < np.mean(plain)


class TestPluginCmi:
    def test_constant_conditioner_is_plugin_mi_bit_for_bit(self):
        rng = np.random.default_rng(2)
        x = rng.integers(0, 3, 200)
        y = rng.integers(0, 2, 200)
        z = np.zeros(200, dtype=int)
        assert plugin_cmi(x, y, z) == plugin_mi(x, y)

    def test_independent_within_strata(self):
        # balanced counts: within both strata x and y decouple exactly
        x = np.array([0, 0, 1, 1, 0, 0, 1, 1])
        y = np.array([0, 1, 0, 1, 0, 1, 0, 1])
        z = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        assert plugin_cmi(x, y, z) == 0.0

    def test_stratum_weighted_oracle(self):
        # two perfectly dependent strata with weights 1/3 and 2/3
        x = np.array([0, 1] * 5 + [0, 1] * 10)
        y = np.array([0, 1] * 5 + [0, 1] * 10)
        z = np.array([0] * 10 + [1] * 20)
        expected = (1 / 3 + 2 / 3) * math.log(2)
        assert abs(plugin_cmi(x, y, z) - expected) < 1e-12

    def test_stratified_pieces_sum_to_cmi(self):
        rng = np.random.default_rng(3)
        x = rng.integers(0, 4, 300)
        y = rng.integers(0, 2, 300)
        z = rng.integers(0, 3, 300)
        strata, weights, mis = stratified_mi(x, y, z)
        assert abs(float(np.dot(weights, mis)) - plugin_cmi(x, y, z)) < 1e-15
        assert abs(weights.sum() - 1.0) < 1e-15

    def test_nonnegativity(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(3, 40))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                val = plugin_cmi(rng.integers(0, 3, n), rng.integers(0, 2, n), rng.integers(0, 2, n))
            assert val >= 0.0


class TestBiasHint:
    def test_formula(self):
        assert plugin_bias_hint(2, 2, 500) == 1 / 1000
        assert plugin_bias_hint(3, 2, 45) == 2 / 90

    def test_validation(self):
        with pytest.raises(ParameterError):
            plugin_bias_hint(2, 2, 0)
