import numpy as np
import pytest

from flbounds.errors import ParameterError, StructuralError
from flbounds.models import Hypothesis, LossSpec, eval_losses, init_hypothesis
from flbounds.seeding import SeedPath
from flbounds.training import TrainConfig, aggregate_average, local_train, run_protocol

QUAD = LossSpec(surrogate="scaled-squared", evaluation="scaled-squared", radius=1.0)
ERM = TrainConfig(rounds=1, local_epochs=1, optimizer="closed-form-erm")


def mean_vec(values):
    arr = np.asarray(values, dtype=float)
    return Hypothesis("mean-vector", arr, len(arr))


class TestLocalTrain:
    def test_closed_form_erm_is_sample_mean(self):
        x = np.array([[0.2, 0.0], [0.4, 0.2], [0.0, 0.4]])
        w = local_train(init_hypothesis("mean-vector", 2), x, np.full(3, -1), ERM, QUAD, SeedPath(0))
        assert np.allclose(w.params, x.mean(axis=0))

    def test_interpolation_with_single_point(self):
        z = np.array([[0.3, -0.4]])
        w = local_train(init_hypothesis("mean-vector", 2), z, np.array([-1]), ERM, QUAD, SeedPath(0))
        assert np.array_equal(w.params, z[0])
        assert eval_losses(w, z, np.array([-1]), QUAD)[0] == 0.0

    def test_single_gd_step_hand_value(self):
        # from w0 = 0 on one point: w1 = eta * scale * z
        eta = 0.25
        cfg = TrainConfig(rounds=1, local_epochs=1, optimizer="full-gd", learning_rate=eta, lr_decay=1.0)
        z = np.array([[0.6, -0.2]])
        w = local_train(init_hypothesis("mean-vector", 2), z, np.array([-1]), cfg, QUAD, SeedPath(0))
        assert np.allclose(w.params, eta * QUAD.scale * z[0], atol=1e-15)

    def test_lr_schedule_decays_by_period(self):
        cfg = TrainConfig(rounds=1, local_epochs=12, optimizer="full-gd", learning_rate=0.1, lr_decay=0.01, decay_every=10)
        # after 10 steps the rate is 100x smaller; the iterate barely moves afterwards
        z = np.array([[0.8, 0.0]])
        w10 = local_train(init_hypothesis("mean-vector", 2), z, np.array([-1]),
                          TrainConfig(rounds=1, local_epochs=10, optimizer="full-gd", learning_rate=0.1, lr_decay=0.01, decay_every=10),
                          QUAD, SeedPath(0))
        w12 = local_train(init_hypothesis("mean-vector", 2), z, np.array([-1]), cfg, QUAD, SeedPath(0))
        assert np.linalg.norm(w12.params - w10.params) < 2 * 0.001 * QUAD.scale * 0.8

    def test_sgd_deterministic_given_path(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-0.5, 0.5, size=(10, 2))
        y = rng.integers(0, 3, 10)
        spec = LossSpec(surrogate="cross-entropy", evaluation="zero-one")
        cfg = TrainConfig(rounds=1, local_epochs=3, optimizer="minibatch-sgd", batch_size=4, learning_rate=0.2, lr_decay=1.0)
        w0 = init_hypothesis("linear-softmax", 2, 3)
        w1 = local_train(w0, x, y, cfg, spec, SeedPath(7).child("t"))
        w2 = local_train(w0, x, y, cfg, spec, SeedPath(7).child("t"))
        w3 = local_train(w0, x, y, cfg, spec, SeedPath(8).child("t"))
        assert np.array_equal(w1.params, w2.params)
        assert not np.array_equal(w1.params, w3.params)

    def test_projection_keeps_iterates_in_ball(self):
        cfg = TrainConfig(rounds=1, local_epochs=50, optimizer="full-gd", learning_rate=5.0, lr_decay=1.0)
        z = np.array([[0.9, 0.0]])
        w = local_train(init_hypothesis("mean-vector", 2), z, np.array([-1]), cfg, QUAD, SeedPath(0))
        assert np.linalg.norm(w.params) <= 1.0 + 1e-12

    def test_empty_set_rejected(self):
        with pytest.raises(ParameterError):
            local_train(init_hypothesis("mean-vector", 2), np.empty((0, 2)), np.empty(0), ERM, QUAD, SeedPath(0))


class TestAggregate:
    def test_identical_models_fixed_point(self):
        w = mean_vec([0.1, 0.2])
        assert np.array_equal(aggregate_average([w] * 5).params, w.params)

    def test_two_model_average(self):
        a, b = mean_vec([0.2, 0.4]), mean_vec([0.4, 0.0])
        assert np.allclose(aggregate_average([a, b]).params, [0.3, 0.2])

    def test_permutation_bit_identical(self):
        rng = np.random.default_rng(1)
        models = [mean_vec(rng.standard_normal(6)) for _ in range(7)]
        base = aggregate_average(models).params
        for _ in range(10):
            perm = rng.permutation(7)
            shuffled = aggregate_average([models[i] for i in perm]).params
            assert np.array_equal(base, shuffled)

    def test_architecture_mismatch(self):
        with pytest.raises(StructuralError):
            aggregate_average([mean_vec([0.1]), init_hypothesis("linear-softmax", 1, 2)])

    def test_empty_list(self):
        with pytest.raises(ParameterError):
            aggregate_average([])


class TestProtocol:
    def _sets(self, points):
        return [(np.asarray(p, dtype=float), np.full(len(p), -1)) for p in points]

    def test_single_round_erm_gives_grand_mean(self):
        points = [[[0.2, 0.0]], [[0.4, 0.2]], [[0.0, 0.1]]]
        sets = self._sets(points)
        w, locals_ = run_protocol(sets, init_hypothesis("mean-vector", 2), ERM, QUAD, SeedPath(0))
        grand = np.mean([np.asarray(p).mean(axis=0) for p in points], axis=0)
        assert np.allclose(w.params, grand)
        assert len(locals_) == 3

    def test_k1_reduces_to_local_training(self):
        x = np.array([[0.3, 0.3], [0.1, -0.1]])
        sets = [(x, np.full(2, -1))]
        w, locals_ = run_protocol(sets, init_hypothesis("mean-vector", 2), ERM, QUAD, SeedPath(3))
        direct = local_train(init_hypothesis("mean-vector", 2), x, np.full(2, -1), ERM, QUAD, SeedPath(3).child("local", 0, 0))
        assert np.array_equal(w.params, direct.params)

    def test_determinism(self):
        rng = np.random.default_rng(2)
        sets = [(rng.uniform(-0.5, 0.5, (4, 2)), rng.integers(0, 2, 4)) for _ in range(3)]
        spec = LossSpec(surrogate="cross-entropy", evaluation="zero-one")
        cfg = TrainConfig(rounds=3, local_epochs=2, optimizer="minibatch-sgd", batch_size=2, learning_rate=0.3, lr_decay=1.0)
        w0 = init_hypothesis("linear-softmax", 2, 2)
        w1, _ = run_protocol(sets, w0, cfg, spec, SeedPath(9).child("p"))
        w2, _ = run_protocol(sets, w0, cfg, spec, SeedPath(9).child("p"))
        assert np.array_equal(w1.params, w2.params)

    def test_interpolation_contract_across_clients(self):
        sets = self._sets([[[0.5, 0.1]], [[-0.2, 0.3]], [[0.0, -0.6]]])
        _, locals_ = run_protocol(sets, init_hypothesis("mean-vector", 2), ERM, QUAD, SeedPath(1))
        for (x, y), w in zip(sets, locals_):
            assert eval_losses(w, x, y, QUAD).max() == 0.0

    def test_homogeneous_v_swap_leaves_w_distribution_unchanged(self):
        # the mechanism behind the homogeneous-clients corollary: with
        # identical client distributions, flipping a participation bit does
        # not change the distribution of the aggregated model
        from flbounds.construction import build_superclient, build_supersamples, draw_selection, materialize_training_sets
        from flbounds.distributions import MetaDistribution

        meta = MetaDistribution("gaussian-mean-estimation", {"dim": 1, "mean_spread": 0.0, "noise": 0.3})
        stats, stats_flipped = [], []
        for rep in range(400):
            root = SeedPath(100 + rep)
            grid = build_superclient(meta, 2, root.child("g"))
            z = build_supersamples(grid, 2, root.child("d"))
            a = draw_selection(2, 2, root.child("s"))
            flipped = type(a)(np.array([1 - a.v[0], a.v[1]], dtype=np.uint8), a.u)
            for sel, acc in ((a, stats), (flipped, stats_flipped)):
                sets = materialize_training_sets(z, sel)
                w, _ = run_protocol(sets, init_hypothesis("mean-vector", 1), ERM, QUAD, root.child("t"))
                acc.append(float(w.params[0]))
        diff = np.asarray(stats) - 0.0
        m1, m2 = np.mean(stats), np.mean(stats_flipped)
        pooled_se = np.sqrt(np.var(stats, ddof=1) / 400 + np.var(stats_flipped, ddof=1) / 400)
        assert abs(m1 - m2) < 4 * pooled_se + 1e-12

    def test_zero_rounds_rejected(self):
        with pytest.raises(ParameterError):
            TrainConfig(rounds=0)
