import numpy as np
import pytest

from helpers import finite_difference_gradient, kink_free_instance, reference_stop_epoch
from nngp_al import nn_core as nc
from nngp_al.errors import (
    ConfigurationError,
    NumericInputError,
    TrainingDivergedError,
    UsageError,
)


def hand_net(weights, biases, slope=0.1, rate=0.0):
    """Network with explicit weights; all hidden layers LeakyReLU."""
    layers = []
    for k, w in enumerate(weights):
        w = np.asarray(w, dtype=float)
        act = nc.IDENTITY if k == len(weights) - 1 else nc.LEAKY_RELU
        layers.append(nc.LayerSpec(w.shape[1], w.shape[0], act, slope))
    return nc.Network(
        layers=tuple(layers),
        weights=[np.asarray(w, dtype=float) for w in weights],
        biases=[np.asarray(b, dtype=float) for b in biases],
        dropout_rate=rate,
    )


class TestInitNetwork:
    def test_zero_bias_single_layer(self):
        net = nc.init_network([nc.LayerSpec(2, 1, nc.IDENTITY)], 0.0, seed=0)
        assert net.weights[0].shape == (1, 2)
        np.testing.assert_array_equal(net.biases[0], [0.0])

    def test_deterministic_for_seed(self):
        specs = [nc.LayerSpec(3, 4), nc.LayerSpec(4, 1, nc.IDENTITY)]
        a = nc.init_network(specs, 0.1, seed=99)
        b = nc.init_network(specs, 0.1, seed=99)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)
        c = nc.init_network(specs, 0.1, seed=100)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_dimension_mismatch_rejected(self):
        specs = [nc.LayerSpec(2, 3), nc.LayerSpec(4, 1, nc.IDENTITY)]
        with pytest.raises(ConfigurationError):
            nc.init_network(specs, 0.0, seed=0)

    def test_final_layer_must_be_scalar_identity(self):
        with pytest.raises(ConfigurationError):
            nc.init_network([nc.LayerSpec(2, 2)], 0.0, seed=0)

    def test_bad_dropout_rejected(self):
        with pytest.raises(ConfigurationError):
            nc.init_network([nc.LayerSpec(2, 1, nc.IDENTITY)], 1.0, seed=0)

    def test_bad_slope_rejected(self):
        with pytest.raises(ConfigurationError):
            nc.LayerSpec(2, 2, nc.LEAKY_RELU, slope=1.5)


class TestForward:
    def test_linear_identity_case(self):
        net = hand_net([[[1.0, 1.0]]], [[0.0]])
        assert nc.forward(net, [2.0, 3.0]) == pytest.approx(5.0)

    def test_nan_input_rejected(self):
        net = hand_net([[[1.0, 1.0]]], [[0.0]])
        with pytest.raises(NumericInputError):
            nc.forward(net, [np.nan, 1.0])

    def test_two_layer_hand_evaluation(self):
        # straight-line evaluation of the affine/LeakyReLU composition
        net = hand_net(
            [[[1.0, -2.0], [0.5, 1.0]], [[2.0, -1.0]]],
            [[0.1, -0.2], [0.3]],
            slope=0.1,
        )
        # z1 = (0.4 - 0.6 + 0.1, 0.2 + 0.3 - 0.2) = (-0.1, 0.3)
        # a1 = (-0.01, 0.3); y = 2*(-0.01) - 0.3 + 0.3 = -0.02
        assert nc.forward(net, [0.4, 0.3]) == pytest.approx(-0.02, abs=1e-12)

    def test_wrong_input_dim_rejected(self):
        net = hand_net([[[1.0, 1.0]]], [[0.0]])
        with pytest.raises(UsageError):
            nc.forward(net, [1.0, 2.0, 3.0])

    def test_deterministic_pass_ignores_dropout_rate(self):
        net = hand_net([[[1.0], [2.0]], [[1.0, 1.0]]], [[0.0, 0.0], [0.0]], rate=0.5)
        clean = nc.forward(net, [1.0])
        net0 = hand_net([[[1.0], [2.0]], [[1.0, 1.0]]], [[0.0, 0.0], [0.0]], rate=0.0)
        assert clean == nc.forward(net0, [1.0])


class TestLossAndGradient:
    def test_zero_error_zero_mse_gradient(self):
        net = hand_net([[[1.0, 1.0]]], [[0.0]])
        loss, grads = nc.loss_and_gradient(net, [([2.0, 3.0], 5.0)], mask_seed=0, l2=0.0)
        assert loss == pytest.approx(0.0)
        np.testing.assert_allclose(grads[0][0], 0.0, atol=1e-15)

    def test_pure_regularizer_gradient(self):
        net = hand_net([[[0.5, -1.5]]], [[0.0]])
        l2 = 0.3
        loss, grads = nc.loss_and_gradient(net, [([2.0, 3.0], -3.5)], mask_seed=0, l2=l2)
        # prediction matches target, so only the penalty remains
        assert loss == pytest.approx(l2 * (0.5**2 + 1.5**2))
        np.testing.assert_allclose(grads[0][0], 2 * l2 * net.weights[0], atol=1e-12)

    def test_empty_batch_rejected(self):
        net = hand_net([[[1.0, 1.0]]], [[0.0]])
        with pytest.raises(UsageError):
            nc.loss_and_gradient(net, [], mask_seed=0, l2=0.0)

    def test_gradient_matches_finite_differences_small_net(self):
        # 5-parameter net: 1 -> 2 -> 1 with biases
        rng = np.random.default_rng(5)
        net = hand_net(
            [rng.normal(size=(2, 1)), rng.normal(size=(1, 2))],
            [rng.normal(size=2), rng.normal(size=1)],
            rate=0.3,
        )
        batch = [(rng.normal(size=1), rng.normal()) for _ in range(6)]
        _, grads = nc.loss_and_gradient(net, batch, mask_seed=11, l2=1e-3)
        analytic = nc.flatten_gradients(grads)
        numeric = finite_difference_gradient(net, batch, mask_seed=11, l2=1e-3)
        rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
        assert rel < 1e-4

    def test_gradient_property_random_nets(self):
        rng = np.random.default_rng(2024)
        for _ in range(10):
            net, batch, seed = kink_free_instance(rng)
            _, grads = nc.loss_and_gradient(net, batch, mask_seed=seed, l2=1e-4)
            analytic = nc.flatten_gradients(grads)
            numeric = finite_difference_gradient(net, batch, mask_seed=seed, l2=1e-4)
            rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
            assert rel < 1e-4


class TestLearningRate:
    def test_initial(self):
        assert nc.lr_at_epoch(nc.TrainConfig(), 0) == pytest.approx(1e-3)

    def test_first_decay_step(self):
        assert nc.lr_at_epoch(nc.TrainConfig(), 50_000) == pytest.approx(0.97e-3)

    def test_floor(self):
        assert nc.lr_at_epoch(nc.TrainConfig(), 10_000_000_000) == pytest.approx(1e-5)

    def test_non_increasing_and_bounded(self):
        cfg = nc.TrainConfig(lr_step_epochs=10)
        values = [nc.lr_at_epoch(cfg, e) for e in range(0, 20_000, 37)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert all(v >= cfg.lr_floor for v in values)


class TestEarlyStoppingMachine:
    def test_four_consecutive_degradations_stop_at_fourth(self):
        cfg = nc.TrainConfig(epochs_mandatory=200, epochs_max=10_000, es_check_step=100,
                             warnings_max=3, es_window_frac=0.01)
        # first check accepts 1.0; the next four all degrade by >1%
        trace = [1.0, 1.02, 1.05, 1.08, 1.12]
        epoch, reason = nc.simulate_early_stopping(cfg, trace)
        assert reason == nc.EARLY_STOPPED
        assert epoch == 300 + 4 * 100  # 4th degradation check

    def test_decreasing_trace_runs_to_max(self):
        cfg = nc.TrainConfig(epochs_mandatory=0, epochs_max=1_000, es_check_step=100)
        trace = [1.0 / (i + 1) for i in range(10)]
        epoch, reason = nc.simulate_early_stopping(cfg, trace)
        assert (epoch, reason) == (1_000, nc.MAX_EPOCHS)

    def test_warning_reset_rule(self):
        cfg = nc.TrainConfig(epochs_mandatory=0, epochs_max=10_000, es_check_step=100,
                             warnings_max=1)
        # degrade, recover (reset), then two degradations trip the cap
        trace = [1.0, 1.5, 0.9, 1.2, 1.3]
        epoch, reason = nc.simulate_early_stopping(cfg, trace)
        assert reason == nc.EARLY_STOPPED
        assert epoch == 500

    def test_mandatory_guard_delays_first_check(self):
        cfg = nc.TrainConfig(epochs_mandatory=10, epochs_max=100, es_check_step=1,
                             warnings_max=0)
        assert next(iter(nc.check_epochs(cfg))) == 11

    def test_scripted_traces_match_reference_simulation(self):
        rng = np.random.default_rng(77)
        for _ in range(50):
            cfg = nc.TrainConfig(
                epochs_mandatory=int(rng.integers(0, 30)) * 10,
                epochs_max=int(rng.integers(40, 120)) * 10,
                es_check_step=int(rng.integers(1, 10)) * 10,
                es_window_frac=float(rng.uniform(0.0, 0.1)),
                warnings_max=int(rng.integers(0, 5)),
            )
            trace = list(rng.uniform(0.5, 1.5, size=rng.integers(1, 40)))
            assert nc.simulate_early_stopping(cfg, trace) == reference_stop_epoch(cfg, trace)


def _toy_data(rng, n, d=2):
    x = rng.uniform(-1, 1, size=(n, d))
    y = x[:, 0] - 0.5 * x[:, 1]
    return x, y


class TestTrain:
    def test_deterministic(self):
        rng = np.random.default_rng(3)
        data = _toy_data(rng, 40)
        val = _toy_data(rng, 10)
        cfg = nc.TrainConfig(epochs_mandatory=50, epochs_max=120, es_check_step=20,
                             batch_size=16, seed=5)
        specs = [nc.LayerSpec(2, 8), nc.LayerSpec(8, 1, nc.IDENTITY)]
        net_a = nc.init_network(specs, 0.1, seed=1)
        report_a = nc.train(net_a, data, val, cfg)
        net_b = nc.init_network(specs, 0.1, seed=1)
        report_b = nc.train(net_b, data, val, cfg)
        assert report_a == report_b
        for wa, wb in zip(net_a.weights, net_b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_trace_follows_check_schedule(self):
        rng = np.random.default_rng(4)
        data = _toy_data(rng, 30)
        cfg = nc.TrainConfig(epochs_mandatory=4, epochs_max=10, es_check_step=2,
                             batch_size=30, seed=5)
        net = nc.init_network([nc.LayerSpec(2, 4), nc.LayerSpec(4, 1, nc.IDENTITY)], 0.0, seed=2)
        report = nc.train(net, data, data, cfg)
        assert report.stop_reason == nc.MAX_EPOCHS
        assert report.epochs_run == 10
        assert [e for e, _, _ in report.loss_trace] == list(nc.check_epochs(cfg))

    def test_runs_at_least_mandatory_epochs(self):
        rng = np.random.default_rng(6)
        data = _toy_data(rng, 20)
        cfg = nc.TrainConfig(epochs_mandatory=30, epochs_max=200, es_check_step=10,
                             batch_size=20, seed=1)
        net = nc.init_network([nc.LayerSpec(2, 4), nc.LayerSpec(4, 1, nc.IDENTITY)], 0.0, seed=3)
        report = nc.train(net, data, data, cfg)
        assert report.epochs_run >= cfg.epochs_mandatory

    def test_divergence_raises_with_epoch(self):
        rng = np.random.default_rng(8)
        data = _toy_data(rng, 20)
        cfg = nc.TrainConfig(lr_initial=1e12, epochs_mandatory=0, epochs_max=200,
                             batch_size=20, seed=1)
        net = nc.init_network([nc.LayerSpec(2, 8), nc.LayerSpec(8, 1, nc.IDENTITY)], 0.0, seed=3)
        with pytest.raises(TrainingDivergedError) as err:
            nc.train(net, data, data, cfg)
        assert err.value.epoch >= 0

    def test_empty_val_rejected(self):
        rng = np.random.default_rng(9)
        data = _toy_data(rng, 10)
        net = nc.init_network([nc.LayerSpec(2, 1, nc.IDENTITY)], 0.0, seed=0)
        with pytest.raises(UsageError):
            nc.train(net, data, (np.zeros((0, 2)), np.zeros(0)), nc.TrainConfig())


class TestConfigValidation:
    def test_mandatory_cannot_exceed_max(self):
        with pytest.raises(ConfigurationError):
            nc.TrainConfig(epochs_mandatory=10, epochs_max=5)

    def test_floor_cannot_exceed_initial(self):
        with pytest.raises(ConfigurationError):
            nc.TrainConfig(lr_initial=1e-5, lr_floor=1e-3)
