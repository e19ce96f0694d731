import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carbonhybrid.errors import TrainingDivergedError
from carbonhybrid.rnn import (
    RnnModel,
    RnnSpec,
    RnnWeights,
    gradient_check,
    gru_cell,
    init_weights,
    load_model,
    loss_and_grads,
    lstm_cell,
    predict,
    save_model,
    sigmoid,
    train,
    training_mse,
    weight_shapes,
)
from carbonhybrid.seeding import generator

SATURATE = 1e3  # sigmoid(±1e3) is exactly 1.0 / 0.0 in double precision


def constant_weights(cell, value=0.5, D=1, H=1):
    spec = RnnSpec(cell=cell, input_dim=D, hidden_dim=H)
    params = {n: np.full(s, 0.0 if n.startswith("b") else value) for n, s in weight_shapes(spec).items()}
    return spec, RnnWeights(cell, params)


def random_weights(cell, D=3, H=4, seed=0):
    spec = RnnSpec(cell=cell, input_dim=D, hidden_dim=H, seed=seed)
    rng = generator(seed, "test-weights")
    params = {n: rng.normal(0.0, 0.5, size=s) for n, s in weight_shapes(spec).items()}
    return spec, RnnWeights(cell, params)


def toy_samples(n=10, T=5, D=3, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        w = rng.standard_normal((T, D))
        out.append((w, float(w[:, 0].sum() + 0.5 * w[-1, 1])))
    return out


class TestScalarCells:
    def test_lstm_scalar_oracle(self):
        s = 1.0 / (1.0 + math.exp(-0.5))
        g = math.tanh(0.5)
        c_expected = s * g
        h_expected = s * math.tanh(c_expected)
        _, w = constant_weights("LSTM")
        h, c = lstm_cell(np.array([1.0]), np.zeros(1), np.zeros(1), w)
        assert c[0] == pytest.approx(c_expected, rel=1e-13)
        assert h[0] == pytest.approx(h_expected, rel=1e-13)
        assert c[0] == pytest.approx(0.2876491366, abs=1e-9)
        assert h[0] == pytest.approx(0.1742697187, abs=1e-9)

    def test_gru_scalar_oracle(self):
        z = 1.0 / (1.0 + math.exp(-0.5))
        expected = (1.0 - z) * math.tanh(0.5)
        _, w = constant_weights("GRU")
        h = gru_cell(np.array([1.0]), np.zeros(1), w)
        assert h[0] == pytest.approx(expected, rel=1e-13)
        assert h[0] == pytest.approx(0.1744680206, abs=1e-9)

    def test_sigmoid_matches_logistic(self):
        x = np.linspace(-30, 30, 601)
        np.testing.assert_allclose(sigmoid(x), 1.0 / (1.0 + np.exp(-x)), rtol=1e-14, atol=1e-15)


class TestCellIdentities:
    def test_gru_update_gate_one_keeps_state(self):
        _, w = random_weights("GRU")
        w.params["b_iz"][:] = SATURATE
        h = np.random.default_rng(1).standard_normal(4)
        for x in np.random.default_rng(2).standard_normal((6, 3)):
            h_next = gru_cell(x, h, w)
            np.testing.assert_array_equal(h_next, h)
            h = h_next

    def test_gru_reduces_to_vanilla_rnn(self):
        _, w = random_weights("GRU", seed=3)
        w.params["b_ir"][:] = SATURATE
        w.params["b_iz"][:] = -SATURATE
        p = w.params
        rng = np.random.default_rng(4)
        h = rng.standard_normal(4)
        for x in rng.standard_normal((5, 3)):
            vanilla = np.tanh(x @ p["W_in"] + p["b_in"] + h @ p["W_hn"] + p["b_hn"])
            h_next = gru_cell(x, h, w)
            np.testing.assert_allclose(h_next, vanilla, rtol=1e-15, atol=1e-15)
            h = h_next

    def test_lstm_forget_one_input_zero_preserves_cell(self):
        _, w = random_weights("LSTM", seed=5)
        w.params["b_f"][:] = SATURATE
        w.params["b_i"][:] = -SATURATE
        rng = np.random.default_rng(6)
        c0 = rng.standard_normal(4)
        h, c = rng.standard_normal(4), c0.copy()
        for x in rng.standard_normal((7, 3)):
            h, c = lstm_cell(x, h, c, w)
        np.testing.assert_array_equal(c, c0)

    def test_lstm_output_gate_zero(self):
        _, w = random_weights("LSTM", seed=7)
        w.params["b_o"][:] = -SATURATE
        h, _ = lstm_cell(np.ones(3), np.ones(4), np.ones(4), w)
        np.testing.assert_array_equal(h, 0.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-5, 5))
    def test_gru_state_bounded(self, seed, scale):
        _, w = random_weights("GRU", seed=seed)
        h = np.zeros(4)
        for x in scale * np.random.default_rng(seed).standard_normal((8, 3)):
            h = gru_cell(x, h, w)
            assert np.all(np.abs(h) < 1.0)

    def test_shape_mismatch(self):
        _, w = random_weights("GRU")
        with pytest.raises(ValueError):
            gru_cell(np.ones(2), np.zeros(4), w)
        _, w = random_weights("LSTM")
        with pytest.raises(ValueError):
            lstm_cell(np.ones(3), np.zeros(4), np.zeros(3), w)


class TestGradients:
    @pytest.mark.parametrize("cell", ["GRU", "LSTM"])
    @pytest.mark.parametrize("seed", range(3))
    def test_bptt_matches_finite_differences(self, cell, seed):
        spec = RnnSpec(cell=cell, input_dim=3, hidden_dim=4, seed=seed)
        rng = np.random.default_rng(seed)
        sample = (rng.standard_normal((5, 3)), float(rng.standard_normal()))
        assert gradient_check(spec, sample) < 1e-4

    @pytest.mark.parametrize("cell", ["GRU", "LSTM"])
    def test_zero_weights_absolute(self, cell):
        spec = RnnSpec(cell=cell, input_dim=3, hidden_dim=4)
        w = RnnWeights.zeros(spec)
        X = np.random.default_rng(0).standard_normal((1, 5, 3))
        y = np.array([0.7])
        _, grads = loss_and_grads(w, X, y)
        step = 1e-5
        for name, arr in w.params.items():
            flat = arr.reshape(-1)
            for i in range(flat.size):
                base = flat[i]
                flat[i] = base + step
                up, _ = loss_and_grads(w, X, y)
                flat[i] = base - step
                down, _ = loss_and_grads(w, X, y)
                flat[i] = base
                assert abs((up - down) / (2 * step) - grads[name].reshape(-1)[i]) < 1e-6

    def test_dropout_mask_gradient(self):
        _, w = random_weights("GRU", seed=9)
        rng = np.random.default_rng(9)
        X, y = rng.standard_normal((4, 5, 3)), rng.standard_normal(4)
        mask = (rng.random((4, 4)) < 0.8) / 0.8
        _, grads = loss_and_grads(w, X, y, mask)
        step = 1e-6
        base = w.params["W_hz"][1, 2]
        w.params["W_hz"][1, 2] = base + step
        up, _ = loss_and_grads(w, X, y, mask)
        w.params["W_hz"][1, 2] = base - step
        down, _ = loss_and_grads(w, X, y, mask)
        assert (up - down) / (2 * step) == pytest.approx(grads["W_hz"][1, 2], rel=1e-5, abs=1e-9)


class TestTraining:
    @pytest.mark.parametrize("cell", ["GRU", "LSTM"])
    def test_overfit_toy_set(self, cell):
        spec = RnnSpec(cell=cell, input_dim=3, hidden_dim=8, epochs=150, dropout=0.0)
        model = train(spec, toy_samples())
        assert model.loss_history[-1] < model.loss_history[0]
        assert training_mse(model, toy_samples()) < model.loss_history[0]

    def test_deterministic(self):
        spec = RnnSpec(input_dim=3, hidden_dim=6, epochs=30, seed=42)
        a, b = train(spec, toy_samples()), train(spec, toy_samples())
        for name in a.weights.params:
            np.testing.assert_array_equal(a.weights[name], b.weights[name])

    def test_zero_learning_rate_keeps_weights(self):
        spec = RnnSpec(input_dim=3, hidden_dim=6, epochs=10, learning_rate=0.0, seed=3)
        model = train(spec, toy_samples())
        init = init_weights(spec, generator(spec.seed))
        for name in init.params:
            np.testing.assert_array_equal(model.weights[name], init[name])

    def test_divergence_names_epoch(self):
        samples = toy_samples()
        samples[0] = (samples[0][0], float("nan"))
        with pytest.raises(TrainingDivergedError, match="epoch 1"):
            train(RnnSpec(input_dim=3, hidden_dim=4, epochs=5), samples)

    def test_spec_validation(self):
        for bad in (dict(dropout=1.0), dict(epochs=0), dict(hidden_dim=0), dict(cell="RNN"), dict(learning_rate=-1)):
            with pytest.raises(ValueError):
                RnnSpec(**bad)


class TestPredict:
    def test_zero_weights_predict_denormalized_zero(self):
        spec = RnnSpec(input_dim=3, hidden_dim=4)
        model = RnnModel(spec, RnnWeights.zeros(spec), np.zeros(3), np.ones(3), y_shift=37.5, y_scale=2.0)
        assert predict(model, np.ones((5, 3))) == 37.5

    def test_state_propagates(self):
        model = train(RnnSpec(input_dim=3, hidden_dim=6, epochs=5), toy_samples())
        w = np.ones((5, 3))
        w2 = w.copy()
        w2[0, 1] += 1.0
        assert predict(model, w) != predict(model, w2)

    def test_bit_identical(self):
        spec = RnnSpec(input_dim=3, hidden_dim=6, epochs=5, seed=8)
        w = toy_samples(1, seed=3)[0][0]
        assert predict(train(spec, toy_samples()), w) == predict(train(spec, toy_samples()), w)

    def test_window_shape(self):
        model = train(RnnSpec(input_dim=3, hidden_dim=4, epochs=2), toy_samples())
        with pytest.raises(ValueError):
            predict(model, np.ones((5, 2)))

    @pytest.mark.parametrize("cell", ["GRU", "LSTM"])
    def test_save_load_round_trip(self, tmp_path, cell):
        model = train(RnnSpec(cell=cell, input_dim=3, hidden_dim=4, epochs=3), toy_samples())
        loaded = load_model(save_model(model, tmp_path / "m.txt"))
        assert loaded.spec == model.spec
        w = toy_samples(1, seed=5)[0][0]
        assert predict(loaded, w) == predict(model, w)
