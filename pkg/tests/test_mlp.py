import numpy as np
import pytest

from nmpinv.errors import DimensionMismatch, NonFiniteLoss
from nmpinv.mlp import (
    FeatureScaler,
    FeedforwardNetwork,
    NetRegressor,
    TrainingConfig,
    backprop,
    forward,
    forward_batch,
    init_network,
    train,
)


class TestInit:
    def test_xavier_bound(self):
        net = init_network([3, 5, 5, 1], "tanh", seed=7)
        for w, (fi, fo) in zip(net.weights, [(3, 5), (5, 5), (5, 1)]):
            assert np.all(np.abs(w) <= np.sqrt(6.0 / (fi + fo)))

    def test_seed_determinism(self):
        a = init_network([3, 5, 5, 1], "tanh", seed=7)
        b = init_network([3, 5, 5, 1], "tanh", seed=7)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_wide_relu_shapes(self):
        net = init_network([25, 128, 128, 128, 128, 6], "relu", seed=0)
        assert [w.shape for w in net.weights] == [
            (128, 25),
            (128, 128),
            (128, 128),
            (128, 128),
            (6, 128),
        ]

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            init_network([3], "tanh", seed=0)
        with pytest.raises(ValueError):
            init_network([3, 0, 1], "tanh", seed=0)


class TestForward:
    def test_zero_network(self):
        net = init_network([3, 4, 1], "tanh", seed=0)
        for w in net.weights:
            w[:] = 0.0
        assert forward(net, [1.0, -2.0, 3.0]) == pytest.approx(0.0)

    def test_single_linear_layer(self):
        net = FeedforwardNetwork(
            (2, 1), [np.array([[2.0, -1.0]])], [np.array([0.5])], "tanh"
        )
        assert forward(net, [3.0, 4.0])[0] == pytest.approx(2 * 3 - 4 + 0.5)

    def test_dimension_mismatch(self):
        net = init_network([3, 4, 1], "tanh", seed=0)
        with pytest.raises(DimensionMismatch):
            forward(net, [1.0, 2.0])

    def test_output_respects_analytic_bound(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            net = init_network([4, 6, 6, 1], "tanh", seed=int(rng.integers(1e6)))
            for w in net.weights:
                w *= rng.uniform(0.5, 3.0)
            bound = net.output_bound(2.0)
            X = rng.uniform(-2.0, 2.0, size=(500, 4))
            assert np.max(np.abs(forward_batch(net, X))) <= bound + 1e-12


class TestBackprop:
    def test_zero_error_batch(self):
        net = FeedforwardNetwork(
            (2, 1), [np.array([[1.0, 1.0]])], [np.array([0.0])], "tanh"
        )
        X = np.array([[1.0, 2.0], [0.5, -0.5]])
        Y = X.sum(axis=1, keepdims=True)
        gw, gb, loss = backprop(net, X, Y)
        assert loss == 0.0
        assert np.allclose(gw[0], 0.0) and np.allclose(gb[0], 0.0)

    def test_single_linear_neuron_closed_form(self):
        net = FeedforwardNetwork(
            (2, 1), [np.array([[0.3, -0.7]])], [np.array([0.1])], "tanh"
        )
        x = np.array([[2.0, 1.0]])
        y = np.array([[1.5]])
        pred = 0.3 * 2 - 0.7 * 1 + 0.1
        gw, gb, _ = backprop(net, x, y)
        assert np.allclose(gw[0], (pred - 1.5) * x)
        assert gb[0][0] == pytest.approx(pred - 1.5)

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_matches_central_finite_differences(self, activation):
        rng = np.random.default_rng(42)
        for trial in range(20):
            sizes = [int(rng.integers(2, 5)) for _ in range(int(rng.integers(2, 4)))]
            sizes = [3, *sizes, 2]
            net = init_network(sizes, activation, seed=trial)
            for b in net.biases:
                b[:] = rng.normal(0, 0.3, b.shape)
            X = rng.normal(size=(6, 3))
            Y = rng.normal(size=(6, 2))
            gw, gb, _ = backprop(net, X, Y)
            h = 1e-6
            for l in range(len(net.weights)):
                w = net.weights[l]
                i, j = rng.integers(w.shape[0]), rng.integers(w.shape[1])
                w[i, j] += h
                _, _, up = backprop(net, X, Y)
                w[i, j] -= 2 * h
                _, _, down = backprop(net, X, Y)
                w[i, j] += h
                fd = (up - down) / (2 * h)
                denom = max(abs(fd), 1e-8)
                assert abs(gw[l][i, j] - fd) / denom < 1e-4


class TestTrain:
    def test_recovers_linear_map(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(400, 3))
        w_true = np.array([1.5, -2.0, 0.7])
        y = X @ w_true + 0.3
        net = init_network([3, 1], "tanh", seed=1)
        cfg = TrainingConfig(
            learning_rate=0.02, batch_size=400, epochs=3000, patience=3000,
            lr_schedule="cosine",
        )
        best, hist = train(net, X, y, cfg)
        pred = forward_batch(best, X)[:, 0]
        rmse = np.sqrt(np.mean((pred - y) ** 2))
        assert rmse < 1e-6

    def test_identity_target(self):
        # target equals one input feature; relu represents that exactly
        rng = np.random.default_rng(1)
        X = rng.normal(size=(500, 3))
        y = X[:, 1]
        net = init_network([3, 5, 1], "relu", seed=2)
        cfg = TrainingConfig(
            learning_rate=0.02, batch_size=64, epochs=200, patience=200,
            lr_schedule="cosine",
        )
        best, _ = train(net, X, y, cfg)
        rmse = np.sqrt(np.mean((forward_batch(best, X)[:, 0] - y) ** 2))
        assert rmse < 1e-3

    def test_best_epoch_retained(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(200, 2))
        y = X @ np.array([1.0, -1.0])
        net = init_network([2, 4, 1], "tanh", seed=3)
        cfg = TrainingConfig(epochs=50, patience=50)
        best, hist = train(net, X, y, cfg)
        assert hist.val_loss[hist.best_epoch - 1] == min(hist.val_loss)

    def test_shuffled_labels_do_not_generalize(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(300, 3))
        y = rng.permutation(X @ np.array([1.0, 1.0, 1.0]))
        net = init_network([3, 16, 16, 1], "tanh", seed=4)
        cfg = TrainingConfig(learning_rate=5e-3, epochs=300, patience=300)
        best, hist = train(net, X, y, cfg)
        assert hist.train_loss[-1] < hist.train_loss[0]
        # validation never gets meaningfully below the label variance
        assert min(hist.val_loss) > 0.2 * np.var(y)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(100, 2))
        y = X.sum(axis=1)
        nets = []
        for _ in range(2):
            net = init_network([2, 4, 1], "tanh", seed=9)
            best, _ = train(net, X, y, TrainingConfig(epochs=30, seed=9))
            nets.append(best)
        for wa, wb in zip(nets[0].weights, nets[1].weights):
            assert np.array_equal(wa, wb)

    def test_non_finite_loss(self):
        X = np.array([[1.0], [2.0], [3.0]])
        y = np.array([1.0, 2.0, 3.0])
        net = init_network([1, 2, 1], "relu", seed=0)
        net.weights[0][:] = 1e200  # relu passes the overflow through to inf
        net.weights[1][:] = 1e200
        with pytest.raises(NonFiniteLoss):
            train(net, X, y, TrainingConfig(epochs=5))


class TestBoundedness:
    def test_lemma_style_bound_large_probe(self):
        rng = np.random.default_rng(6)
        net = init_network([4, 8, 8, 1], "tanh", seed=11)
        for w in net.weights:
            w *= rng.uniform(0.5, 2.0)
        B = 3.0
        bound = net.output_bound(B)
        X = rng.uniform(-B, B, size=(100_000, 4))
        assert np.max(np.abs(forward_batch(net, X))) <= bound

    def test_continuity_probe(self):
        rng = np.random.default_rng(7)
        net = init_network([3, 6, 6, 1], "relu", seed=12)
        lip = net.lipschitz_bound()
        for _ in range(200):
            x = rng.normal(size=3)
            d = rng.normal(size=3) * 1e-3
            fx = forward(net, x)[0]
            fy = forward(net, x + d)[0]
            assert abs(fx - fy) <= lip * np.linalg.norm(d) + 1e-12


class TestFeatureScaler:
    def test_population_stats(self):
        scaler = FeatureScaler().fit(np.array([[1.0], [2.0], [3.0]]))
        assert scaler.mean_[0] == pytest.approx(2.0)
        assert scaler.scale_[0] == pytest.approx(np.sqrt(2.0 / 3.0))

    def test_round_trip(self):
        rng = np.random.default_rng(8)
        X = rng.normal(2.0, 5.0, size=(50, 4))
        scaler = FeatureScaler().fit(X)
        assert np.allclose(scaler.inverse_transform(scaler.transform(X)), X, atol=1e-12)

    def test_constant_feature_warning(self):
        X = np.column_stack([np.ones(10), np.arange(10.0)])
        with pytest.warns(UserWarning):
            scaler = FeatureScaler().fit(X)
        assert scaler.scale_[0] == 1.0
        out = scaler.transform(X)
        assert np.allclose(out[:, 0], 0.0)

    def test_stats_serialization(self):
        X = np.random.default_rng(9).normal(size=(20, 2))
        scaler = FeatureScaler().fit(X)
        again = FeatureScaler.from_stats(scaler.stats())
        assert np.allclose(again.transform(X), scaler.transform(X))


class TestNetRegressor:
    def test_sklearn_surface(self):
        reg = NetRegressor(hidden_layer_sizes=(4,), epochs=10)
        params = reg.get_params()
        assert params["hidden_layer_sizes"] == (4,)
        reg.set_params(epochs=20)
        assert reg.epochs == 20

    def test_fit_predict(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(300, 2))
        y = 2 * X[:, 0] - X[:, 1]
        reg = NetRegressor(
            hidden_layer_sizes=(8,), learning_rate=0.02, epochs=400, patience=400,
            lr_schedule="cosine", seed=3,
        )
        reg.fit(X, y)
        rmse = np.sqrt(np.mean((reg.predict(X) - y) ** 2))
        assert rmse < 0.05

    def test_predict_before_fit(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            NetRegressor().predict(np.zeros((1, 2)))
