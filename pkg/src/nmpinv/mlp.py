"""From-scratch feedforward networks with the boundedness machinery.

The math lives in plain numpy: forward pass, backpropagation of the
half-mean-squared-error loss, sgd/adam updates, and the operator-norm
output bound that makes the stability argument of the learning module
checkable.  ``FeatureScaler`` and ``NetRegressor`` wrap the same pieces
in the scikit-learn estimator API so they compose with pipelines.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .errors import DimensionMismatch, NonFiniteLoss

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(float)),
}


@dataclass
class FeedforwardNetwork:
    """Layered weights/biases with a hidden activation and linear output."""

    sizes: tuple
    weights: list  # w_l: (N_l, N_{l-1})
    biases: list  # b_l: (N_l,)
    activation: str

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for w, b in zip(self.weights, self.biases):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("weights and biases must be finite")

    @property
    def n_inputs(self):
        return self.sizes[0]

    @property
    def n_outputs(self):
        return self.sizes[-1]

    def copy(self):
        return FeedforwardNetwork(
            self.sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def output_bound(self, input_bound: float) -> float:
        """Analytic sup-norm bound on |output| for inputs in [-B, B]^n.

        Propagates ||z_l|| <= ||w_l||_op * ||z_{l-1}|| + ||b_l|| through the
        layers; tanh and relu are 1-Lipschitz with sigma(0) = 0, so the
        activation never increases the bound.
        """
        bound = float(input_bound) * np.sqrt(self.n_inputs)
        for w, b in zip(self.weights, self.biases):
            bound = np.linalg.norm(w, 2) * bound + np.linalg.norm(b)
        return float(bound)

    def lipschitz_bound(self) -> float:
        """Product of layer operator norms (activation Lipschitz constant 1)."""
        out = 1.0
        for w in self.weights:
            out *= np.linalg.norm(w, 2)
        return float(out)

    def to_json(self, norm_stats=None) -> str:
        return json.dumps(
            {
                "sizes": list(self.sizes),
                "activation": self.activation,
                "weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases],
                "norm_stats": norm_stats,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str):
        obj = json.loads(text)
        net = cls(
            tuple(obj["sizes"]),
            [np.asarray(w, dtype=float) for w in obj["weights"]],
            [np.asarray(b, dtype=float) for b in obj["biases"]],
            obj["activation"],
        )
        return net, obj.get("norm_stats")


@dataclass
class TrainingConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    validation_fraction: float = 0.3
    patience: int = 50
    lr_schedule: str = "constant"  # constant | cosine

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, epochs and patience must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")


def init_network(layer_sizes, activation: str, seed: int) -> FeedforwardNetwork:
    """Xavier-uniform init for tanh, He-normal for relu; reproducible by seed."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError("layer_sizes needs at least input and output, all >= 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if activation == "tanh":
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        elif activation == "relu":
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        else:
            raise ValueError(f"unknown activation {activation!r}")
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return FeedforwardNetwork(sizes, weights, biases, activation)


def forward(net: FeedforwardNetwork, x) -> np.ndarray:
    """Network output for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.n_inputs,):
        raise DimensionMismatch(f"expected input shape ({net.n_inputs},), got {x.shape}")
    return forward_batch(net, x[None, :])[0]


def forward_batch(net: FeedforwardNetwork, X) -> np.ndarray:
    """Network outputs for a batch, shape (B, n_inputs) -> (B, n_outputs)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.n_inputs:
        raise DimensionMismatch(f"expected (B, {net.n_inputs}), got {X.shape}")
    act, _ = _ACTIVATIONS[net.activation]
    a = X
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        a = z if l == last else act(z)
    return a


def backprop(net: FeedforwardNetwork, X, Y):
    """Gradients of 0.5 * mean_b ||pred_b - y_b||^2 and the loss itself."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[1] != net.n_inputs:
        raise DimensionMismatch(f"expected (B, {net.n_inputs}), got {X.shape}")
    if Y.shape != (X.shape[0], net.n_outputs):
        raise DimensionMismatch(
            f"expected targets ({X.shape[0]}, {net.n_outputs}), got {Y.shape}"
        )
    act, dact = _ACTIVATIONS[net.activation]
    batch = X.shape[0]
    last = len(net.weights) - 1

    pre, post = [], [X]
    a = X
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if l == last else act(z)
        post.append(a)

    err = post[-1] - Y
    loss = 0.5 * float(np.mean(np.sum(err**2, axis=1)))

    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    delta = err / batch
    for l in range(last, -1, -1):
        if l != last:
            delta = delta * dact(pre[l])
        grad_w[l] = delta.T @ post[l]
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ net.weights[l]
    return grad_w, grad_b, loss


@dataclass
class TrainingHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1


def _loss_only(net, X, Y):
    pred = forward_batch(net, X)
    if Y.ndim == 1:
        Y = Y[:, None]
    return 0.5 * float(np.mean(np.sum((pred - Y) ** 2, axis=1)))


def train(net: FeedforwardNetwork, X, Y, config: TrainingConfig):
    """Mini-batch training with early stopping; returns (best net, history).

    Parameters from the best validation epoch are retained.  Deterministic
    for a fixed seed: the split, the shuffles and the updates all draw from
    one seeded generator.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(X))
    n_val = max(1, int(round(config.validation_fraction * len(X))))
    if n_val >= len(X):
        raise ValueError("validation split leaves no training rows")
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    Xt, Yt = X[train_idx], Y[train_idx]
    Xv, Yv = X[val_idx], Y[val_idx]

    net = net.copy()
    best = net.copy()
    history = TrainingHistory()
    best_val = _loss_only(net, Xv, Yv)
    history.best_epoch = 0
    since_best = 0

    if config.optimizer == "adam":
        m_w = [np.zeros_like(w) for w in net.weights]
        v_w = [np.zeros_like(w) for w in net.weights]
        m_b = [np.zeros_like(b) for b in net.biases]
        v_b = [np.zeros_like(b) for b in net.biases]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0

    order = np.arange(len(Xt))
    for epoch in range(1, config.epochs + 1):
        if config.lr_schedule == "cosine":
            lr = config.learning_rate * 0.5 * (1 + np.cos(np.pi * epoch / config.epochs))
        else:
            lr = config.learning_rate
        rng.shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            gw, gb, loss = backprop(net, Xt[idx], Yt[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"loss became non-finite at epoch {epoch}, batch {n_batches}"
                )
            epoch_loss += loss
            n_batches += 1
            if config.optimizer == "sgd":
                for l in range(len(net.weights)):
                    net.weights[l] -= lr * gw[l]
                    net.biases[l] -= lr * gb[l]
            else:
                step += 1
                for l in range(len(net.weights)):
                    m_w[l] = beta1 * m_w[l] + (1 - beta1) * gw[l]
                    v_w[l] = beta2 * v_w[l] + (1 - beta2) * gw[l] ** 2
                    m_b[l] = beta1 * m_b[l] + (1 - beta1) * gb[l]
                    v_b[l] = beta2 * v_b[l] + (1 - beta2) * gb[l] ** 2
                    mw_hat = m_w[l] / (1 - beta1**step)
                    vw_hat = v_w[l] / (1 - beta2**step)
                    mb_hat = m_b[l] / (1 - beta1**step)
                    vb_hat = v_b[l] / (1 - beta2**step)
                    net.weights[l] -= lr * mw_hat / (np.sqrt(vw_hat) + eps)
                    net.biases[l] -= lr * mb_hat / (np.sqrt(vb_hat) + eps)

        val = _loss_only(net, Xv, Yv)
        history.train_loss.append(epoch_loss / max(1, n_batches))
        history.val_loss.append(val)
        if val < best_val:
            best_val = val
            best = net.copy()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    return best, history


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Zero-mean unit-variance standardization with population statistics.

    Constant features (std below ``eps``) are passed through unscaled with
    a warning instead of dividing by ~0.
    """

    def __init__(self, eps=1e-12):
        self.eps = eps

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=True, dtype=float)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)  # population formula (ddof=0)
        constant = std <= self.eps
        if np.any(constant):
            warnings.warn(
                f"{int(constant.sum())} constant feature(s) passed through unscaled",
                stacklevel=2,
            )
        self.scale_ = np.where(constant, 1.0, std)
        return self

    def transform(self, X):
        self._check_fitted()
        X = check_array(X, ensure_2d=True, dtype=float)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        self._check_fitted()
        X = check_array(X, ensure_2d=True, dtype=float)
        return X * self.scale_ + self.mean_

    def stats(self):
        self._check_fitted()
        return {"mean": self.mean_.tolist(), "scale": self.scale_.tolist()}

    @classmethod
    def from_stats(cls, stats):
        out = cls()
        out.mean_ = np.asarray(stats["mean"], dtype=float)
        out.scale_ = np.asarray(stats["scale"], dtype=float)
        return out

    def _check_fitted(self):
        if not hasattr(self, "mean_"):
            raise NotFittedError("FeatureScaler is not fitted")


class NetRegressor(RegressorMixin, BaseEstimator):
    """sklearn-style regressor around the from-scratch network trainer.

    fit(X, y) standardizes inputs and targets, trains with early stopping,
    and keeps the best-validation-epoch parameters.  predict(X) returns
    denormalized outputs.
    """

    def __init__(
        self,
        hidden_layer_sizes=(5, 5),
        activation="tanh",
        optimizer="adam",
        learning_rate=1e-3,
        batch_size=32,
        epochs=200,
        seed=0,
        validation_fraction=0.3,
        patience=50,
        lr_schedule="constant",
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.validation_fraction = validation_fraction
        self.patience = patience
        self.lr_schedule = lr_schedule

    def _config(self):
        return TrainingConfig(
            optimizer=self.optimizer,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            validation_fraction=self.validation_fraction,
            patience=self.patience,
            lr_schedule=self.lr_schedule,
        )

    def fit(self, X, y):
        X = check_array(X, ensure_2d=True, dtype=float)
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if len(X) != len(y):
            raise DimensionMismatch("X and y row counts differ")
        self.x_scaler_ = FeatureScaler().fit(X)
        self.y_scaler_ = FeatureScaler().fit(y)
        Xn = self.x_scaler_.transform(X)
        Yn = self.y_scaler_.transform(y)
        sizes = [X.shape[1], *self.hidden_layer_sizes, y.shape[1]]
        net = init_network(sizes, self.activation, self.seed)
        self.network_, self.history_ = train(net, Xn, Yn, self._config())
        return self

    def predict(self, X):
        if not hasattr(self, "network_"):
            raise NotFittedError("NetRegressor is not fitted")
        X = check_array(X, ensure_2d=True, dtype=float)
        out = forward_batch(self.network_, self.x_scaler_.transform(X))
        out = self.y_scaler_.inverse_transform(out)
        return out[:, 0] if out.shape[1] == 1 else out
