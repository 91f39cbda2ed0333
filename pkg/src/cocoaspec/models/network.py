"""Feed-forward and 1-d convolutional regression networks.

Layers are described by plain dicts so they can live in JSON configs:

    {"type": "dense", "width": 64}
    {"type": "relu"} | {"type": "tanh"}
    {"type": "conv", "channels": 8, "kernel": 5, "stride": 1}
    {"type": "pool", "width": 2}
    {"type": "flatten"}

A conv layer applied to flat rows implicitly treats them as one channel,
and a dense layer after conv stages implicitly flattens; shapes are
resolved once against the input band count, so bad stacks fail at
construction, not mid-training.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import TrainingDivergenceError, ValidationError
from . import autodiff as ad

_ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh}


def mlp_layers(widths: tuple[int, ...] = (64, 32), activation: str = "relu") -> list[dict]:
    """Dense stack with an activation after every hidden layer."""
    layers: list[dict] = []
    for w in widths:
        layers.append({"type": "dense", "width": int(w)})
        layers.append({"type": activation})
    return layers


def cnn_layers(
    channels: tuple[int, ...] = (8, 16),
    kernel: int = 5,
    pool: int = 2,
    dense: int = 32,
    activation: str = "relu",
) -> list[dict]:
    """Conv/pool stages followed by one dense hidden layer."""
    layers: list[dict] = []
    for c in channels:
        layers.append({"type": "conv", "channels": int(c), "kernel": int(kernel)})
        layers.append({"type": activation})
        layers.append({"type": "pool", "width": int(pool)})
    layers.append({"type": "flatten"})
    layers.append({"type": "dense", "width": int(dense)})
    layers.append({"type": activation})
    return layers


class Network:
    """A layer stack with statically resolved shapes and Glorot init."""

    def __init__(self, layers: list[dict], input_bands: int):
        if input_bands < 1:
            raise ValidationError("input_bands must be at least 1")
        self.layers = [dict(l) for l in layers]
        self.input_bands = int(input_bands)
        self._ops: list[tuple] = []
        self.param_shapes: list[tuple[int, ...]] = []
        self._plan()

    def _add_param(self, shape: tuple[int, ...]) -> int:
        self.param_shapes.append(shape)
        return len(self.param_shapes) - 1

    def _plan(self) -> None:
        shape: tuple = ("flat", self.input_bands)
        for pos, layer in enumerate(self.layers):
            kind = layer.get("type")
            where = f"layer {pos} ({kind})"
            if kind == "dense":
                width = int(layer.get("width", 0))
                if width < 1:
                    raise ValidationError(f"{where}: width must be at least 1")
                if shape[0] == "spatial":
                    self._ops.append(("flatten",))
                    shape = ("flat", shape[1] * shape[2])
                w = self._add_param((shape[1], width))
                b = self._add_param((width,))
                self._ops.append(("dense", w, b))
                shape = ("flat", width)
            elif kind in _ACTIVATIONS:
                self._ops.append((kind,))
            elif kind == "conv":
                channels = int(layer.get("channels", 0))
                kernel = int(layer.get("kernel", 0))
                stride = int(layer.get("stride", 1))
                if channels < 1 or kernel < 1 or stride < 1:
                    raise ValidationError(
                        f"{where}: channels, kernel and stride must be at least 1"
                    )
                if shape[0] == "flat":
                    self._ops.append(("lift",))
                    shape = ("spatial", 1, shape[1])
                _, in_ch, length = shape
                if kernel > length:
                    raise ValidationError(
                        f"{where}: kernel {kernel} exceeds length {length}"
                    )
                w = self._add_param((channels, in_ch, kernel))
                b = self._add_param((channels,))
                self._ops.append(("conv", w, b, stride))
                shape = ("spatial", channels, (length - kernel) // stride + 1)
            elif kind == "pool":
                width = int(layer.get("width", 0))
                if width < 1:
                    raise ValidationError(f"{where}: width must be at least 1")
                if shape[0] == "flat":
                    self._ops.append(("lift",))
                    shape = ("spatial", 1, shape[1])
                _, ch, length = shape
                if length // width < 1:
                    raise ValidationError(
                        f"{where}: pool width {width} exceeds length {length}"
                    )
                self._ops.append(("pool", width))
                shape = ("spatial", ch, length // width)
            elif kind == "flatten":
                if shape[0] == "spatial":
                    self._ops.append(("flatten",))
                    shape = ("flat", shape[1] * shape[2])
            else:
                raise ValidationError(f"{where}: unknown layer type {kind!r}")
        if shape[0] == "spatial":
            self._ops.append(("flatten",))
            shape = ("flat", shape[1] * shape[2])
        self.output_width = shape[1]

    def init_params(self, rng: np.random.Generator) -> list[np.ndarray]:
        """Glorot-uniform weights, zero biases."""
        params: list[np.ndarray] = []
        for shape in self.param_shapes:
            if len(shape) == 1:
                params.append(np.zeros(shape))
            elif len(shape) == 2:
                fan_in, fan_out = shape
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                params.append(rng.uniform(-limit, limit, shape))
            else:
                out_ch, in_ch, kernel = shape
                limit = np.sqrt(6.0 / (in_ch * kernel + out_ch * kernel))
                params.append(rng.uniform(-limit, limit, shape))
        return params

    def forward(self, params: list[ad.Tensor], X: np.ndarray) -> ad.Tensor:
        if len(params) != len(self.param_shapes):
            raise ValidationError("parameter count does not match the plan")
        x = ad.Tensor(X)
        for op in self._ops:
            if op[0] == "dense":
                x = ad.add_bias(ad.matmul(x, params[op[1]]), params[op[2]])
            elif op[0] == "conv":
                x = ad.add_channel_bias(
                    ad.conv1d(x, params[op[1]], stride=op[3]), params[op[2]]
                )
            elif op[0] == "pool":
                x = ad.avg_pool1d(x, op[1])
            elif op[0] == "lift":
                x = ad.reshape(x, (x.shape[0], 1, x.shape[1]))
            elif op[0] == "flatten":
                x = ad.flatten(x)
            else:
                x = _ACTIVATIONS[op[0]](x)
        return x


def network_gradients(
    net: Network, params: list[np.ndarray], X: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean-squared-error loss and its gradient for every parameter."""
    tensors = [ad.Tensor(p) for p in params]
    out = net.forward(tensors, X)
    loss = ad.mse_loss(out, np.asarray(y, dtype=np.float64).reshape(out.shape))
    loss.backward()
    return float(loss.data), [t.grad for t in tensors]


class Adam:
    """Adam with bias-corrected moment estimates."""

    def __init__(
        self,
        shapes: list[tuple[int, ...]],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g**2
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


class NetworkRegressor(BaseEstimator, RegressorMixin):
    """Network trained with Adam, minibatches and early stopping.

    A validation_fraction tail of the (shuffled) training rows is held
    aside to monitor epoch loss; training stops once the monitor has not
    improved for ``patience`` epochs and the best weights are restored.
    Set validation_fraction=0 to monitor the training loss instead.
    A non-finite loss aborts with TrainingDivergenceError.
    """

    def __init__(
        self,
        layers: list[dict] | None = None,
        learning_rate: float = 1e-3,
        batch_size: int = 64,
        max_epochs: int = 200,
        patience: int = 20,
        validation_fraction: float = 0.15,
        seed: int = 0,
    ):
        self.layers = layers
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _check_params(self) -> None:
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be at least 1")
        if self.patience < 0:
            raise ValidationError("patience must be non-negative")
        if not (0.0 <= self.validation_fraction < 1.0):
            raise ValidationError("validation_fraction must be in [0, 1)")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")

    def _loss(self, net: Network, params: list[np.ndarray], X, y) -> float:
        tensors = [ad.Tensor(p) for p in params]
        out = net.forward(tensors, X)
        return float(np.mean((out.data.ravel() - y) ** 2))

    def fit(self, X, y):
        self._check_params()
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        layers = self.layers if self.layers is not None else mlp_layers()
        net = Network(list(layers) + [{"type": "dense", "width": 1}], X.shape[1])
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([self.seed]))
        )
        params = net.init_params(rng)
        optimizer = Adam(net.param_shapes, learning_rate=self.learning_rate)

        n = X.shape[0]
        n_val = int(np.floor(self.validation_fraction * n))
        perm = rng.permutation(n)
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        if train_idx.size == 0:
            raise ValidationError("validation split left no training rows")
        X_tr, y_tr = X[train_idx], y[train_idx]
        X_val, y_val = X[val_idx], y[val_idx]

        best_monitor = np.inf
        best_params = [p.copy() for p in params]
        best_epoch = 0
        bad_epochs = 0
        history: list[dict] = []
        batch = min(self.batch_size, X_tr.shape[0])
        for epoch in range(self.max_epochs):
            order = rng.permutation(X_tr.shape[0])
            epoch_losses = []
            for start in range(0, order.size, batch):
                rows = order[start : start + batch]
                loss, grads = network_gradients(net, params, X_tr[rows], y_tr[rows])
                if not np.isfinite(loss):
                    raise TrainingDivergenceError(
                        f"non-finite loss at epoch {epoch}"
                    )
                optimizer.step(params, grads)
                epoch_losses.append(loss)
            train_loss = float(np.mean(epoch_losses))
            if n_val:
                monitor = self._loss(net, params, X_val, y_val)
            else:
                monitor = train_loss
            if not np.isfinite(monitor):
                raise TrainingDivergenceError(f"non-finite loss at epoch {epoch}")
            history.append(
                {
                    "epoch": epoch,
                    "train_mse": train_loss,
                    "monitor_mse": monitor,
                }
            )
            if monitor < best_monitor:
                best_monitor = monitor
                best_params = [p.copy() for p in params]
                best_epoch = epoch
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs > self.patience:
                    break

        self.network_ = net
        self.params_ = best_params
        self.history_ = history
        self.best_epoch_ = best_epoch
        self.n_epochs_ = len(history)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError("feature count differs from fit")
        tensors = [ad.Tensor(p) for p in self.params_]
        return self.network_.forward(tensors, X).data.ravel()
