"""Fully connected classifier (128-64-32, Leaky-ReLU, softmax) trained with Adam.

Forward pass, back-propagation and the optimiser are plain numpy in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from harbench.errors import TrainingError

HIDDEN_SIZES = (128, 64, 32)
VARIANT_EPOCHS = {"V1": 250, "V2": 200}


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    alpha: float = 0.01
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.weights[-1].shape[1])

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> Iterator[np.ndarray]:
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def copy(self) -> "MlpParams":
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, flat: np.ndarray) -> "MlpParams":
        out = self.copy()
        offset = 0
        for a in out.arrays():
            a[...] = flat[offset : offset + a.size].reshape(a.shape)
            offset += a.size
        return out


def init_mlp(
    input_dim: int,
    classes: int,
    seed: int = 0,
    alpha: float = 0.01,
    hidden: tuple[int, ...] = HIDDEN_SIZES,
) -> MlpParams:
    """He-normal weights (variance 2/fan_in) and zero biases."""
    if input_dim < 1:
        raise ValueError(f"input_dim must be >= 1, got {input_dim}")
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    sizes = (input_dim, *hidden, classes)
    weights = [
        rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    ]
    biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
    return MlpParams(weights=weights, biases=biases, alpha=alpha, seed=seed)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_batch(p: MlpParams, batch: np.ndarray) -> np.ndarray:
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != p.input_dim:
        raise ValueError(f"dimension mismatch: network expects {p.input_dim}, got {X.shape[1]}")
    return X


def _forward_cache(p: MlpParams, X: np.ndarray):
    pre_acts = []
    h = X
    activations = [h]
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ w + b
        if i == last:
            return z, pre_acts, activations
        pre_acts.append(z)
        h = np.where(z > 0, z, p.alpha * z)
        activations.append(h)
    raise AssertionError("unreachable")


def logits(p: MlpParams, batch: np.ndarray) -> np.ndarray:
    return _forward_cache(p, _as_batch(p, batch))[0]


def forward(p: MlpParams, batch: np.ndarray) -> np.ndarray:
    """Class probabilities, B x K."""
    return _softmax(logits(p, batch))


def loss_and_grad(p: MlpParams, batch: np.ndarray, labels: np.ndarray) -> tuple[float, MlpParams]:
    """Mean cross-entropy and its gradient (returned as an MlpParams of gradients)."""
    X = _as_batch(p, batch)
    y = np.asarray(labels, dtype=np.int64).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} labels")
    if y.size and (y.min() < 0 or y.max() >= p.n_classes):
        raise ValueError(f"labels must lie in [0, {p.n_classes})")
    loss, grads, _ = _loss_grad(p, X, y)
    return loss, grads


def _loss_grad(p: MlpParams, X: np.ndarray, y: np.ndarray) -> tuple[float, MlpParams, np.ndarray]:
    B = X.shape[0]
    z, pre_acts, activations = _forward_cache(p, X)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(B)
    loss = float(np.mean(log_norm - shifted[rows, y]))

    delta = np.exp(shifted - log_norm[:, None])
    delta[rows, y] -= 1.0
    delta /= B
    n_layers = len(p.weights)
    grad_w: list[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: list[np.ndarray] = [np.empty(0)] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            upstream = delta @ p.weights[i].T
            delta = upstream * np.where(pre_acts[i - 1] > 0, 1.0, p.alpha)
    return loss, MlpParams(weights=grad_w, biases=grad_b, alpha=p.alpha, seed=p.seed), z


def predict(p: MlpParams, v: np.ndarray) -> np.ndarray | int:
    """Argmax class (lowest index wins ties); scalar for a single vector."""
    probs = forward(p, v)
    labels = np.argmax(probs, axis=1)
    if np.asarray(v).ndim == 1:
        return int(labels[0])
    return labels


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = VARIANT_EPOCHS["V1"]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "TrainConfig":
        try:
            epochs = VARIANT_EPOCHS[variant]
        except KeyError:
            raise ValueError(f"unknown variant {variant!r}; expected one of {sorted(VARIANT_EPOCHS)}") from None
        return cls(epochs=epochs, **overrides)


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)


def train(
    p: MlpParams, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig
) -> tuple[MlpParams, TrainHistory]:
    """Minibatch Adam over seeded reshuffles of the training set.

    Each epoch takes ceil(N / batch_size) steps; the last batch may be short.
    The returned history holds the per-epoch sample-weighted mean loss and the
    accuracy of the predictions made on each batch before its update.
    """
    X = _as_batch(p, features)
    y = np.asarray(labels, dtype=np.int64).ravel()
    n = X.shape[0]
    if n < 1:
        raise ValueError("cannot train on an empty set")
    if y.shape[0] != n:
        raise ValueError(f"{n} inputs but {y.shape[0]} labels")
    if y.min() < 0 or y.max() >= p.n_classes:
        raise ValueError(f"labels must lie in [0, {p.n_classes})")

    # parameters live as views into one flat buffer so Adam updates are vectorised
    flat = p.flatten()
    params = _view_params(p, flat)
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    buf = np.empty_like(flat)
    rng = np.random.default_rng(cfg.shuffle_seed)
    history = TrainHistory()
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            loss, grads, z = _loss_grad(params, xb, yb)
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step}; "
                    f"try a smaller learning rate than {cfg.learning_rate}"
                )
            loss_sum += loss * len(idx)
            correct += int(np.count_nonzero(np.argmax(z, axis=1) == yb))
            step += 1
            g = grads.flatten()
            lr_t = cfg.learning_rate * math.sqrt(1 - cfg.beta2**step) / (1 - cfg.beta1**step)
            m *= cfg.beta1
            m += np.multiply(g, 1 - cfg.beta1, out=buf)
            v *= cfg.beta2
            np.multiply(g, g, out=g)
            v += np.multiply(g, 1 - cfg.beta2, out=buf)
            np.sqrt(v, out=buf)
            buf += cfg.epsilon
            np.divide(m, buf, out=buf)
            buf *= lr_t
            flat -= buf
        history.loss.append(loss_sum / n)
        history.accuracy.append(correct / n)
        if not np.all(np.isfinite(flat)):
            raise TrainingError(
                f"non-finite parameters after epoch {epoch}; "
                f"try a smaller learning rate than {cfg.learning_rate}"
            )
    return params.copy(), history


def _view_params(p: MlpParams, flat: np.ndarray) -> MlpParams:
    views = []
    offset = 0
    for a in p.arrays():
        views.append(flat[offset : offset + a.size].reshape(a.shape))
        offset += a.size
    return MlpParams(weights=views[0::2], biases=views[1::2], alpha=p.alpha, seed=p.seed)
