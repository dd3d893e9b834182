"""Differentiable classifiers over a flat parameter vector.

Two model kinds are supported: multinomial logistic regression and a
one-hidden-layer MLP with tanh activation (smooth, so finite-difference
gradient checks hold everywhere). Parameters live in a single float64
vector: per layer, weights row-major then biases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOGISTIC = "multinomial-logistic"
MLP = "one-hidden-layer-mlp"


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in (LOGISTIC, MLP):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim <= 0 or self.num_classes <= 0:
            raise ValueError("input_dim and num_classes must be positive")
        if self.kind == MLP and self.hidden_dim <= 0:
            raise ValueError("MLP requires hidden_dim > 0")

    @property
    def dim(self) -> int:
        if self.kind == LOGISTIC:
            return self.num_classes * self.input_dim + self.num_classes
        h, d, c = self.hidden_dim, self.input_dim, self.num_classes
        return h * d + h + c * h + c

    def layer_groups(self) -> list[tuple[int, int]]:
        """Contiguous (start, stop) ranges: one group per weight/bias block."""
        if self.kind == LOGISTIC:
            w = self.num_classes * self.input_dim
            return [(0, w), (w, w + self.num_classes)]
        h, d, c = self.hidden_dim, self.input_dim, self.num_classes
        cuts = np.cumsum([h * d, h, c * h, c])
        starts = [0, *cuts[:-1]]
        return [(int(s), int(e)) for s, e in zip(starts, cuts)]

    def unpack(self, theta: np.ndarray):
        if theta.size != self.dim:
            raise ValueError(f"parameter vector length {theta.size}, expected {self.dim}")
        if self.kind == LOGISTIC:
            w = self.num_classes * self.input_dim
            W = theta[:w].reshape(self.num_classes, self.input_dim)
            b = theta[w:]
            return W, b
        h, d, c = self.hidden_dim, self.input_dim, self.num_classes
        o = 0
        W1 = theta[o:o + h * d].reshape(h, d); o += h * d
        b1 = theta[o:o + h]; o += h
        W2 = theta[o:o + c * h].reshape(c, h); o += c * h
        b2 = theta[o:]
        return W1, b1, W2, b2


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Seeded Gaussian init, scale 1/sqrt(fan_in) for weights, zero biases."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.dim)
    if spec.kind == LOGISTIC:
        w = spec.num_classes * spec.input_dim
        theta[:w] = rng.normal(0.0, 1.0 / np.sqrt(spec.input_dim), w)
        return theta
    h, d, c = spec.hidden_dim, spec.input_dim, spec.num_classes
    o = 0
    theta[o:o + h * d] = rng.normal(0.0, 1.0 / np.sqrt(d), h * d); o += h * d
    o += h
    theta[o:o + c * h] = rng.normal(0.0, 1.0 / np.sqrt(h), c * h)
    return theta


def _logits(spec: ModelSpec, theta: np.ndarray, X: np.ndarray):
    if spec.kind == LOGISTIC:
        W, b = spec.unpack(theta)
        return X @ W.T + b, None
    W1, b1, W2, b2 = spec.unpack(theta)
    H = np.tanh(X @ W1.T + b1)
    return H @ W2.T + b2, H


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict(spec: ModelSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    logits, _ = _logits(spec, theta, X)
    return logits.argmax(axis=1)


def loss(spec: ModelSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy over the slice."""
    if X.shape[0] == 0:
        raise ValueError("empty data slice")
    logits, _ = _logits(spec, theta, X)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(y.size), y].mean())


def grad(spec: ModelSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact gradient of ``loss`` over the slice, flat layout."""
    if X.shape[0] == 0:
        raise ValueError("empty data slice")
    n = X.shape[0]
    logits, H = _logits(spec, theta, X)
    p = np.exp(_log_softmax(logits))
    p[np.arange(y.size), y] -= 1.0
    p /= n
    g = np.empty(spec.dim)
    if spec.kind == LOGISTIC:
        w = spec.num_classes * spec.input_dim
        g[:w] = (p.T @ X).ravel()
        g[w:] = p.sum(axis=0)
        return g
    W1, b1, W2, b2 = spec.unpack(theta)
    h, d, c = spec.hidden_dim, spec.input_dim, spec.num_classes
    dH = p @ W2
    dZ1 = dH * (1.0 - H * H)
    o = 0
    g[o:o + h * d] = (dZ1.T @ X).ravel(); o += h * d
    g[o:o + h] = dZ1.sum(axis=0); o += h
    g[o:o + c * h] = (p.T @ H).ravel(); o += c * h
    g[o:] = p.sum(axis=0)
    return g


def stochastic_grad(
    spec: ModelSpec,
    theta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    batch_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Gradient over a uniform with-replacement mini-batch of ``batch_size``."""
    if X.shape[0] == 0:
        raise ValueError("empty client dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    idx = rng.integers(0, X.shape[0], size=batch_size)
    return grad(spec, theta, X[idx], y[idx])
