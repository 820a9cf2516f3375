"""Fully connected network trained by mini-batch SGD with backpropagation."""

import numpy as np
from scipy.special import expit, log_softmax, softmax

from riskpipe.errors import ModelError


def parse_hidden(hidden):
    """``64`` -> [64]; ``"64,32"`` -> [64, 32]; ``0`` or ``""`` -> no hidden layer."""
    if isinstance(hidden, bool):
        raise ModelError(f"invalid hidden layer spec {hidden!r}")
    if isinstance(hidden, (int, float)):
        return [int(hidden)] if int(hidden) > 0 else []
    if isinstance(hidden, str):
        parts = [p for p in hidden.replace(";", ",").split(",") if p.strip()]
        try:
            sizes = [int(p) for p in parts]
        except ValueError:
            raise ModelError(f"invalid hidden layer spec {hidden!r}") from None
        if any(s <= 0 for s in sizes):
            raise ModelError(f"invalid hidden layer spec {hidden!r}")
        return sizes
    if isinstance(hidden, (list, tuple)):
        return [int(h) for h in hidden]
    raise ModelError(f"invalid hidden layer spec {hidden!r}")


def _activate(z, name):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "logistic":
        return expit(z)
    return z


def _activate_grad(z, a, name):
    if name == "relu":
        return (z > 0).astype(float)
    if name == "tanh":
        return 1.0 - a * a
    if name == "logistic":
        return a * (1.0 - a)
    return np.ones_like(z)


def init_network(sizes, seed):
    """Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return weights, biases


def forward(weights, biases, X, activation):
    """Return pre-activations and activations per layer; the output layer is linear."""
    zs, acts = [], [X]
    a = X
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        zs.append(z)
        a = z if i == len(weights) - 1 else _activate(z, activation)
        acts.append(a)
    return zs, acts


def loss_and_grad(weights, biases, X, Y, activation, task):
    """Mean loss over the batch and its gradients.

    Classification: softmax cross-entropy with one-hot ``Y``.
    Regression: mean squared error over rows, ``Y`` of shape (n, 1).
    """
    n = X.shape[0]
    zs, acts = forward(weights, biases, X, activation)
    out = zs[-1]
    if task == "classification":
        loss = float(-(Y * log_softmax(out, axis=1)).sum() / n)
        delta = (softmax(out, axis=1) - Y) / n
    else:
        diff = out - Y
        loss = float((diff * diff).sum() / n)
        delta = 2.0 * diff / n
    gW = [None] * len(weights)
    gb = [None] * len(biases)
    for i in range(len(weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * _activate_grad(zs[i - 1], acts[i], activation)
    return loss, gW, gb


def mlp_fit(X, Y, hidden=64, activation="relu", lr=1e-3, epochs=200, batch=32, seed=0,
            task="classification"):
    """``Y`` is one-hot (classification) or a column vector (regression)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    sizes = [X.shape[1], *parse_hidden(hidden), Y.shape[1]]
    weights, biases = init_network(sizes, [seed, 0])
    rng = np.random.default_rng([seed, 1])
    n = X.shape[0]
    batch = max(1, int(batch))
    for _ in range(int(epochs)):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start:start + batch]
            _, gW, gb = loss_and_grad(weights, biases, X[rows], Y[rows], activation, task)
            for i in range(len(weights)):
                weights[i] = weights[i] - lr * gW[i]
                biases[i] = biases[i] - lr * gb[i]
    return weights, biases


def mlp_output(weights, biases, X, activation):
    zs, _ = forward(weights, biases, np.asarray(X, dtype=float), activation)
    return zs[-1]
