"""Linear models: elastic net by coordinate descent, and per-sample SGD for
logistic / hinge / squared / epsilon-insensitive losses."""

import numpy as np
from scipy.special import expit

from riskpipe.errors import ModelError

LOSSES = ("log", "hinge", "squared", "epsilon_insensitive")


def soft_threshold(x, t):
    return np.sign(x) * max(abs(x) - t, 0.0)


def elastic_net_objective(X, y, beta, intercept, alpha, l1_ratio):
    r = y - X @ beta - intercept
    n = X.shape[0]
    penalty = alpha * (l1_ratio * np.abs(beta).sum() + 0.5 * (1 - l1_ratio) * beta @ beta)
    return float(r @ r / (2 * n) + penalty)


def elastic_net_fit(X, y, alpha=1.0, l1_ratio=0.5, max_iter=1000, tol=1e-6):
    """Cyclic coordinate descent with an unpenalised intercept.

    Minimises ``(1/2n)||y - X b - c||^2 + alpha * (l1_ratio ||b||_1 + (1 - l1_ratio)/2 ||b||^2)``.
    Returns ``(weights, intercept)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ModelError("elastic net input contains non-finite values")
    n, p = X.shape
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    z = (Xc * Xc).sum(axis=0) / n
    l1 = alpha * l1_ratio
    l2 = alpha * (1 - l1_ratio)
    beta = np.zeros(p)
    resid = yc.copy()
    for _ in range(max_iter):
        max_change = 0.0
        for j in range(p):
            if z[j] == 0.0:
                continue
            old = beta[j]
            rho = Xc[:, j] @ resid / n + z[j] * old
            new = soft_threshold(rho, l1) / (z[j] + l2)
            if new != old:
                resid -= Xc[:, j] * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            break
    return beta, float(y_mean - x_mean @ beta)


def _loss_derivative(loss, score, target, epsilon):
    if loss == "log":
        return float(expit(score)) - target
    if loss == "hinge":
        return -target if target * score < 1.0 else 0.0
    if loss == "squared":
        return score - target
    diff = score - target
    return float(np.sign(diff)) if abs(diff) > epsilon else 0.0


def _margin_objective(X, y, w, b, loss, l2, epsilon):
    s = X @ w + b
    if loss == "hinge":
        data = np.maximum(0.0, 1.0 - y * s)
    else:
        data = np.maximum(0.0, np.abs(s - y) - epsilon)
    return float(data.mean() + 0.5 * l2 * (w @ w))


def sgd_linear_fit(X, y, loss="log", l2=1e-4, epochs=100, seed=0, eta0=0.1, epsilon=0.1,
                   keep_best=False):
    """Per-sample (sub)gradient descent on ``loss + (l2/2)||w||^2``.

    Step size ``eta_t = eta0 / (1 + eta0 * l2 * t)`` with ``t`` counting samples
    seen. Rows are reshuffled every epoch from ``default_rng(seed)``. For ``log``
    the targets are 0/1; for ``hinge`` they are 0/1 and mapped to -1/+1.

    With ``keep_best`` (hinge and epsilon-insensitive losses only) the
    regularised objective is measured at every epoch end and the lowest-scoring
    iterate is returned, so training never reports a worse model than an
    earlier epoch did. The trajectory itself is unchanged.
    """
    if loss not in LOSSES:
        raise ModelError(f"unknown loss '{loss}'")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if loss == "hinge":
        y = np.where(y > 0, 1.0, -1.0)
    n, p = X.shape
    w = np.zeros(p)
    b = 0.0
    rng = np.random.default_rng(seed)
    t = 0
    track = keep_best and loss in ("hinge", "epsilon_insensitive")
    best = (_margin_objective(X, y, w, b, loss, l2, epsilon), w, b) if track else None
    for _ in range(int(epochs)):
        for i in rng.permutation(n):
            eta = eta0 / (1.0 + eta0 * l2 * t)
            xi = X[i]
            g = _loss_derivative(loss, float(xi @ w + b), y[i], epsilon)
            w = w - eta * (g * xi + l2 * w)
            b -= eta * g
            t += 1
        if track:
            obj = _margin_objective(X, y, w, b, loss, l2, epsilon)
            if obj < best[0]:
                best = (obj, w, b)
    if track:
        _, w, b = best
    return w, float(b)


def hinge_objective(X, y01, w, b, C):
    """``0.5 ||w||^2 + C * sum(hinge)`` with 0/1 targets."""
    ys = np.where(np.asarray(y01) > 0, 1.0, -1.0)
    margins = np.maximum(0.0, 1.0 - ys * (X @ w + b))
    return float(0.5 * w @ w + C * margins.sum())
