"""Shapley-value attributions for fitted supervised models.

The game: ``v(S)`` is the model output averaged over background rows in which
the features of coalition ``S`` are replaced by those of the explained row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from riskpipe.errors import ModelError
from riskpipe.learners import decision_output

EXACT_MAX_FEATURES = 12
BACKGROUND_SIZE = 50


@dataclass
class Attribution:
    base_value: np.ndarray  # (n_outputs,)
    phi: np.ndarray  # (n_outputs, n_features)
    explained_output: np.ndarray  # (n_outputs,)
    outputs: list[str]

    def local_accuracy_gap(self) -> float:
        return float(np.max(np.abs(self.base_value + self.phi.sum(axis=1) - self.explained_output)))


def select_background(X, seed=0, size=BACKGROUND_SIZE):
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n <= size:
        return X.copy()
    rows = np.sort(np.random.default_rng([seed, 7]).choice(n, size, replace=False))
    return X[rows]


def coalition_values(model, x, background, masks):
    """``v`` for every boolean coalition row in ``masks``: shape (n_masks, n_outputs)."""
    masks = np.asarray(masks, dtype=bool)
    nb = background.shape[0]
    values = []
    chunk = max(1, 200_000 // max(1, nb))
    names = None
    for start in range(0, masks.shape[0], chunk):
        m = masks[start:start + chunk]
        data = np.where(m[:, None, :], x[None, None, :], background[None, :, :])
        out, names = decision_output(model, data.reshape(-1, x.size))
        values.append(out.reshape(m.shape[0], nb, -1).mean(axis=1))
    return np.vstack(values), names


def _all_masks(p):
    ints = np.arange(2 ** p)
    return ((ints[:, None] >> np.arange(p)[None, :]) & 1).astype(bool)


def shapley_exact(model, x, background) -> Attribution:
    x = np.asarray(x, dtype=float).ravel()
    background = np.asarray(background, dtype=float)
    p = x.size
    if p > EXACT_MAX_FEATURES:
        raise ModelError(f"exact Shapley enumeration is limited to {EXACT_MAX_FEATURES} features "
                         f"(got {p}); use kernel mode")
    masks = _all_masks(p)
    v, names = coalition_values(model, x, background, masks)
    ints = np.arange(2 ** p)
    sizes = masks.sum(axis=1)
    fact = [math.factorial(i) for i in range(p + 1)]
    weight = np.array([fact[s] * fact[p - s - 1] / fact[p] if s < p else 0.0 for s in range(p + 1)])
    phi = np.zeros((v.shape[1], p))
    for i in range(p):
        without = ints[(ints >> i) & 1 == 0]
        diff = v[without | (1 << i)] - v[without]
        phi[:, i] = (weight[sizes[without]][:, None] * diff).sum(axis=0)
    return Attribution(v[0].copy(), phi, v[-1].copy(), names)


def shapley_kernel_weight(p: int, s: int) -> float:
    """Kernel weight of a coalition of size ``s`` out of ``p`` players (0 < s < p)."""
    return (p - 1) / (math.comb(p, s) * s * (p - s))


def shapley_kernel(model, x, background, n_coalitions=2048, seed=0) -> Attribution:
    """Weighted least squares over coalitions with local accuracy imposed exactly.

    When ``2**p <= n_coalitions`` every coalition is enumerated and weighted by
    the Shapley kernel, which reproduces the exact values. Otherwise
    ``n_coalitions - 2`` coalitions are drawn from ``default_rng(seed)``: a size
    with probability proportional to its total kernel weight, then a uniform
    subset of that size, each draw weighted equally.
    """
    x = np.asarray(x, dtype=float).ravel()
    background = np.asarray(background, dtype=float)
    p = x.size
    ends, names = coalition_values(model, x, background, np.array([np.zeros(p), np.ones(p)], dtype=bool))
    base, full = ends[0], ends[1]
    delta = full - base
    if p == 1:
        return Attribution(base, delta[:, None], full, names)
    if p < 63 and 2 ** p <= n_coalitions:
        masks = _all_masks(p)[1:-1]
        sizes = masks.sum(axis=1)
        w = np.array([shapley_kernel_weight(p, int(s)) for s in sizes])
    else:
        rng = np.random.default_rng(seed)
        size_range = np.arange(1, p)
        size_w = (p - 1) / (size_range * (p - size_range))
        size_w = size_w / size_w.sum()
        n_draw = max(1, int(n_coalitions) - 2)
        sizes = rng.choice(size_range, size=n_draw, p=size_w)
        masks = np.zeros((n_draw, p), dtype=bool)
        for r, s in enumerate(sizes):
            masks[r, rng.choice(p, int(s), replace=False)] = True
        w = np.ones(n_draw)
    v, _ = coalition_values(model, x, background, masks)
    Z = masks.astype(float)
    A = Z[:, :-1] - Z[:, -1:]
    sw = np.sqrt(w)[:, None]
    phi = np.zeros((v.shape[1], p))
    for o in range(v.shape[1]):
        b = (v[:, o] - base[o]) - Z[:, -1] * delta[o]
        sol, *_ = np.linalg.lstsq(A * sw, b * sw[:, 0], rcond=None)
        phi[o, :-1] = sol
        phi[o, -1] = delta[o] - sol.sum()
    return Attribution(base, phi, full, names)


def explain(model, X_rows, background, mode="auto", n_coalitions=2048, seed=0) -> list[Attribution]:
    """Attributions for each row; ``auto`` is exact up to 12 features, kernel beyond."""
    X_rows = np.asarray(X_rows, dtype=float)
    p = X_rows.shape[1]
    if mode == "auto":
        mode = "exact" if p <= EXACT_MAX_FEATURES else "kernel"
        n_coalitions = min(2 ** min(p, 62), n_coalitions)
    out = []
    for r, x in enumerate(X_rows):
        if mode == "exact":
            out.append(shapley_exact(model, x, background))
        elif mode == "kernel":
            out.append(shapley_kernel(model, x, background, n_coalitions, seed=[seed, r]))
        else:
            raise ModelError(f"unknown shap mode '{mode}'")
    return out
