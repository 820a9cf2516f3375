"""SMOTE oversampling of minority classes up to the majority count."""

import logging
from dataclasses import dataclass

import numpy as np

from riskpipe.errors import DataError
from riskpipe.learners.cluster import pairwise_dist

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    seed: int = 0
    target: str = "match-majority"


def same_class_neighbors(Xc, k):
    """For each row of ``Xc``, its ``k`` nearest other rows (ties -> lower index)."""
    d = pairwise_dist(Xc, Xc)
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def smote_balance(X, y, cfg: SmoteConfig):
    """Oversample every minority class to the majority count; returns ``(X_aug, y_aug)``."""
    X_aug, y_aug, _ = smote_with_origin(X, y, cfg)
    return X_aug, y_aug


def smote_with_origin(X, y, cfg: SmoteConfig):
    """Return ``(X_aug, y_aug, synthetic_origin)``.

    Original rows come first, unchanged. Synthetic sample ``j`` of class ``c``
    (classes in sorted order) draws from ``default_rng([seed, c_index, j])``: a
    uniformly chosen minority row ``x``, one of its ``k`` nearest same-class
    neighbours ``x_nn``, and ``lam ~ U[0, 1)``; the sample is
    ``x + lam * (x_nn - x)``. ``synthetic_origin`` records ``(row, neighbour, lam)``
    using indices into the input arrays.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise DataError("SMOTE needs at least two classes")
    target = int(counts.max())
    new_X, new_y, origin = [], [], []
    for ci, (cls, count) in enumerate(zip(classes, counts)):
        need = target - int(count)
        if need == 0:
            continue
        if count < 2:
            raise DataError(f"SMOTE cannot oversample class {cls:g}: it has a single sample")
        members = np.flatnonzero(y == cls)
        k = cfg.k_neighbors
        if k > count - 1:
            log.info("smote: k_neighbors=%d clamped to %d for class %g", k, count - 1, cls)
            k = int(count - 1)
        nn = same_class_neighbors(X[members], k)
        for j in range(need):
            rng = np.random.default_rng([cfg.seed, ci, j])
            a = int(rng.integers(count))
            b = int(nn[a, rng.integers(k)])
            lam = float(rng.random())
            xa, xb = X[members[a]], X[members[b]]
            new_X.append(xa + lam * (xb - xa))
            new_y.append(cls)
            origin.append((int(members[a]), int(members[b]), lam))
    if not new_X:
        return X.copy(), y.copy(), []
    return np.vstack([X, np.array(new_X)]), np.concatenate([y, new_y]), origin
