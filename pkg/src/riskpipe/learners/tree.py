"""CART trees, random forests and gradient boosting.

A fitted tree is a dict of flat arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``, ``importance``); ``feature == -1`` marks a leaf and a
sample goes left when ``x[feature] <= threshold``.
"""

import math

import numpy as np
from scipy.special import expit

_GAIN_TOL = 1e-12


def _node_impurity(y, classification, n_classes):
    if classification:
        p = np.bincount(y, minlength=n_classes) / y.size
        return 1.0 - float(p @ p)
    return float(np.var(y))


def _leaf_value(y, classification, n_classes):
    if classification:
        return np.bincount(y, minlength=n_classes) / y.size
    return np.array([float(np.mean(y))])


def _feature_split(xs, y, classification, n_classes, parent):
    """Best split along one feature: (gain, threshold) or None if the feature is constant here."""
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    ys = y[order]
    n = xs.size
    valid = np.flatnonzero(xs[:-1] < xs[1:])
    if valid.size == 0:
        return None
    nl = (valid + 1).astype(float)
    nr = n - nl
    if classification:
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), ys] = 1.0
        cum = np.cumsum(onehot, axis=0)[valid]
        right = onehot.sum(axis=0) - cum
        gl = 1.0 - ((cum / nl[:, None]) ** 2).sum(axis=1)
        gr = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gl + nr * gr) / n
    else:
        s1 = np.cumsum(ys)
        s2 = np.cumsum(ys * ys)
        t1, t2 = s1[-1], s2[-1]
        l1, l2 = s1[valid], s2[valid]
        sse_l = np.maximum(l2 - l1 * l1 / nl, 0.0)
        sse_r = np.maximum((t2 - l2) - (t1 - l1) ** 2 / nr, 0.0)
        weighted = (sse_l + sse_r) / n
    gains = parent - weighted
    best = gains.max()
    k = int(np.flatnonzero(gains >= best - _GAIN_TOL * max(1.0, abs(best)))[0])
    i = valid[k]
    return float(gains[k]), 0.5 * (xs[i] + xs[i + 1])


def cart_fit(X, y, max_depth=None, max_features=None, criterion=None, seed=0,
             n_classes=None, rng=None):
    """Grow a greedy binary tree.

    ``y`` holds class indices when ``criterion == "gini"`` and reals for
    ``"variance"``. Split ties prefer the lowest feature index, then the lowest
    threshold. An impure node is split whenever some feature varies in it, even
    at zero gain, so unlimited depth always separates distinct points.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if criterion is None:
        criterion = "gini" if n_classes else "variance"
    classification = criterion == "gini"
    if classification:
        y = np.asarray(y, dtype=np.int64)
        if n_classes is None:
            n_classes = int(y.max()) + 1
    else:
        y = np.asarray(y, dtype=float)
        n_classes = 1
    if rng is None:
        rng = np.random.default_rng(seed)
    depth_cap = math.inf if max_depth is None else max_depth
    n_sub = p if max_features is None else max(1, min(p, int(max_features)))

    feature, threshold, left, right, value = [], [], [], [], []
    importance = np.zeros(p)

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(_leaf_value(y[idx], classification, n_classes))
        return len(feature) - 1

    root_idx = np.arange(n)
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        if depth >= depth_cap or idx.size < 2:
            continue
        if np.all(ys == ys[0]):
            continue
        parent = _node_impurity(ys, classification, n_classes)
        if n_sub < p:
            drawn = np.sort(rng.choice(p, n_sub, replace=False))
            rest = np.setdiff1d(np.arange(p), drawn)
            candidate_sets = [drawn, rest]
        else:
            candidate_sets = [np.arange(p)]
        best = None
        for feats in candidate_sets:
            for f in feats:
                res = _feature_split(X[idx, f], ys, classification, n_classes, parent)
                if res is None:
                    continue
                gain, thr = res
                if best is None or gain > best[0] + _GAIN_TOL * max(1.0, abs(best[0])):
                    best = (gain, int(f), thr)
            if best is not None:
                break
        if best is None:
            continue
        gain, f, thr = best
        go_left = X[idx, f] <= thr
        importance[f] += idx.size / n * max(gain, 0.0)
        feature[node] = f
        threshold[node] = thr
        li = new_node(idx[go_left])
        ri = new_node(idx[~go_left])
        left[node], right[node] = li, ri
        # right pushed first so the left subtree is expanded first
        stack.append((ri, idx[~go_left], depth + 1))
        stack.append((li, idx[go_left], depth + 1))

    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=float),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": np.vstack(value),
        "importance": importance,
    }


def tree_apply(tree, X):
    """Leaf index reached by every row."""
    X = np.asarray(X, dtype=float)
    node = np.zeros(X.shape[0], dtype=np.int64)
    feature, threshold = tree["feature"], tree["threshold"]
    left, right = tree["left"], tree["right"]
    active = feature[node] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        nd = node[rows]
        f = feature[nd]
        go_left = X[rows, f] <= threshold[nd]
        node[rows] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


def tree_predict_value(tree, X):
    return tree["value"][tree_apply(tree, X)]


def normalized_importance(trees, p):
    total = np.zeros(p)
    for t in trees:
        total += t["importance"]
    s = total.sum()
    return total / s if s > 0 else total


# ---------------------------------------------------------------------------
# random forest


def resolve_max_features(max_features, p, classification):
    if max_features in (None, "auto"):
        return max(1, int(math.sqrt(p))) if classification else max(1, p // 3)
    if max_features == "sqrt":
        return max(1, int(math.sqrt(p)))
    if max_features == "all":
        return p
    if isinstance(max_features, float) and 0 < max_features <= 1:
        return max(1, int(max_features * p))
    return max(1, min(p, int(max_features)))


def random_forest_fit(X, y, n_estimators=100, max_depth=None, max_features="auto", bootstrap=True,
                      seed=0, n_classes=None):
    """Tree ``t`` uses ``default_rng([seed, t])`` for its bootstrap draw and feature sampling."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    classification = n_classes is not None
    m = resolve_max_features(max_features, p, classification)
    trees = []
    for t in range(int(n_estimators)):
        rng = np.random.default_rng([seed, t])
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        trees.append(cart_fit(X[idx], np.asarray(y)[idx], max_depth=max_depth, max_features=m,
                              criterion="gini" if classification else "variance",
                              n_classes=n_classes, rng=rng))
    return trees


def forest_votes(trees, X, n_classes):
    votes = np.zeros((np.asarray(X).shape[0], n_classes))
    for t in trees:
        cls = np.argmax(tree_predict_value(t, X), axis=1)
        votes[np.arange(cls.size), cls] += 1.0
    return votes / len(trees)


def forest_regress(trees, X):
    return np.mean([tree_predict_value(t, X)[:, 0] for t in trees], axis=0)


# ---------------------------------------------------------------------------
# gradient boosting


def gradient_boosting_fit(X, y, n_estimators=100, learning_rate=0.1, max_depth=3, seed=0,
                          loss="squared"):
    """Stagewise additive trees on the negative gradient.

    ``loss="squared"`` fits residuals from a mean start; ``loss="log"`` takes 0/1
    targets, starts from the log-odds and fits ``y - sigmoid(score)``.
    Returns ``{"init": float, "trees": [...]}``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if loss == "log":
        prior = min(max(float(y.mean()), 1e-15), 1 - 1e-15)
        init = math.log(prior / (1 - prior))
    else:
        init = float(y.mean())
    score = np.full(y.size, init)
    trees = []
    rng = np.random.default_rng(seed)
    for _ in range(int(n_estimators)):
        target = y - expit(score) if loss == "log" else y - score
        tree = cart_fit(X, target, max_depth=max_depth, criterion="variance", rng=rng)
        score = score + learning_rate * tree_predict_value(tree, X)[:, 0]
        trees.append(tree)
    return {"init": init, "trees": trees, "learning_rate": float(learning_rate)}


def boosting_score(model, X, stages=None):
    X = np.asarray(X, dtype=float)
    score = np.full(X.shape[0], model["init"])
    for tree in model["trees"][:stages]:
        score = score + model["learning_rate"] * tree_predict_value(tree, X)[:, 0]
    return score


def staged_scores(model, X):
    X = np.asarray(X, dtype=float)
    score = np.full(X.shape[0], model["init"])
    yield score.copy()
    for tree in model["trees"]:
        score = score + model["learning_rate"] * tree_predict_value(tree, X)[:, 0]
        yield score.copy()
