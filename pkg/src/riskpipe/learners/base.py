"""Family dispatch: fit, predict, class probabilities and feature weights."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy.special import expit, softmax

from riskpipe.errors import ModelError
from riskpipe.learners import cluster, linear, mlp, tree
from riskpipe.learners.registry import (
    CLASSIFICATION,
    CLUSTERING,
    REGRESSION,
    resolve_params,
    support_matrix_text,
    supports,
)


@dataclass(frozen=True)
class ModelSpec:
    family: str
    task: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0


@dataclass
class FittedModel:
    spec: ModelSpec
    learned: dict[str, Any]
    feature_order: list[str]
    classes: list[float] | None = None

    @property
    def n_features(self) -> int:
        return len(self.feature_order)


def _check_matrix(X, what="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ModelError(f"{what} must be a 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise ModelError(f"{what} contains non-finite values")
    return X


def resolve_spec(spec: ModelSpec) -> ModelSpec:
    if not supports(spec.family, spec.task):
        raise ModelError(f"algorithm '{spec.family}' does not support task '{spec.task}' "
                         f"(support matrix: {support_matrix_text()})")
    try:
        params = resolve_params(spec.family, spec.params)
    except (KeyError, ValueError) as exc:
        raise ModelError(str(exc.args[0])) from None
    return replace(spec, params=params)


def fit(spec: ModelSpec, X, y=None, feature_order=None) -> FittedModel:
    spec = resolve_spec(spec)
    X = _check_matrix(X)
    if X.shape[0] == 0:
        raise ModelError("cannot fit on an empty matrix")
    if (y is None) != (spec.task == CLUSTERING):
        raise ModelError("targets are required for supervised tasks and forbidden for clustering")
    names = list(feature_order) if feature_order is not None else [f"x{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ModelError("feature_order length does not match the matrix width")
    p, seed = spec.params, spec.seed
    classes = None
    if spec.task == CLASSIFICATION:
        y = np.asarray(y, dtype=float)
        classes_arr = np.unique(y)
        if classes_arr.size < 2:
            raise ModelError("classification needs at least two classes in the training targets")
        classes = classes_arr.tolist()
        codes = np.searchsorted(classes_arr, y)
        learned = _FIT_CLASSIFY[spec.family](X, codes, len(classes), p, seed)
    elif spec.task == REGRESSION:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != X.shape[0] or not np.all(np.isfinite(y)):
            raise ModelError("regression targets must be finite and match the row count")
        learned = _FIT_REGRESS[spec.family](X, y, p, seed)
    else:
        learned = _FIT_CLUSTER[spec.family](X, p, seed)
    return FittedModel(spec, learned, names, classes)


# ---------------------------------------------------------------------------
# fitting, per family


def _ovr(codes, k, fit_binary):
    if k == 2:
        return [fit_binary((codes == 1).astype(float), 0)]
    return [fit_binary((codes == c).astype(float), c + 1) for c in range(k)]


def _linear_payload(parts):
    return {"coef": np.vstack([w for w, _ in parts]), "intercept": np.array([b for _, b in parts])}


def _fit_sgd_classifier(X, codes, k, p, seed):
    parts = _ovr(codes, k, lambda t, m: linear.sgd_linear_fit(
        X, t, loss=p["loss"], l2=p["l2"], epochs=p["epochs"], seed=[seed, m], eta0=p["eta0"]))
    return _linear_payload(parts)


def _svm_l2(p, n):
    return 1.0 / (float(p["C"]) * n)


def _fit_svm_classifier(X, codes, k, p, seed):
    l2 = _svm_l2(p, X.shape[0])
    parts = _ovr(codes, k, lambda t, m: linear.sgd_linear_fit(
        X, t, loss="hinge", l2=l2, epochs=p["epochs"], seed=[seed, m], eta0=p["eta0"], keep_best=True))
    return _linear_payload(parts)


def _fit_svm_regressor(X, y, p, seed):
    w, b = linear.sgd_linear_fit(X, y, loss="epsilon_insensitive", l2=_svm_l2(p, X.shape[0]),
                                 epochs=p["epochs"], seed=[seed, 0], eta0=p["eta0"],
                                 epsilon=p["epsilon"], keep_best=True)
    return _linear_payload([(w, b)])


def _fit_elastic_net(X, y, p, seed):
    w, b = linear.elastic_net_fit(X, y, p["alpha"], p["l1_ratio"], p["max_iter"], p["tol"])
    return _linear_payload([(w, b)])


def _fit_gb_classifier(X, codes, k, p, seed):
    ensembles = _ovr(codes, k, lambda t, m: tree.gradient_boosting_fit(
        X, t, p["n_estimators"], p["learning_rate"], p["max_depth"], seed=[seed, m], loss="log"))
    return {"ensembles": ensembles}


def _fit_gb_regressor(X, y, p, seed):
    return {"ensembles": [tree.gradient_boosting_fit(
        X, y, p["n_estimators"], p["learning_rate"], p["max_depth"], seed=seed)]}


def _fit_rf_classifier(X, codes, k, p, seed):
    return {"trees": tree.random_forest_fit(X, codes, p["n_estimators"], p["max_depth"],
                                            p["max_features"], p["bootstrap"], seed, n_classes=k)}


def _fit_rf_regressor(X, y, p, seed):
    return {"trees": tree.random_forest_fit(X, y, p["n_estimators"], p["max_depth"],
                                            p["max_features"], p["bootstrap"], seed)}


def _fit_mlp_classifier(X, codes, k, p, seed):
    Y = np.zeros((codes.size, k))
    Y[np.arange(codes.size), codes] = 1.0
    W, b = mlp.mlp_fit(X, Y, p["hidden"], p["activation"], p["lr"], p["epochs"], p["batch"],
                       seed, task=CLASSIFICATION)
    return {"weights": W, "biases": b}


def _fit_mlp_regressor(X, y, p, seed):
    W, b = mlp.mlp_fit(X, y[:, None], p["hidden"], p["activation"], p["lr"], p["epochs"],
                       p["batch"], seed, task=REGRESSION)
    return {"weights": W, "biases": b}


def _fit_knn_classifier(X, codes, k, p, seed):
    return {"X": X.copy(), "y": codes.astype(float)}


def _fit_knn_regressor(X, y, p, seed):
    return {"X": X.copy(), "y": y.copy()}


def _fit_kmeans(X, p, seed):
    res = cluster.kmeans_fit(X, p["n_clusters"], p["n_init"], p["max_iter"], p["tol"], seed)
    return {"centroids": res.centroids, "labels": res.labels.astype(np.int64), "inertia": res.inertia}


def _fit_agglomerative(X, p, seed):
    labels = cluster.agglomerative_fit(X, p["n_clusters"], p["linkage"])
    return {"X": X.copy(), "labels": labels}


def _fit_dbscan(X, p, seed):
    labels, core = cluster.dbscan_fit(X, p["eps"], p["min_samples"])
    return {"X": X.copy(), "labels": labels, "core": core.astype(np.int64)}


_FIT_CLASSIFY = {
    "SGDClassifier": _fit_sgd_classifier,
    "GradientBoosting": _fit_gb_classifier,
    "RandomForest": _fit_rf_classifier,
    "MLP": _fit_mlp_classifier,
    "SVM": _fit_svm_classifier,
    "KNN": _fit_knn_classifier,
}
_FIT_REGRESS = {
    "ElasticNet": _fit_elastic_net,
    "GradientBoosting": _fit_gb_regressor,
    "RandomForest": _fit_rf_regressor,
    "MLP": _fit_mlp_regressor,
    "SVM": _fit_svm_regressor,
    "KNN": _fit_knn_regressor,
}
_FIT_CLUSTER = {
    "KMeans": _fit_kmeans,
    "AggClustering": _fit_agglomerative,
    "DBSCAN": _fit_dbscan,
}


# ---------------------------------------------------------------------------
# prediction


def _linear_scores(m, X):
    return X @ m.learned["coef"].T + m.learned["intercept"]


def _class_codes_from_scores(scores):
    if scores.shape[1] == 1:
        return (scores[:, 0] > 0).astype(np.int64)
    return np.argmax(scores, axis=1)


def _gb_scores(m, X):
    return np.column_stack([tree.boosting_score(e, X) for e in m.learned["ensembles"]])


def _mlp_out(m, X):
    return mlp.mlp_output(m.learned["weights"], m.learned["biases"], X, m.spec.params["activation"])


def _check_predict_input(m, X):
    X = _check_matrix(X)
    if X.shape[1] != m.n_features:
        raise ModelError(f"model expects {m.n_features} feature column(s), got {X.shape[1]}")
    return X


def _class_codes(m, X):
    fam = m.spec.family
    if fam in ("SGDClassifier", "SVM"):
        return _class_codes_from_scores(_linear_scores(m, X))
    proba = predict_proba(m, X)
    return np.argmax(proba, axis=1)


def predict(m: FittedModel, X) -> np.ndarray:
    X = _check_predict_input(m, X)
    fam, task = m.spec.family, m.spec.task
    if task == CLASSIFICATION:
        return np.asarray(m.classes, dtype=float)[_class_codes(m, X)]
    if task == REGRESSION:
        if fam in ("ElasticNet", "SVM"):
            return _linear_scores(m, X)[:, 0]
        if fam == "GradientBoosting":
            return _gb_scores(m, X)[:, 0]
        if fam == "RandomForest":
            return tree.forest_regress(m.learned["trees"], X)
        if fam == "MLP":
            return _mlp_out(m, X)[:, 0]
        if fam == "KNN":
            nn = cluster.nearest_neighbors(m.learned["X"], X, min(m.spec.params["k"], len(m.learned["y"])))
            return m.learned["y"][nn].mean(axis=1)
    if fam == "KMeans":
        return np.argmin(cluster.pairwise_sq_dist(X, m.learned["centroids"]), axis=1).astype(float)
    if fam == "AggClustering":
        nn = cluster.nearest_neighbors(m.learned["X"], X, 1)[:, 0]
        return m.learned["labels"][nn].astype(float)
    if fam == "DBSCAN":
        core = m.learned["core"].astype(bool)
        out = np.full(X.shape[0], -1.0)
        if core.any():
            core_X = m.learned["X"][core]
            core_labels = m.learned["labels"][core]
            d = cluster.pairwise_dist(X, core_X)
            nearest = np.argmin(d, axis=1)
            hit = d[np.arange(X.shape[0]), nearest] <= m.spec.params["eps"]
            out[hit] = core_labels[nearest[hit]]
        return out
    raise ModelError(f"no predictor for {fam}/{task}")


def has_proba(m: FittedModel) -> bool:
    if m.spec.task != CLASSIFICATION:
        return False
    if m.spec.family == "SVM":
        return False
    if m.spec.family == "SGDClassifier" and m.spec.params["loss"] == "hinge":
        return False
    return True


def predict_proba(m: FittedModel, X):
    """Per-class probabilities (columns follow ``m.classes``), or None when the model has none."""
    if m.spec.task != CLASSIFICATION:
        raise ModelError(f"class probabilities are undefined for {m.spec.task} models")
    if not has_proba(m):
        return None
    X = _check_predict_input(m, X)
    fam = m.spec.family
    k = len(m.classes)
    if fam == "SGDClassifier":
        s = _linear_scores(m, X)
        return _binary_or_softmax(s)
    if fam == "GradientBoosting":
        s = _gb_scores(m, X)
        if s.shape[1] == 1:
            p1 = expit(s[:, 0])
            return np.column_stack([1.0 - p1, p1])
        p = expit(s)
        return p / p.sum(axis=1, keepdims=True)
    if fam == "RandomForest":
        return tree.forest_votes(m.learned["trees"], X, k)
    if fam == "MLP":
        return softmax(_mlp_out(m, X), axis=1)
    if fam == "KNN":
        y = m.learned["y"].astype(np.int64)
        kk = min(m.spec.params["k"], y.size)
        nn = cluster.nearest_neighbors(m.learned["X"], X, kk)
        votes = np.zeros((X.shape[0], k))
        for j in range(kk):
            votes[np.arange(X.shape[0]), y[nn[:, j]]] += 1.0
        return votes / kk
    raise ModelError(f"no probability model for {fam}")


def _binary_or_softmax(s):
    if s.shape[1] == 1:
        p1 = expit(s[:, 0])
        return np.column_stack([1.0 - p1, p1])
    return softmax(s, axis=1)


def feature_weights(m: FittedModel):
    """Non-negative per-feature importances, or None for families without them."""
    fam = m.spec.family
    if fam in ("SGDClassifier", "SVM", "ElasticNet"):
        coef = m.learned["coef"]
        if coef.shape[0] == 1:
            return np.abs(coef[0])
        return np.sqrt((coef * coef).sum(axis=0))
    if fam == "RandomForest":
        return tree.normalized_importance(m.learned["trees"], m.n_features)
    if fam == "GradientBoosting":
        trees = [t for e in m.learned["ensembles"] for t in e["trees"]]
        return tree.normalized_importance(trees, m.n_features)
    return None


def decision_output(m: FittedModel, X):
    """Real-valued model output used for attributions, with column names.

    Regression: the prediction. Binary classification: probability of the
    positive (greater) class. Multiclass: one probability column per class.
    Models without probabilities fall back to their decision scores.
    """
    X = _check_predict_input(m, X)
    if m.spec.task == REGRESSION:
        return predict(m, X)[:, None], ["prediction"]
    if m.spec.task != CLASSIFICATION:
        raise ModelError("attributions are only defined for supervised models")
    proba = predict_proba(m, X)
    if proba is None:
        s = _linear_scores(m, X)
        if s.shape[1] == 1:
            return s, [f"score[{m.classes[1]:g}]"]
        return s, [f"score[{c:g}]" for c in m.classes]
    if proba.shape[1] == 2:
        return proba[:, 1:], [f"p[{m.classes[1]:g}]"]
    return proba, [f"p[{c:g}]" for c in m.classes]
