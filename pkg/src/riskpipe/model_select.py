"""Recursive feature elimination and grid-search cross-validation."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from riskpipe import metrics
from riskpipe.errors import ModelError
from riskpipe.learners import FittedModel, ModelSpec, feature_weights, fit, predict
from riskpipe.learners.registry import CLASSIFICATION, CLUSTERING, REGRESSION, WEIGHTED
from riskpipe.resample import SmoteConfig, smote_balance

log = logging.getLogger(__name__)


@dataclass
class RfeResult:
    ranking: dict[str, int]
    retained: list[str]
    importance_trace: list[dict[str, float]] = field(default_factory=list)

    def to_dict(self):
        return {"ranking": self.ranking, "retained": self.retained,
                "importance_trace": self.importance_trace}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["ranking"]), list(d["retained"]), list(d["importance_trace"]))


@dataclass
class CvReport:
    scoring: str
    points: list[dict]
    best_params: dict
    best_score: float

    def to_dict(self):
        return {"scoring": self.scoring, "points": self.points,
                "best_params": self.best_params, "best_score": self.best_score}

    @classmethod
    def from_dict(cls, d):
        return cls(d["scoring"], list(d["points"]), dict(d["best_params"]), d["best_score"])


def kfold_split(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Validation index sets: ``default_rng(seed).permutation(n)`` cut into ``k``
    contiguous chunks, larger chunks first; each chunk is returned sorted."""
    if k < 2:
        raise ModelError(f"need at least 2 folds, got {k}")
    if k > n:
        raise ModelError(f"cannot make {k} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, k)]


# ---------------------------------------------------------------------------
# recursive feature elimination


def _columns(X, cols):
    # C order keeps BLAS results identical to a fit on the unsliced matrix
    return np.ascontiguousarray(X[:, cols])


def rfe(spec: ModelSpec, X, y, n_features_to_select: int, feature_names=None):
    """Drop the least important feature one at a time.

    Importance ties eliminate the highest feature index first. Returns
    ``(RfeResult, FittedModel, retained_column_indices)``; the model is fitted on
    the retained columns only.
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(p)]
    if spec.family not in WEIGHTED:
        raise ModelError(f"rfe needs an algorithm exposing feature weights; '{spec.family}' does not "
                         f"(weighted families: {', '.join(sorted(WEIGHTED))})")
    target = min(int(n_features_to_select), p)
    if target < n_features_to_select:
        log.info("rfe: n_features_to_select=%d exceeds %d available features", n_features_to_select, p)
    surviving = list(range(p))
    eliminated: list[int] = []
    trace = []
    model = fit(spec, _columns(X, surviving), y, [names[i] for i in surviving])
    while len(surviving) > target:
        w = feature_weights(model)
        if w is None:
            raise ModelError(f"'{spec.family}' returned no feature weights")
        trace.append({names[i]: float(v) for i, v in zip(surviving, w)})
        lowest = w.min()
        pos = int(np.flatnonzero(w == lowest)[-1])
        eliminated.append(surviving.pop(pos))
        model = fit(spec, _columns(X, surviving), y, [names[i] for i in surviving])
    ranking = {names[i]: 1 for i in surviving}
    for order, i in enumerate(reversed(eliminated)):
        ranking[names[i]] = order + 2
    ranking = {names[i]: ranking[names[i]] for i in range(p)}
    result = RfeResult(ranking, [names[i] for i in surviving], trace)
    return result, model, np.array(surviving, dtype=np.int64)


# ---------------------------------------------------------------------------
# candidate training shared by plain fits and cross-validation


@dataclass
class Candidate:
    model: FittedModel
    columns: np.ndarray
    rfe: RfeResult | None = None

    def predict(self, X):
        return predict(self.model, _columns(np.asarray(X, dtype=float), self.columns))


def train_candidate(spec: ModelSpec, X, y, feature_names=None, smote: SmoteConfig | None = None,
                    rfe_n: int | None = None) -> Candidate:
    """SMOTE (optional) -> RFE (optional) -> fit, on exactly the rows given."""
    X = np.asarray(X, dtype=float)
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
    if smote is not None:
        X, y = smote_balance(X, y, smote)
    if rfe_n is not None:
        res, model, cols = rfe(spec, X, y, rfe_n, names)
        return Candidate(model, cols, res)
    return Candidate(fit(spec, X, y, names), np.arange(X.shape[1]))


def default_scoring(task: str, y) -> str:
    if task == REGRESSION:
        return "neg_mse"
    return "f1" if np.unique(y).size == 2 else "accuracy"


def score(scoring: str, y_true, y_pred, classes=None) -> float:
    if scoring == "neg_mse":
        return -metrics.regression_metrics(y_true, y_pred)["mse"]
    if scoring == "accuracy":
        return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))
    if scoring == "f1":
        return metrics.classification_metrics(y_true, y_pred, classes=classes)["f1"]
    raise ModelError(f"unknown scoring '{scoring}'")


def grid_points(axes: dict[str, list]) -> list[dict]:
    if not axes:
        return [{}]
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


def grid_search(spec: ModelSpec, axes: dict[str, list], X, y, k: int = 5, scoring: str | None = None,
                seed: int = 0, feature_names=None, smote: SmoteConfig | None = None,
                rfe_n: int | None = None):
    """Exhaustive search over the Cartesian product of ``axes``.

    Every point is scored by k-fold CV (SMOTE and RFE run inside each fold's
    training part); the best mean wins, ties going to the first point in
    declaration order. The winner is refitted on all rows.
    Returns ``(CvReport, Candidate)``.
    """
    if spec.task == CLUSTERING:
        raise ModelError("grid search needs targets; clustering has none")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    scoring = scoring or default_scoring(spec.task, y)
    folds = kfold_split(X.shape[0], k, seed)
    classes = np.unique(y) if spec.task == CLASSIFICATION else None
    report_points = []
    best = None
    for point in grid_points(axes):
        trial = replace(spec, params={**spec.params, **point})
        fold_scores = []
        for val in folds:
            train = np.setdiff1d(np.arange(X.shape[0]), val)
            cand = train_candidate(trial, X[train], y[train], feature_names, smote, rfe_n)
            fold_scores.append(score(scoring, y[val], cand.predict(X[val]), classes))
        mean = float(np.mean(fold_scores))
        report_points.append({"params": point, "fold_scores": fold_scores, "mean": mean,
                              "std": float(np.std(fold_scores))})
        if best is None or mean > best[1]:
            best = (point, mean)
    best_params, best_score = best
    final = train_candidate(replace(spec, params={**spec.params, **best_params}), X, y,
                            feature_names, smote, rfe_n)
    return CvReport(scoring, report_points, best_params, best_score), final
