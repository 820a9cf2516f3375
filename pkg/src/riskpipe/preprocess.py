"""Missing-data handling, standardisation and min-max scaling.

Everything is fitted on the training rows only and replayed unchanged on test
and prediction rows: drop -> impute -> standardise/scale -> one-hot.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from riskpipe.errors import DataError, ModelError
from riskpipe.tabular import CATEGORICAL, FEATURE, LABEL, NUMERIC, TabularDataset

log = logging.getLogger(__name__)


@dataclass
class PreprocessState:
    features: list[dict]  # {"name", "kind", "categories"} for every kept feature, dataset order
    dropped_columns: list[str] = field(default_factory=list)
    numeric_impute: dict[str, dict] = field(default_factory=dict)
    categorical_impute: dict[str, dict] = field(default_factory=dict)
    fallback_impute: dict[str, float] = field(default_factory=dict)
    feature_standardize: dict[str, list[float]] = field(default_factory=dict)
    feature_minmax: dict[str, list[float]] = field(default_factory=dict)
    label_transform: dict | None = None
    seed: int = 0

    @property
    def encoded_names(self) -> list[str]:
        names = []
        for f in self.features:
            if f["kind"] == CATEGORICAL:
                names.extend(f"{f['name']}={c}" for c in f["categories"])
            else:
                names.append(f["name"])
        return names

    def to_dict(self) -> dict:
        return {
            "features": self.features,
            "dropped_columns": self.dropped_columns,
            "numeric_impute": self.numeric_impute,
            "categorical_impute": self.categorical_impute,
            "fallback_impute": self.fallback_impute,
            "feature_standardize": self.feature_standardize,
            "feature_minmax": self.feature_minmax,
            "label_transform": self.label_transform,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessState":
        return cls(**d)


@dataclass
class Prepared:
    X: np.ndarray
    names: list[str]
    labels: dict[str, np.ndarray]


def _mode_index(values: np.ndarray, n_categories: int) -> int:
    counts = np.bincount(values.astype(np.int64), minlength=n_categories)
    return int(np.argmax(counts))  # argmax returns the first maximum: lowest index on ties


def fit_preprocess(ds: TabularDataset, ac, seed: int = 0) -> PreprocessState:
    rows = ds.train_rows
    if rows.size == 0:
        raise DataError("cannot fit preprocessing on an empty training partition")
    imp, pp = ac.imputation, ac.preprocessing
    state = PreprocessState(features=[], seed=int(seed))

    kept = []
    for s in ds.by_role(FEATURE):
        col = ds.column(s.name)[rows]
        frac = float(np.mean(np.isnan(col)))
        if frac > imp.perc_nan_to_drop:
            state.dropped_columns.append(s.name)
            log.info("dropping column '%s': %.1f%% missing exceeds threshold %.1f%%",
                     s.name, 100 * frac, 100 * imp.perc_nan_to_drop)
            continue
        kept.append(s)
        state.features.append({"name": s.name, "kind": s.kind, "categories": list(s.categories)})
    if not kept:
        raise DataError("every feature column was dropped by the missing-value threshold")

    numeric = [s.name for s in kept if s.kind == NUMERIC]
    raw = {s.name: ds.column(s.name)[rows] for s in kept}
    means = {}
    for name in numeric:
        obs = raw[name][~np.isnan(raw[name])]
        means[name] = float(np.mean(obs)) if obs.size else 0.0

    for s in kept:
        col = raw[s.name]
        miss = np.isnan(col)
        obs = col[~miss]
        if s.kind == NUMERIC:
            if not miss.any():
                state.fallback_impute[s.name] = means[s.name]
                continue
            if imp.not_categorical == "median":
                state.numeric_impute[s.name] = {"method": "median",
                                                "value": float(np.median(obs)) if obs.size else 0.0}
            elif imp.not_categorical == "regression":
                state.numeric_impute[s.name] = _fit_regression_impute(s.name, numeric, raw, means)
            else:
                state.numeric_impute[s.name] = {"method": "mean", "value": means[s.name]}
        else:
            n_cat = len(s.categories)
            if not miss.any():
                state.fallback_impute[s.name] = float(_mode_index(obs, n_cat)) if obs.size else 0.0
                continue
            if not obs.size:
                state.categorical_impute[s.name] = {"method": "most_frequent", "index": 0}
            elif imp.categorical == "random":
                counts = np.bincount(obs.astype(np.int64), minlength=n_cat)
                state.categorical_impute[s.name] = {"method": "random",
                                                    "probs": (counts / counts.sum()).tolist()}
            else:
                state.categorical_impute[s.name] = {"method": "most_frequent",
                                                    "index": _mode_index(obs, n_cat)}

    # scaling statistics are taken after imputation so they describe what the model sees
    imputed = _impute(state, {n: raw[n] for n in numeric}, rows)
    for name in numeric:
        col = imputed[name]
        if pp.standardization_feature:
            std = float(np.std(col)) if col.size else 0.0
            state.feature_standardize[name] = [float(np.mean(col)) if col.size else 0.0,
                                               std if std > 0 else 1.0]
        elif pp.scaling_feature:
            lo, hi = (float(col.min()), float(col.max())) if col.size else (0.0, 0.0)
            if hi > lo:
                state.feature_minmax[name] = [lo, hi]

    if ac.task == "regression":
        labels = ds.by_role(LABEL)
        if labels and (pp.standardization_label or pp.scaling_label):
            y = ds.column(labels[0].name)[rows]
            y = y[~np.isnan(y)]
            if pp.standardization_label:
                std = float(np.std(y))
                state.label_transform = {"kind": "standardize", "shift": float(np.mean(y)),
                                         "scale": std if std > 0 else 1.0}
            else:
                lo, hi = float(y.min()), float(y.max())
                state.label_transform = {"kind": "minmax", "shift": lo,
                                         "scale": hi - lo if hi > lo else 1.0}
    elif pp.standardization_label or pp.scaling_label:
        log.info("label standardization/scaling only applies to regression; ignored for %s", ac.task)
    return state


def _fit_regression_impute(target, numeric, raw, means):
    predictors = [n for n in numeric if n != target]
    y = raw[target]
    observed = ~np.isnan(y)
    if not predictors or observed.sum() == 0:
        log.info("regression imputation of '%s' has no usable predictors; falling back to mean", target)
        return {"method": "mean", "value": means[target]}
    P = np.column_stack([np.where(np.isnan(raw[p]), means[p], raw[p]) for p in predictors])
    A = np.column_stack([np.ones(int(observed.sum())), P[observed]])
    coef, *_ = np.linalg.lstsq(A, y[observed], rcond=None)
    return {
        "method": "regression",
        "intercept": float(coef[0]),
        "coef": {p: float(c) for p, c in zip(predictors, coef[1:])},
        "predictor_means": {p: means[p] for p in predictors},
    }


def _random_category(seed, col_pos, row, probs):
    u = np.random.default_rng([seed, col_pos, int(row)]).random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return float(min(idx, len(probs) - 1))


def _impute(state: PreprocessState, cols: dict[str, np.ndarray], rows: np.ndarray) -> dict[str, np.ndarray]:
    """Fill NaNs column by column; regression imputation reads raw (pre-imputation) predictors."""
    out = {}
    positions = {f["name"]: i for i, f in enumerate(state.features)}
    for name, col in cols.items():
        miss = np.isnan(col)
        if not miss.any():
            out[name] = col.copy()
            continue
        filled = col.copy()
        rule = state.numeric_impute.get(name) or state.categorical_impute.get(name)
        if rule is None:
            log.info("column '%s' has missing cells unseen during training; using fallback value", name)
            filled[miss] = state.fallback_impute[name]
        elif rule["method"] in ("mean", "median"):
            filled[miss] = rule["value"]
        elif rule["method"] == "most_frequent":
            filled[miss] = rule["index"]
        elif rule["method"] == "random":
            for i in np.flatnonzero(miss):
                filled[i] = _random_category(state.seed, positions[name], rows[i], rule["probs"])
        elif rule["method"] == "regression":
            pred = np.full(col.shape, rule["intercept"])
            for p, c in rule["coef"].items():
                x = cols[p]
                pred = pred + c * np.where(np.isnan(x), rule["predictor_means"][p], x)
            filled[miss] = pred[miss]
        out[name] = filled
    return out


def apply_preprocess(state: PreprocessState, ds: TabularDataset, rows=None) -> Prepared:
    """Transform ``rows`` of ``ds`` (all rows by default) into the model matrix."""
    rows = np.arange(ds.n_rows) if rows is None else np.asarray(rows, dtype=np.int64)
    cols = {}
    for f in state.features:
        if not ds.has(f["name"]):
            raise DataError(f"feature column '{f['name']}' missing from data")
        cols[f["name"]] = ds.column(f["name"])[rows]
    filled = _impute(state, cols, rows)
    blocks = []
    for f in state.features:
        name = f["name"]
        col = filled[name]
        if f["kind"] == CATEGORICAL:
            k = len(f["categories"])
            onehot = np.zeros((rows.size, k))
            if k:
                onehot[np.arange(rows.size), col.astype(np.int64)] = 1.0
            blocks.append(onehot)
            continue
        if name in state.feature_standardize:
            mean, std = state.feature_standardize[name]
            col = (col - mean) / std
        elif name in state.feature_minmax:
            lo, hi = state.feature_minmax[name]
            if hi > lo:
                col = (col - lo) / (hi - lo)
        blocks.append(col[:, None])
    X = np.hstack(blocks) if blocks else np.zeros((rows.size, 0))
    labels = {}
    for s in ds.by_role(LABEL):
        y = ds.column(s.name)[rows].copy()
        if state.label_transform is not None:
            y = (y - state.label_transform["shift"]) / state.label_transform["scale"]
        labels[s.name] = y
    return Prepared(X, state.encoded_names, labels)


def invert_label_transform(state: PreprocessState, predictions, task: str = "regression") -> np.ndarray:
    if task != "regression":
        raise ModelError(f"label transforms exist only for regression, not {task}")
    y = np.asarray(predictions, dtype=float)
    t = state.label_transform
    if t is None:
        return y.copy()
    return y * t["scale"] + t["shift"]


def forward_label_transform(state: PreprocessState, values) -> np.ndarray:
    y = np.asarray(values, dtype=float)
    t = state.label_transform
    if t is None:
        return y.copy()
    return (y - t["shift"]) / t["scale"]


def describe(state: PreprocessState) -> str:
    parts = [f"{len(state.features)} feature(s)"]
    if state.dropped_columns:
        parts.append("dropped " + ", ".join(state.dropped_columns))
    if state.numeric_impute or state.categorical_impute:
        parts.append(f"{len(state.numeric_impute) + len(state.categorical_impute)} imputed")
    if state.label_transform:
        parts.append(f"label {state.label_transform['kind']}")
    return "; ".join(parts)
