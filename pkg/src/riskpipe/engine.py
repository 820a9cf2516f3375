"""Training and prediction runs: stage orchestration, result documents, logs.

A training run reads the table, optionally splits it, fits preprocessing on
the training rows, trains the configured model and writes three files:
``<prefix>_<run>_training.json``, ``<prefix>_<run>_model.json`` and
``<prefix>_<run>.log``. A prediction run resolves a stored bundle by its
description and writes ``<prefix>_<run>_predict.json`` plus a per-row
``<prefix>_<run>_predictions.csv``.
"""

from __future__ import annotations

import contextlib
import contextvars
import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from riskpipe import metrics
from riskpipe.config import (
    AlgoConfig,
    DataConfig,
    PredictConfig,
    algo_config_to_document,
    data_config_to_document,
    validate_cross,
)
from riskpipe.errors import DataError, ModelError, RiskpipeError
from riskpipe.explain import explain, select_background
from riskpipe.learners import ModelSpec, feature_weights, predict, predict_proba
from riskpipe.learners.base import has_proba
from riskpipe.learners.registry import CLASSIFICATION, CLUSTERING, REGRESSION
from riskpipe.model_select import grid_search, train_candidate
from riskpipe.persist import ModelBundle, find_bundle, load_bundle, save_bundle
from riskpipe.preprocess import apply_preprocess, fit_preprocess, invert_label_transform
from riskpipe.resample import SmoteConfig
from riskpipe.tabular import (
    CATEGORICAL,
    ID,
    LABEL,
    TabularDataset,
    freeze_categories,
    read_csv_dataset,
    read_predict_data,
    split_dataset,
)

log = logging.getLogger(__name__)

INTERNAL = "internal"
_stage = contextvars.ContextVar("riskpipe_stage", default="-")


# ---------------------------------------------------------------------------
# logging


class _StageFilter(logging.Filter):
    def filter(self, record):
        record.stage = _stage.get()
        return True


class _IsoFormatter(logging.Formatter):
    def formatTime(self, record, datefmt=None):
        return datetime.fromtimestamp(record.created, timezone.utc).isoformat(timespec="milliseconds")


LOG_FORMAT = "%(asctime)s %(levelname)s %(stage)s %(message)s"


@contextlib.contextmanager
def run_log(path):
    """Route every ``riskpipe`` logger to ``path`` for the duration of a run."""
    if path is None:
        yield
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    handler.setFormatter(_IsoFormatter(LOG_FORMAT))
    handler.addFilter(_StageFilter())
    root = logging.getLogger("riskpipe")
    root.addHandler(handler)
    if root.level == logging.NOTSET:
        root.setLevel(logging.INFO)
    try:
        yield
    finally:
        root.removeHandler(handler)
        handler.close()


@contextlib.contextmanager
def stage(name, run_id):
    token = _stage.set(name)
    try:
        yield
    except Exception as exc:
        if isinstance(exc, RiskpipeError) and exc.stage is None:
            exc.stage = name
        log.error("stage %s failed (run_id %s): %s", name, run_id, exc)
        raise
    finally:
        _stage.reset(token)


# ---------------------------------------------------------------------------
# results


@dataclass
class RunResult:
    """A result document plus in-memory details used for reporting figures."""

    phase: str  # "training" or "predict"
    document: dict
    details: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return self.document


@dataclass
class Predictions:
    id_column: str
    ids: list[str]
    values: np.ndarray
    text: list[str]


def results_schema() -> dict:
    text = resources.files("riskpipe").joinpath("schemas/results.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_result(doc: dict) -> None:
    try:
        jsonschema.validate(doc, results_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelError(f"result document violates the results schema at {where}: {exc.message}") from None


def result_text(doc: dict) -> str:
    return json.dumps(doc, indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def _write_text(path: Path, text: str) -> Path:
    if path.exists():
        log.info("overwriting existing %s", path.name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_results(result: RunResult, cfg, directory) -> Path:
    """Write ``<prefix>_<run>_training.json`` or ``<prefix>_<run>_predict.json``."""
    validate_result(result.document)
    suffix = "training" if result.phase == "training" else "predict"
    os.makedirs(directory, exist_ok=True)
    return _write_text(Path(directory) / f"{cfg.stem}_{suffix}.json", result_text(result.document))


# ---------------------------------------------------------------------------
# metric blocks


def _label_text(schema, code: float) -> str:
    if schema is not None and schema.kind == CATEGORICAL:
        return schema.categories[int(code)]
    return format(float(code), ".17g")


def _silhouette(X, labels, block):
    try:
        block["Silhouette"] = metrics.silhouette_score(X, labels)
    except ModelError:
        block["Silhouette"] = 0.0
        block["degenerate"] = ["Silhouette"]


def clustering_blocks(X, assigned, label_columns: dict[str, np.ndarray]) -> dict:
    """One block per label column (external indices + silhouette), else ``internal``."""
    out = {}
    for name, truth in label_columns.items():
        keep = ~np.isnan(truth)
        if not keep.any():
            continue
        block = metrics.clustering_external_metrics(truth[keep], assigned[keep])
        _silhouette(X, assigned, block)
        out[name] = block
    if not out:
        block = {}
        _silhouette(X, assigned, block)
        out[INTERNAL] = block
    return out


def supervised_block(task, y_true, y_pred, proba=None, classes=None, label_schema=None) -> dict:
    if task == REGRESSION:
        return metrics.regression_metrics(y_true, y_pred)
    cls = None
    if classes is not None:
        cls = np.union1d(np.asarray(classes, dtype=float), np.union1d(y_true, y_pred))
        if proba is not None and cls.size != len(classes):
            proba = None  # an unseen class has no probability column
    block = metrics.classification_metrics(y_true, y_pred, proba, cls)
    if "positive_class" in block:
        block["positive_class"] = _label_text(label_schema, block["positive_class"])
    return block


# ---------------------------------------------------------------------------
# shared prediction path


def _model_columns(bundle_or_names, model) -> np.ndarray:
    names = list(bundle_or_names)
    pos = {n: i for i, n in enumerate(names)}
    try:
        return np.array([pos[n] for n in model.feature_order], dtype=np.int64)
    except KeyError as exc:
        raise ModelError(f"model feature '{exc.args[0]}' not produced by preprocessing") from None


def predict_rows(bundle: ModelBundle, ds: TabularDataset, rows=None):
    """Final-unit predictions for ``rows`` of ``ds`` plus the model matrix used."""
    prepared = apply_preprocess(bundle.preprocess, ds, rows)
    X = prepared.X[:, _model_columns(prepared.names, bundle.model)]
    raw = predict(bundle.model, X)
    if bundle.task == REGRESSION:
        raw = invert_label_transform(bundle.preprocess, raw, REGRESSION)
    return raw, X


def _shap_document(model, X_explain, X_background, row_ids, ac: AlgoConfig, seed):
    background = select_background(X_background, seed)
    attributions = explain(model, X_explain, background, ac.shap.mode, ac.shap.n_coalitions, seed)
    return {
        "feature_order": list(model.feature_order),
        "outputs": list(attributions[0].outputs) if attributions else [],
        "row_ids": list(row_ids),
        "base_values": [a.base_value.tolist() for a in attributions],
        "values": [a.phi.tolist() for a in attributions],
    }


# ---------------------------------------------------------------------------
# training


def run_training(dc: DataConfig, ac: AlgoConfig, data_path, out_dir=None, seed=None):
    """Train per configuration. Returns ``(ModelBundle, RunResult)``; writes files when ``out_dir`` is set."""
    if seed is not None:
        dc = replace(dc, seed=int(seed))
    log_path = Path(out_dir) / f"{dc.stem}.log" if out_dir is not None else None
    with run_log(log_path):
        with stage("configure", dc.run_id):
            validate_cross(dc, ac)
            log.info("run %s: %s/%s on %s (seed %d)", dc.run_id, ac.algorithm_name, ac.task,
                     data_path, dc.seed)
        bundle, result = _train(dc, ac, data_path)
        if out_dir is not None:
            with stage("persist", dc.run_id):
                save_bundle(bundle, out_dir)
                path = write_results(result, dc, out_dir)
                log.info("wrote %s and %s_model.json", path.name, dc.stem)
    return bundle, result


def _train(dc: DataConfig, ac: AlgoConfig, data_path):
    run_id, seed = dc.run_id, dc.seed
    with stage("read", run_id):
        ds = read_csv_dataset(data_path, dc)
        log.info("read %d rows x %d columns", ds.n_rows, len(ds.schemas))
    if dc.phase == "training_predict":
        with stage("split", run_id):
            ds = split_dataset(ds, dc)
            log.info("split: %d train / %d test rows", ds.train_rows.size, ds.test_rows.size)
    ds = freeze_categories(ds)

    label = dc.labels[0] if ac.task != CLUSTERING else None
    label_schema = ds.schema(label) if label else None
    with stage("preprocess", run_id):
        if label_schema is not None and ac.task == REGRESSION and label_schema.kind == CATEGORICAL:
            raise DataError(f"regression label '{label}' holds non-numeric values")
        state = fit_preprocess(ds, ac, seed)
        train = apply_preprocess(state, ds, ds.train_rows)
        log.info("preprocessing: %d encoded feature(s)", train.X.shape[1])

    spec = ModelSpec(ac.algorithm_name, ac.task, ac.fixed_params, seed)
    cv = None
    with stage("train", run_id):
        if ac.task == CLUSTERING:
            if ac.grid_axes:
                raise ModelError("grid search needs targets; clustering parameters must be scalars")
            cand = train_candidate(spec, train.X, None, train.names)
        else:
            y = train.labels[label]
            fit_rows = ~np.isnan(y)
            if not fit_rows.all():
                log.info("excluding %d training row(s) with missing label '%s'",
                         int((~fit_rows).sum()), label)
            X_fit, y_fit = train.X[fit_rows], y[fit_rows]
            smote = SmoteConfig(ac.smote.k_neighbors, seed) if ac.smote.enabled else None
            rfe_n = ac.rfe.n_features_to_select if ac.rfe.enabled else None
            if ac.grid_axes:
                cv, cand = grid_search(spec, ac.grid_axes, X_fit, y_fit, ac.cv_folds, seed=seed,
                                       feature_names=train.names, smote=smote, rfe_n=rfe_n)
                log.info("grid search: best %s = %.6g with %s", cv.scoring, cv.best_score, cv.best_params)
            else:
                cand = train_candidate(spec, X_fit, y_fit, train.names, smote, rfe_n)
        model = cand.model
        log.info("fitted %s on %d feature(s)", model.spec.family, model.n_features)

    bundle = ModelBundle(
        description=ac.description,
        run_id=dc.run_id,
        seed=seed,
        data_config=data_config_to_document(dc),
        algo_config=algo_config_to_document(ac),
        task=ac.task,
        label=label,
        schemas=list(ds.schemas),
        preprocess=state,
        model=model,
        training_rows=ds.train_rows,
        training_predictions=np.zeros(0),
        rfe=cand.rfe,
        cv=cv,
    )

    with stage("evaluate", run_id):
        train_pred, X_train = predict_rows(bundle, ds, ds.train_rows)
        bundle.training_predictions = train_pred
        details = {"task": ac.task, "label": label, "label_schema": label_schema}
        if ac.task == CLUSTERING:
            assigned = _fitted_clusters(model, X_train)
            labels = {s.name: ds.column(s.name)[ds.train_rows] for s in ds.by_role(LABEL)}
            block = clustering_blocks(X_train, assigned, labels)
            details.update(X=X_train, assigned=assigned)
        else:
            block = {label: _supervised_eval(bundle, ds, ds.train_rows, train_pred, X_train, label_schema)}
            details.update(y_true=ds.column(label)[ds.train_rows], y_pred=train_pred)
        bundle.metrics_training = block
        document = {"config_data": {"metrics_training": block}, "description": ac.description}

        X_test = None
        if ds.test_rows.size:
            test_pred, X_test = predict_rows(bundle, ds, ds.test_rows)
            if ac.task == CLUSTERING:
                labels = {s.name: ds.column(s.name)[ds.test_rows] for s in ds.by_role(LABEL)}
                document["testing_set"] = clustering_blocks(X_test, test_pred, labels)
            else:
                document["testing_set"] = {
                    label: _supervised_eval(bundle, ds, ds.test_rows, test_pred, X_test, label_schema)}
                details.update(y_test_true=ds.column(label)[ds.test_rows], y_test_pred=test_pred)

        weights = feature_weights(model)
        if weights is not None:
            document["feature_importances"] = {n: float(w) for n, w in zip(model.feature_order, weights)}
            details["importances"] = document["feature_importances"]
        if cand.rfe is not None:
            document["rfe"] = cand.rfe.to_dict()
        if cv is not None:
            document["cv_report"] = cv.to_dict()

    if ac.shap.enabled:
        with stage("explain", run_id):
            rows = ds.test_rows if ds.test_rows.size else ds.train_rows
            X_rows = X_test if ds.test_rows.size else X_train
            take = min(ac.shap.max_rows, rows.size)
            document["shap_values"] = _shap_document(model, X_rows[:take], X_train,
                                                     ds.row_ids(rows[:take]), ac, seed)
            log.info("shap: explained %d row(s)", take)

    return bundle, RunResult("training", document, details)


def _fitted_clusters(model, X_train):
    labels = model.learned.get("labels")
    if labels is not None and np.asarray(labels).shape[0] == X_train.shape[0]:
        return np.asarray(labels, dtype=float)
    return predict(model, X_train)


def _supervised_eval(bundle, ds, rows, pred, X, label_schema):
    truth = ds.column(bundle.label)[rows]
    keep = ~np.isnan(truth)
    if not keep.any():
        raise DataError(f"no rows with a value for label '{bundle.label}' to evaluate")
    proba = None
    model = bundle.model
    if bundle.task == CLASSIFICATION and has_proba(model):
        proba = predict_proba(model, X[keep])
    return supervised_block(bundle.task, truth[keep], pred[keep], proba, model.classes, label_schema)


# ---------------------------------------------------------------------------
# prediction with a stored bundle


def resolve_bundle(bundle_dir, description: str) -> ModelBundle:
    return load_bundle(find_bundle(bundle_dir, description))


def run_predict_pretrained(pc: PredictConfig, data_path, bundle_dir, out_dir=None):
    """Predict with the newest bundle matching ``pc.description``.

    Returns ``(Predictions, RunResult)``; writes the predictions table and the
    result document when ``out_dir`` is set.
    """
    log_path = Path(out_dir) / f"{pc.stem}.log" if out_dir is not None else None
    with run_log(log_path):
        run_id = pc.run_id
        with stage("resolve", run_id):
            bundle = resolve_bundle(bundle_dir, pc.description)
            log.info("using bundle run %s (%s/%s)", bundle.run_id, bundle.model.spec.family, bundle.task)
        with stage("read", run_id):
            ds = read_predict_data(data_path, bundle.schemas, pc.dataset_format)
            log.info("read %d rows", ds.n_rows)
        with stage("predict", run_id):
            pred, X = predict_rows(bundle, ds)
            label_schema = next((s for s in bundle.schemas if s.name == bundle.label), None)
            text = [_prediction_text(bundle, label_schema, v) for v in pred]
            id_schema = next((s for s in bundle.schemas if s.role == ID), None)
            id_column = id_schema.name if id_schema is not None and ds.has(id_schema.name) else "row"
            predictions = Predictions(id_column, ds.row_ids(), pred, text)
        with stage("evaluate", run_id):
            details = {"task": bundle.task, "label": bundle.label, "label_schema": label_schema}
            if bundle.task == CLUSTERING:
                labels = {s.name: ds.column(s.name) for s in ds.by_role(LABEL)}
                testing = clustering_blocks(X, pred, labels)
                details.update(X=X, assigned=pred)
            elif ds.has(bundle.label) and not np.all(np.isnan(ds.column(bundle.label))):
                rows = np.arange(ds.n_rows)
                testing = {bundle.label: _supervised_eval(bundle, ds, rows, pred, X, label_schema)}
                details.update(y_test_true=ds.column(bundle.label), y_test_pred=pred)
            else:
                log.info("no label column in prediction data; metrics omitted")
                testing = {}
        result = RunResult("predict", {"testing_set": testing}, details)
        if out_dir is not None:
            with stage("persist", run_id):
                write_predictions(predictions, pc, out_dir)
                path = write_results(result, pc, out_dir)
                log.info("wrote %s", path.name)
    return predictions, result


def _prediction_text(bundle, label_schema, value) -> str:
    if bundle.task == CLUSTERING:
        return str(int(value))
    if bundle.task == CLASSIFICATION:
        return _label_text(label_schema, value)
    return format(float(value), ".17g")


def write_predictions(pred: Predictions, cfg, directory) -> Path:
    os.makedirs(directory, exist_ok=True)
    path = Path(directory) / f"{cfg.stem}_predictions.csv"
    if path.exists():
        log.info("overwriting existing %s", path.name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([pred.id_column, "prediction"])
        for i, t in zip(pred.ids, pred.text):
            w.writerow([i, t])
    return path


def read_predictions(path) -> list[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [tuple(r) for r in rows[1:]]


def bundle_summary(bundle: ModelBundle) -> str:
    """Human-readable description of a stored bundle."""
    m = bundle.model
    lines = [
        f"description:   {bundle.description}",
        f"run_id:        {bundle.run_id}",
        f"family:        {m.spec.family}",
        f"task:          {bundle.task}",
        f"label:         {bundle.label or '-'}",
        f"seed:          {bundle.seed}",
        "params:        " + ", ".join(f"{k}={v}" for k, v in sorted(m.spec.params.items())),
        f"features ({m.n_features}): " + ", ".join(m.feature_order),
    ]
    if m.classes is not None:
        schema = next((s for s in bundle.schemas if s.name == bundle.label), None)
        lines.append("classes:       " + ", ".join(_label_text(schema, c) for c in m.classes))
    lines.append("training metrics:")
    for key, block in bundle.metrics_training.items():
        vals = ", ".join(f"{k}={v:.6g}" for k, v in block.items() if isinstance(v, float) and math.isfinite(v))
        lines.append(f"  {key}: {vals}")
    return "\n".join(lines)
