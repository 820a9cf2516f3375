"""Parsing and validation of the three JSON configuration documents.

Field names follow the published document layout exactly, including the
``data_inputation`` spelling and the ``PatientID`` capitalisation. Keys that
are unknown, or that start with ``_comment``, are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from riskpipe.errors import ConfigError
from riskpipe.learners import registry

DATASET_TYPES = ("point-in-time",)
DATASET_FORMATS = ("csv", "xlsx")
DATA_PHASES = ("training", "training_predict")
SPLIT_TYPES = ("random", "sequential")
CATEGORICAL_IMPUTE = ("random", "most_frequent")
NUMERIC_IMPUTE = ("mean", "median", "regression")
SHAP_MODES = ("exact", "kernel", "auto")
RESERVED_BLOCKS = ("preprocessing", "data_inputation", "rfe", "smote", "shap", "cv_folds")

_MISSING = object()


@dataclass(frozen=True)
class DataConfig:
    log_prefix: str
    run_id: int
    dataset_name: str
    dataset_type: str
    dataset_format: str
    patient_id: str
    labels: tuple[str, ...]
    phase: str
    group: str = ""
    time: str = ""
    features2drop: tuple[str, ...] = ()
    categorical_features: tuple[str, ...] = ()
    split_percentage: int | None = None
    split_type: str | None = None
    seed: int = 0

    @property
    def stem(self):
        return f"{self.log_prefix}_{self.run_id}"


@dataclass(frozen=True)
class Preprocessing:
    standardization_feature: bool = False
    standardization_label: bool = False
    scaling_feature: bool = False
    scaling_label: bool = False


@dataclass(frozen=True)
class Imputation:
    perc_nan_to_drop: float = 0.5
    categorical: str = "most_frequent"
    not_categorical: str = "mean"


@dataclass(frozen=True)
class RfeOptions:
    enabled: bool = False
    n_features_to_select: int = 1


@dataclass(frozen=True)
class SmoteOptions:
    enabled: bool = False
    k_neighbors: int = 5


@dataclass(frozen=True)
class ShapOptions:
    enabled: bool = False
    mode: str = "auto"
    max_rows: int = 100
    n_coalitions: int = 2048


@dataclass(frozen=True)
class AlgoConfig:
    config_name: str
    description: str
    task: str
    algorithm_name: str
    algorithm_params: dict[str, Any]
    preprocessing: Preprocessing = field(default_factory=Preprocessing)
    imputation: Imputation = field(default_factory=Imputation)
    rfe: RfeOptions = field(default_factory=RfeOptions)
    smote: SmoteOptions = field(default_factory=SmoteOptions)
    shap: ShapOptions = field(default_factory=ShapOptions)
    cv_folds: int = 5
    phase: str = "training"

    @property
    def grid_axes(self) -> dict[str, list]:
        """Parameters given as sequences; each one is a grid-search axis."""
        return {k: list(v) for k, v in self.algorithm_params.items() if isinstance(v, list)}

    @property
    def fixed_params(self) -> dict[str, Any]:
        return {k: v for k, v in self.algorithm_params.items() if not isinstance(v, list)}


@dataclass(frozen=True)
class PredictConfig:
    log_prefix: str
    run_id: int
    dataset_name: str
    dataset_type: str
    dataset_format: str
    description: str

    @property
    def stem(self):
        return f"{self.log_prefix}_{self.run_id}"


# ---------------------------------------------------------------------------
# low-level helpers


def _strip_trailing_commas(text: str) -> str:
    """Blank out commas that directly precede ``}`` or ``]`` outside strings.

    Character offsets are preserved so decoder error positions stay valid.
    """
    out = list(text)
    in_string = False
    escape = False
    pending = None
    for i, ch in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
            pending = None
        elif ch == ",":
            pending = i
        elif ch in "}]":
            if pending is not None:
                out[pending] = " "
            pending = None
        elif not ch.isspace():
            pending = None
    return "".join(out)


def load_document(document: str | bytes) -> Any:
    """Decode a JSON configuration document; duplicate keys keep the last value."""
    if isinstance(document, (bytes, bytearray)):
        try:
            text = bytes(document).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"document is not valid UTF-8 (byte offset {exc.start})") from None
    else:
        text = document
    if text.startswith("﻿"):
        text = text[1:]
    try:
        return json.loads(_strip_trailing_commas(text))
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ConfigError(f"malformed JSON at byte offset {offset}: {exc.msg}") from None
    except RecursionError:
        raise ConfigError("malformed JSON: nesting too deep") from None


class _Reader:
    """Collects every violation found while pulling typed fields out of a mapping."""

    def __init__(self):
        self.errors: list[str] = []

    def get(self, obj, path, kind, default=_MISSING, choices=None):
        cur = obj
        for part in path.split("."):
            if not isinstance(cur, dict) or part not in cur:
                if default is _MISSING:
                    self.errors.append(f"missing required field '{path}'")
                return None if default is _MISSING else default
            cur = cur[part]
        value = self._coerce(path, cur, kind)
        if value is None:
            return None if default is _MISSING else default
        if choices is not None and value not in choices:
            self.errors.append(f"field '{path}' must be one of {{{', '.join(choices)}}}; got {value!r}")
            return None if default is _MISSING else default
        return value

    def _coerce(self, path, value, kind):
        if kind == "str":
            if isinstance(value, str):
                return value
        elif kind == "int":
            if isinstance(value, int) and not isinstance(value, bool):
                return value
            if isinstance(value, float) and value.is_integer():
                return int(value)
        elif kind == "real":
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return float(value)
        elif kind == "bool":
            if isinstance(value, bool):
                return value
        elif kind == "strlist":
            if isinstance(value, list) and all(isinstance(v, str) for v in value):
                return tuple(value)
        self.errors.append(f"field '{path}' has wrong type: expected {kind}, got {type(value).__name__}")
        return None

    def fail(self, message):
        self.errors.append(message)

    def raise_if_errors(self, what):
        if self.errors:
            raise ConfigError(f"invalid {what}: " + "; ".join(self.errors), self.errors)


def _require_object(doc, what):
    if not isinstance(doc, dict):
        raise ConfigError(f"invalid {what}: top level must be a JSON object")
    return doc


# ---------------------------------------------------------------------------
# data configuration


def parse_data_config(document: str | bytes) -> DataConfig:
    doc = _require_object(load_document(document), "data configuration")
    r = _Reader()
    values = dict(
        log_prefix=r.get(doc, "services.log_prefix", "str"),
        run_id=r.get(doc, "runtime.run_id", "int"),
        dataset_name=r.get(doc, "dataset.name", "str"),
        dataset_type=r.get(doc, "dataset.type", "str", choices=DATASET_TYPES),
        dataset_format=r.get(doc, "dataset.format", "str", choices=DATASET_FORMATS),
        patient_id=r.get(doc, "PatientID", "str"),
        labels=r.get(doc, "labels", "strlist"),
        phase=r.get(doc, "phase", "str", choices=DATA_PHASES),
        group=r.get(doc, "group", "str", default=""),
        time=r.get(doc, "time", "str", default=""),
        features2drop=r.get(doc, "features2drop", "strlist", default=()),
        categorical_features=r.get(doc, "categorical_features", "strlist", default=()),
        split_percentage=r.get(doc, "split_percentage", "int", default=None),
        split_type=r.get(doc, "split_type", "str", default=None, choices=SPLIT_TYPES),
        seed=r.get(doc, "seed", "int", default=0),
    )
    if values["run_id"] is not None and values["run_id"] < 0:
        r.fail("field 'runtime.run_id' must be non-negative")
    if values["seed"] is not None and values["seed"] < 0:
        r.fail("field 'seed' must be non-negative")
    if values["phase"] == "training_predict":
        pct = values["split_percentage"]
        if "split_percentage" not in doc:
            r.fail("missing required field 'split_percentage' (phase training_predict)")
        elif pct is not None and not 0 < pct < 100:
            r.fail(f"field 'split_percentage' must lie strictly between 0 and 100; got {pct}")
        if "split_type" not in doc:
            r.fail("missing required field 'split_type' (phase training_predict)")
    labels = values["labels"] or ()
    if len(set(labels)) != len(labels):
        r.fail("field 'labels' contains duplicates")
    dropped = set(values["features2drop"] or ())
    for label in labels:
        if label in dropped:
            r.fail(f"label '{label}' also listed in 'features2drop'")
    pid = values["patient_id"]
    if pid:
        if pid in labels:
            r.fail(f"'PatientID' column '{pid}' also listed in 'labels'")
        if pid in dropped:
            r.fail(f"'PatientID' column '{pid}' also listed in 'features2drop'")
    r.raise_if_errors("data configuration")
    return DataConfig(**values)


def data_config_to_document(dc: DataConfig) -> dict:
    doc = {
        "services": {"log_prefix": dc.log_prefix},
        "runtime": {"run_id": dc.run_id},
        "dataset": {"name": dc.dataset_name, "type": dc.dataset_type, "format": dc.dataset_format},
        "group": dc.group,
        "PatientID": dc.patient_id,
        "labels": list(dc.labels),
        "time": dc.time,
        "features2drop": list(dc.features2drop),
        "phase": dc.phase,
        "categorical_features": list(dc.categorical_features),
    }
    if dc.split_percentage is not None:
        doc["split_percentage"] = dc.split_percentage
    if dc.split_type is not None:
        doc["split_type"] = dc.split_type
    doc["seed"] = dc.seed
    return doc


# ---------------------------------------------------------------------------
# algorithm configuration


def _is_scalar(v):
    return v is None or isinstance(v, (str, int, float, bool))


def parse_algo_config(document: str | bytes) -> AlgoConfig:
    doc = _require_object(load_document(document), "algorithm configuration")
    algo = doc.get("algorithm")
    if not isinstance(algo, dict):
        raise ConfigError("invalid algorithm configuration: missing required object 'algorithm'")
    r = _Reader()
    phase = r.get(algo, "phase", "str", default="training", choices=("training",))
    config_name = r.get(algo, "config_name", "str", default="")
    description = r.get(algo, "description", "str")
    task = r.get(algo, "type", "str", choices=registry.TASKS)
    params = algo.get("parameters")
    if not isinstance(params, dict):
        r.fail("missing required object 'algorithm.parameters'")
        r.raise_if_errors("algorithm configuration")
    if description == "":
        r.fail("field 'description' must not be empty")

    candidates = [k for k in params if k not in RESERVED_BLOCKS and not k.startswith("_comment")]
    algorithm_name = None
    algorithm_params: dict[str, Any] = {}
    if len(candidates) != 1:
        what = "no" if not candidates else f"{len(candidates)} ({', '.join(candidates)})"
        r.fail(f"ambiguous algorithm: expected exactly one algorithm block under 'parameters', found {what}")
    else:
        algorithm_name = candidates[0]
        raw = params[algorithm_name]
        if algorithm_name not in registry.SUPPORT:
            r.fail(f"unknown algorithm '{algorithm_name}'; available: {', '.join(registry.FAMILIES)}")
        elif not isinstance(raw, dict):
            r.fail(f"algorithm block '{algorithm_name}' must be an object")
        else:
            algorithm_params = _read_algorithm_params(r, algorithm_name, raw)
            if task is not None and not registry.supports(algorithm_name, task):
                r.fail(f"algorithm '{algorithm_name}' does not support task '{task}' "
                       f"(support matrix: {registry.support_matrix_text()})")

    pp = Preprocessing(
        standardization_feature=r.get(params, "preprocessing.standardization_feature", "bool", default=False),
        standardization_label=r.get(params, "preprocessing.standardization_label", "bool", default=False),
        scaling_feature=r.get(params, "preprocessing.scaling_feature", "bool", default=False),
        scaling_label=r.get(params, "preprocessing.scaling_label", "bool", default=False),
    )
    if pp.standardization_feature and pp.scaling_feature:
        r.fail("standardization_feature and scaling_feature cannot both be enabled")
    if pp.standardization_label and pp.scaling_label:
        r.fail("standardization_label and scaling_label cannot both be enabled")

    imp = Imputation(
        perc_nan_to_drop=r.get(params, "data_inputation.perc_nan_to_drop", "real", default=0.5),
        categorical=r.get(params, "data_inputation.categorical", "str", default="most_frequent",
                          choices=CATEGORICAL_IMPUTE),
        not_categorical=r.get(params, "data_inputation.not_categorical", "str", default="mean",
                              choices=NUMERIC_IMPUTE),
    )
    if not 0.0 <= imp.perc_nan_to_drop <= 1.0:
        r.fail(f"field 'data_inputation.perc_nan_to_drop' must lie in [0, 1]; got {imp.perc_nan_to_drop}")

    rfe = RfeOptions(
        enabled=r.get(params, "rfe.enabled", "bool", default=False),
        n_features_to_select=r.get(params, "rfe.n_features_to_select", "int", default=1),
    )
    if rfe.n_features_to_select < 1:
        r.fail("field 'rfe.n_features_to_select' must be a positive integer")
    if rfe.enabled and algorithm_name in registry.SUPPORT and algorithm_name not in registry.WEIGHTED:
        r.fail(f"rfe requires an algorithm exposing feature weights; '{algorithm_name}' does not "
               f"(weighted families: {', '.join(sorted(registry.WEIGHTED))})")

    smote = SmoteOptions(
        enabled=r.get(params, "smote.enabled", "bool", default=False),
        k_neighbors=r.get(params, "smote.k_neighbors", "int", default=5),
    )
    if smote.k_neighbors < 1:
        r.fail("field 'smote.k_neighbors' must be a positive integer")
    if smote.enabled and task not in (None, registry.CLASSIFICATION):
        r.fail("smote can only be enabled for classification tasks")

    shap = ShapOptions(
        enabled=r.get(params, "shap.enabled", "bool", default=False),
        mode=r.get(params, "shap.mode", "str", default="auto", choices=SHAP_MODES),
        max_rows=r.get(params, "shap.max_rows", "int", default=100),
        n_coalitions=r.get(params, "shap.n_coalitions", "int", default=2048),
    )
    if shap.max_rows < 1 or shap.n_coalitions < 2:
        r.fail("fields 'shap.max_rows' and 'shap.n_coalitions' must be positive")

    cv_folds = r.get(params, "cv_folds", "int", default=5)
    if cv_folds is not None and cv_folds < 2:
        r.fail(f"field 'cv_folds' must be at least 2; got {cv_folds}")

    r.raise_if_errors("algorithm configuration")
    return AlgoConfig(
        config_name=config_name,
        description=description,
        task=task,
        algorithm_name=algorithm_name,
        algorithm_params=algorithm_params,
        preprocessing=pp,
        imputation=imp,
        rfe=rfe,
        smote=smote,
        shap=shap,
        cv_folds=cv_folds,
        phase=phase,
    )


def _read_algorithm_params(r: _Reader, name: str, raw: dict) -> dict[str, Any]:
    out: dict[str, Any] = {}
    defaults = registry.DEFAULTS[name]
    for key, value in raw.items():
        if key.startswith("_comment"):
            continue
        if key not in defaults:
            r.fail(f"unknown parameter '{name}.{key}'; accepted: {', '.join(defaults)}")
            continue
        if isinstance(value, list):
            if not value:
                r.fail(f"grid axis '{name}.{key}' is empty")
                continue
            if not all(_is_scalar(v) for v in value):
                r.fail(f"grid axis '{name}.{key}' must contain scalars only")
                continue
            values = list(value)
        elif _is_scalar(value):
            values = [value]
        else:
            r.fail(f"parameter '{name}.{key}' must be a scalar or a sequence of scalars")
            continue
        choices = registry.CHOICES.get((name, key))
        for v in values:
            if choices is not None and v not in choices:
                r.fail(f"parameter '{name}.{key}' must be one of {{{', '.join(choices)}}}; got {v!r}")
        out[key] = list(value) if isinstance(value, list) else value
    for key, default in defaults.items():
        if default is registry.REQUIRED and key not in out:
            r.fail(f"missing required parameter '{name}.{key}'")
    return out


def algo_config_to_document(ac: AlgoConfig) -> dict:
    pp, imp = ac.preprocessing, ac.imputation
    return {
        "algorithm": {
            "phase": ac.phase,
            "config_name": ac.config_name,
            "description": ac.description,
            "type": ac.task,
            "parameters": {
                "preprocessing": {
                    "standardization_feature": pp.standardization_feature,
                    "standardization_label": pp.standardization_label,
                    "scaling_feature": pp.scaling_feature,
                    "scaling_label": pp.scaling_label,
                },
                "data_inputation": {
                    "perc_nan_to_drop": imp.perc_nan_to_drop,
                    "categorical": imp.categorical,
                    "not_categorical": imp.not_categorical,
                },
                ac.algorithm_name: dict(ac.algorithm_params),
                "rfe": {"enabled": ac.rfe.enabled, "n_features_to_select": ac.rfe.n_features_to_select},
                "smote": {"enabled": ac.smote.enabled, "k_neighbors": ac.smote.k_neighbors},
                "shap": {"enabled": ac.shap.enabled, "mode": ac.shap.mode,
                         "max_rows": ac.shap.max_rows, "n_coalitions": ac.shap.n_coalitions},
                "cv_folds": ac.cv_folds,
            },
        }
    }


# ---------------------------------------------------------------------------
# prediction configuration


def parse_predict_config(document: str | bytes) -> PredictConfig:
    doc = _require_object(load_document(document), "prediction configuration")
    r = _Reader()
    values = dict(
        log_prefix=r.get(doc, "services.log_prefix", "str", default="log"),
        run_id=r.get(doc, "runtime.run_id", "int", default=0),
        dataset_name=r.get(doc, "dataset.name", "str", default=""),
        dataset_type=r.get(doc, "dataset.type", "str", default="point-in-time", choices=DATASET_TYPES),
        dataset_format=r.get(doc, "dataset.format", "str", default="csv", choices=DATASET_FORMATS),
        description=r.get(doc, "description", "str"),
    )
    if values["description"] == "":
        r.fail("field 'description' must not be empty")
    if values["run_id"] is not None and values["run_id"] < 0:
        r.fail("field 'runtime.run_id' must be non-negative")
    r.raise_if_errors("prediction configuration")
    return PredictConfig(**values)


def predict_config_to_document(pc: PredictConfig) -> dict:
    return {
        "services": {"log_prefix": pc.log_prefix},
        "runtime": {"run_id": pc.run_id},
        "dataset": {"name": pc.dataset_name, "type": pc.dataset_type, "format": pc.dataset_format},
        "description": pc.description,
    }


# ---------------------------------------------------------------------------


def validate_cross(dc: DataConfig, ac: AlgoConfig) -> tuple[DataConfig, AlgoConfig]:
    """Check the data and algorithm documents against each other.

    Every violation is reported in one ``ConfigError``.
    """
    errors = []
    if ac.task in (registry.CLASSIFICATION, registry.REGRESSION):
        if not dc.labels:
            errors.append(f"task '{ac.task}' needs at least one label column; 'labels' is empty")
        elif len(dc.labels) > 1:
            errors.append(f"task '{ac.task}' trains on a single label column; got {len(dc.labels)}")
    if ac.shap.enabled and ac.task == registry.CLUSTERING:
        errors.append("shap attributions are only defined for supervised tasks")
    if errors:
        raise ConfigError("configuration mismatch: " + "; ".join(errors), errors)
    return dc, ac


def read_text(path) -> str:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 (byte offset {exc.start})") from None
