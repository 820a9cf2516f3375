"""Model bundles: one canonical JSON document per trained pipeline.

Arrays are written as ``{"__ndarray__": dtype, "shape": [...], "data": [...]}``
with float entries as 17-significant-digit decimal strings, which round-trip
IEEE doubles exactly. Saving a loaded bundle reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from riskpipe.errors import BundleError
from riskpipe.learners import FittedModel, ModelSpec
from riskpipe.model_select import CvReport, RfeResult
from riskpipe.preprocess import PreprocessState
from riskpipe.tabular import ColumnSchema

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ARRAY_TAG = "__ndarray__"


def encode(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        if obj.dtype.kind == "f":
            data = [format(float(v), ".17g") for v in obj.ravel()]
            dtype = "float64"
        elif obj.dtype.kind == "b":
            data = [int(v) for v in obj.ravel()]
            dtype = "bool"
        elif obj.dtype.kind in "iu":
            data = [int(v) for v in obj.ravel()]
            dtype = "int64"
        else:
            raise BundleError(f"cannot serialise array of dtype {obj.dtype}")
        return {ARRAY_TAG: dtype, "shape": list(obj.shape), "data": data}
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def decode(obj: Any, path: str = "$") -> Any:
    if isinstance(obj, dict):
        if ARRAY_TAG in obj:
            return _decode_array(obj, path)
        return {k: decode(v, f"{path}.{k}") for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode(v, f"{path}[{i}]") for i, v in enumerate(obj)]
    return obj


def _decode_array(obj, path):
    dtype = obj[ARRAY_TAG]
    try:
        shape = tuple(int(s) for s in obj["shape"])
        raw = obj["data"]
    except (KeyError, TypeError, ValueError):
        raise BundleError(f"malformed array at {path}") from None
    if not isinstance(raw, list) or int(np.prod(shape)) != len(raw):
        raise BundleError(f"array at {path}: data length does not match shape {list(shape)}")
    out = []
    for i, v in enumerate(raw):
        try:
            if dtype == "float64":
                if not isinstance(v, str):
                    raise ValueError
                out.append(float(v))
            elif dtype in ("int64", "bool"):
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ValueError
                out.append(v)
            else:
                raise BundleError(f"array at {path}: unknown dtype {dtype!r}")
        except ValueError:
            raise BundleError(f"corrupted numeric field at {path}.data[{i}]: {v!r}") from None
    arr = np.array(out, dtype={"float64": np.float64, "int64": np.int64, "bool": bool}[dtype])
    return arr.reshape(shape)


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def model_to_dict(m: FittedModel) -> dict:
    return {
        "family": m.spec.family,
        "task": m.spec.task,
        "params": m.spec.params,
        "seed": m.spec.seed,
        "feature_order": list(m.feature_order),
        "classes": m.classes,
        "learned": encode(m.learned),
    }


def model_from_dict(d: dict) -> FittedModel:
    spec = ModelSpec(d["family"], d["task"], dict(d["params"]), d["seed"])
    learned = decode(d["learned"], "$.model.learned")
    return FittedModel(spec, learned, list(d["feature_order"]), d["classes"])


@dataclass
class ModelBundle:
    description: str
    run_id: int
    seed: int
    data_config: dict
    algo_config: dict
    task: str
    label: str | None
    schemas: list[ColumnSchema]
    preprocess: PreprocessState
    model: FittedModel
    training_rows: np.ndarray
    training_predictions: np.ndarray
    metrics_training: dict = field(default_factory=dict)
    rfe: RfeResult | None = None
    cv: CvReport | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def feature_order(self) -> list[str]:
        return list(self.model.feature_order)

    @property
    def stem(self) -> str:
        return f"{self.data_config['services']['log_prefix']}_{self.run_id}"

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "description": self.description,
            "run_id": self.run_id,
            "seed": self.seed,
            "data_config": self.data_config,
            "algo_config": self.algo_config,
            "task": self.task,
            "label": self.label,
            "schemas": [s.to_dict() for s in self.schemas],
            "feature_order": self.feature_order,
            "preprocess": self.preprocess.to_dict(),
            "model": model_to_dict(self.model),
            "training_rows": encode(np.asarray(self.training_rows, dtype=np.int64)),
            "training_predictions": encode(np.asarray(self.training_predictions, dtype=float)),
            "metrics_training": self.metrics_training,
            "rfe": self.rfe.to_dict() if self.rfe else None,
            "cv": self.cv.to_dict() if self.cv else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise BundleError(f"unsupported bundle schema_version {version!r} (expected {SCHEMA_VERSION})")
        try:
            return cls(
                description=d["description"],
                run_id=d["run_id"],
                seed=d["seed"],
                data_config=d["data_config"],
                algo_config=d["algo_config"],
                task=d["task"],
                label=d["label"],
                schemas=[ColumnSchema.from_dict(s) for s in d["schemas"]],
                preprocess=PreprocessState.from_dict(d["preprocess"]),
                model=model_from_dict(d["model"]),
                training_rows=decode(d["training_rows"], "$.training_rows"),
                training_predictions=decode(d["training_predictions"], "$.training_predictions"),
                metrics_training=d["metrics_training"],
                rfe=RfeResult.from_dict(d["rfe"]) if d["rfe"] else None,
                cv=CvReport.from_dict(d["cv"]) if d["cv"] else None,
            )
        except KeyError as exc:
            raise BundleError(f"bundle is missing field {exc.args[0]!r}") from None


def bundle_path(directory, bundle: ModelBundle) -> Path:
    return Path(directory) / f"{bundle.stem}_model.json"


def save_bundle(bundle: ModelBundle, directory) -> Path:
    path = bundle_path(directory, bundle)
    os.makedirs(directory, exist_ok=True)
    text = canonical_json(bundle.to_dict())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def load_bundle(path) -> ModelBundle:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise BundleError(f"bundle not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path}: not valid JSON ({exc.msg} at offset {exc.pos})") from None
    if not isinstance(doc, dict):
        raise BundleError(f"{path}: bundle must be a JSON object")
    return ModelBundle.from_dict(doc)


def find_bundle(directory, description: str) -> Path:
    """Newest-run bundle in ``directory`` whose description matches."""
    matches = []
    available = set()
    for path in sorted(Path(directory).glob("*.json")):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError, UnicodeDecodeError):
            continue
        if not isinstance(doc, dict) or "schema_version" not in doc or "model" not in doc:
            continue
        available.add(str(doc.get("description")))
        if doc.get("description") == description:
            matches.append((int(doc.get("run_id", -1)), str(path), path))
    if not matches:
        listing = ", ".join(sorted(available)) or "none"
        raise BundleError(f"no bundle with description '{description}' in {directory} "
                          f"(available: {listing})")
    matches.sort()
    if len(matches) > 1:
        log.warning("%d bundles match description '%s'; using newest run_id %d",
                    len(matches), description, matches[-1][0])
    return matches[-1][2]
