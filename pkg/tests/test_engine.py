import json
import logging
import re
import shutil

import numpy as np
import pytest

from helpers import FIXTURES, algo_config, data_config, supervised_table, write_csv
from riskpipe.config import parse_algo_config, parse_data_config, parse_predict_config, read_text
from riskpipe.engine import (
    read_predictions,
    results_schema,
    run_predict_pretrained,
    run_training,
    validate_result,
)
from riskpipe.errors import BundleError, DataError, ModelError, RiskpipeError
from riskpipe.persist import canonical_json, find_bundle, load_bundle, save_bundle


def key_tree(doc):
    if isinstance(doc, dict):
        return {k: key_tree(v) for k, v in doc.items()}
    return None


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    dc = parse_data_config(read_text(FIXTURES / "input_configuration.json"))
    ac = parse_algo_config(read_text(FIXTURES / "algorithm_configuration.json"))
    bundle, result = run_training(dc, ac, FIXTURES / "example.csv", out)
    return out, bundle, result


def test_training_files_and_names(trained):
    out, bundle, result = trained
    names = sorted(p.name for p in out.iterdir())
    assert names == ["log_781.log", "log_781_model.json", "log_781_training.json"]
    doc = json.loads((out / "log_781_training.json").read_text())
    assert doc == result.document
    expected = json.loads((FIXTURES / "training_output.json").read_text())
    assert {k: v for k, v in key_tree(doc).items() if k != "testing_set"} == key_tree(expected)
    shaped = json.loads((FIXTURES / "predict_output.json").read_text())
    assert key_tree({"testing_set": doc["testing_set"]}) == key_tree(shaped)
    assert list(doc["config_data"]["metrics_training"]["Type"]) == ["ARI", "AMI", "v-score", "Silhouette"]


def test_log_lines_carry_time_level_and_stage(trained):
    out, _, _ = trained
    lines = (out / "log_781.log").read_text().splitlines()
    assert lines
    pattern = re.compile(r"^\d{4}-\d\d-\d\dT\d\d:\d\d:\d\d(\.\d+)?([+-]\d\d:\d\d|Z)? [A-Z]+ \S+ .+")
    assert all(pattern.match(line) for line in lines), lines[:3]
    assert any(" train " in line for line in lines)


def test_bundle_round_trip_is_byte_identical(trained, tmp_path):
    out, bundle, _ = trained
    first = (out / "log_781_model.json").read_bytes()
    loaded = load_bundle(out / "log_781_model.json")
    again = save_bundle(loaded, tmp_path).read_bytes()
    assert first == again
    assert loaded.to_dict() == json.loads(first)


def test_version_check(trained, tmp_path):
    out, _, _ = trained
    doc = json.loads((out / "log_781_model.json").read_text())
    doc["schema_version"] = 99
    path = tmp_path / "bad_model.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(BundleError, match="schema_version 99"):
        load_bundle(path)


def test_corrupted_number_names_json_path(trained, tmp_path):
    out, _, _ = trained
    doc = json.loads((out / "log_781_model.json").read_text())
    doc["training_predictions"]["data"][2] = "1.2.3"
    path = tmp_path / "bad_model.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(BundleError, match=r"\$\.training_predictions\.data\[2\]"):
        load_bundle(path)


def test_predict_with_labels(trained, tmp_path):
    out, _, _ = trained
    pc = parse_predict_config(read_text(FIXTURES / "predict_configuration.json"))
    preds, result = run_predict_pretrained(pc, FIXTURES / "example_predict.csv", out, tmp_path)
    assert key_tree(result.document) == key_tree(json.loads((FIXTURES / "predict_output.json").read_text()))
    rows = read_predictions(tmp_path / "log_781_predictions.csv")
    assert (tmp_path / "log_781_predictions.csv").read_text().splitlines()[0] == "Sample,prediction"
    assert len(rows) == 30 and rows[0][0] == "S1000"
    assert {r[1] for r in rows} <= {str(k) for k in range(5)}


def test_predict_without_labels_clustering_reports_internal(trained, tmp_path):
    out, _, _ = trained
    pc = parse_predict_config(read_text(FIXTURES / "predict_configuration.json"))
    _, result = run_predict_pretrained(pc, FIXTURES / "example_predict_unlabeled.csv", out, tmp_path)
    assert list(result.document["testing_set"]) == ["internal"]
    assert list(result.document["testing_set"]["internal"]) == ["Silhouette"]


def test_missing_description(trained):
    out, _, _ = trained
    doc = json.loads(read_text(FIXTURES / "predict_configuration.json").replace('",\n\t}', '"\n\t}'))
    doc["description"] = "Missing"
    pc = parse_predict_config(json.dumps(doc))
    with pytest.raises(BundleError, match="AggClustering") as err:
        run_predict_pretrained(pc, FIXTURES / "example_predict.csv", out)
    assert err.value.stage == "resolve"


def test_end_to_end_determinism(tmp_path):
    dc = parse_data_config(read_text(FIXTURES / "input_configuration.json"))
    ac = parse_algo_config(read_text(FIXTURES / "algorithm_configuration.json"))
    for d in ("a", "b"):
        run_training(dc, ac, FIXTURES / "example.csv", tmp_path / d)
    for name in ("log_781_training.json", "log_781_model.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_rerun_overwrites_and_notes_it(tmp_path):
    dc = parse_data_config(read_text(FIXTURES / "input_configuration.json"))
    ac = parse_algo_config(read_text(FIXTURES / "algorithm_configuration.json"))
    run_training(dc, ac, FIXTURES / "example.csv", tmp_path)
    run_training(dc, ac, FIXTURES / "example.csv", tmp_path)
    assert "overwriting existing log_781_training.json" in (tmp_path / "log_781.log").read_text()


def test_training_phase_has_no_testing_set(tmp_path):
    doc = json.loads(read_text(FIXTURES / "input_configuration.json"))
    doc["phase"] = "training"
    dc = parse_data_config(json.dumps(doc))
    ac = parse_algo_config(read_text(FIXTURES / "algorithm_configuration.json"))
    _, result = run_training(dc, ac, FIXTURES / "example.csv")
    assert "testing_set" not in result.document


def test_clustering_without_labels_reports_internal(tmp_path):
    doc = json.loads(read_text(FIXTURES / "input_configuration.json"))
    doc.update(labels=[], phase="training", group="")
    dc = parse_data_config(json.dumps(doc))
    ac = parse_algo_config(algo_config("KMeans", "clustering", {"n_clusters": 3, "n_init": 2}))
    _, result = run_training(dc, ac, FIXTURES / "example.csv", tmp_path)
    assert list(result.document["config_data"]["metrics_training"]) == ["internal"]


# --- supervised runs


def _supervised(tmp_path, family, task, params=None, n=60, phase="training_predict", **blocks):
    header, rows = supervised_table(n, 4, task, missing=0.05)
    data = write_csv(tmp_path / "d.csv", header, rows)
    extra = {"split_percentage": 75, "split_type": "random"} if phase == "training_predict" else {}
    dc = parse_data_config(data_config(phase=phase, categorical_features=["kind"], **extra))
    ac = parse_algo_config(algo_config(family, task, params, **blocks))
    return dc, ac, data


def test_supervised_training_with_every_option(tmp_path):
    dc, ac, data = _supervised(tmp_path, "RandomForest", "classification",
                               {"n_estimators": [3, 6], "max_depth": 3},
                               smote={"enabled": True, "k_neighbors": 3},
                               rfe={"enabled": True, "n_features_to_select": 3},
                               shap={"enabled": True, "max_rows": 3})
    bundle, result = run_training(dc, ac, data, tmp_path / "out")
    doc = result.document
    validate_result(doc)
    block = doc["config_data"]["metrics_training"]["y"]
    assert block["positive_class"] == "yes"
    assert {"accuracy", "f1", "mcc", "cross_entropy"} <= set(block)
    assert doc["cv_report"]["best_params"]["n_estimators"] in (3, 6)
    assert len(doc["rfe"]["retained"]) == 3
    assert set(doc["feature_importances"]) == set(doc["rfe"]["retained"])
    shap = doc["shap_values"]
    assert len(shap["values"]) == 3 and len(shap["values"][0][0]) == 3
    assert shap["row_ids"] == bundle_row_ids(tmp_path / "d.csv", bundle)[:3]


def bundle_row_ids(path, bundle):
    ids = [line.split(",")[0] for line in path.read_text().splitlines()[1:]]
    train = set(bundle.training_rows.tolist())
    return [ids[i] for i in range(len(ids)) if i not in train]


def test_regression_label_transform_round_trip(tmp_path):
    dc, ac, data = _supervised(tmp_path, "ElasticNet", "regression", {"alpha": 0.01},
                               preprocessing={"standardization_label": True,
                                              "standardization_feature": True})
    bundle, result = run_training(dc, ac, data, tmp_path / "out")
    assert result.document["testing_set"]["y"]["r2"] > 0.8
    assert abs(np.mean(bundle.training_predictions) - 5.0) < 2.0


def test_predict_supervised_without_label_gives_predictions_only(tmp_path):
    dc, ac, data = _supervised(tmp_path, "KNN", "classification", {"k": 3}, phase="training")
    run_training(dc, ac, data, tmp_path / "b")
    header, rows = supervised_table(10, 9, "classification")
    keep = [i for i, h in enumerate(header) if h != "y"]
    new = write_csv(tmp_path / "p.csv", [header[i] for i in keep], [[r[i] for i in keep] for r in rows])
    pc = parse_predict_config(json.dumps({"services": {"log_prefix": "p"}, "runtime": {"run_id": 2},
                                          "dataset": {"format": "csv"}, "description": "KNN"}))
    preds, result = run_predict_pretrained(pc, new, tmp_path / "b", tmp_path / "o")
    assert result.document == {"testing_set": {}}
    assert set(preds.text) <= {"yes", "no"}
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["p_2.log", "p_2_predict.json",
                                                                 "p_2_predictions.csv"]


def test_predict_reproduces_training_predictions(tmp_path):
    dc, ac, data = _supervised(tmp_path, "GradientBoosting", "regression", {"n_estimators": 5},
                               phase="training")
    bundle, _ = run_training(dc, ac, data, tmp_path / "b")
    pc = parse_predict_config(json.dumps({"services": {"log_prefix": "p"}, "runtime": {"run_id": 2},
                                          "dataset": {"format": "csv"}, "description": "GradientBoosting"}))
    preds, _ = run_predict_pretrained(pc, data, tmp_path / "b")
    np.testing.assert_array_equal(preds.values, bundle.training_predictions)


def test_categorical_regression_label_rejected(tmp_path):
    header, rows = supervised_table(20, 1, "classification")
    data = write_csv(tmp_path / "d.csv", header, rows)
    dc = parse_data_config(data_config(categorical_features=["kind"]))
    ac = parse_algo_config(algo_config("ElasticNet", "regression"))
    with pytest.raises(DataError) as err:
        run_training(dc, ac, data, tmp_path / "o")
    assert err.value.stage == "preprocess"
    assert "stage preprocess failed (run_id 1)" in (tmp_path / "o" / "run_1.log").read_text()


def test_newest_bundle_wins(tmp_path, caplog):
    dc, ac, data = _supervised(tmp_path, "KNN", "classification", phase="training")
    bundle, _ = run_training(dc, ac, data)
    save_bundle(bundle, tmp_path / "b")
    bundle.run_id = 5
    save_bundle(bundle, tmp_path / "b")
    with caplog.at_level(logging.WARNING, logger="riskpipe"):
        assert find_bundle(tmp_path / "b", "KNN").name == "run_5_model.json"
    assert "2 bundles match" in caplog.text


def test_schema_rejects_unknown_top_level_key():
    with pytest.raises(ModelError, match="results schema"):
        validate_result({"testing_set": {}, "bogus": 1})
    assert "oneOf" in results_schema()


def test_canonical_json_rejects_nan():
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})


def test_errors_share_a_base():
    assert issubclass(BundleError, RiskpipeError) and issubclass(DataError, RiskpipeError)


def test_copied_bundle_directory_still_resolves(trained, tmp_path):
    out, bundle, _ = trained
    shutil.copy(out / "log_781_model.json", tmp_path / "anything.json")
    assert load_bundle(find_bundle(tmp_path, "AggClustering")).to_dict() == bundle.to_dict()
