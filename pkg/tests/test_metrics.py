import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn import metrics as skm

import oracles
from riskpipe.errors import ModelError
from riskpipe.metrics import (
    adjusted_mutual_info,
    adjusted_rand,
    classification_metrics,
    clustering_external_metrics,
    homogeneity_completeness_v,
    regression_metrics,
    silhouette_score,
)

SCALAR_KEYS = ("accuracy", "precision", "recall", "f1", "far", "pod", "tss", "hss", "mcc")


def counts_to_labels(tp, fn, fp, tn):
    y_true = [1] * (tp + fn) + [0] * (fp + tn)
    y_pred = [1] * tp + [0] * fn + [1] * fp + [0] * tn
    return y_true, y_pred


def test_confusion_example():
    m = classification_metrics(*counts_to_labels(2, 1, 1, 4))
    expected = {"accuracy": 0.75, "precision": 2 / 3, "recall": 2 / 3, "far": 1 / 3, "pod": 2 / 3,
                "tss": 7 / 15, "f1": 2 / 3, "hss": 7 / 15, "mcc": 7 / 15}
    for key, value in expected.items():
        assert abs(m[key] - value) <= 1e-12, key
    assert m["positive_class"] == 1.0
    assert "degenerate" not in m


def test_perfect_prediction():
    y = [0, 1, 1, 0, 1]
    m = classification_metrics(y, y)
    for key in ("accuracy", "precision", "recall", "f1", "tss", "hss", "mcc"):
        assert m[key] == 1.0
    assert m["far"] == 0.0


def test_one_hot_cross_entropy_hits_clip_floor():
    y = np.array([0, 1, 1])
    proba = np.eye(2)[y]
    m = classification_metrics(y, y, proba)
    assert m["cross_entropy"] == pytest.approx(-math.log(1 - 1e-15), rel=1e-6)


def test_degenerate_ratios_flagged():
    m = classification_metrics([0, 0, 0], [0, 0, 0])
    assert m["precision"] == 0.0 and "precision" in m["degenerate"]
    assert "mcc" in m["degenerate"]


def test_length_mismatch():
    with pytest.raises(ModelError, match="length"):
        classification_metrics([0, 1], [0])
    with pytest.raises(ModelError, match="length"):
        regression_metrics([0, 1], [0])


def test_multiclass_macro_against_sklearn():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 3, 50)
    p = np.where(rng.random(50) < 0.6, y, rng.integers(0, 3, 50))
    m = classification_metrics(y, p)
    assert m["precision"] == pytest.approx(skm.precision_score(y, p, average="macro"), abs=1e-12)
    assert m["recall"] == pytest.approx(skm.recall_score(y, p, average="macro"), abs=1e-12)
    assert m["f1"] == pytest.approx(np.mean(skm.f1_score(y, p, average=None)), abs=1e-12)
    assert m["mcc"] == pytest.approx(skm.matthews_corrcoef(y, p), abs=1e-12)
    assert m["hss"] == pytest.approx(skm.cohen_kappa_score(y, p), abs=1e-12)
    assert "far" not in m and "tss" not in m


def test_cross_entropy_against_sklearn():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 3, 40)
    proba = rng.dirichlet(np.ones(3), 40)
    m = classification_metrics(y, proba.argmax(axis=1), proba, classes=[0, 1, 2])
    assert m["cross_entropy"] == pytest.approx(skm.log_loss(y, proba, labels=[0, 1, 2]), abs=1e-12)


def test_regression_example():
    m = regression_metrics([1, 2, 3], [1, 2, 4])
    assert m["mse"] == pytest.approx(1 / 3, abs=1e-12)
    assert m["rmse"] == pytest.approx(0.5774, abs=1e-4)
    assert m["mae"] == pytest.approx(1 / 3, abs=1e-12)
    assert m["r2"] == pytest.approx(0.5, abs=1e-12)
    same = regression_metrics([1, 2, 3], [1, 2, 3])
    assert same["mse"] == same["mae"] == 0.0 and same["r2"] == 1.0
    assert regression_metrics([1, 2, 3], [2, 2, 2])["r2"] == 0.0
    flat = regression_metrics([2, 2], [1, 3])
    assert flat["r2"] == 0.0 and flat["degenerate"] == ["r2"]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=20))
def test_rmse_squared_is_mse(pairs):
    y, p = zip(*pairs)
    m = regression_metrics(y, p)
    assert abs(m["rmse"] ** 2 - m["mse"]) <= 1e-12 * max(1.0, m["mse"])


def test_clustering_examples():
    assert abs(adjusted_rand([0, 0, 1, 1], [0, 0, 1, 2]) - 4 / 7) <= 1e-12
    renamed = clustering_external_metrics([0, 0, 1, 1, 2], [5, 5, 3, 3, 9])
    assert renamed == {"ARI": 1.0, "AMI": 1.0, "v-score": 1.0}
    assert adjusted_rand([0, 0, 1, 1], [7, 7, 7, 7]) == 0.0
    assert adjusted_mutual_info([0, 0, 1, 1], [7, 7, 7, 7]) == 0.0
    assert clustering_external_metrics([3, 3, 3], [1, 1, 1]) == {"ARI": 1.0, "AMI": 1.0, "v-score": 1.0}


def test_silhouette_examples():
    X = np.array([[0.0], [0.1], [10.0], [10.1]])
    assert silhouette_score(X, [0, 0, 1, 1]) == pytest.approx(0.99, abs=1e-4)
    assert silhouette_score(np.array([[0.0], [5.0]]), [0, 1]) == 0.0
    dup = np.array([[1.0], [1.0], [4.0], [4.0]])
    assert silhouette_score(dup, [0, 0, 1, 1]) == 1.0
    with pytest.raises(ModelError, match="silhouette undefined"):
        silhouette_score(X, [0, 0, 0, 0])
    with pytest.raises(ModelError, match="silhouette undefined"):
        silhouette_score(X, [0, 0, -1, -1])


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    k = int(rng.integers(2, 5))
    return rng, n, k


def test_against_brute_force_on_random_instances():
    for seed in range(200):
        rng, n, k = _random_instance(seed)
        y = rng.integers(0, k, n).tolist()
        p = rng.integers(0, k, n).tolist()
        got = classification_metrics(y, p)
        want = oracles.classification([float(v) for v in y], [float(v) for v in p])
        for key, value in want.items():
            assert abs(got[key] - value) <= 1e-9, (seed, key)
        ext = clustering_external_metrics(y, p)
        assert abs(ext["ARI"] - oracles.rand_pairs(y, p)) <= 1e-9, seed
        assert abs(ext["AMI"] - oracles.ami(y, p)) <= 1e-9, seed
        assert abs(ext["v-score"] - oracles.v_measure(y, p)) <= 1e-9, seed
        X = rng.normal(size=(n, 2))
        if len(set(p)) >= 2:
            assert abs(silhouette_score(X, p) - oracles.silhouette(X.tolist(), p)) <= 1e-9, seed


def test_against_sklearn_on_random_instances():
    for seed in range(50):
        rng, n, k = _random_instance(seed + 1000)
        y = rng.integers(0, k, n)
        p = rng.integers(0, k, n)
        ext = clustering_external_metrics(y, p)
        assert ext["ARI"] == pytest.approx(skm.adjusted_rand_score(y, p), abs=1e-9)
        assert ext["AMI"] == pytest.approx(skm.adjusted_mutual_info_score(y, p), abs=1e-9)
        assert ext["v-score"] == pytest.approx(skm.v_measure_score(y, p), abs=1e-9)
        X = rng.normal(size=(n, 2))
        if 2 <= len(set(p.tolist())) <= n - 1:
            assert silhouette_score(X, p) == pytest.approx(skm.silhouette_score(X, p), abs=1e-9)


labels = st.lists(st.integers(0, 3), min_size=2, max_size=12)


@settings(max_examples=100, deadline=None)
@given(labels, st.data(), st.permutations([0, 1, 2, 3]))
def test_external_metrics_symmetric_and_permutation_invariant(a, data, perm):
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    ab = clustering_external_metrics(a, b)
    ba = clustering_external_metrics(b, a)
    for key in ab:
        assert abs(ab[key] - ba[key]) <= 1e-12
    renamed = clustering_external_metrics(a, [perm[v] for v in b])
    for key in ab:
        assert abs(ab[key] - renamed[key]) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=2, max_size=12), st.data())
def test_symmetric_metrics_invariant_under_relabeling(y, data):
    p = data.draw(st.lists(st.integers(0, 2), min_size=len(y), max_size=len(y)))
    perm = data.draw(st.permutations([10, 20, 30]))
    base = classification_metrics(y, p)
    moved = classification_metrics([perm[v] for v in y], [perm[v] for v in p])
    keys = ("accuracy", "hss", "mcc") if len(set(y) | set(p)) <= 2 else ("accuracy", "hss", "mcc",
                                                                          "precision", "recall", "f1")
    for key in keys:
        assert abs(base[key] - moved[key]) <= 1e-12


def test_homogeneity_completeness_parts():
    h, c, v = homogeneity_completeness_v([0, 0, 1, 1], [0, 0, 0, 0])
    assert (h, c) == (0.0, 1.0) and v == 0.0
    h, c, _ = homogeneity_completeness_v([0, 0, 1, 1], [0, 1, 2, 3])
    assert h == pytest.approx(1.0) and c == pytest.approx(0.5)
