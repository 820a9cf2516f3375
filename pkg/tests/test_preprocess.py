import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskpipe.config import AlgoConfig, Imputation, Preprocessing
from riskpipe.errors import DataError, ModelError
from riskpipe.preprocess import (
    PreprocessState,
    apply_preprocess,
    fit_preprocess,
    forward_label_transform,
    invert_label_transform,
)
from riskpipe.tabular import CATEGORICAL, FEATURE, LABEL, NUMERIC, ColumnSchema, TabularDataset

NAN = np.nan


def make_ds(columns, train=None, label=None):
    """columns: name -> list of values; categorical columns pass (values, categories)."""
    schemas, cols = [], []
    for name, spec in columns.items():
        if isinstance(spec, tuple):
            values, cats = spec
            schemas.append(ColumnSchema(name, CATEGORICAL, FEATURE, tuple(cats)))
        else:
            values = spec
            role = LABEL if name == label else FEATURE
            schemas.append(ColumnSchema(name, NUMERIC, role))
        cols.append(np.asarray(values, dtype=float))
    values = np.column_stack(cols)
    n = values.shape[0]
    train = np.arange(n) if train is None else np.asarray(train)
    test = np.setdiff1d(np.arange(n), train)
    return TabularDataset(tuple(schemas), values, train, test)


def algo(task="classification", pp=None, **imp):
    return AlgoConfig("c", "d", task, "KNN", {}, preprocessing=pp or Preprocessing(),
                      imputation=Imputation(**imp))


def test_mean_imputation():
    ds = make_ds({"x": [1, 2, NAN, 3]})
    state = fit_preprocess(ds, algo())
    assert state.numeric_impute["x"] == {"method": "mean", "value": 2.0}
    out = apply_preprocess(state, ds)
    assert out.X[:, 0].tolist() == [1, 2, 2, 3]


def test_median_imputation():
    ds = make_ds({"x": [1, 2, NAN, 10]})
    state = fit_preprocess(ds, algo(not_categorical="median"))
    assert state.numeric_impute["x"]["value"] == 2.0


def test_regression_imputation_recovers_linear_relation():
    x = np.arange(10.0)
    y = 3 * x + 1
    y[4] = NAN
    ds = make_ds({"x": x, "y": y})
    state = fit_preprocess(ds, algo(not_categorical="regression"))
    out = apply_preprocess(state, ds)
    assert out.X[4, 1] == pytest.approx(13.0, abs=1e-9)


def test_regression_imputation_without_predictors_falls_back():
    ds = make_ds({"y": [1, NAN, 3]})
    state = fit_preprocess(ds, algo(not_categorical="regression"))
    assert state.numeric_impute["y"] == {"method": "mean", "value": 2.0}


def test_drop_threshold_direction():
    ds = make_ds({"keep": [1, 2, 3, 4], "gone": [NAN, NAN, NAN, 1.0]})
    state = fit_preprocess(ds, algo(perc_nan_to_drop=0.5))
    assert state.dropped_columns == ["gone"]
    assert [f["name"] for f in state.features] == ["keep"]
    half = make_ds({"keep": [1, 2, 3, 4], "half": [NAN, NAN, 1.0, 2.0]})
    assert fit_preprocess(half, algo(perc_nan_to_drop=0.5)).dropped_columns == []


def test_every_column_dropped_is_an_error():
    with pytest.raises(DataError, match="dropped"):
        fit_preprocess(make_ds({"x": [NAN, NAN, 1.0]}), algo(perc_nan_to_drop=0.1))


def test_complete_column_untouched():
    ds = make_ds({"x": [5, 6, 7]})
    state = fit_preprocess(ds, algo())
    assert state.numeric_impute == {} and state.categorical_impute == {}
    assert apply_preprocess(state, ds).X[:, 0].tolist() == [5, 6, 7]


def test_standardization_example():
    ds = make_ds({"x": [0, 2]})
    state = fit_preprocess(ds, algo(pp=Preprocessing(standardization_feature=True)))
    assert state.feature_standardize["x"] == [1.0, 1.0]
    assert apply_preprocess(state, ds).X[:, 0].tolist() == [-1.0, 1.0]


def test_scaling_applies_train_range_to_test():
    ds = make_ds({"x": [0, 2, 4]}, train=[0, 1])
    state = fit_preprocess(ds, algo(pp=Preprocessing(scaling_feature=True)))
    assert state.feature_minmax["x"] == [0.0, 2.0]
    assert apply_preprocess(state, ds, [2]).X[0, 0] == 2.0


def test_constant_columns_pass_through():
    ds = make_ds({"x": [3, 3, 3]})
    st_ = fit_preprocess(ds, algo(pp=Preprocessing(standardization_feature=True)))
    assert st_.feature_standardize["x"][1] == 1.0
    sc = fit_preprocess(ds, algo(pp=Preprocessing(scaling_feature=True)))
    assert "x" not in sc.feature_minmax
    assert apply_preprocess(sc, ds).X[:, 0].tolist() == [3, 3, 3]


def test_identity_when_everything_off():
    raw = np.random.default_rng(0).normal(size=(6, 3))
    ds = make_ds({f"x{j}": raw[:, j] for j in range(3)})
    np.testing.assert_array_equal(apply_preprocess(fit_preprocess(ds, algo()), ds).X, raw)


def test_categorical_most_frequent_tie_takes_lowest_index():
    ds = make_ds({"c": ([1, 0, 1, 0, NAN], ["a", "b"])})
    state = fit_preprocess(ds, algo())
    assert state.categorical_impute["c"] == {"method": "most_frequent", "index": 0}
    out = apply_preprocess(state, ds)
    assert out.names == ["c=a", "c=b"]
    assert out.X[4].tolist() == [1.0, 0.0]


def test_random_categorical_imputation_is_deterministic():
    ds = make_ds({"c": ([0, 1, 1, NAN, NAN, NAN], ["a", "b"])})
    state = fit_preprocess(ds, algo(categorical="random"), seed=3)
    assert state.categorical_impute["c"]["probs"] == pytest.approx([1 / 3, 2 / 3])
    a = apply_preprocess(state, ds).X
    b = apply_preprocess(PreprocessState.from_dict(state.to_dict()), ds).X
    np.testing.assert_array_equal(a, b)
    assert np.all(a.sum(axis=1) == 1.0)


def test_label_transform_round_trip():
    ds = make_ds({"x": [1, 2, 3, 4], "y": [10, 12, 8, 10]}, label="y")
    state = fit_preprocess(ds, algo("regression", Preprocessing(standardization_label=True)))
    assert state.label_transform["shift"] == 10.0
    back = invert_label_transform(state, forward_label_transform(state, [3.7]))
    assert back[0] == pytest.approx(3.7, abs=1e-12)


def test_invert_label_transform_values():
    state = PreprocessState(features=[], label_transform={"kind": "standardize", "shift": 10.0, "scale": 2.0})
    assert invert_label_transform(state, [1.5]).tolist() == [13.0]
    plain = PreprocessState(features=[])
    assert invert_label_transform(plain, [1.5]).tolist() == [1.5]
    with pytest.raises(ModelError):
        invert_label_transform(state, [1.0], "classification")


def test_unseen_missing_uses_fallback():
    train = make_ds({"x": [1.0, 3.0], "c": ([0, 0], ["a", "b"])})
    state = fit_preprocess(train, algo())
    new = make_ds({"x": [NAN], "c": ([NAN], ["a", "b"])})
    out = apply_preprocess(state, new)
    assert out.X.tolist() == [[2.0, 1.0, 0.0]]


def test_mean_imputed_column_keeps_train_mean():
    rng = np.random.default_rng(1)
    x = rng.normal(size=40)
    x[rng.choice(40, 10, replace=False)] = NAN
    ds = make_ds({"x": x})
    out = apply_preprocess(fit_preprocess(ds, algo()), ds)
    assert abs(out.X[:, 0].mean() - np.nanmean(x)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["mean", "median", "regression"]),
       st.sampled_from(["random", "most_frequent"]), st.booleans())
def test_state_ignores_test_rows(seed, numeric, categorical, standardize):
    rng = np.random.default_rng(seed)
    n = 20
    x = rng.normal(size=n)
    z = rng.normal(size=n)
    c = rng.integers(0, 3, size=n).astype(float)
    for col in (x, z, c):
        col[rng.random(n) < 0.2] = NAN
    train = np.arange(14)
    a = make_ds({"x": x, "z": z, "c": (c, ["p", "q", "r"])}, train=train)
    x2, z2, c2 = x.copy(), z.copy(), c.copy()
    x2[14:] = rng.normal(size=6) * 100
    z2[14:] = NAN
    c2[14:] = 2
    b = make_ds({"x": x2, "z": z2, "c": (c2, ["p", "q", "r"])}, train=train)
    cfg = algo(pp=Preprocessing(standardization_feature=standardize), not_categorical=numeric,
               categorical=categorical)
    assert fit_preprocess(a, cfg, seed).to_dict() == fit_preprocess(b, cfg, seed).to_dict()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 5))
def test_apply_is_independent_of_row_blocks(seed, blocks):
    rng = np.random.default_rng(seed)
    n = 15
    x = rng.normal(size=n)
    c = rng.integers(0, 2, size=n).astype(float)
    x[rng.random(n) < 0.3] = NAN
    c[rng.random(n) < 0.3] = NAN
    ds = make_ds({"x": x, "c": (c, ["a", "b"])})
    state = fit_preprocess(ds, algo(categorical="random", pp=Preprocessing(scaling_feature=True)), seed)
    whole = apply_preprocess(state, ds).X
    parts = np.vstack([apply_preprocess(state, ds, r).X for r in np.array_split(np.arange(n), blocks)])
    np.testing.assert_array_equal(whole, parts)
