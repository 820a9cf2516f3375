"""Algorithm families, the tasks each supports, and their default parameters.

Kept free of numerical imports so configuration parsing can consult it cheaply.
"""

REQUIRED = object()

CLASSIFICATION = "classification"
REGRESSION = "regression"
CLUSTERING = "clustering"
TASKS = (CLASSIFICATION, REGRESSION, CLUSTERING)

_C, _R, _K = CLASSIFICATION, REGRESSION, CLUSTERING

SUPPORT = {
    "SGDClassifier": (_C,),
    "ElasticNet": (_R,),
    "GradientBoosting": (_C, _R),
    "RandomForest": (_C, _R),
    "MLP": (_C, _R),
    "SVM": (_C, _R),
    "KNN": (_C, _R),
    "KMeans": (_K,),
    "AggClustering": (_K,),
    "DBSCAN": (_K,),
}

FAMILIES = tuple(SUPPORT)

DEFAULTS = {
    "SGDClassifier": {"loss": "log", "l2": 1e-4, "epochs": 100, "eta0": 0.1},
    "ElasticNet": {"alpha": 1.0, "l1_ratio": 0.5, "max_iter": 1000, "tol": 1e-6},
    "GradientBoosting": {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3},
    "RandomForest": {"n_estimators": 100, "max_depth": None, "max_features": "auto",
                     "bootstrap": True},
    "MLP": {"hidden": 64, "activation": "relu", "lr": 1e-3, "epochs": 200, "batch": 32},
    "SVM": {"C": 1.0, "epochs": 200, "eta0": 0.1, "epsilon": 0.1},
    "KNN": {"k": 5},
    "KMeans": {"n_clusters": REQUIRED, "n_init": 10, "max_iter": 300, "tol": 1e-6},
    "AggClustering": {"n_clusters": REQUIRED, "linkage": "average"},
    "DBSCAN": {"eps": REQUIRED, "min_samples": 5},
}

CHOICES = {
    ("SGDClassifier", "loss"): ("log", "hinge"),
    ("MLP", "activation"): ("relu", "tanh", "logistic", "identity"),
    ("AggClustering", "linkage"): ("average", "single", "complete"),
}

# families whose fitted models expose per-feature importances
WEIGHTED = frozenset({"SGDClassifier", "ElasticNet", "GradientBoosting", "RandomForest", "SVM"})


def supports(family, task):
    return task in SUPPORT.get(family, ())


def support_matrix_text():
    rows = [f"{name}: {', '.join(tasks)}" for name, tasks in SUPPORT.items()]
    return "; ".join(rows)


def resolve_params(family, params):
    """Merge user params over family defaults; raises KeyError/ValueError on bad input."""
    defaults = DEFAULTS[family]
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise KeyError(f"unknown parameter(s) for {family}: {', '.join(unknown)}; "
                       f"accepted: {', '.join(defaults)}")
    out = {}
    for key, default in defaults.items():
        value = params.get(key, default)
        if value is REQUIRED:
            raise ValueError(f"{family} requires parameter '{key}'")
        choices = CHOICES.get((family, key))
        if choices is not None and value not in choices:
            raise ValueError(f"{family}.{key} must be one of {', '.join(choices)}; got {value!r}")
        out[key] = value
    return out
