"""Shared builders for test tables and configurations."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

FIXTURES = Path(__file__).parent / "fixtures"


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return Path(path)


def fmt(v):
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return repr(float(v))


def typed_table(n, seed, types=("alpha", "beta", "gamma"), start=0, missing=0.05):
    """Rows shaped like the example configuration: Sample, Type, A..D, E..G.

    E, F, G separate the types; C and D are categorical; A and B are dropped
    columns; a few cells are blanked.
    """
    crng = np.random.default_rng(seed)
    centres = {t: crng.normal(0, 4, size=3) for t in types}
    rng = np.random.default_rng([seed, start])
    header = ["Sample", "Type", "A", "B", "C", "D", "E", "F", "G"]
    rows = []
    for i in range(n):
        t = types[i % len(types)]
        e, f, g = centres[t] + rng.normal(0, 0.6, size=3)
        cells = [f"S{start + i:04d}", t, rng.normal(), rng.integers(0, 9), rng.choice(["lo", "mid", "hi"]),
                 rng.choice(["x", "y"]), e, f, g]
        for j in (4, 6, 7):
            if rng.random() < missing:
                cells[j] = ""
        rows.append([fmt(c) if not isinstance(c, (np.integer, int)) else str(int(c)) for c in cells])
    return header, rows


def supervised_table(n, seed, task="classification", p=4, n_classes=2, missing=0.0, cat=True):
    """ID, label y, numeric x0..x{p-1} and optionally one categorical column."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    w = np.linspace(1.5, -1.0, p)
    score = X @ w + 0.3 * rng.normal(size=n)
    if task == "regression":
        y = [fmt(v) for v in 2.0 * score + 5.0]
    elif n_classes == 2:
        y = ["yes" if s > 0 else "no" for s in score]
    else:
        cuts = np.quantile(score, np.linspace(0, 1, n_classes + 1)[1:-1])
        names = ["c0", "c1", "c2", "c3", "c4"][:n_classes]
        y = [names[int(np.searchsorted(cuts, s))] for s in score]
    header = ["id", "y"] + [f"x{j}" for j in range(p)] + (["kind"] if cat else [])
    rows = []
    for i in range(n):
        cells = [f"r{i}", y[i]] + [fmt(v) if rng.random() >= missing else "" for v in X[i]]
        if cat:
            cells.append(str(rng.choice(["u", "v", "w"])))
        rows.append(cells)
    return header, rows


def data_config(**over):
    doc = {
        "services": {"log_prefix": "run"},
        "runtime": {"run_id": 1},
        "dataset": {"name": "t", "type": "point-in-time", "format": "csv"},
        "PatientID": "id",
        "labels": ["y"],
        "phase": "training",
        "categorical_features": [],
    }
    doc.update(over)
    return json.dumps(doc)


def algo_config(family, task, params=None, description=None, **blocks):
    parameters = {family: params or {}}
    parameters.update(blocks)
    return json.dumps({"algorithm": {"description": description or family, "type": task,
                                     "parameters": parameters}})
