"""Delimited-file ingestion into a typed, role-annotated table, and train/test splits.

Cells are held in one float64 matrix: numbers as themselves, categorical
cells as their category index, and MISSING as NaN.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from riskpipe.errors import DataError

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

FEATURE, LABEL, ID, GROUP, TIME, DROPPED = "feature", "label", "id", "group", "time", "dropped"

MISSING_TOKENS = frozenset({"", "na", "nan", "null"})
_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    role: str
    categories: tuple[str, ...] = ()

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.kind == CATEGORICAL:
            d["categories"] = list(self.categories)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["kind"], d["role"], tuple(d.get("categories", ())))


@dataclass(frozen=True)
class TabularDataset:
    schemas: tuple[ColumnSchema, ...]
    values: np.ndarray
    train_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.schemas]

    def index(self, name: str) -> int:
        for i, s in enumerate(self.schemas):
            if s.name == name:
                return i
        raise KeyError(name)

    def schema(self, name: str) -> ColumnSchema:
        return self.schemas[self.index(name)]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def has(self, name: str) -> bool:
        return any(s.name == name for s in self.schemas)

    def by_role(self, role: str) -> list[ColumnSchema]:
        return [s for s in self.schemas if s.role == role]

    def cell_text(self, row: int, col: int) -> str:
        v = self.values[row, col]
        if math.isnan(v):
            return ""
        s = self.schemas[col]
        if s.kind == CATEGORICAL:
            return s.categories[int(v)]
        return repr(float(v))

    def row_ids(self, rows=None) -> list[str]:
        ids = self.by_role(ID)
        rows = range(self.n_rows) if rows is None else rows
        if not ids:
            return [str(int(r)) for r in rows]
        col = self.index(ids[0].name)
        return [self.cell_text(int(r), col) for r in rows]


def is_missing(text: str) -> bool:
    return text.strip().lower() in MISSING_TOKENS


def parse_decimal(text: str) -> float | None:
    t = text.strip()
    if not _DECIMAL.match(t):
        return None
    v = float(t)
    return v if math.isfinite(v) else None


def _read_rows(path, fmt="csv"):
    if fmt == "xlsx":
        raise DataError("format xlsx not supported in this build")
    if fmt != "csv":
        raise DataError(f"unsupported dataset format '{fmt}'")
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = list(csv.reader(fh, delimiter=",", quotechar='"', doublequote=True, strict=True))
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}") from None
    except (csv.Error, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: unreadable CSV: {exc}") from None
    if not rows:
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    seen = set()
    for h in header:
        if h in seen:
            raise DataError(f"{path}: duplicate column name '{h}' in header")
        seen.add(h)
    body = [r for r in rows[1:] if r]  # blank lines carry no cells
    for i, r in enumerate(rows[1:], start=2):
        if r and len(r) != len(header):
            raise DataError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
    return header, body


def _encode_column(cells, kind, categories=None, extend=True):
    """Encode text cells; returns (values, categories). Unknown levels become NaN unless ``extend``."""
    out = np.full(len(cells), np.nan)
    if kind == NUMERIC:
        for i, c in enumerate(cells):
            if not is_missing(c):
                out[i] = parse_decimal(c)
        return out, ()
    cats = list(categories or ())
    lookup = {c: i for i, c in enumerate(cats)}
    for i, c in enumerate(cells):
        if is_missing(c):
            continue
        key = c.strip()
        if key not in lookup:
            if not extend:
                continue
            lookup[key] = len(cats)
            cats.append(key)
        out[i] = lookup[key]
    return out, tuple(cats)


def _all_numeric(cells) -> bool:
    return all(is_missing(c) or parse_decimal(c) is not None for c in cells)


def read_csv_dataset(path, dc) -> TabularDataset:
    """Read a delimited file, assigning roles and kinds from the data configuration."""
    header, body = _read_rows(path, dc.dataset_format)
    declared = [dc.patient_id, *dc.labels, *dc.features2drop, *dc.categorical_features]
    declared += [c for c in (dc.group, dc.time) if c]
    for name in declared:
        if name not in header:
            raise DataError(f"{path}: declared column '{name}' not found in header")
    labels = set(dc.labels)
    dropped = set(dc.features2drop)
    categorical = set(dc.categorical_features)
    schemas, columns = [], []
    for j, name in enumerate(header):
        cells = [r[j] for r in body]
        if name in dropped:
            role = DROPPED
        elif name == dc.patient_id:
            role = ID
        elif name in labels:
            role = LABEL
        elif dc.group and name == dc.group:
            role = GROUP
        elif dc.time and name == dc.time:
            role = TIME
        else:
            role = FEATURE
        numeric = _all_numeric(cells) and name not in categorical
        if role == ID:
            numeric = False
        if not numeric and role == FEATURE and name not in categorical:
            log.warning("column '%s' holds non-numeric cells; treated as categorical", name)
        kind = NUMERIC if numeric else CATEGORICAL
        vals, cats = _encode_column(cells, kind)
        schemas.append(ColumnSchema(name, kind, role, cats))
        columns.append(vals)
    values = np.column_stack(columns) if columns else np.zeros((len(body), 0))
    values = values.reshape(len(body), len(header))
    return TabularDataset(tuple(schemas), values, np.arange(len(body)), np.zeros(0, dtype=np.int64))


def write_csv_dataset(ds: TabularDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.names)
        for i in range(ds.n_rows):
            w.writerow([ds.cell_text(i, j) for j in range(len(ds.schemas))])


def _largest_remainder(total: int, sizes: list[int]) -> list[int]:
    n = sum(sizes)
    quotas = [total * s / n for s in sizes]
    alloc = [math.floor(q) for q in quotas]
    left = total - sum(alloc)
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[:left]:
        alloc[i] += 1
    return alloc


def split_dataset(ds: TabularDataset, dc) -> TabularDataset:
    """Partition rows into train/test.

    ``n_train = floor(n * split_percentage / 100)``. Sequential splits take the
    first ``n_train`` rows. Random splits draw ``perm = default_rng(seed).permutation(n)``
    and take the first ``n_train`` entries of ``perm``; when ``group`` names a
    label column, each class (in category/value order, missing last) receives its
    largest-remainder share of ``n_train``, filled from its rows in ``perm`` order.
    Both index sets are returned sorted.
    """
    if dc.phase != "training_predict":
        raise DataError("split requested but phase is not 'training_predict'")
    n = ds.n_rows
    n_train = math.floor(n * dc.split_percentage / 100)
    if n_train == 0 or n_train == n:
        raise DataError(f"split of {n} rows at {dc.split_percentage}% leaves an empty "
                        f"{'train' if n_train == 0 else 'test'} partition")
    if dc.split_type == "sequential":
        train = np.arange(n_train)
    else:
        perm = np.random.default_rng(dc.seed).permutation(n)
        if dc.group and dc.group in dc.labels:
            y = ds.column(dc.group)[perm]
            keys = sorted({v for v in y if not math.isnan(v)})
            groups = [perm[y == k] for k in keys]
            missing = perm[np.isnan(y)]
            if missing.size:
                groups.append(missing)
            alloc = _largest_remainder(n_train, [g.size for g in groups])
            train = np.concatenate([g[:a] for g, a in zip(groups, alloc)])
        else:
            train = perm[:n_train]
        train = np.sort(train)
    mask = np.zeros(n, dtype=bool)
    mask[train] = True
    return replace(ds, train_rows=np.flatnonzero(mask), test_rows=np.flatnonzero(~mask))


def read_predict_data(path, schemas, fmt="csv") -> TabularDataset:
    """Read new rows against the training column schemas.

    Feature columns are mandatory and come back in training order, with the
    training category index space; labels and the id column are optional.
    """
    header, body = _read_rows(path, fmt)
    position = {h: j for j, h in enumerate(header)}
    out_schemas, columns = [], []
    used = set()
    for s in schemas:
        if s.role == DROPPED:
            continue
        if s.name not in position:
            if s.role == FEATURE:
                raise DataError(f"{path}: trained feature column '{s.name}' not found in header")
            continue
        j = position[s.name]
        used.add(s.name)
        cells = [r[j] for r in body]
        if s.role == ID:
            vals, cats = _encode_column(cells, CATEGORICAL)
            out_schemas.append(replace(s, categories=cats))
        else:
            if s.kind == NUMERIC and not _all_numeric(cells):
                raise DataError(f"{path}: column '{s.name}' was numeric at training time but holds text")
            vals, _ = _encode_column(cells, s.kind, s.categories, extend=False)
            if s.kind == CATEGORICAL:
                unseen = sum(1 for c, v in zip(cells, vals) if math.isnan(v) and not is_missing(c))
                if unseen:
                    log.info("column '%s': %d cell(s) with unseen categories set to missing", s.name, unseen)
            out_schemas.append(s)
        columns.append(vals)
    extra = [h for h in header if h not in used and h not in {s.name for s in schemas}]
    if extra:
        log.info("ignoring columns not present at training time: %s", ", ".join(extra))
    values = np.column_stack(columns).reshape(len(body), len(columns)) if columns else np.zeros((len(body), 0))
    return TabularDataset(tuple(out_schemas), values, np.arange(len(body)), np.zeros(0, dtype=np.int64))


def freeze_categories(ds: TabularDataset, rows=None) -> TabularDataset:
    """Rebuild feature/label category lists from ``rows`` only (train rows by default).

    Levels are kept in first-appearance order over ``rows``; cells holding a
    level that never occurs in ``rows`` become MISSING. This keeps test rows
    out of the one-hot index space.
    """
    rows = ds.train_rows if rows is None else np.asarray(rows, dtype=np.int64)
    values = ds.values.copy()
    schemas = list(ds.schemas)
    for j, s in enumerate(ds.schemas):
        if s.kind != CATEGORICAL or s.role not in (FEATURE, LABEL):
            continue
        col = ds.values[:, j]
        order = []
        seen = set()
        for v in col[rows]:
            if not math.isnan(v) and int(v) not in seen:
                seen.add(int(v))
                order.append(int(v))
        remap = np.full(len(s.categories), np.nan)
        remap[order] = np.arange(len(order))
        present = ~np.isnan(col)
        new = np.full(col.shape, np.nan)
        new[present] = remap[col[present].astype(np.int64)]
        dropped = int(np.sum(present & np.isnan(new)))
        if dropped:
            log.info("column '%s': %d cell(s) with levels absent from training rows set to missing",
                     s.name, dropped)
        values[:, j] = new
        schemas[j] = replace(s, categories=tuple(s.categories[i] for i in order))
    return replace(ds, schemas=tuple(schemas), values=values)
