"""Evaluation metrics for classification, regression and clustering.

Each function returns a plain dict of floats. Ratios with a zero denominator
are reported as 0 and their names collected under ``"degenerate"``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from riskpipe.errors import ModelError

PROBA_CLIP = 1e-15


def _ratio(num, den, name, degenerate):
    if den == 0:
        degenerate.append(name)
        return 0.0
    return float(num / den)


def confusion_matrix(y_true, y_pred, classes=None):
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if classes is None:
        classes = np.unique(np.concatenate([y_true, y_pred]))
    classes = np.asarray(classes, dtype=float)
    t = np.searchsorted(classes, y_true)
    p = np.searchsorted(classes, y_pred)
    cm = np.zeros((classes.size, classes.size), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm, classes


def binary_counts(cm):
    """(TP, FP, TN, FN) with the greater label as the positive class."""
    tn, fp, fn, tp = cm[0, 0], cm[0, 1], cm[1, 0], cm[1, 1]
    return int(tp), int(fp), int(tn), int(fn)


def _kappa(cm):
    n = cm.sum()
    po = np.trace(cm) / n
    pe = float((cm.sum(axis=0) * cm.sum(axis=1)).sum()) / (n * n)
    return po, pe


def _mcc(cm):
    # multiclass generalisation; reduces to (TP*TN - FP*FN)/sqrt(...) for two classes
    n = float(cm.sum())
    c = float(np.trace(cm))
    t = cm.sum(axis=1).astype(float)
    p = cm.sum(axis=0).astype(float)
    num = c * n - float(t @ p)
    den = math.sqrt((n * n - float(p @ p)) * (n * n - float(t @ t)))
    return num, den


def classification_metrics(y_true, y_pred, y_proba=None, classes=None):
    """Accuracy, precision, recall, F1, FAR, POD, TSS, HSS, MCC and cross-entropy.

    ``classes`` fixes the label order of ``y_proba`` columns; it defaults to the
    sorted union of observed labels. Binary asymmetric metrics treat the greater
    label as positive; with more than two classes precision/recall/F1 are
    macro-averaged and FAR/POD/TSS are omitted.
    """
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ModelError(f"length mismatch: {y_true.size} true vs {y_pred.size} predicted labels")
    if y_true.size == 0:
        raise ModelError("cannot score an empty prediction set")
    if classes is None:
        classes = np.unique(np.concatenate([y_true, y_pred]))
    classes = np.asarray(classes, dtype=float)
    if classes.size < 2:
        classes = np.array([classes[0], classes[0] + 1.0]) if classes.size else np.array([0.0, 1.0])
    cm, classes = confusion_matrix(y_true, y_pred, classes)
    n = int(cm.sum())
    deg: list[str] = []
    out: dict = {"accuracy": float(np.trace(cm) / n)}
    if classes.size == 2:
        tp, fp, tn, fn = binary_counts(cm)
        precision = _ratio(tp, tp + fp, "precision", deg)
        recall = _ratio(tp, tp + fn, "recall", deg)
        out["precision"] = precision
        out["recall"] = recall
        out["f1"] = _ratio(2 * tp, 2 * tp + fp + fn, "f1", deg)
        out["far"] = _ratio(fp, tp + fp, "far", deg)
        out["pod"] = _ratio(tp, tp + fn, "pod", deg)
        if tp + fn == 0 or tn + fp == 0:
            deg.append("tss")
            out["tss"] = 0.0
        else:
            out["tss"] = tp / (tp + fn) + tn / (tn + fp) - 1.0
        out["positive_class"] = float(classes[1])
    else:
        precisions, recalls, f1s = [], [], []
        for k in range(classes.size):
            tp = cm[k, k]
            fp = cm[:, k].sum() - tp
            fn = cm[k, :].sum() - tp
            sink: list[str] = []
            precisions.append(_ratio(tp, tp + fp, "precision", sink))
            recalls.append(_ratio(tp, tp + fn, "recall", sink))
            f1s.append(_ratio(2 * tp, 2 * tp + fp + fn, "f1", sink))
            deg.extend(s for s in sink if s not in deg)
        out["precision"] = float(np.mean(precisions))
        out["recall"] = float(np.mean(recalls))
        out["f1"] = float(np.mean(f1s))
    po, pe = _kappa(cm)
    out["hss"] = _ratio(po - pe, 1.0 - pe, "hss", deg)
    num, den = _mcc(cm)
    out["mcc"] = _ratio(num, den, "mcc", deg)
    if y_proba is not None:
        out["cross_entropy"] = cross_entropy(y_true, y_proba, classes)
    if deg:
        out["degenerate"] = sorted(set(deg))
    return out


def cross_entropy(y_true, y_proba, classes):
    proba = np.clip(np.asarray(y_proba, dtype=float), PROBA_CLIP, 1.0 - PROBA_CLIP)
    classes = np.asarray(classes, dtype=float)
    idx = np.searchsorted(classes, np.asarray(y_true, dtype=float))
    if proba.shape != (idx.size, classes.size):
        raise ModelError("probability matrix shape does not match labels and classes")
    return float(-np.mean(np.log(proba[np.arange(idx.size), idx])))


def regression_metrics(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ModelError(f"length mismatch: {y_true.size} true vs {y_pred.size} predicted values")
    if y_true.size == 0:
        raise ModelError("cannot score an empty prediction set")
    err = y_true - y_pred
    mse = float(np.mean(err * err))
    out = {"mse": mse, "rmse": math.sqrt(mse), "mae": float(np.mean(np.abs(err)))}
    ss_res = float(err @ err)
    centred = y_true - y_true.mean()
    ss_tot = float(centred @ centred)
    if ss_tot == 0:
        out["r2"] = 0.0
        out["degenerate"] = ["r2"]
    else:
        out["r2"] = 1.0 - ss_res / ss_tot
    return out


# ---------------------------------------------------------------------------
# clustering


def contingency(a, b):
    _, ai = np.unique(np.asarray(a), return_inverse=True)
    _, bi = np.unique(np.asarray(b), return_inverse=True)
    table = np.zeros((ai.max() + 1 if ai.size else 0, bi.max() + 1 if bi.size else 0), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def _entropy(counts):
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts > 0]
    n = counts.sum()
    p = counts / n
    return float(-(p * np.log(p)).sum())


def _mutual_info(table):
    n = table.sum()
    nz = np.nonzero(table)
    nij = table[nz].astype(float)
    a = table.sum(axis=1)[nz[0]].astype(float)
    b = table.sum(axis=0)[nz[1]].astype(float)
    return float((nij / n * np.log(n * nij / (a * b))).sum())


def expected_mutual_info(table):
    """Expected MI between random partitions with the table's marginals (hypergeometric model)."""
    a = table.sum(axis=1).astype(np.int64)
    b = table.sum(axis=0).astype(np.int64)
    n = int(table.sum())
    emi = 0.0
    lg_n = gammaln(n + 1)
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=float)
            term = nij / n * np.log(n * nij / (ai * bj))
            logp = (gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                    - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                    - gammaln(n - ai - bj + nij + 1))
            emi += float((term * np.exp(logp)).sum())
    return emi


def _same_partition(table):
    return bool(np.all((table > 0).sum(axis=0) == 1) and np.all((table > 0).sum(axis=1) == 1))


def adjusted_rand(labels_true, labels_pred) -> float:
    table = contingency(labels_true, labels_pred)
    if _same_partition(table):
        return 1.0
    n = table.sum()
    index = _comb2(table).sum()
    sa = _comb2(table.sum(axis=1)).sum()
    sb = _comb2(table.sum(axis=0)).sum()
    expected = sa * sb / _comb2(n)
    maximum = (sa + sb) / 2.0
    if maximum == expected:
        return 0.0
    return float((index - expected) / (maximum - expected))


def adjusted_mutual_info(labels_true, labels_pred) -> float:
    """AMI with arithmetic-mean normalisation."""
    table = contingency(labels_true, labels_pred)
    if _same_partition(table):
        return 1.0
    if table.shape[0] == 1 or table.shape[1] == 1:
        return 0.0
    mi = _mutual_info(table)
    emi = expected_mutual_info(table)
    h_true = _entropy(table.sum(axis=1))
    h_pred = _entropy(table.sum(axis=0))
    denom = (h_true + h_pred) / 2.0 - emi
    if denom == 0:
        return 0.0
    return float((mi - emi) / denom)


def homogeneity_completeness_v(labels_true, labels_pred):
    table = contingency(labels_true, labels_pred)
    h_c = _entropy(table.sum(axis=1))
    h_k = _entropy(table.sum(axis=0))
    mi = _mutual_info(table)
    # H(C|K) = H(C) - I(C;K)
    homogeneity = 1.0 if h_c == 0 else mi / h_c
    completeness = 1.0 if h_k == 0 else mi / h_k
    if homogeneity + completeness == 0:
        v = 0.0
    else:
        v = 2.0 * homogeneity * completeness / (homogeneity + completeness)
    return float(homogeneity), float(completeness), float(v)


def clustering_external_metrics(labels_true, labels_pred) -> dict:
    labels_true = np.asarray(labels_true)
    labels_pred = np.asarray(labels_pred)
    if labels_true.shape != labels_pred.shape:
        raise ModelError("length mismatch between true and predicted cluster labels")
    if labels_true.size == 0:
        raise ModelError("cannot score an empty clustering")
    _, _, v = homogeneity_completeness_v(labels_true, labels_pred)
    return {
        "ARI": adjusted_rand(labels_true, labels_pred),
        "AMI": adjusted_mutual_info(labels_true, labels_pred),
        "v-score": v,
    }


def silhouette_score(X, labels) -> float:
    """Mean silhouette over non-noise points; singleton clusters score 0.

    Raises ModelError when fewer than two clusters remain after removing noise (-1).
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    keep = labels != -1
    X, labels = X[keep], labels[keep]
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ModelError("silhouette undefined: fewer than two clusters")
    from riskpipe.learners.cluster import pairwise_dist

    D = pairwise_dist(X, X)
    codes = np.searchsorted(uniq, labels)
    sums = np.zeros((X.shape[0], uniq.size))
    for k in range(uniq.size):
        sums[:, k] = D[:, codes == k].sum(axis=1)
    sizes = np.bincount(codes, minlength=uniq.size).astype(float)
    own = sizes[codes]
    idx = np.arange(X.shape[0])
    a = np.where(own > 1, sums[idx, codes] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / sizes
    mean_other[idx, codes] = np.inf
    b = mean_other.min(axis=1)
    s = np.zeros(X.shape[0])
    multi = own > 1
    top = np.maximum(a, b)
    ok = multi & (top > 0)
    s[ok] = (b[ok] - a[ok]) / top[ok]
    return float(s.mean())
