"""Nearest neighbours, k-means, agglomerative clustering and DBSCAN."""

from dataclasses import dataclass, field

import numpy as np

from riskpipe.errors import ModelError


def pairwise_sq_dist(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    d = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def pairwise_dist(A, B):
    # exact differences keep ties and zero distances exact
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, 2_000_000 // max(1, B.shape[0] * max(1, A.shape[1])))
    for start in range(0, A.shape[0], step):
        diff = A[start:start + step, None, :] - B[None, :, :]
        out[start:start + step] = np.sqrt((diff * diff).sum(axis=2))
    return out


def nearest_neighbors(Xtrain, Xquery, k):
    """Indices of the ``k`` nearest training rows per query; distance ties go to the lower index."""
    d = pairwise_dist(Xquery, Xtrain)
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, :k]


def knn_fit_predict(Xtrain, ytrain, k, Xquery, classification=True):
    """Majority vote (ties -> smallest class value) or neighbour mean."""
    ytrain = np.asarray(ytrain, dtype=float)
    k = min(int(k), len(ytrain))
    nn = nearest_neighbors(Xtrain, Xquery, k)
    if not classification:
        return ytrain[nn].mean(axis=1)
    classes = np.unique(ytrain)
    codes = np.searchsorted(classes, ytrain)
    votes = np.zeros((nn.shape[0], classes.size))
    for j in range(k):
        votes[np.arange(nn.shape[0]), codes[nn[:, j]]] += 1.0
    return classes[np.argmax(votes, axis=1)]


# ---------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    histories: list = field(default_factory=list)  # per restart: inertia after each assignment


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = pairwise_sq_dist(X, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, pairwise_sq_dist(X, X[idx:idx + 1])[:, 0])
    return np.array(centers)


def _lloyd(X, centroids, max_iter, tol):
    history = []
    for _ in range(int(max_iter)):
        d2 = pairwise_sq_dist(X, centroids)
        labels = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(X.shape[0]), labels]
        history.append(float(point_d2.sum()))
        new = centroids.copy()
        for c in range(centroids.shape[0]):
            members = labels == c
            if members.any():
                new[c] = X[members].mean(axis=0)
            else:
                # re-seed at the point currently farthest from its own centroid
                far = int(np.argmax(point_d2))
                new[c] = X[far]
                labels[far] = c
                point_d2[far] = 0.0
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    d2 = pairwise_sq_dist(X, centroids)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(X.shape[0]), labels].sum())
    history.append(inertia)
    return centroids, labels, inertia, history


def kmeans_fit(X, n_clusters, n_init=10, max_iter=300, tol=1e-6, seed=0):
    """Best of ``n_init`` k-means++ restarts; restart ``r`` draws from ``default_rng([seed, r])``."""
    X = np.asarray(X, dtype=float)
    k = int(n_clusters)
    if not 1 <= k <= X.shape[0]:
        raise ModelError(f"n_clusters={k} must lie in [1, {X.shape[0]}]")
    best = None
    histories = []
    for r in range(int(n_init)):
        rng = np.random.default_rng([seed, r])
        centroids, labels, inertia, history = _lloyd(X, _kmeanspp(X, k, rng), max_iter, tol)
        histories.append(history)
        if best is None or inertia < best.inertia:
            best = KMeansResult(centroids, labels, inertia)
    best.histories = histories
    return best


# ---------------------------------------------------------------------------
# agglomerative


def agglomerative_merges(X, linkage="average"):
    """Full merge sequence ``[(i, j, distance)]`` with cluster ids = smallest member row.

    The closest pair is merged at every step (ties -> lexicographically smallest
    (i, j)); cluster ``j`` is folded into ``i`` and distances are refreshed with
    the Lance-Williams update for the chosen linkage.
    """
    if linkage not in ("average", "single", "complete"):
        raise ModelError(f"unknown linkage '{linkage}'")
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    D = pairwise_dist(X, X)
    np.fill_diagonal(D, np.inf)
    size = np.ones(n)
    alive = np.ones(n, dtype=bool)
    merges = []
    for _ in range(n - 1):
        masked = np.where(alive[:, None] & alive[None, :], D, np.inf)
        masked = np.triu(masked, 1) + np.tril(np.full((n, n), np.inf))
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        dist = float(masked[i, j])
        merges.append((i, j, dist))
        if linkage == "single":
            row = np.minimum(D[i], D[j])
        elif linkage == "complete":
            row = np.maximum(D[i], D[j])
        else:
            row = (size[i] * D[i] + size[j] * D[j]) / (size[i] + size[j])
        D[i, :] = row
        D[:, i] = row
        D[i, i] = np.inf
        D[j, :] = np.inf
        D[:, j] = np.inf
        size[i] += size[j]
        alive[j] = False
    return merges


def labels_from_merges(n, merges, n_clusters):
    """Cut the merge sequence at ``n_clusters``; labels numbered by first appearance."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j, _ in merges[: n - n_clusters]:
        parent[find(j)] = find(i)
    roots = [find(a) for a in range(n)]
    mapping = {}
    return np.array([mapping.setdefault(r, len(mapping)) for r in roots], dtype=np.int64)


def agglomerative_fit(X, n_clusters, linkage="average"):
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    k = int(n_clusters)
    if not 1 <= k <= n:
        raise ModelError(f"n_clusters={k} must lie in [1, {n}]")
    return labels_from_merges(n, agglomerative_merges(X, linkage), k)


# ---------------------------------------------------------------------------
# DBSCAN


def dbscan_fit(X, eps, min_samples=5):
    """Returns ``(labels, core)``; noise is -1 and ``min_samples`` counts the point itself.

    Points are visited in index order; a border point keeps the first cluster
    that reaches it.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    within = pairwise_dist(X, X) <= eps
    core = within.sum(axis=1) >= int(min_samples)
    labels = np.full(n, -1, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = [i]
        while queue:
            a = queue.pop(0)
            if not core[a]:
                continue
            for b in np.flatnonzero(within[a]):
                if labels[b] == -1:
                    labels[b] = cluster
                    queue.append(b)
        cluster += 1
    return labels, core
