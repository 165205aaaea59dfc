"""k-means in score space, cluster-to-class mapping and a Gini decision tree."""

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .segment import UNHEALTHY


def _vote(counts: dict):
    """Majority class; ties go to 'unhealthy' when it is tied, else the smallest label."""
    best = max(counts.values())
    tied = sorted(c for c, v in counts.items() if v == best)
    return UNHEALTHY if UNHEALTHY in tied else tied[0]


# ---- k-means ---------------------------------------------------------------

@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray
    inertia: float
    iterations: int
    converged: bool

    def to_dict(self):
        return {"centroids": self.centroids.tolist(), "inertia": self.inertia,
                "iterations": self.iterations, "converged": self.converged}

    @classmethod
    def from_dict(cls, d):
        return cls(np.atleast_2d(np.array(d["centroids"], float)), float(d["inertia"]),
                   int(d["iterations"]), bool(d["converged"]))


def _sqdist(X, C):
    return np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=2)


def kmeans_assign(points, model) -> np.ndarray:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    C = model.centroids if isinstance(model, KMeansModel) else np.asarray(model, dtype=float)
    if X.shape[1] != C.shape[1]:
        raise ValueError(f"points have {X.shape[1]} dims, centroids {C.shape[1]}")
    return np.argmin(_sqdist(X, C), axis=1)  # argmin keeps the lowest index on ties


def kmeans_pp(X, k, rng) -> np.ndarray:
    m = len(X)
    C = [X[rng.integers(m)]]
    d2 = np.sum((X - C[0]) ** 2, axis=1)
    for _ in range(1, k):
        tot = d2.sum()
        i = rng.integers(m) if tot <= 0 else rng.choice(m, p=d2 / tot)
        C.append(X[i])
        d2 = np.minimum(d2, np.sum((X - X[i]) ** 2, axis=1))
    return np.array(C, dtype=float)


def lloyd(X, C, tol=1e-6, max_iter=300):
    """Plain Lloyd iterations from C. Returns (centroids, iterations, converged, inertia history)."""
    C = C.copy()
    labels = None
    history = []
    for it in range(1, max_iter + 1):
        d = _sqdist(X, C)
        new = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            return C, it, True, history
        labels = new
        C_old = C.copy()
        for j in range(len(C)):
            mask = labels == j
            if mask.any():
                C[j] = X[mask].mean(axis=0)
            else:
                # empty cluster: move it onto the worst-served point
                far = int(np.argmax(d[np.arange(len(X)), labels]))
                C[j] = X[far]
                labels[far] = j
        if np.max(np.linalg.norm(C - C_old, axis=1)) < tol:
            d = _sqdist(X, C)
            history.append(float(d.min(axis=1).sum()))
            return C, it, True, history
    return C, max_iter, False, history


def hartigan_refine(X, C):
    """Single-point transfers that lower inertia once centroids follow the move.

    Moving x from a to b pays off when n_b/(n_b+1)|x-c_b|^2 < n_a/(n_a-1)|x-c_a|^2.
    Lloyd fixed points can violate this; the pass below removes such points and
    ends with centroids recomputed as exact means.
    """
    k = len(C)
    lab = np.argmin(_sqdist(X, C), axis=1)
    n = np.bincount(lab, minlength=k).astype(float)
    C = np.array([X[lab == j].mean(axis=0) if n[j] else C[j] for j in range(k)])
    moved = True
    while moved:
        moved = False
        for i in range(len(X)):
            a = lab[i]
            if n[a] <= 1:
                continue
            d = np.sum((C - X[i]) ** 2, axis=1)
            cost = n / (n + 1) * d
            cost[a] = np.inf
            b = int(np.argmin(cost))
            if cost[b] < n[a] / (n[a] - 1) * d[a] - 1e-12 * (1 + d[a]):
                C[a] = (C[a] * n[a] - X[i]) / (n[a] - 1)
                C[b] = (C[b] * n[b] + X[i]) / (n[b] + 1)
                n[a] -= 1
                n[b] += 1
                lab[i] = b
                moved = True
    return np.array([X[lab == j].mean(axis=0) if n[j] else C[j] for j in range(k)])


def kmeans_fit(scores, k_clusters: int = 2, seed: int = 0, tol: float = 1e-6, max_iter: int = 300,
               restarts: int = 16) -> KMeansModel:
    X = np.atleast_2d(np.asarray(scores, dtype=float))
    if len(X) < k_clusters:
        raise ValueError(f"{len(X)} points cannot fill {k_clusters} clusters")
    if tol <= 0 or k_clusters < 1 or restarts < 1:
        raise ValueError("need tol > 0, k_clusters >= 1, restarts >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        C, it, conv, _ = lloyd(X, kmeans_pp(X, k_clusters, rng), tol, max_iter)
        if conv:
            C = hartigan_refine(X, C)
        inertia = float(_sqdist(X, C).min(axis=1).sum())
        if best is None or inertia < best.inertia:
            best = KMeansModel(C, inertia, it, conv)
    return best


def map_clusters_to_classes(cluster_labels, true_labels) -> dict:
    cl, tl = list(cluster_labels), list(true_labels)
    if not cl:
        raise ValueError("empty input")
    if len(cl) != len(tl):
        raise ValueError("length mismatch")
    classes = sorted(set(tl))
    out = {}
    for c in sorted(set(cl)):
        cnt = Counter(t for a, t in zip(cl, tl) if a == c)
        out[c] = _vote({k: cnt.get(k, 0) for k in classes})
    return out


# ---- decision tree -----------------------------------------------------------

@dataclass
class Node:
    counts: dict
    label: object
    feature: int | None = None
    threshold: float | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self):
        return self.feature is None

    def to_dict(self):
        d = {"class": self.label, "counts": self.counts}
        if not self.is_leaf:
            d.update(feature=self.feature, threshold=self.threshold,
                     left=self.left.to_dict(), right=self.right.to_dict())
        return d

    @classmethod
    def from_dict(cls, d):
        if "feature" not in d:
            return cls(dict(d["counts"]), d["class"])
        return cls(dict(d["counts"]), d["class"], int(d["feature"]), float(d["threshold"]),
                   cls.from_dict(d["left"]), cls.from_dict(d["right"]))


@dataclass
class DecisionTree:
    root: Node
    n_features: int
    max_depth: int | None = 4
    min_leaf: int = 2
    classes: list = field(default_factory=list)

    def depth(self, node=None):
        node = node or self.root
        return 0 if node.is_leaf else 1 + max(self.depth(node.left), self.depth(node.right))

    def to_dict(self):
        return {"n_features": self.n_features, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "classes": self.classes, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(Node.from_dict(d["root"]), int(d["n_features"]), d["max_depth"], int(d["min_leaf"]),
                   list(d["classes"]))

    def to_json(self):
        return json.dumps(self.to_dict())


def _gini(counts, n):
    p = counts / n[:, None]
    return 1.0 - np.sum(p * p, axis=1)


def _best_split(X, y_codes, n_classes, min_leaf):
    """(feature, threshold) minimising weighted Gini, or None when no split is allowed."""
    n = len(y_codes)
    onehot = np.eye(n_classes)[y_codes]
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        v = X[order, f]
        cum = np.cumsum(onehot[order], axis=0)
        # split after position i (left = first i+1 sorted rows)
        pos = np.flatnonzero(v[:-1] < v[1:])
        nl = pos + 1
        pos = pos[(nl >= min_leaf) & (n - nl >= min_leaf)]
        if len(pos) == 0:
            continue
        nl = (pos + 1).astype(float)
        left = cum[pos]
        right = cum[-1] - left
        imp = (nl * _gini(left, nl) + (n - nl) * _gini(right, n - nl)) / n
        i = int(np.flatnonzero(imp <= imp.min() + 1e-12)[0])
        if best is None or imp[i] < best[0] - 1e-12:
            lo, hi = v[pos[i]], v[pos[i] + 1]
            t = (lo + hi) / 2
            if not lo <= t < hi:
                t = lo
            best = (imp[i], f, float(t))
    return None if best is None else best[1:]


def tree_fit(scores, labels, max_depth: int | None = 4, min_leaf: int = 2) -> DecisionTree:
    X = np.atleast_2d(np.asarray(scores, dtype=float))
    y = np.asarray(labels, dtype=object)
    if len(y) == 0:
        raise ValueError("empty training set")
    if len(y) != len(X):
        raise ValueError("scores and labels differ in length")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    classes = sorted(set(y.tolist()))
    codes = np.array([classes.index(v) for v in y])

    def grow(rows, depth):
        cnt = np.bincount(codes[rows], minlength=len(classes))
        counts = {c: int(v) for c, v in zip(classes, cnt) if v}
        node = Node(counts, _vote(counts))
        if len(counts) == 1 or (max_depth is not None and depth >= max_depth) or len(rows) < 2 * min_leaf:
            return node
        sp = _best_split(X[rows], codes[rows], len(classes), min_leaf)
        if sp is None:
            return node
        node.feature, node.threshold = sp
        go_left = X[rows, node.feature] <= node.threshold
        node.left = grow(rows[go_left], depth + 1)
        node.right = grow(rows[~go_left], depth + 1)
        return node

    return DecisionTree(grow(np.arange(len(y)), 0), X.shape[1], max_depth, min_leaf, classes)


def tree_predict(tree: DecisionTree, scores) -> np.ndarray:
    X = np.atleast_2d(np.asarray(scores, dtype=float))
    if X.shape[1] < tree.n_features:
        raise ValueError(f"tree expects {tree.n_features} features, got {X.shape[1]}")
    out = np.empty(len(X), dtype=object)

    def route(node, rows):
        if node.is_leaf:
            out[rows] = node.label
            return
        go_left = X[rows, node.feature] <= node.threshold
        route(node.left, rows[go_left])
        route(node.right, rows[~go_left])

    route(tree.root, np.arange(len(X)))
    return out
