"""
Random forest of Gini classification trees, written against numpy only.

Used twice: to rank the engineered tactile features by impurity-based
importance, and as the tactile-only baseline classifier.

Trees are stored as flat arrays (one entry per node).  A node with
``feature == -1`` is a leaf.  Samples go left when ``x[feature] <= threshold``.
Nodes are expanded breadth first, so a tree grown with a larger
``max_depth`` is an exact refinement of the shallower one for the same seed.
"""

import csv
import json
import math
import warnings
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (ConfigurationError, DegenerateFitError, DegenerateFitWarning, DimensionError,
                     LabelError, LoadError, ParameterError)

SNAPSHOT_VERSION = "SFV1-RF1"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 15
    min_samples_split: int = 5
    min_samples_leaf: int = 2
    max_features: str = "sqrt"  # "sqrt" or "all"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigurationError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 0:
            raise ConfigurationError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ConfigurationError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2 * self.min_samples_leaf:
            raise ConfigurationError(
                f"min_samples_split ({self.min_samples_split}) must be >= "
                f"2 * min_samples_leaf ({self.min_samples_leaf})")
        if self.max_features not in ("sqrt", "all"):
            raise ConfigurationError(f"max_features must be 'sqrt' or 'all', got {self.max_features!r}")

    def n_candidate_features(self, n_features):
        if self.max_features == "all":
            return n_features
        return max(1, math.ceil(math.sqrt(n_features)))


@dataclass
class Tree:
    feature: np.ndarray            # int, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray               # child node ids, -1 at leaves
    right: np.ndarray
    impurity_decrease: np.ndarray  # parent gini minus weighted child gini
    n_node_samples: np.ndarray
    class_counts: np.ndarray       # (n_nodes, n_classes)

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def is_leaf(self):
        return self.feature < 0

    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        """Leaf id reached by each row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_proba(self, X):
        counts = self.class_counts[self.apply(X)].astype(np.float64)
        return counts / counts.sum(axis=1, keepdims=True)

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "impurity_decrease": [float(v) for v in self.impurity_decrease],
            "n_node_samples": self.n_node_samples.tolist(),
            "class_counts": self.class_counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            impurity_decrease=np.asarray(d["impurity_decrease"], dtype=np.float64),
            n_node_samples=np.asarray(d["n_node_samples"], dtype=np.int64),
            class_counts=np.asarray(d["class_counts"], dtype=np.int64).reshape(len(d["feature"]), -1),
        )


def _gini(counts):
    n = counts.sum(axis=-1)
    safe = np.where(n > 0, n, 1)
    return 1.0 - np.sum((counts / safe[..., None]) ** 2, axis=-1)


def _best_split(x, onehot, min_leaf):
    """Best midpoint split of one feature column.

    Returns ``(weighted_child_gini, threshold)`` or None when no split keeps
    ``min_leaf`` samples on each side.
    """
    n = len(x)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    left_counts = np.cumsum(onehot[order], axis=0)[:-1]   # left = first i+1 samples
    n_left = np.arange(1, n)
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not valid.any():
        return None
    pos = np.flatnonzero(valid)
    lc = left_counts[pos]
    rc = left_counts[-1] + onehot[order[-1]] - lc
    nl = n_left[pos].astype(np.float64)
    child = (nl * _gini(lc) + (n - nl) * _gini(rc)) / n
    j = int(np.argmin(child))
    i = pos[j]
    return float(child[j]), 0.5 * (xs[i] + xs[i + 1])


def fit_tree(X, y, n_classes, cfg, rng):
    """Grow one tree on (X, y) as given; bootstrapping is the caller's job."""
    N, F = X.shape
    onehot = np.eye(n_classes, dtype=np.int64)[y]
    n_try = cfg.n_candidate_features(F)
    feature, threshold, left, right, decrease, n_samples, counts = [], [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        decrease.append(0.0)
        n_samples.append(len(idx))
        counts.append(onehot[idx].sum(axis=0))
        return len(feature) - 1

    queue = deque([(new_node(np.arange(N)), np.arange(N), 0)])
    while queue:
        node, idx, depth = queue.popleft()
        node_counts = counts[node]
        n = len(idx)
        if depth >= cfg.max_depth or n < cfg.min_samples_split or np.count_nonzero(node_counts) <= 1:
            continue
        parent_gini = float(_gini(node_counts))
        best = None
        # Draw candidates in random order until n_try non-constant ones have been scored.
        scored = 0
        for f in rng.permutation(F):
            col = X[idx, f]
            if col.min() == col.max():
                continue
            scored += 1
            res = _best_split(col, onehot[idx], cfg.min_samples_leaf)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], res[1], int(f))
            if scored >= n_try:
                break
        if best is None:
            continue
        child_gini, thr, f = best
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        decrease[node] = max(parent_gini - child_gini, 0.0)
        li, ri = idx[go_left], idx[~go_left]
        left[node] = new_node(li)
        right[node] = new_node(ri)
        queue.append((left[node], li, depth + 1))
        queue.append((right[node], ri, depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        impurity_decrease=np.asarray(decrease, dtype=np.float64),
        n_node_samples=np.asarray(n_samples, dtype=np.int64),
        class_counts=np.asarray(counts, dtype=np.int64).reshape(len(feature), n_classes),
    )


@dataclass
class Forest:
    trees: list
    n_features: int
    n_classes: int
    config: ForestConfig
    feature_names: tuple = None

    def predict_proba(self, X):
        return predict_proba(self, X)

    def predict(self, X):
        return np.argmax(predict_proba(self, X), axis=-1)

    def count_nodes(self):
        return int(sum(t.n_nodes for t in self.trees))

    def to_dict(self):
        return {
            "version": SNAPSHOT_VERSION,
            "config": asdict(self.config),
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != SNAPSHOT_VERSION:
            raise LoadError(f"unsupported forest snapshot version {d.get('version')!r}")
        names = d.get("feature_names")
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            n_features=int(d["n_features"]),
            n_classes=int(d["n_classes"]),
            config=ForestConfig(**d["config"]),
            feature_names=tuple(names) if names else None,
        )


def _leaf_tree(y, n_classes):
    counts = np.bincount(y, minlength=n_classes).reshape(1, n_classes)
    return Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.zeros(1),
                np.array([len(y)]), counts.astype(np.int64))


def fit_forest(X, y, cfg=ForestConfig(), n_classes=None, feature_names=None):
    """Fit ``cfg.n_trees`` trees, each on its own seeded bootstrap sample.

    Tree ``t`` draws its bootstrap indices and candidate features from
    ``SeedSequence([cfg.seed, t])``, so results do not depend on the order
    in which trees are built.

    A single-class training set cannot be split: a one-leaf forest is
    returned with a :class:`DegenerateFitWarning`.  An empty one raises
    :class:`DegenerateFitError`.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise DimensionError(f"expected an (N, F) matrix, got shape {X.shape}")
    if len(X) != len(y):
        raise DimensionError(f"{len(X)} rows but {len(y)} labels")
    if len(y) == 0:
        raise DegenerateFitError("cannot fit a forest on an empty dataset")
    if not np.all(np.isfinite(X)):
        raise ParameterError("feature matrix contains non-finite values")
    y = y.astype(np.int64)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        bad = int(np.flatnonzero((y < 0) | (y >= n_classes))[0])
        raise LabelError(f"label {y[bad]} at index {bad} outside [0, {n_classes})")
    N, F = X.shape
    if feature_names is not None and len(feature_names) != F:
        raise DimensionError(f"{len(feature_names)} feature names for {F} columns")
    names = tuple(feature_names) if feature_names is not None else None

    if len(np.unique(y)) < 2:
        warnings.warn("single-class training data; returning a single-leaf forest", DegenerateFitWarning)
        return Forest([_leaf_tree(y, n_classes)], F, n_classes, cfg, names)
    if N < cfg.min_samples_split:
        raise DegenerateFitError(f"{N} samples is fewer than min_samples_split={cfg.min_samples_split}")

    trees = []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, t]))
        rows = rng.integers(0, N, size=N) if cfg.bootstrap else np.arange(N)
        trees.append(fit_tree(X[rows], y[rows], n_classes, cfg, rng))
    return Forest(trees, F, n_classes, cfg, names)


def predict_proba(forest, X):
    """Mean of per-tree leaf class frequencies for a vector or a batch."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.ndim != 2 or X2.shape[1] != forest.n_features:
        raise DimensionError(f"input has shape {X.shape}, forest expects {forest.n_features} features")
    probs = np.zeros((len(X2), forest.n_classes))
    for tree in forest.trees:
        probs += tree.predict_proba(X2)
    probs /= len(forest.trees)
    return probs[0] if single else probs


def gini_importance(forest):
    """Impurity-decrease importance, one entry per feature, summing to 1.

    For each tree the decreases of its splits are summed per feature with
    weight n_node / n_root; the per-tree sums are averaged over trees and
    the average is normalized.  A forest without any split yields zeros.
    """
    total = np.zeros(forest.n_features)
    for tree in forest.trees:
        split = tree.feature >= 0
        w = tree.n_node_samples[split] / tree.n_node_samples[0]
        np.add.at(total, tree.feature[split], w * tree.impurity_decrease[split])
    total /= len(forest.trees)
    s = total.sum()
    if s <= 0.0:
        warnings.warn("forest has no informative splits; importance is all zero", DegenerateFitWarning)
        return np.zeros(forest.n_features)
    return total / s


def rank_features(importance, k):
    """Indices of the k largest importances, descending, ties to the lower index."""
    importance = np.asarray(importance, dtype=np.float64)
    F = len(importance)
    if not 0 <= k <= F:
        raise ParameterError(f"k={k} outside [0, {F}]")
    # Stable sort on the negated scores keeps equal values in index order.
    return [int(i) for i in np.argsort(-importance, kind="stable")[:k]]


def rank_feature_sets(X, y, names, sets, cfg=ForestConfig(), n_classes=None):
    """Fit a separate forest per feature group and rank within each.

    ``sets`` maps a group name to a sequence of feature names.  Returns
    ``{group: [(feature, importance), ...]}`` ordered by importance.
    """
    names = list(names)
    out = {}
    for group, members in sets.items():
        cols = [names.index(m) for m in members]
        forest = fit_forest(np.asarray(X)[:, cols], y, cfg, n_classes=n_classes)
        imp = gini_importance(forest)
        out[group] = [(members[i], float(imp[i])) for i in rank_features(imp, len(cols))]
    return out


def select_top_features(X, y, names, k=7, cfg=ForestConfig(), n_classes=None):
    """Joint ranking over all columns.  Returns ``(top_k_names, importance)``."""
    forest = fit_forest(X, y, cfg, n_classes=n_classes, feature_names=names)
    imp = gini_importance(forest)
    return [names[i] for i in rank_features(imp, k)], imp


def save_forest(path, forest):
    with open(path, "w") as fh:
        json.dump(forest.to_dict(), fh)


def load_forest(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: not a forest snapshot ({exc})") from exc
    return Forest.from_dict(d)


def write_importance_csv(path, names, importance):
    """``feature,importance`` rows sorted by descending importance."""
    order = rank_features(importance, len(importance))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "importance"])
        for i in order:
            w.writerow([names[i], repr(float(importance[i]))])


def read_importance_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["feature", "importance"]:
            raise LoadError(f"{path}: unexpected header {header}")
        return [(r[0], float(r[1])) for r in reader]
