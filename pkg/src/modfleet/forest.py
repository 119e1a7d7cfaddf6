"""Random forest of Gini classification trees for predicting 5-star ratings.

Trees are stored as flat node arrays so a whole forest can be evaluated on a
batch of metric rows with a handful of numpy operations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._npz import savez_stable
from .metrics import FIELDS, RideMetrics

CLASSES = np.arange(1, 6)
SENTINEL = -1.0
FORMAT_VERSION = 1
DISTANCE_FEATURES = ("traveled_m",)


def feature_layout(drop_distance: bool = False) -> tuple[str, ...]:
    if drop_distance:
        return tuple(f for f in FIELDS if f not in DISTANCE_FEATURES)
    return FIELDS


def features_from_rows(M: np.ndarray, layout) -> np.ndarray:
    """Select ``layout`` columns; absent metrics (rejected rows) become the sentinel."""
    M = np.asarray(M, dtype=float)
    idx = [FIELDS.index(f) for f in layout]
    X = M[:, idx]
    return np.where(np.isnan(X), SENTINEL, X)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 5
    max_features: int | None = None  # default ceil(sqrt(n_features))
    seed: int = 0


class Tree:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.int64)

    def __len__(self):
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[rows, np.where(inner, f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]


def gini(y: np.ndarray) -> float:
    if len(y) == 0:
        return 0.0
    p = np.bincount(y, minlength=6)[1:] / len(y)
    return float(1.0 - np.sum(p * p))


def _best_split(X, y_onehot, idx, features, min_leaf):
    """Lowest weighted Gini split over ``features``; None when nothing qualifies."""
    n = len(idx)
    best = None
    total = y_onehot[idx].sum(axis=0)
    for f in features:
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        left = np.cumsum(y_onehot[idx[order]], axis=0)[:-1]
        nl = np.arange(1, n, dtype=float)
        nr = n - nl
        valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        right = total - left
        gl = 1.0 - np.sum(left * left, axis=1) / (nl * nl)
        gr = 1.0 - np.sum(right * right, axis=1) / (nr * nr)
        imp = np.where(valid, (nl * gl + nr * gr) / n, np.inf)
        k = int(np.argmin(imp))
        if best is None or imp[k] < best[0]:
            mid = 0.5 * (xs[k] + xs[k + 1])
            # adjacent floats can round the midpoint up onto the right value
            thr = mid if mid < xs[k + 1] else xs[k]
            best = (float(imp[k]), int(f), float(thr))
    return best


def _majority(y_onehot_sum) -> int:
    return int(np.argmax(y_onehot_sum)) + 1


def grow_tree(X, y, params: ForestParams, rng: np.random.Generator, sample_idx=None) -> Tree:
    n_features = X.shape[1]
    mtry = params.max_features or max(1, math.ceil(math.sqrt(n_features)))
    mtry = min(mtry, n_features)
    onehot = np.zeros((len(y), 5))
    onehot[np.arange(len(y)), y - 1] = 1.0
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0)
        return len(feature) - 1

    idx0 = np.arange(len(y)) if sample_idx is None else np.asarray(sample_idx)
    root = new_node()
    stack = [(root, idx0, 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = onehot[idx].sum(axis=0)
        value[node] = _majority(counts)
        n = len(idx)
        parent = 1.0 - float(np.sum(counts * counts)) / (n * n)
        if parent <= 1e-12 or n < 2 * params.min_leaf:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        feats = rng.choice(n_features, size=mtry, replace=False)
        split = _best_split(X, onehot, idx, feats, params.min_leaf)
        if split is None or split[0] >= parent - 1e-12:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        l, r = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = f, thr, l, r
        stack.append((r, idx[~mask], depth + 1))
        stack.append((l, idx[mask], depth + 1))
    return Tree(feature, threshold, left, right, value)


class RandomForest:
    def __init__(self, trees: list[Tree], layout: tuple[str, ...], params: ForestParams):
        self.trees = trees
        self.layout = tuple(layout)
        self.params = params
        self._flatten()

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _flatten(self):
        offsets = np.cumsum([0] + [len(t) for t in self.trees[:-1]])
        self._roots = offsets.astype(np.int64)
        self._feature = np.concatenate([t.feature for t in self.trees])
        self._threshold = np.concatenate([t.threshold for t in self.trees])
        self._left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(self.trees, offsets)])
        self._right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(self.trees, offsets)])
        self._value = np.concatenate([t.value for t in self.trees])

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Per-tree class votes, shape (n_rows, n_trees)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.layout):
            raise ValueError(f"expected {len(self.layout)} features {self.layout}, got shape {X.shape}")
        n = len(X)
        node = np.broadcast_to(self._roots, (n, self.n_trees)).copy()
        rows = np.broadcast_to(np.arange(n)[:, None], node.shape)
        while True:
            f = self._feature[node]
            inner = f >= 0
            if not inner.any():
                break
            xv = X[rows, np.where(inner, f, 0)]
            nxt = np.where(xv <= self._threshold[node], self._left[node], self._right[node])
            node = np.where(inner, nxt, node)
        return self._value[node]

    def predict_features(self, X) -> np.ndarray:
        return self.votes(X).mean(axis=1)

    def predict_class(self, X) -> np.ndarray:
        v = self.votes(X)
        counts = np.stack([(v == c).sum(axis=1) for c in CLASSES], axis=1)
        return np.argmax(counts, axis=1) + 1

    def predict_rows(self, M: np.ndarray) -> np.ndarray:
        """Mean tree vote for each 13-wide metric row."""
        if len(M) == 0:
            return np.empty(0)
        return self.predict_features(features_from_rows(M, self.layout))

    def save(self, path):
        meta = {
            "format": "modfleet-forest",
            "version": FORMAT_VERSION,
            "layout": list(self.layout),
            "params": asdict(self.params),
            "tree_sizes": [len(t) for t in self.trees],
        }
        with open(path, "wb") as fh:
            savez_stable(
                fh,
                meta=np.array(json.dumps(meta)),
                feature=np.concatenate([t.feature for t in self.trees]),
                threshold=np.concatenate([t.threshold for t in self.trees]),
                left=np.concatenate([t.left for t in self.trees]),
                right=np.concatenate([t.right for t in self.trees]),
                value=np.concatenate([t.value for t in self.trees]),
            )

    @classmethod
    def load(cls, path) -> "RandomForest":
        with np.load(Path(path), allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != "modfleet-forest" or meta.get("version") != FORMAT_VERSION:
                raise ValueError(f"{path}: not a version {FORMAT_VERSION} forest file")
            arrays = {k: z[k] for k in ("feature", "threshold", "left", "right", "value")}
        trees, start = [], 0
        for size in meta["tree_sizes"]:
            sl = slice(start, start + size)
            trees.append(Tree(*(arrays[k][sl] for k in ("feature", "threshold", "left", "right", "value"))))
            start += size
        return cls(trees, tuple(meta["layout"]), ForestParams(**meta["params"]))


def train_forest(X, Y, params: ForestParams = ForestParams(), layout=None) -> RandomForest:
    """Bagged Gini trees with a random feature subset at each split."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y).astype(np.int64)
    if len(X) == 0 or len(X) != len(Y):
        raise ValueError("need matching, non-empty X and Y")
    if ((Y < 1) | (Y > 5)).any():
        raise ValueError("ratings must be integers in 1..5")
    if layout is None:
        layout = tuple(f"f{i}" for i in range(X.shape[1]))
    if len(layout) != X.shape[1]:
        raise ValueError("layout does not match the feature count")
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_trees)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        boot = rng.integers(0, len(Y), size=len(Y))
        trees.append(grow_tree(X, Y, params, rng, boot))
    return RandomForest(trees, layout, params)


def train_on_metrics(rows, ratings, params: ForestParams = ForestParams(), drop_distance=False) -> RandomForest:
    layout = feature_layout(drop_distance)
    return train_forest(features_from_rows(rows, layout), ratings, params, layout)


def predict(forest: RandomForest, m: RideMetrics) -> float:
    return float(forest.predict_rows(m.as_array()[None, :])[0])
