"""Random forest of CART trees (Gini splits, bootstrap rows, feature subsampling)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    max_features: Optional[int] = None  # None -> round(sqrt(dims))
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("max_depth >= 0 and min_leaf >= 1 required")


@dataclass
class Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # (nodes, classes) leaf class frequencies

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass
class Forest:
    trees: list[Tree]
    n_classes: int
    cfg: ForestConfig = field(default_factory=ForestConfig)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None]
        acc = np.zeros((X.shape[0], self.n_classes))
        for t in self.trees:
            acc += t.predict_proba(X)
        return acc / len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)


def _best_split(x: np.ndarray, onehot: np.ndarray, min_leaf: int):
    """Lowest weighted Gini split on one feature: (score, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = xs.size
    left = np.cumsum(onehot[order], axis=0)[:-1]        # counts for split after position i
    nl = np.arange(1, n, dtype=np.float64)
    valid = xs[1:] > xs[:-1]
    valid &= (nl >= min_leaf) & (n - nl >= min_leaf)
    if not valid.any():
        return None
    right = left[-1] + onehot[order[-1]] - left
    nr = n - nl
    # n * weighted gini = nl - sum(l^2)/nl + nr - sum(r^2)/nr
    score = n - (left ** 2).sum(1) / nl - (right ** 2).sum(1) / nr
    score[~valid] = np.inf
    i = int(np.argmin(score))
    return score[i], 0.5 * (xs[i] + xs[i + 1])


def build_tree(X: np.ndarray, y: np.ndarray, n_classes: int, cfg: ForestConfig,
               rng: np.random.Generator) -> Tree:
    d = X.shape[1]
    mtry = cfg.max_features or max(1, int(round(np.sqrt(d))))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(counts):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts / counts.sum())
        return len(feature) - 1

    onehot_all = np.eye(n_classes)[y]
    stack = [(np.arange(y.size), 0, None)]
    # iterative depth-first growth; a node records itself in its parent slot
    while stack:
        rows, depth, parent = stack.pop()
        counts = onehot_all[rows].sum(0)
        node = new_node(counts)
        if parent is not None:
            p, side = parent
            (left if side == 0 else right)[p] = node
        if depth >= cfg.max_depth or rows.size < 2 * cfg.min_leaf or counts.max() == rows.size:
            continue
        current = rows.size - (counts ** 2).sum() / rows.size
        best = None
        tried = 0
        for f in rng.permutation(d):
            xf = X[rows, f]
            if xf.min() == xf.max():
                continue
            tried += 1
            res = _best_split(xf, onehot_all[rows], cfg.min_leaf)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], res[1], f)
            if tried >= mtry:
                break
        if best is None or best[0] >= current - 1e-12:
            continue
        _, thr, f = best
        mask = X[rows, f] <= thr
        feature[node], threshold[node] = int(f), float(thr)
        stack.append((rows[~mask], depth + 1, (node, 1)))
        stack.append((rows[mask], depth + 1, (node, 0)))
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value))


def train_random_forest(X, y, cfg: ForestConfig = ForestConfig(), rng: Optional[np.random.Generator] = None,
                        n_classes: Optional[int] = None) -> Forest:
    """Fit ``cfg.n_trees`` CART trees on bootstrap resamples.

    ``y`` holds integer class ids; ``n_classes`` fixes the output width when
    some classes are absent from this particular training set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.size:
        raise ValueError(f"need matching non-empty X and y, got {X.shape} and {y.shape}")
    rng = rng if rng is not None else np.random.default_rng(0)
    k = n_classes if n_classes is not None else int(y.max()) + 1
    trees = []
    for _ in range(cfg.n_trees):
        rows = rng.integers(0, y.size, y.size) if cfg.bootstrap else np.arange(y.size)
        trees.append(build_tree(X[rows], y[rows], k, cfg, rng))
    return Forest(trees, k, cfg)


def predict_proba(forest: Forest, X) -> np.ndarray:
    return forest.predict_proba(X)
