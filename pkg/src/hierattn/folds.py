from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class FoldPlan:
    folds: list[np.ndarray]

    @property
    def k(self) -> int:
        return len(self.folds)

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(train indices, validation indices) with fold ``i`` held out."""
        val = self.folds[i]
        train = np.concatenate([f for j, f in enumerate(self.folds) if j != i])
        return np.sort(train), val


def kfold_split(labels, k: int, seed: int = 0) -> FoldPlan:
    """Stratified k-fold assignment.

    Each class is shuffled and dealt round-robin, continuing from where the
    previous class stopped, so fold sizes differ by at most one and each
    class's share per fold differs from the global share by at most one.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot split an empty manifest")
    if k < 2:
        raise ValueError("need k >= 2")
    if k > labels.size:
        raise ValueError(f"k={k} exceeds {labels.size} records")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            warnings.warn(f"class {cls!r} has {idx.size} samples, fewer than k={k}")
        idx = rng.permutation(idx)
        for j, i in enumerate(idx):
            buckets[(offset + j) % k].append(int(i))
        offset = (offset + idx.size) % k
    return FoldPlan([np.sort(np.array(b, dtype=np.int64)) for b in buckets])
