"""Instance hardness from out-of-fold random forest probabilities."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..folds import kfold_split
from .forest import ForestConfig, train_random_forest


@dataclass(frozen=True)
class IHConfig:
    folds: int = 5
    forest: ForestConfig = field(default_factory=ForestConfig)
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("IH needs at least 2 folds")


def instance_hardness(X, y, cfg: IHConfig = IHConfig(), n_classes: Optional[int] = None) -> np.ndarray:
    """1 - p(true class | x) where p comes from a forest that never saw x."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if cfg.folds > y.size:
        raise ValueError(f"k={cfg.folds} exceeds {y.size} samples")
    k = n_classes if n_classes is not None else int(y.max()) + 1
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        plan = kfold_split(y, cfg.folds, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    hardness = np.empty(y.size)
    for i in range(plan.k):
        train, val = plan.split(i)
        forest = train_random_forest(X[train], y[train], cfg.forest, rng, n_classes=k)
        proba = forest.predict_proba(X[val])
        hardness[val] = 1.0 - proba[np.arange(val.size), y[val]]
    return np.clip(hardness, 0.0, 1.0)
