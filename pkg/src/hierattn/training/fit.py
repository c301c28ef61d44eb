from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..checkpoint import save_checkpoint
from ..folds import kfold_split
from ..model import HierAttn
from ..ops import cross_entropy
from ..serialize import atomic_write
from ..tensor import NonFiniteError, Tape, Tensor, default_dtype, make_rng
from .optim import AdamW
from .schedule import lr_at
from .transfer import FreezePolicy

HISTORY_HEADER = ("epoch", "lr", "train_loss", "val_top1")


class TrainingError(RuntimeError):
    """Non-finite loss or activation; carries the epoch and batch where it happened."""

    def __init__(self, msg: str, epoch: int, batch: int):
        super().__init__(f"{msg} (epoch {epoch}, batch {batch})")
        self.epoch, self.batch = epoch, batch


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 64
    lr_peak: float = 0.002
    lr_floor: float = 0.0002
    warmup_epochs: int = 30
    weight_decay: float = 0.01
    folds: int = 10
    fold: int = 0
    freeze_warmup: bool = False
    survival_prob: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not self.lr_floor < self.lr_peak:
            raise ValueError("lr_floor must be below lr_peak")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("need 0 <= warmup_epochs < epochs")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not 0 <= self.fold < self.folds:
            raise ValueError(f"fold {self.fold} outside [0, {self.folds})")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm)")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_top1: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = -1.0
    train_index: Optional[np.ndarray] = None
    val_index: Optional[np.ndarray] = None

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in self.records:
            w.writerow([r.epoch, f"{r.lr:.8g}", f"{r.train_loss:.8g}", f"{r.val_top1:.8g}"])
        return buf.getvalue()


Hook = Callable[[int, HierAttn, EpochRecord], None]

MEAN, STD = 0.5, 0.25


def to_input(images: np.ndarray) -> np.ndarray:
    """uint8 NHWC (or float NCHW already scaled) to normalised float NCHW."""
    images = np.asarray(images)
    if images.dtype == np.uint8:
        images = images.transpose(0, 3, 1, 2).astype(np.float32) / 255.0
        images = (images - MEAN) / STD
    return images.astype(default_dtype(), copy=False)


def load_arrays(manifest, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Decode every record, resize to ``size`` square, and stack."""
    import cv2

    from ..data.imaging import read_image
    imgs = []
    for r in manifest.records:
        img = read_image(manifest.resolve(r))
        if img.shape[:2] != (size, size):
            img = cv2.resize(img, (size, size), interpolation=cv2.INTER_AREA)
        imgs.append(img)
    return np.stack(imgs), np.asarray(manifest.label_ids())


def predict_logits(model: HierAttn, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    model.eval()
    out = [model(Tensor(x[i:i + batch_size])).data for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.cfg.num_classes))


def fit(model: HierAttn, data, cfg: TrainConfig, hooks: Sequence[Hook] = (),
        out_dir: Union[str, Path, None] = None, freeze: Optional[FreezePolicy] = None,
        log: Optional[Callable[[str], None]] = None) -> TrainingHistory:
    """Train on all folds but ``cfg.fold`` and validate on that one.

    ``data`` is a manifest or an ``(images, labels)`` pair. The model's
    stochastic depth is set to ``cfg.survival_prob``. With
    ``freeze_warmup`` the parameters named by ``freeze`` receive no update (and
    no decay) during the first ``warmup_epochs`` epochs. When ``out_dir`` is
    given, ``best.hack`` holds the highest-validation checkpoint (earliest
    epoch on ties) and ``history.csv`` is rewritten after every epoch.
    """
    if isinstance(data, tuple):
        images, labels = data
    else:
        images, labels = load_arrays(data, model.cfg.input_size)
    x_all = to_input(images)
    labels = np.asarray(labels, dtype=np.int64)
    plan = kfold_split(labels, cfg.folds, seed=cfg.seed)
    train_idx, val_idx = plan.split(cfg.fold)
    out = Path(out_dir) if out_dir is not None else None

    model.set_survival_prob(cfg.survival_prob)
    params = model.parameters()
    opt = AdamW(params)
    frozen = freeze.indices(model) if (freeze is not None and cfg.freeze_warmup) else []
    rng = make_rng(cfg.seed)
    hist = TrainingHistory(train_index=train_idx, val_index=val_idx)

    for epoch in range(cfg.epochs):
        if np.intersect1d(train_idx, val_idx).size:
            raise AssertionError("validation records leaked into the training fold")
        lr = lr_at(epoch, cfg)
        skip = frozen if epoch < cfg.warmup_epochs else []
        order = rng.permutation(train_idx)
        losses, sizes = [], []
        model.train()
        for b, start in enumerate(range(0, order.size, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            if idx.size < 2:
                continue  # batch norm needs two samples
            model.zero_grad()
            try:
                with Tape() as tape:
                    loss = cross_entropy(model(Tensor(x_all[idx]), rng), labels[idx])
            except NonFiniteError as exc:
                raise TrainingError(f"non-finite value in {exc}", epoch, b) from exc
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError("non-finite loss", epoch, b)
            tape.backward(loss)
            opt.step(lr, cfg.weight_decay, frozen=skip)
            losses.append(value)
            sizes.append(idx.size)
        train_loss = float(np.average(losses, weights=sizes)) if losses else float("nan")
        val_top1 = float("nan")
        if val_idx.size:
            pred = predict_logits(model, x_all[val_idx], cfg.batch_size).argmax(axis=1)
            val_top1 = float((pred == labels[val_idx]).mean())
        rec = EpochRecord(epoch, lr, train_loss, val_top1)
        hist.records.append(rec)
        if val_top1 > hist.best_val:
            hist.best_epoch, hist.best_val = epoch, val_top1
            if out is not None:
                save_checkpoint(model, out / "best.hack")
        if out is not None:
            atomic_write(out / "history.csv", hist.to_csv())
        if log is not None:
            log(f"epoch {epoch:3d} lr {lr:.5f} loss {train_loss:.4f} val_top1 {val_top1:.4f}")
        for h in hooks:
            h(epoch, model, rec)
    return hist
