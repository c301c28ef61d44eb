"""Classification metrics, one-vs-rest ROC/AUC, latency benchmark and plot data."""
from __future__ import annotations

import csv
import io
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .serialize import atomic_write


def _check(logits, labels) -> tuple[np.ndarray, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ValueError(f"logits {logits.shape} and labels {labels.shape} disagree")
    return logits, labels


def predictions(logits) -> np.ndarray:
    """Row argmax; ties go to the lowest class index."""
    return np.asarray(logits).argmax(axis=1)


def top1_accuracy(logits, labels) -> float:
    logits, labels = _check(logits, labels)
    if labels.size == 0:
        return 0.0
    return float((predictions(logits) == labels).mean())


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def confusion(logits, labels, num_classes: Optional[int] = None) -> ConfusionMatrix:
    logits, labels = _check(logits, labels)
    k = num_classes or logits.shape[1]
    m = np.zeros((k, k), dtype=np.int64)
    np.add.at(m, (labels, predictions(logits)), 1)
    return ConfusionMatrix(m)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # score cut for each point; +inf for the origin
    cls: int


def roc_ovr(scores, labels, cls: int) -> RocCurve:
    """ROC of ``cls`` against the rest, swept over the unique scores (descending).

    Tied scores enter together, so ties contribute a diagonal segment.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    s = scores[:, cls] if scores.ndim == 2 else scores
    pos = labels == cls
    P, N = int(pos.sum()), int((~pos).sum())
    if P == 0 or N == 0:
        raise ValueError(f"class {cls} has {P} positives and {N} negatives; ROC undefined")
    order = np.argsort(-s, kind="stable")
    s_sorted, pos_sorted = s[order], pos[order]
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), s_sorted.size - 1]
    tp = np.cumsum(pos_sorted)[last]
    fp = (last + 1) - tp
    fpr = np.r_[0.0, fp / N]
    tpr = np.r_[0.0, tp / P]
    return RocCurve(fpr, tpr, np.r_[np.inf, s_sorted[last]], cls)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    return float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2))


def macro_auc(scores, labels, classes: Optional[Sequence[int]] = None) -> float:
    """Unweighted mean of per-class one-vs-rest AUC; undefined classes are skipped with a warning."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    classes = range(scores.shape[1]) if classes is None else classes
    vals = []
    for c in classes:
        P = int((labels == c).sum())
        if P == 0 or P == labels.size:
            warnings.warn(f"class {c} excluded from macro AUC: {P} positives of {labels.size}")
            continue
        vals.append(auc(roc_ovr(scores, labels, c)))
    if not vals:
        raise ValueError("no class has both positives and negatives")
    return float(np.mean(vals))


@dataclass(frozen=True)
class BenchResult:
    mean_ms: float
    std_ms: float
    iterations: int
    variant: str
    input_size: int
    warmup: int


def bench_inference(model, input_size: Optional[int] = None, iterations: int = 1000, warmup: int = 10,
                    seed: int = 0) -> BenchResult:
    """Wall-clock per-image forward latency in eval mode, warm-up runs excluded."""
    from .tensor import Tensor
    if iterations < 1 or warmup < 10:
        raise ValueError("need iterations >= 1 and at least 10 warm-up runs")
    size = input_size or model.cfg.input_size
    model.eval()
    x = Tensor(np.random.default_rng(seed).standard_normal((1, 3, size, size)))
    for _ in range(warmup):
        model(x)
    times = np.empty(iterations)
    for i in range(iterations):
        t0 = time.perf_counter()
        model(x)
        times[i] = (time.perf_counter() - t0) * 1e3
    return BenchResult(float(times.mean()), float(times.std()), iterations, model.cfg.variant, size, warmup)


Series = Mapping[str, tuple[Sequence[float], Sequence[float]]]


def curves_to_series(curves: Sequence[RocCurve], names: Optional[Sequence[str]] = None) -> dict:
    names = names or [f"class{c.cls}" for c in curves]
    return {n: (c.fpr, c.tpr) for n, c in zip(names, curves)}


def history_to_series(history) -> dict:
    ep = history.column("epoch")
    return {"train_loss": (ep, history.column("train_loss")), "val_top1": (ep, history.column("val_top1"))}


def plot_csv(series: Series) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("series", "x", "y"))
    for name, (xs, ys) in series.items():
        for x, y in zip(xs, ys):
            w.writerow((name, repr(float(x)), repr(float(y))))
    return buf.getvalue()


def read_plot_csv(path: Union[str, Path]) -> dict[str, tuple[list[float], list[float]]]:
    out: dict[str, tuple[list[float], list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        if next(r, None) != ["series", "x", "y"]:
            raise ValueError(f"{path}: not a plot-data CSV")
        for name, x, y in r:
            xs, ys = out.setdefault(name, ([], []))
            xs.append(float(x))
            ys.append(float(y))
    return out


def emit_plot_data(data, path: Union[str, Path], svg: Union[str, Path, None] = None,
                   xlabel: str = "x", ylabel: str = "y") -> Path:
    """Write ``series,x,y`` CSV for ROC curves, a history, or a name -> (xs, ys) map.

    With ``svg`` a standalone line plot is rendered next to it.
    """
    if hasattr(data, "records"):
        series = history_to_series(data)
    elif isinstance(data, Mapping):
        series = data
    else:
        series = curves_to_series(list(data))
    path = Path(path)
    atomic_write(path, plot_csv(series))
    if svg is not None:
        render_svg(series, svg, xlabel, ylabel)
    return path


def render_svg(series: Series, path: Union[str, Path], xlabel: str = "x", ylabel: str = "y") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, (xs, ys) in series.items():
        ax.plot(xs, ys, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if series:
        ax.legend(fontsize="small")
    buf = io.StringIO()
    fig.savefig(buf, format="svg")
    plt.close(fig)
    atomic_write(path, buf.getvalue())
