"""Central finite differences as an independent check on backward rules."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tape, Tensor


def finite_diff_grad(f: Callable[[], Tensor], x: Tensor, eps: float = 1e-4,
                     indices: Optional[Sequence[tuple]] = None) -> np.ndarray:
    """Estimate d f / d x by (f(x + eps e) - f(x - eps e)) / 2 eps.

    ``f`` takes no arguments and reads ``x`` by closure; ``x.data`` is
    perturbed in place and restored. When ``indices`` is given only those
    entries are estimated (others stay zero).
    """
    grad = np.zeros_like(x.data, dtype=np.float64)
    flat_idx = indices if indices is not None else list(np.ndindex(x.shape))
    for idx in flat_idx:
        orig = x.data[idx].copy()
        x.data[idx] = orig + eps
        fp = float(f().data)
        x.data[idx] = orig - eps
        fm = float(f().data)
        x.data[idx] = orig
        grad[idx] = (fp - fm) / (2 * eps)
    return grad


def analytic_grads(f: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    for p in params:
        p.grad = None
        p.requires_grad = True
    with Tape() as tape:
        out = f()
    tape.backward(out)
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max abs difference over the larger gradient's max magnitude.

    ``floor`` bounds the denominator from below so gradients that are zero by
    construction (e.g. a bias feeding a batch norm) compare as absolute noise.
    """
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4,
                    max_entries: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> dict[int, float]:
    """Relative error per parameter index between backward and finite differences.

    With ``max_entries`` only a random subset of coordinates per parameter is
    probed, for models too large to perturb entry by entry.
    """
    grads = analytic_grads(f, params)
    errors = {}
    for k, (p, g) in enumerate(zip(params, grads)):
        idx = None
        if max_entries is not None and p.data.size > max_entries:
            rng = rng or np.random.default_rng(0)
            flat = rng.choice(p.data.size, size=max_entries, replace=False)
            idx = [np.unravel_index(i, p.shape) for i in flat]
        num = finite_diff_grad(f, p, eps, idx)
        if idx is not None:
            sel = tuple(np.array(ix) for ix in zip(*idx))
            errors[k] = relative_error(g[sel], num[sel])
        else:
            errors[k] = relative_error(g, num)
    return errors
