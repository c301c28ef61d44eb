import math


def lr_at(epoch: int, cfg) -> float:
    """Linear warm-up from ``lr_floor`` to ``lr_peak`` over ``warmup_epochs``,
    then cosine decay back to ``lr_floor`` at the final epoch."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    lo, hi, w = cfg.lr_floor, cfg.lr_peak, cfg.warmup_epochs
    if epoch < w:
        return lo + (hi - lo) * epoch / w
    span = cfg.epochs - 1 - w
    if span <= 0:
        return hi
    return lo + 0.5 * (hi - lo) * (1.0 + math.cos(math.pi * (epoch - w) / span))
