"""Per-class undersampling (instance hardness or random) and augmentation oversampling."""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .augment import AugmentationSpec, augment_logged
from .features import extract_features
from .hardness import IHConfig, instance_hardness
from .imaging import read_image, write_image
from .manifest import ImageRecord, Manifest

Targets = Union[int, Mapping[str, int]]


def imbalance_ratio(class_counts) -> float:
    """Majority count over minority count."""
    counts = list(class_counts.values()) if isinstance(class_counts, Mapping) else list(class_counts)
    if not counts or min(counts) <= 0:
        raise ValueError("imbalance ratio needs every class count > 0")
    return max(counts) / min(counts)


def _target(targets: Targets, label: str) -> int:
    return targets if isinstance(targets, int) else targets[label]


def _group(records: Sequence) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(r.label, []).append(i)
    return groups


def undersample_ih(records: Sequence, features, target_per_class: Targets, cfg: IHConfig = IHConfig(),
                   hardness: Optional[np.ndarray] = None) -> list:
    """Keep the ``target`` lowest-hardness records of each class above target.

    Hardness is scored once over all records. Classes at or below their target
    pass through; the output preserves input order.
    """
    records = list(records)
    groups = _group(records)
    needs = any(len(ix) > _target(target_per_class, lab) for lab, ix in groups.items())
    if not needs:
        return records
    if hardness is None:
        names = sorted(groups)
        y = np.array([names.index(r.label) for r in records])
        hardness = instance_hardness(features, y, cfg, n_classes=len(names))
    keep = np.zeros(len(records), dtype=bool)
    for lab, ix in groups.items():
        t = _target(target_per_class, lab)
        ix = np.array(ix)
        if ix.size <= t:
            keep[ix] = True
        else:
            order = np.argsort(hardness[ix], kind="stable")
            keep[ix[order[:t]]] = True
    return [r for r, k in zip(records, keep) if k]


def undersample_random(records: Sequence, target_per_class: Targets, rng: np.random.Generator) -> list:
    """Uniform per-class sample without replacement; output preserves input order."""
    records = list(records)
    keep = np.zeros(len(records), dtype=bool)
    for lab, ix in sorted(_group(records).items()):
        t = _target(target_per_class, lab)
        if t > len(ix):
            raise ValueError(f"class {lab!r} has {len(ix)} records, fewer than target {t}")
        keep[rng.choice(np.array(ix), size=t, replace=False)] = True
    return [r for r, k in zip(records, keep) if k]


def augmented_name(record: ImageRecord, seed: int) -> str:
    return f"{Path(record.path).stem}_aug{seed}.png"


def regenerate(record: ImageRecord, spec: AugmentationSpec, load: Callable[[str], np.ndarray]) -> np.ndarray:
    """Rebuild an augmented image from its provenance (source path and seed)."""
    if not record.augmented or record.seed is None:
        raise ValueError(f"{record.path} is not an augmented record")
    source = record.provenance.split(":", 2)[1]
    img, _ = augment_logged(load(source), spec, np.random.default_rng(record.seed))
    return img


def oversample(records: Sequence[ImageRecord], target_per_class: Targets, spec: AugmentationSpec,
               rng: np.random.Generator, out_dir: Union[str, Path], root: Optional[Path] = None,
               load: Optional[Callable[[str], np.ndarray]] = None) -> list[ImageRecord]:
    """Add augmented copies to every class below target; originals are kept.

    Sources cycle through a shuffled order of the class's originals and each
    copy gets its own seed, recorded with the fired ops as provenance.
    Images are written under ``out_dir/<label>/`` and the record path is made
    relative to ``root`` when possible.
    """
    out_dir = Path(out_dir)
    root = Path(root) if root is not None else None
    if load is None:
        load = lambda p: read_image(p if root is None or Path(p).is_absolute() else root / p)  # noqa: E731
    out = list(records)
    for lab, ix in sorted(_group(records).items()):
        t = _target(target_per_class, lab)
        need = t - len(ix)
        if need <= 0:
            continue
        sources = [records[i] for i in ix if not records[i].augmented] or [records[i] for i in ix]
        order = rng.permutation(len(sources))
        seeds = rng.choice(2 ** 31 - 1, size=need, replace=False)
        cache: dict[str, np.ndarray] = {}
        for j in range(need):
            src = sources[order[j % len(sources)]]
            seed = int(seeds[j])
            if src.path not in cache:
                cache[src.path] = load(src.path)
            img, ops = augment_logged(cache[src.path], spec, np.random.default_rng(seed))
            dest = out_dir / lab / augmented_name(src, seed)
            write_image(dest, img)
            rel = dest
            if root is not None:
                try:
                    rel = dest.resolve().relative_to(root.resolve())
                except ValueError:
                    rel = dest.resolve()
            out.append(ImageRecord(str(rel), lab, f"augmented:{src.path}:{';'.join(ops) or 'none'}", seed, src.split))
    return out


def manifest_features(manifest: Manifest, records: Optional[Sequence[ImageRecord]] = None) -> np.ndarray:
    recs = manifest.records if records is None else records
    return np.stack([extract_features(read_image(manifest.resolve(r))) for r in recs])


def balance_dataset(manifest: Manifest, strategy: str, targets: Targets, out_dir: Union[str, Path, None] = None,
                    spec: AugmentationSpec = AugmentationSpec(), seed: int = 0,
                    ih: Optional[IHConfig] = None, features: Optional[np.ndarray] = None) -> Manifest:
    """Undersample classes above target and oversample those below, per class.

    Oversampling draws from a stream independent of the undersampling
    strategy, so ``ih`` and ``random`` runs differ only in which records the
    undersampled classes keep.
    """
    if strategy not in ("ih", "random"):
        raise ValueError(f"unknown strategy {strategy!r}; use ih or random")
    counts = manifest.counts
    empty = [c for c, n in counts.items() if n == 0]
    if empty:
        raise ValueError(f"empty class(es): {empty}")
    records = list(manifest.records)
    over = {c: _target(targets, c) for c in manifest.class_names if counts[c] > _target(targets, c)}
    if over:
        if strategy == "ih":
            cfg = ih if ih is not None else IHConfig(seed=seed)
            feats = features if features is not None else manifest_features(manifest)
            records = undersample_ih(records, feats, {c: _target(targets, c) for c in manifest.class_names}, cfg)
        else:
            kept = []
            for ci, c in enumerate(manifest.class_names):
                group = [r for r in records if r.label == c]
                if c in over:
                    group = undersample_random(group, over[c], np.random.default_rng([seed, ci, 1]))
                kept.extend(group)
            order = {id(r): i for i, r in enumerate(records)}
            records = sorted(kept, key=lambda r: order[id(r)])
    under = [c for c in manifest.class_names if counts[c] < _target(targets, c)]
    if under:
        if out_dir is None:
            raise ValueError("oversampling needs an output directory for augmented images")
        for ci, c in enumerate(manifest.class_names):
            if c not in under:
                continue
            group = [r for r in records if r.label == c]
            extra = oversample(group, {c: _target(targets, c)}, spec, np.random.default_rng([seed, ci, 0]),
                               out_dir, root=manifest.root)
            records.extend(extra[len(group):])
    return replace(manifest, records=records)
