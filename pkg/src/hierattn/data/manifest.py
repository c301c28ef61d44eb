"""Image manifests: UTF-8 CSV with header ``path,label,provenance,seed,split``."""
from __future__ import annotations

import csv
import hashlib
import io
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from ..serialize import atomic_write

HEADER = ("path", "label", "provenance", "seed", "split")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ImageRecord:
    path: str
    label: str
    provenance: str = "original"
    seed: Optional[int] = None
    split: str = ""

    @property
    def augmented(self) -> bool:
        return self.provenance.startswith("augmented")

    def with_split(self, split) -> "ImageRecord":
        return replace(self, split=str(split))


@dataclass
class Manifest:
    records: list[ImageRecord]
    class_names: list[str] = field(default_factory=list)
    root: Optional[Path] = None   # relative paths resolve against this

    def __post_init__(self):
        if not self.class_names:
            self.class_names = sorted({r.label for r in self.records})
        if len(set(self.class_names)) != len(self.class_names):
            raise ManifestError("class names must be unique")
        unknown = {r.label for r in self.records} - set(self.class_names)
        if unknown:
            raise ManifestError(f"labels outside the class set: {sorted(unknown)}")

    def __len__(self):
        return len(self.records)

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(r.label for r in self.records)
        return {name: c.get(name, 0) for name in self.class_names}

    def label_ids(self) -> list[int]:
        index = {n: i for i, n in enumerate(self.class_names)}
        return [index[r.label] for r in self.records]

    def resolve(self, record: ImageRecord) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def by_class(self) -> dict[str, list[ImageRecord]]:
        out: dict[str, list[ImageRecord]] = {n: [] for n in self.class_names}
        for r in self.records:
            out[r.label].append(r)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.records:
            w.writerow([r.path, r.label, r.provenance, "" if r.seed is None else r.seed, r.split])
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode("utf-8")).hexdigest()

    def save(self, path: Union[str, Path]) -> None:
        atomic_write(path, self.to_csv())


def load_manifest(path: Union[str, Path], check_paths: bool = True) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != HEADER:
        raise ManifestError(f"{path}: header must be {','.join(HEADER)}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(HEADER):
            raise ManifestError(f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(row)}")
        p, label, prov, seed, split = row
        try:
            seed_v = int(seed) if seed else None
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: bad seed {seed!r}") from None
        records.append(ImageRecord(p, label, prov or "original", seed_v, split))
    m = Manifest(records, root=path.parent)
    if check_paths:
        missing = [r.path for r in records if not m.resolve(r).exists()]
        if missing:
            raise ManifestError(f"{len(missing)} missing image(s), first: {missing[0]}")
    return m


def manifest_from_dir(root: Union[str, Path]) -> Manifest:
    """One class per sub-directory; image files inside become original records."""
    root = Path(root)
    recs = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in sorted(d.iterdir()):
            if f.suffix.lower() in (".png", ".jpg", ".jpeg"):
                recs.append(ImageRecord(str(f.relative_to(root)), d.name))
    return Manifest(recs, root=root)
