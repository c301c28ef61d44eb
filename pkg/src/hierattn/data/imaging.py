"""Scope-circle cropping: grayscale, threshold sweep, contours, area gate."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np

AREA_GATE = (0.01, 0.9)
THRESHOLD_STEP = 5


@dataclass(frozen=True)
class Contour:
    points: np.ndarray  # (M, 2) boundary pixels as (x, y), closed
    area: int           # pixels enclosed by the boundary, boundary included

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        x0, y0 = self.points.min(axis=0)
        x1, y1 = self.points.max(axis=0)
        return int(x0), int(y0), int(x1 - x0 + 1), int(y1 - y0 + 1)


@dataclass(frozen=True)
class Region:
    x: int
    y: int
    w: int
    h: int
    area: int
    threshold: Optional[int] = None


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """8-bit luma, 0.299 R + 0.587 G + 0.114 B rounded half up."""
    img = np.asarray(img)
    if img.ndim == 2:
        return img.astype(np.uint8)
    if img.ndim != 3 or img.shape[2] < 3:
        raise ValueError(f"expected an HxWx3 raster, got {img.shape}")
    rgb = img[..., :3].astype(np.float64)
    luma = rgb @ np.array([0.299, 0.587, 0.114])
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def binarize(gray: np.ndarray, threshold: int) -> np.ndarray:
    return (np.asarray(gray) >= threshold).astype(np.uint8)


def find_contours(binary: np.ndarray) -> list[Contour]:
    """Outer boundaries of the foreground components (Suzuki-Abe border following)."""
    binary = (np.asarray(binary) > 0).astype(np.uint8)
    if not binary.any():
        return []
    raw, _ = cv2.findContours(binary, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    out = []
    canvas = np.zeros_like(binary)
    for c in raw:
        canvas[:] = 0
        cv2.drawContours(canvas, [c], -1, 1, thickness=cv2.FILLED)
        out.append(Contour(c[:, 0, :].astype(np.int64), int(canvas.sum())))
    return out


def _filled(contour: Contour, shape) -> np.ndarray:
    canvas = np.zeros(shape, dtype=np.uint8)
    cv2.drawContours(canvas, [contour.points[:, None, :].astype(np.int32)], -1, 1, thickness=cv2.FILLED)
    return canvas.astype(bool)


def detect_scope_region(contours: list[Contour], image_area: int,
                        gate: tuple[float, float] = AREA_GATE, gray: Optional[np.ndarray] = None,
                        surround_max: float = 50.0) -> Optional[Region]:
    """Largest contour whose enclosed-area ratio lies strictly inside ``gate``.

    With ``gray`` given, a candidate is also rejected unless the mean intensity
    outside it is below ``surround_max``: a scope circle sits on a dark
    surround, while a lesion touching the border of a close-up photo can carve
    out a region of the right size on bright skin.
    """
    lo, hi = gate
    ok = sorted((c for c in contours if lo < c.area / image_area < hi), key=lambda c: -c.area)
    for c in ok:
        if gray is not None:
            outside = ~_filled(c, gray.shape)
            if gray[outside].mean() >= surround_max:
                continue
        return Region(*c.bbox, area=c.area)
    return None


def sweep_threshold(gray: np.ndarray, lo: int = 50, hi: int = 255,
                    step: int = THRESHOLD_STEP) -> tuple[int, Optional[Region]]:
    """Lowest threshold in lo, lo+step, ... <= hi at which a region passes the gate."""
    gray = np.asarray(gray)
    area = gray.shape[0] * gray.shape[1]
    for t in range(lo, hi + 1, step):
        region = detect_scope_region(find_contours(binarize(gray, t)), area, gray=gray, surround_max=lo)
        if region is not None:
            return t, Region(region.x, region.y, region.w, region.h, region.area, t)
    return lo, None


def binarize_adaptive(gray: np.ndarray, lo: int = 50, hi: int = 255) -> np.ndarray:
    """Binary mask at the threshold chosen by :func:`sweep_threshold` (``lo`` if none qualifies)."""
    t, _ = sweep_threshold(gray, lo, hi)
    return binarize(gray, t)


def crop_scope(img: np.ndarray, region: Region) -> np.ndarray:
    H, W = img.shape[:2]
    if region.w <= 0 or region.h <= 0:
        raise ValueError(f"degenerate region {region}")
    if region.x < 0 or region.y < 0 or region.x + region.w > W or region.y + region.h > H:
        raise ValueError(f"region {region} outside a {W}x{H} image")
    return img[region.y:region.y + region.h, region.x:region.x + region.w].copy()


def crop_image(img: np.ndarray) -> tuple[np.ndarray, Optional[Region]]:
    """Crop to the detected scope circle; passthrough when nothing qualifies."""
    _, region = sweep_threshold(to_grayscale(img))
    if region is None:
        return img, None
    return crop_scope(img, region), region


def read_image(path) -> np.ndarray:
    """RGB uint8 raster; raises ValueError when the file cannot be decoded."""
    from PIL import Image, UnidentifiedImageError
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"cannot decode {path}: {exc}") from exc


def write_image(path, img: np.ndarray) -> None:
    """Atomic PNG/JPEG write chosen by extension."""
    import io
    from pathlib import Path

    from PIL import Image

    from ..serialize import atomic_write
    fmt = {".png": "PNG", ".jpg": "JPEG", ".jpeg": "JPEG"}.get(Path(path).suffix.lower())
    if fmt is None:
        raise ValueError(f"unsupported image extension: {path}")
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(buf, format=fmt)
    atomic_write(path, buf.getvalue())
