"""Small-scale photometric and geometric augmentation, reproducible from a seed."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional

import cv2
import numpy as np


@dataclass(frozen=True)
class AugmentationSpec:
    """Enabled ops and their ranges; ``None`` disables an op.

    Each enabled op fires independently with probability ``p``.
    """
    hflip: bool = True
    crop: Optional[float] = 0.85          # minimum retained area fraction
    blur: Optional[tuple[float, float]] = (0.0, 1.5)
    contrast: Optional[tuple[float, float]] = (0.8, 1.2)
    translate: Optional[float] = 0.1      # fraction of side
    rotate: Optional[float] = 20.0        # degrees
    shear: Optional[float] = 10.0         # degrees
    p: float = 0.5

    def __post_init__(self):
        if self.crop is not None and not 0 < self.crop <= 1:
            raise ValueError("crop must keep a fraction in (0, 1]")
        for name in ("translate", "rotate", "shear"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} range must be non-negative")
        for name in ("blur", "contrast"):
            v = getattr(self, name)
            if v is not None and not 0 <= v[0] <= v[1]:
                raise ValueError(f"{name} range must be an ordered non-negative pair")
        if not 0 <= self.p <= 1:
            raise ValueError("p must be a probability")

    @classmethod
    def disabled(cls) -> "AugmentationSpec":
        return cls(hflip=False, **{f.name: None for f in fields(cls) if f.name not in ("hflip", "p")})

    def only(self, *names: str) -> "AugmentationSpec":
        off = AugmentationSpec.disabled()
        return replace(off, p=self.p, **{n: getattr(self, n) for n in names})


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1].copy()


def affine(img: np.ndarray, angle: float = 0.0, shear: float = 0.0, tx: float = 0.0, ty: float = 0.0) -> np.ndarray:
    """Rotate (degrees, counter-clockwise), shear along x (degrees) and shift, about the centre.

    Output keeps the input size; uncovered pixels are reflected in.
    """
    h, w = img.shape[:2]
    c = np.array([(w - 1) / 2, (h - 1) / 2])
    a = np.deg2rad(angle)
    rot = np.array([[np.cos(a), np.sin(a)], [-np.sin(a), np.cos(a)]])
    sh = np.array([[1.0, np.tan(np.deg2rad(shear))], [0.0, 1.0]])
    m = rot @ sh
    t = c - m @ c + np.array([tx, ty])
    mat = np.hstack([m, t[:, None]])
    src = np.ascontiguousarray(img, dtype=np.float32)
    out = cv2.warpAffine(src, mat, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101)
    return out.reshape(img.shape)


def rotate(img: np.ndarray, angle: float) -> np.ndarray:
    return affine(img, angle=angle)


def random_crop(img: np.ndarray, keep: float, rng: np.random.Generator) -> np.ndarray:
    """Crop keeping ``keep`` of the area (same aspect), resized back to the input size."""
    h, w = img.shape[:2]
    s = np.sqrt(keep)
    ch, cw = max(1, int(round(h * s))), max(1, int(round(w * s)))
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    patch = np.ascontiguousarray(img[y0:y0 + ch, x0:x0 + cw], dtype=np.float32)
    return cv2.resize(patch, (w, h), interpolation=cv2.INTER_LINEAR).reshape(img.shape)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img
    return cv2.GaussianBlur(np.asarray(img, dtype=np.float32), (0, 0), sigma,
                            borderType=cv2.BORDER_REFLECT_101).reshape(img.shape)


def linear_contrast(img: np.ndarray, alpha: float, centre: float = 128.0) -> np.ndarray:
    return centre + alpha * (np.asarray(img, dtype=np.float32) - centre)


def augment_logged(img: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator) -> tuple[np.ndarray, list[str]]:
    """Apply ``spec`` and return the image together with the ops that fired."""
    dtype = img.dtype
    out = np.asarray(img, dtype=np.float32)
    ops: list[str] = []
    fire = lambda: rng.random() < spec.p  # noqa: E731
    if spec.hflip and fire():
        out = hflip(out)
        ops.append("hflip")
    if spec.crop is not None and spec.crop < 1 and fire():
        keep = rng.uniform(spec.crop, 1.0)
        out = random_crop(out, keep, rng)
        ops.append(f"crop={keep:.4f}")
    angle = shear = tx = ty = 0.0
    if spec.rotate and fire():
        angle = rng.uniform(-spec.rotate, spec.rotate)
        ops.append(f"rotate={angle:.3f}")
    if spec.shear and fire():
        shear = rng.uniform(-spec.shear, spec.shear)
        ops.append(f"shear={shear:.3f}")
    if spec.translate and fire():
        h, w = out.shape[:2]
        tx = rng.uniform(-spec.translate, spec.translate) * w
        ty = rng.uniform(-spec.translate, spec.translate) * h
        ops.append(f"translate={tx:.2f},{ty:.2f}")
    if angle or shear or tx or ty:
        out = affine(out, angle, shear, tx, ty)
    if spec.blur is not None and spec.blur[1] > 0 and fire():
        sigma = rng.uniform(*spec.blur)
        out = gaussian_blur(out, sigma)
        ops.append(f"blur={sigma:.3f}")
    if spec.contrast is not None and fire():
        alpha = rng.uniform(*spec.contrast)
        out = linear_contrast(out, alpha)
        ops.append(f"contrast={alpha:.3f}")
    if np.issubdtype(dtype, np.integer):
        out = np.clip(np.rint(out), 0, 255).astype(dtype)
    return out, ops


def augment(img: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator) -> np.ndarray:
    return augment_logged(img, spec, rng)[0]
