"""Synthetic corpora with known ground truth."""
from __future__ import annotations

import numpy as np

SKIN = np.array([205.0, 160.0, 140.0])
LESION = np.array([110.0, 70.0, 55.0])


def _lesion_mask(h, w, rng, cy, cx, scale):
    yy, xx = np.mgrid[0:h, 0:w]
    a, b = scale * rng.uniform(0.6, 1.0), scale * rng.uniform(0.6, 1.0)
    th = rng.uniform(0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(th) + dy * np.sin(th)
    v = -dx * np.sin(th) + dy * np.cos(th)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def skin_patch(h: int, w: int, rng: np.random.Generator, noise: float = 3.0) -> np.ndarray:
    """Skin-toned field with one darker elliptical lesion and pixel noise (float RGB)."""
    img = np.broadcast_to(SKIN + rng.uniform(-15, 15, 3), (h, w, 3)).copy()
    m = _lesion_mask(h, w, rng, h * rng.uniform(0.35, 0.65), w * rng.uniform(0.35, 0.65),
                     min(h, w) * rng.uniform(0.1, 0.25))
    img[m] = LESION + rng.uniform(-15, 15, 3)
    img += rng.normal(0, noise, img.shape)
    return img


def scope_image(size: int, rng: np.random.Generator, radius: float | None = None,
                center: tuple[float, float] | None = None) -> tuple[np.ndarray, dict]:
    """Dermoscope-style frame: skin disk on a near-black surround.

    Returns the uint8 RGB image and the disk geometry (cx, cy, r in pixels).
    """
    r = radius if radius is not None else size * rng.uniform(0.25, 0.45)
    cy, cx = center if center is not None else (size / 2 + rng.uniform(-0.03, 0.03) * size,
                                                size / 2 + rng.uniform(-0.03, 0.03) * size)
    yy, xx = np.mgrid[0:size, 0:size]
    disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    img = rng.uniform(0, 20, (size, size, 3))
    img[disk] = skin_patch(size, size, rng)[disk]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), {"cx": cx, "cy": cy, "r": r, "mask": disk}


def full_frame_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """Close-up photo with skin filling the frame (no scope circle)."""
    return np.clip(np.rint(skin_patch(size, size, rng)), 0, 255).astype(np.uint8)


SHAPE_CLASSES = ("disk", "square", "triangle")


def shape_image(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One filled shape of class ``label`` with random colour, scale and position."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    s = size * rng.uniform(0.25, 0.4)
    cy, cx = rng.uniform(s, size - s, 2)
    if label == 0:
        m = (yy - cy) ** 2 + (xx - cx) ** 2 <= s * s
    elif label == 1:
        m = (np.abs(yy - cy) <= s * 0.85) & (np.abs(xx - cx) <= s * 0.85)
    elif label == 2:
        top = cy - s
        m = (yy >= top) & (yy <= cy + s) & (np.abs(xx - cx) <= (yy - top) * 0.6)
    else:
        raise ValueError(f"unknown shape class {label}")
    bg = rng.uniform(0, 90, 3)
    fg = rng.uniform(150, 255, 3)
    img = np.where(m[..., None], fg, bg) + rng.normal(0, 8, (size, size, 3))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def shapes_dataset(n: int, size: int = 32, seed: int = 0, classes: int = 3):
    """``n`` shape images with labels balanced round-robin over ``classes``."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    imgs = np.stack([shape_image(int(y), size, rng) for y in labels])
    return imgs, labels


def gaussian_clusters(n: int, classes: int, dims: int = 2, spread: float = 0.6,
                      separation: float = 4.0, seed: int = 0):
    """Well-separated isotropic clusters, one per class, centres on a scaled simplex."""
    rng = np.random.default_rng(seed)
    centres = separation * np.eye(classes, dims) if dims >= classes else rng.normal(0, separation, (classes, dims))
    y = np.arange(n) % classes
    X = centres[y] + rng.normal(0, spread, (n, dims))
    return X, y


def flip_labels(y: np.ndarray, fraction: float, classes: int, rng: np.random.Generator):
    """Reassign ``fraction`` of labels to a different class; returns (labels, flipped mask)."""
    y = np.asarray(y).copy()
    idx = rng.choice(y.size, size=int(round(fraction * y.size)), replace=False)
    y[idx] = (y[idx] + rng.integers(1, classes, idx.size)) % classes
    mask = np.zeros(y.size, dtype=bool)
    mask[idx] = True
    return y, mask
