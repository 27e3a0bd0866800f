"""Datasets: a self-contained synthetic generator plus PNG-folder ingestion.

The synthetic set draws one colored shape per image on a smooth textured
background; the shape's type is the label.  Everything about an image
(colors, position, size, texture phases) is sampled from the passed rng, so
datasets are fully reproducible and need no downloads.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from PIL import Image

from ..errors import DataError

N_SHAPE_KINDS = 10


def _background(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((3, size, size))
    base = rng.uniform(0.2, 0.8, size=3)
    for c in range(3):
        tex = np.zeros((size, size))
        for _ in range(3):
            fx, fy = rng.uniform(1.0, 4.0, size=2)
            phase = rng.uniform(0, 2 * np.pi, size=2)
            tex += np.sin(2 * np.pi * fx * xx + phase[0]) * np.sin(2 * np.pi * fy * yy + phase[1])
        img[c] = base[c] + 0.08 * tex
    return img


def _shape_mask(kind: int, size: int, rng: np.random.Generator) -> np.ndarray:
    cy, cx = rng.uniform(0.35, 0.65, size=2)
    r = rng.uniform(0.18, 0.3)
    yy, xx = (np.mgrid[0:size, 0:size] + 0.5) / size
    dy, dx = yy - cy, xx - cx
    rad = np.hypot(dy, dx)
    soft = 1.5 / size  # anti-aliasing width

    def edge(signed):
        return np.clip(0.5 - signed / (2 * soft), 0.0, 1.0)

    if kind == 0:  # disk
        return edge(rad - r)
    if kind == 1:  # square
        return edge(np.maximum(np.abs(dy), np.abs(dx)) - r)
    if kind == 2:  # triangle (upward)
        d = np.maximum(dy - r * 0.8, np.abs(dx) * 1.6 - (r * 0.8 - dy))
        return edge(d)
    if kind == 3:  # ring
        return edge(np.abs(rad - r) - r * 0.35)
    if kind == 4:  # cross
        bar = np.minimum(np.maximum(np.abs(dy) - r * 0.35, np.abs(dx) - r),
                         np.maximum(np.abs(dx) - r * 0.35, np.abs(dy) - r))
        return edge(bar)
    if kind == 5:  # diamond
        return edge(np.abs(dy) + np.abs(dx) - r)
    if kind == 6:  # horizontal bar
        return edge(np.maximum(np.abs(dy) - r * 0.4, np.abs(dx) - r))
    if kind == 7:  # vertical bar
        return edge(np.maximum(np.abs(dx) - r * 0.4, np.abs(dy) - r))
    if kind == 8:  # two dots
        r2 = r * 0.55
        d1 = np.hypot(dy, dx - r * 0.7) - r2
        d2 = np.hypot(dy, dx + r * 0.7) - r2
        return edge(np.minimum(d1, d2))
    if kind == 9:  # L corner
        d = np.minimum(np.maximum(np.abs(dy + r * 0.5) - r * 0.3, np.abs(dx) - r),
                       np.maximum(np.abs(dx + r * 0.5) - r * 0.3, np.abs(dy) - r))
        return edge(d)
    raise DataError(f"no shape kind {kind}")


def synthetic_shapes(n: int, size: int = 32, classes: int = 2,
                     rng: np.random.Generator | None = None, seed: int = 0):
    """Generate n images of `classes` shape types; returns (x, y) tensors."""
    if not 2 <= classes <= N_SHAPE_KINDS:
        raise DataError(f"classes must be in [2, {N_SHAPE_KINDS}]")
    rng = rng or np.random.default_rng(seed)
    xs = np.zeros((n, 3, size, size), dtype=np.float32)
    ys = np.zeros(n, dtype=np.int64)
    for i in range(n):
        label = int(rng.integers(0, classes))
        img = _background(size, rng)
        mask = _shape_mask(label, size, rng)[None]
        color = rng.uniform(0.0, 1.0, size=3)
        # push the shape color away from the local background tone
        color = np.where(np.abs(color - img.mean(axis=(1, 2))) < 0.25, 1.0 - color, color)
        img = img * (1 - mask) + color[:, None, None] * mask
        xs[i] = np.clip(img, 0.0, 1.0)
        ys[i] = label
    return torch.from_numpy(xs), torch.from_numpy(ys)


def save_image_folder(path, x: torch.Tensor, y: torch.Tensor):
    """Write images as 8-bit PNGs under per-class subdirectories."""
    for i in range(len(x)):
        cls_dir = os.path.join(path, f"class_{int(y[i])}")
        os.makedirs(cls_dir, exist_ok=True)
        arr = (x[i].numpy().transpose(1, 2, 0) * 255).round().astype(np.uint8)
        Image.fromarray(arr).save(os.path.join(cls_dir, f"{i:06d}.png"))


def load_image_folder(path):
    """Read 8-bit PNGs from per-class subdirectories into [0, 1] tensors."""
    if not os.path.isdir(path):
        raise DataError(f"no dataset directory at {path}")
    classes = sorted(d for d in os.listdir(path) if os.path.isdir(os.path.join(path, d)))
    if not classes:
        raise DataError(f"no class subdirectories in {path}")
    xs, ys = [], []
    for label, cls in enumerate(classes):
        cls_dir = os.path.join(path, cls)
        for name in sorted(os.listdir(cls_dir)):
            if not name.lower().endswith(".png"):
                continue
            arr = np.asarray(Image.open(os.path.join(cls_dir, name)).convert("RGB"))
            xs.append(arr.transpose(2, 0, 1).astype(np.float32) / 255.0)
            ys.append(label)
    if not xs:
        raise DataError(f"no PNG images under {path}")
    return torch.from_numpy(np.stack(xs)), torch.tensor(ys, dtype=torch.int64)


def make_dataset(cfg: dict, seed: int):
    """Build (train, test) splits from a dataset config block."""
    kind = cfg.get("type", "synthetic")
    if kind == "synthetic":
        n_train = int(cfg.get("n_train", 2000))
        n_test = int(cfg.get("n_test", 500))
        size = int(cfg.get("size", 32))
        classes = int(cfg.get("classes", 2))
        rng = np.random.default_rng(seed)
        xtr, ytr = synthetic_shapes(n_train, size, classes, rng)
        xte, yte = synthetic_shapes(n_test, size, classes, rng)
        return (xtr, ytr), (xte, yte)
    if kind == "folder":
        x, y = load_image_folder(cfg["path"])
        frac = float(cfg.get("test_fraction", 0.2))
        rng = np.random.default_rng(seed)
        order = torch.from_numpy(rng.permutation(len(x)))
        x, y = x[order], y[order]
        n_test = int(len(x) * frac)
        return (x[n_test:], y[n_test:]), (x[:n_test], y[:n_test])
    raise DataError(f"unknown dataset type {kind!r}")
