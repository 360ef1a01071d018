"""Deterministic synthetic mammogram-like fixtures for demos and tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imagecore import GrayImage, save_image
from .manifest import BoundingBox


def phantom(rng: np.random.Generator, width=256, height=320, masses=(), background=0, bit_depth=16):
    """Half-ellipse "breast" on a dark background with smooth texture and bright masses.

    ``masses`` is a sequence of :class:`BoundingBox`; each becomes a
    Gaussian blob filling the box.
    """
    top = (1 << bit_depth) - 1
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    a, b = 0.8 * width, 0.45 * height
    cy = height / 2.0
    inside = (xx / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0
    texture = ndimage.gaussian_filter(rng.normal(size=(height, width)), 3.0)
    texture /= texture.std() or 1.0
    tissue = 0.35 * top + 0.06 * top * texture - 0.10 * top * (xx / width)
    img = np.where(inside, tissue, float(background))
    for box in masses:
        mx, my = box.x + box.w / 2.0, box.y + box.h / 2.0
        blob = np.exp(-(((xx - mx) / (box.w / 2.5)) ** 2 + ((yy - my) / (box.h / 2.5)) ** 2))
        img += 0.25 * top * blob * inside
    return GrayImage.from_float(np.clip(img, 0, top), bit_depth)


def write_fixture(out_dir, seed=0, n_cases=4, views=("CC", "MLO"), width=256, height=320, fmt="png"):
    """Write a small domain (images, manifest and predictions) to ``out_dir``.

    Returns ``(manifest_path, predictions_path)``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(seed))
    images, preds = [], []
    densities = ("A", "B", "C", "D")
    statuses = ("benign", "malignant")
    for c in range(n_cases):
        case_id = f"case{c:02d}"
        age = int(rng.integers(40, 80))
        density = densities[c % len(densities)]
        for v, view in enumerate(views):
            image_id = f"{case_id}_{view}"
            boxes = []
            for _ in range(int(rng.integers(1, 3))):
                w = float(rng.integers(12, 60))
                h = float(rng.integers(12, 60))
                x = float(rng.integers(5, int(0.55 * width - w)))
                y = float(rng.integers(int(0.2 * height), int(0.8 * height - h)))
                boxes.append(BoundingBox(x, y, w, h))
            img = phantom(rng, width, height, boxes)
            name = f"{image_id}.{fmt}"
            save_image(img, out_dir / name)
            images.append(
                {
                    "image_id": image_id,
                    "case_id": case_id,
                    "path": name,
                    "pixel_spacing_mm": [0.5, 0.5],
                    "view": view,
                    "age": age,
                    "breast_density": density,
                    "annotations": [
                        {
                            "bbox": box.as_list(),
                            "status": statuses[int(rng.integers(2))],
                            "conspicuity": ("obvious", "subtle")[int(rng.integers(2))],
                        }
                        for box in boxes
                    ],
                }
            )
            for box in boxes:
                if rng.random() < 0.75:
                    jitter = rng.normal(0, 2.0, size=2)
                    preds.append(
                        {
                            "image_id": image_id,
                            "bbox": [box.x + jitter[0], box.y + jitter[1], box.w, box.h],
                            "score": round(float(rng.uniform(0.5, 1.0)), 4),
                        }
                    )
            for _ in range(int(rng.integers(0, 3))):
                preds.append(
                    {
                        "image_id": image_id,
                        "bbox": [float(rng.integers(0, width - 30)), float(rng.integers(0, height - 30)), 25.0, 25.0],
                        "score": round(float(rng.uniform(0.05, 0.9)), 4),
                    }
                )
    manifest_path = out_dir / "manifest.json"
    predictions_path = out_dir / "predictions.json"
    manifest_path.write_text(json.dumps({"name": "synthetic", "images": images}, indent=2) + "\n", encoding="utf-8")
    predictions_path.write_text(json.dumps(preds, indent=2) + "\n", encoding="utf-8")
    return manifest_path, predictions_path
