"""Intensity scale standardization with learned histogram landmarks.

Learning maps each training image's percentile landmarks affinely onto the
standard scale and averages them. Applying a model maps an image's own
landmarks onto the standard ones piecewise-linearly.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllBackground, DegenerateImage, DegenerateImageWarning, NonMonotoneLandmarks
from .imagecore import GrayImage, breast_mask

DEFAULT_PERCENTILES = (1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 99.0)
DEFAULT_SCALE = (0.0, 4095.0)
FOREGROUND_RULES = ("breast_mask", "full_image")


@dataclass(frozen=True)
class LandmarkModel:
    percentiles: tuple[float, ...]
    standard_landmarks: tuple[float, ...]
    standard_scale: tuple[float, float] = DEFAULT_SCALE
    foreground_rule: str = "breast_mask"
    training_hash: str = ""

    def __post_init__(self):
        p = np.asarray(self.percentiles, dtype=float)
        lm = np.asarray(self.standard_landmarks, dtype=float)
        if p.size < 2 or p.size != lm.size:
            raise ValueError("percentiles and standard_landmarks need the same length (>= 2)")
        if np.any(np.diff(p) <= 0) or p[0] <= 0 or p[-1] >= 100:
            raise ValueError("percentiles must be strictly increasing inside (0, 100)")
        if np.any(np.diff(lm) <= 0):
            raise ValueError("standard_landmarks must be strictly increasing")
        s_min, s_max = self.standard_scale
        if lm[0] != s_min or lm[-1] != s_max:
            raise ValueError("first and last standard landmarks must equal the scale ends")
        if self.foreground_rule not in FOREGROUND_RULES:
            raise ValueError(f"foreground_rule must be one of {FOREGROUND_RULES}")

    def to_dict(self):
        return {
            "percentiles": list(self.percentiles),
            "standard_landmarks": list(self.standard_landmarks),
            "standard_scale": list(self.standard_scale),
            "foreground_rule": self.foreground_rule,
            "training_hash": self.training_hash,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            percentiles=tuple(float(v) for v in d["percentiles"]),
            standard_landmarks=tuple(float(v) for v in d["standard_landmarks"]),
            standard_scale=(float(d["standard_scale"][0]), float(d["standard_scale"][1])),
            foreground_rule=d["foreground_rule"],
            training_hash=d.get("training_hash", ""),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def training_hash(image_ids: Sequence[str]) -> str:
    h = hashlib.sha256()
    for image_id in image_ids:
        h.update(image_id.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()


def foreground_values(img: GrayImage, rule="breast_mask") -> np.ndarray:
    if rule == "full_image":
        return img.pixels.ravel()
    try:
        return img.pixels[breast_mask(img)]
    except AllBackground:
        return img.pixels.ravel()


def image_landmarks(img: GrayImage, percentiles=DEFAULT_PERCENTILES, rule="breast_mask") -> np.ndarray:
    """Intensities at ``percentiles`` of the foreground, linear between order statistics."""
    values = foreground_values(img, rule)
    return np.percentile(values.astype(np.float64), percentiles, method="linear")


def _isotonic(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators projection onto non-decreasing sequences."""
    blocks = []  # (mean, weight)
    for v in y:
        blocks.append([float(v), 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            m2, w2 = blocks.pop()
            m1, w1 = blocks.pop()
            blocks.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2])
    return np.concatenate([np.full(w, m) for m, w in blocks])


def _strictly_increasing(lm: np.ndarray, s_min, s_max) -> np.ndarray:
    if np.all(np.diff(lm) > 0):
        return lm
    lm = _isotonic(lm)
    eps = 1e-6 * (s_max - s_min)
    n = lm.size
    # ends stay pinned to the scale; interior ties are pushed apart by eps
    for i in range(1, n - 1):
        lm[i] = max(lm[i], lm[i - 1] + eps)
    for i in range(n - 2, 0, -1):
        lm[i] = min(lm[i], lm[i + 1] - eps)
    return lm


def model_from_landmarks(
    per_image: Sequence[np.ndarray],
    percentiles=DEFAULT_PERCENTILES,
    standard_scale=DEFAULT_SCALE,
    foreground_rule="breast_mask",
    image_ids: Sequence[str] | None = None,
) -> LandmarkModel:
    """Reduce per-image landmark vectors to a model (affine map to the scale, then mean)."""
    percentiles = tuple(float(p) for p in percentiles)
    s_min, s_max = float(standard_scale[0]), float(standard_scale[1])
    if not s_max > s_min:
        raise ValueError("standard scale must satisfy s_min < s_max")
    if len(per_image) == 0:
        raise DegenerateImage("no training images")

    mapped = []
    for i, lm in enumerate(per_image):
        lm = np.asarray(lm, dtype=np.float64)
        if lm[-1] <= lm[0]:
            label = image_ids[i] if image_ids is not None else i
            warnings.warn(f"training image {label} has a constant foreground; skipped", DegenerateImageWarning, stacklevel=3)
            continue
        mapped.append(s_min + (lm - lm[0]) * (s_max - s_min) / (lm[-1] - lm[0]))
    if not mapped:
        raise DegenerateImage("every training image has a constant foreground")

    standard = np.mean(mapped, axis=0)
    standard[0], standard[-1] = s_min, s_max
    if not np.all(np.diff(standard) > 0):
        warnings.warn("averaged landmarks not strictly increasing; projected", NonMonotoneLandmarks, stacklevel=3)
        standard = _strictly_increasing(standard, s_min, s_max)

    ids = list(image_ids) if image_ids is not None else [str(i) for i in range(len(per_image))]
    return LandmarkModel(
        percentiles=percentiles,
        standard_landmarks=tuple(float(v) for v in standard),
        standard_scale=(s_min, s_max),
        foreground_rule=foreground_rule,
        training_hash=training_hash(ids),
    )


def learn_landmarks(
    images: Sequence[GrayImage],
    percentiles=DEFAULT_PERCENTILES,
    standard_scale=DEFAULT_SCALE,
    foreground_rule="breast_mask",
    image_ids: Sequence[str] | None = None,
    threads: int = 1,
) -> LandmarkModel:
    """Learn standard landmarks from a training set.

    Degenerate images (constant foreground) are skipped with a warning; if
    every image is degenerate :class:`DegenerateImage` is raised.
    """
    if foreground_rule not in FOREGROUND_RULES:
        raise ValueError(f"foreground_rule must be one of {FOREGROUND_RULES}")

    def landmarks(img):
        return image_landmarks(img, percentiles, foreground_rule)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            per_image = list(pool.map(landmarks, images))
    else:
        per_image = [landmarks(img) for img in images]
    return model_from_landmarks(per_image, percentiles, standard_scale, foreground_rule, image_ids)


def _knots(src: np.ndarray, dst: np.ndarray):
    """Collapse repeated source landmarks, averaging their targets."""
    xs, inverse = np.unique(src, return_inverse=True)
    ys = np.bincount(inverse, weights=dst) / np.bincount(inverse)
    return xs, ys


def standardize_values(values: np.ndarray, src_landmarks, model: LandmarkModel) -> np.ndarray:
    """Piecewise-linear map with linear extrapolation, clamped to the scale."""
    xs, ys = _knots(np.asarray(src_landmarks, dtype=np.float64), np.asarray(model.standard_landmarks))
    if xs.size < 2:
        raise DegenerateImage("image landmarks are all equal")
    v = np.asarray(values, dtype=np.float64)
    out = np.interp(v, xs, ys)
    lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
    hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    below, above = v < xs[0], v > xs[-1]
    out[below] = ys[0] + lo_slope * (v[below] - xs[0])
    out[above] = ys[-1] + hi_slope * (v[above] - xs[-1])
    s_min, s_max = model.standard_scale
    return np.clip(out, s_min, s_max)


def output_bit_depth(model: LandmarkModel) -> int:
    s_min, s_max = model.standard_scale
    if s_min < 0 or s_max > 65535:
        raise ValueError(f"standard scale {model.standard_scale} does not fit a 16-bit image")
    return 8 if s_max <= 255 else 16


def apply_standardization(img: GrayImage, model: LandmarkModel, return_float=False):
    """Standardize one image.

    With ``return_float`` the unrounded mapped intensities are returned as a
    float array instead of a :class:`GrayImage`.
    """
    lm = image_landmarks(img, model.percentiles, model.foreground_rule)
    if lm[-1] <= lm[0]:
        raise DegenerateImage("image foreground is constant")
    mapped = standardize_values(img.pixels, lm, model)
    if return_float:
        return mapped
    return GrayImage.from_float(mapped, output_bit_depth(model))
