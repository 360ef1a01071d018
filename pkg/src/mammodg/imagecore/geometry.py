"""Breast-region segmentation, cropping, aspect-preserving resize and flips.

Every geometric operation returns the recorded :class:`GeometricTransform`
so annotations and predictions can be carried between coordinate frames.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..errors import AllBackground, AnnotationDropped, BoxOutOfBounds, EmptyImage
from ..manifest import Annotation, BoundingBox
from .image import GrayImage

# minimum foreground threshold as a fraction of the image's intensity range
FOREGROUND_FLOOR = 0.01

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class GeometricTransform:
    """One geometric step: translate by ``-crop_offset``, scale, then flip.

    ``in_size`` and ``out_size`` are ``(width, height)`` of the source and
    destination frames; flips reflect within ``out_size``.
    """

    scale: float = 1.0
    flip_h: bool = False
    flip_v: bool = False
    crop_offset: tuple[float, float] = (0.0, 0.0)
    in_size: tuple[int, int] = (0, 0)
    out_size: tuple[int, int] = (0, 0)

    @property
    def is_identity(self):
        return (
            self.scale == 1.0
            and not self.flip_h
            and not self.flip_v
            and tuple(self.crop_offset) == (0.0, 0.0)
            and tuple(self.in_size) == tuple(self.out_size)
        )

    def apply_box(self, box: BoundingBox) -> BoundingBox:
        ox, oy = self.crop_offset
        s = self.scale
        x, y, w, h = (box.x - ox) * s, (box.y - oy) * s, box.w * s, box.h * s
        if self.flip_h:
            x = self.out_size[0] - x - w
        if self.flip_v:
            y = self.out_size[1] - y - h
        return BoundingBox(x, y, w, h)

    def invert_box(self, box: BoundingBox) -> BoundingBox:
        x, y, w, h = box.x, box.y, box.w, box.h
        if self.flip_h:
            x = self.out_size[0] - x - w
        if self.flip_v:
            y = self.out_size[1] - y - h
        s = self.scale
        ox, oy = self.crop_offset
        return BoundingBox(x / s + ox, y / s + oy, w / s, h / s)

    def apply_spacing(self, spacing):
        """Pixel spacing after the step; scaling by ``s`` divides it by ``s``."""
        return (spacing[0] / self.scale, spacing[1] / self.scale)

    def to_dict(self):
        return {
            "scale": self.scale,
            "flip_h": self.flip_h,
            "flip_v": self.flip_v,
            "crop_offset": list(self.crop_offset),
            "in_size": list(self.in_size),
            "out_size": list(self.out_size),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            scale=float(d["scale"]),
            flip_h=bool(d["flip_h"]),
            flip_v=bool(d["flip_v"]),
            crop_offset=tuple(d["crop_offset"]),
            in_size=tuple(d["in_size"]),
            out_size=tuple(d["out_size"]),
        )


def apply_chain(chain: Sequence[GeometricTransform], box: BoundingBox) -> BoundingBox:
    for t in chain:
        box = t.apply_box(box)
    return box


def invert_chain(chain: Sequence[GeometricTransform], box: BoundingBox) -> BoundingBox:
    for t in reversed(chain):
        box = t.invert_box(box)
    return box


def _remap(annotations, fn):
    """Map boxes of ``annotations`` (Annotation or BoundingBox items) through ``fn``.

    ``fn`` returns ``None`` to drop an item.
    """
    out = []
    for item in annotations or ():
        if isinstance(item, Annotation):
            box = fn(item.box)
            if box is not None:
                out.append(Annotation(box, item.attributes))
        else:
            box = fn(item)
            if box is not None:
                out.append(box)
    return out


# -- segmentation ---------------------------------------------------------


def otsu_threshold(values: np.ndarray) -> float:
    """Otsu threshold over the exact histogram of ``values``.

    Returns the largest intensity of the lower class, so foreground is
    ``values > threshold``. Requires at least two distinct values.
    """
    levels, counts = np.unique(np.asarray(values).ravel(), return_counts=True)
    if levels.size < 2:
        raise AllBackground("image is constant")
    levels = levels.astype(np.float64)
    counts = counts.astype(np.float64)
    w0 = np.cumsum(counts)[:-1]
    m0 = np.cumsum(counts * levels)[:-1]
    total, mtotal = counts.sum(), (counts * levels).sum()
    w1 = total - w0
    mu0 = m0 / w0
    mu1 = (mtotal - m0) / w1
    between = w0 * w1 * (mu0 - mu1) ** 2
    return float(levels[int(np.argmax(between))])


def foreground_threshold(img: GrayImage) -> float:
    px = img.pixels
    lo, hi = float(px.min()), float(px.max())
    if lo == hi:
        raise AllBackground("no pixel exceeds the foreground threshold (constant image)")
    return max(otsu_threshold(px), lo + FOREGROUND_FLOOR * (hi - lo))


def breast_mask(img: GrayImage) -> np.ndarray:
    """Boolean mask of the largest 8-connected component above the Otsu threshold."""
    fg = img.pixels > foreground_threshold(img)
    if not fg.any():
        raise AllBackground("no pixel exceeds the foreground threshold")
    labels, n = ndimage.label(fg, structure=_EIGHT_CONNECTED)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def segment_breast(img: GrayImage) -> BoundingBox:
    """Tight bounding box of the breast region.

    Raises :class:`AllBackground` when nothing is above threshold; callers
    usually fall back to :func:`full_box`.
    """
    mask = breast_mask(img)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return BoundingBox(
        float(cols[0]), float(rows[0]), float(cols[-1] - cols[0] + 1), float(rows[-1] - rows[0] + 1)
    )


def full_box(img: GrayImage) -> BoundingBox:
    return BoundingBox(0.0, 0.0, float(img.width), float(img.height))


# -- crop / resize / flip -------------------------------------------------


def crop(img: GrayImage, box: BoundingBox, annotations=()):
    """Crop to ``box`` (integer pixel edges) and clip annotations to the crop."""
    x0, y0 = int(round(box.x)), int(round(box.y))
    x1, y1 = int(round(box.x2)), int(round(box.y2))
    if x0 < 0 or y0 < 0 or x1 > img.width or y1 > img.height or x1 <= x0 or y1 <= y0:
        raise BoxOutOfBounds(f"crop box {box.as_list()} outside image {img.width}x{img.height}")
    cw, ch = x1 - x0, y1 - y0
    out = GrayImage(img.pixels[y0:y1, x0:x1], img.bit_depth)

    def clip(b: BoundingBox):
        left, top = max(b.x - x0, 0.0), max(b.y - y0, 0.0)
        right, bottom = min(b.x2 - x0, float(cw)), min(b.y2 - y0, float(ch))
        if right <= left or bottom <= top:
            warnings.warn(f"annotation {b.as_list()} lies outside the crop and was dropped", AnnotationDropped, stacklevel=3)
            return None
        return BoundingBox(left, top, right - left, bottom - top)

    transform = GeometricTransform(
        crop_offset=(float(x0), float(y0)), in_size=(img.width, img.height), out_size=(cw, ch)
    )
    return out, _remap(annotations, clip), transform


def resize_scale(width, height, max_long=1333, max_short=800) -> float:
    if not max_long >= max_short > 0:
        raise ValueError(f"need max_long >= max_short > 0, got {max_long}, {max_short}")
    if width <= 0 or height <= 0:
        raise EmptyImage("cannot resize an empty image")
    return min(max_long / max(width, height), max_short / min(width, height))


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def resized_shape(width, height, max_long=1333, max_short=800):
    s = resize_scale(width, height, max_long, max_short)
    return _round_half_up(s * width), _round_half_up(s * height), s


def _bilinear_axis(n_in, n_out, s):
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) / s - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, pos - i0


def bilinear_resize(pixels: np.ndarray, out_w: int, out_h: int, s: float) -> np.ndarray:
    """Bilinear resample on pixel centres; returns float64."""
    src = pixels.astype(np.float64)
    h, w = src.shape
    r0, r1, fr = _bilinear_axis(h, out_h, s)
    c0, c1, fc = _bilinear_axis(w, out_w, s)
    rows = src[r0] * (1.0 - fr)[:, None] + src[r1] * fr[:, None]
    return rows[:, c0] * (1.0 - fc)[None, :] + rows[:, c1] * fc[None, :]


def resize_keep_aspect(img: GrayImage, max_long=1333, max_short=800, annotations=()):
    """Scale so the long side fits ``max_long`` and the short side ``max_short``.

    The scale is ``min(max_long / long, max_short / short)``; annotation
    coordinates are multiplied by it and stay real-valued.
    """
    out_w, out_h, s = resized_shape(img.width, img.height, max_long, max_short)
    transform = GeometricTransform(scale=s, in_size=(img.width, img.height), out_size=(out_w, out_h))
    if (out_w, out_h) == (img.width, img.height) and s == 1.0:
        out = img
    else:
        out = GrayImage.from_float(bilinear_resize(img.pixels, out_w, out_h, s), img.bit_depth)
    return out, _remap(annotations, transform.apply_box), transform


def flip(img: GrayImage, horizontal=False, vertical=False, annotations=()):
    px = img.pixels
    if horizontal:
        px = px[:, ::-1]
    if vertical:
        px = px[::-1, :]
    size = (img.width, img.height)
    transform = GeometricTransform(flip_h=bool(horizontal), flip_v=bool(vertical), in_size=size, out_size=size)
    out = GrayImage(px, img.bit_depth) if (horizontal or vertical) else img
    return out, _remap(annotations, transform.apply_box), transform
