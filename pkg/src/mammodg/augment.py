"""Seeded Cutout and RandConv augmentations.

Both transforms change intensities only; geometry (and therefore the
ground-truth boxes) is untouched. Random streams are split per image by
hashing ``(seed, image_id)`` so results do not depend on processing order.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import AllBackground, PatchSizeExcluded, ZeroVarianceImage
from .imagecore import GrayImage, breast_mask, flip


@dataclass(frozen=True)
class CutoutConfig:
    patch_sizes: tuple[int, ...] = (1, 2)
    pixel_fraction: float = 0.10
    fill_value: int = 0
    apply_probability: float = 0.5

    def __post_init__(self):
        if not self.patch_sizes or any(int(s) != s or s < 1 for s in self.patch_sizes):
            raise ValueError(f"patch_sizes must be non-empty positive integers, got {self.patch_sizes}")
        if not 0 < self.pixel_fraction <= 1:
            raise ValueError(f"pixel_fraction must be in (0, 1], got {self.pixel_fraction}")
        if not 0 <= self.apply_probability <= 1:
            raise ValueError("apply_probability must be in [0, 1]")
        object.__setattr__(self, "patch_sizes", tuple(sorted({int(s) for s in self.patch_sizes})))


@dataclass(frozen=True)
class RandConvConfig:
    kernel_sizes: tuple[int, ...] = (1, 3, 5)
    alpha: float = 0.5
    mix: float = 0.0
    apply_probability: float = 0.5
    foreground_rule: str = "breast_mask"

    def __post_init__(self):
        if not self.kernel_sizes or any(int(k) != k or k < 1 or k % 2 == 0 for k in self.kernel_sizes):
            raise ValueError(f"kernel sizes must be odd integers >= 1, got {self.kernel_sizes}")
        for name in ("alpha", "mix", "apply_probability"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.foreground_rule not in ("breast_mask", "full_image"):
            raise ValueError(f"unknown foreground_rule {self.foreground_rule!r}")
        object.__setattr__(self, "kernel_sizes", tuple(sorted({int(k) for k in self.kernel_sizes})))


def image_rng(seed: int, image_id: str) -> np.random.Generator:
    """PCG64 stream keyed by ``(seed, image_id)``."""
    digest = hashlib.sha256(f"{int(seed)}\0{image_id}".encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))


def cutout_patch_count(width, height, config: CutoutConfig, sizes=None) -> int:
    sizes = config.patch_sizes if sizes is None else sizes
    mean_area = sum(s * s for s in sizes) / len(sizes)
    return int(math.floor(config.pixel_fraction * width * height / mean_area + 0.5))


def cutout(img: GrayImage, config: CutoutConfig, rng: np.random.Generator) -> GrayImage:
    """Zero random square patches until the configured pixel budget is used.

    Patches are placed i.i.d., fully inside the image, and may overlap.
    """
    if rng.random() >= config.apply_probability:
        return img
    h, w = img.pixels.shape
    sizes = [s for s in config.patch_sizes if s <= min(w, h)]
    if len(sizes) < len(config.patch_sizes):
        dropped = sorted(set(config.patch_sizes) - set(sizes))
        warnings.warn(f"patch sizes {dropped} exceed the {w}x{h} image and were excluded", PatchSizeExcluded, stacklevel=2)
    if not sizes:
        return img
    n = cutout_patch_count(w, h, config, sizes)
    if n == 0:
        return img
    size = np.asarray(sizes)[rng.integers(len(sizes), size=n)]
    xs = rng.integers(0, w - size + 1)
    ys = rng.integers(0, h - size + 1)
    px = img.pixels.copy()
    for s in sizes:
        sel = size == s
        for dy in range(s):
            for dx in range(s):
                px[ys[sel] + dy, xs[sel] + dx] = config.fill_value
    return GrayImage(px, img.bit_depth)


def _foreground(img: GrayImage, rule: str) -> np.ndarray:
    if rule == "full_image":
        return np.ones(img.pixels.shape, dtype=bool)
    try:
        return breast_mask(img)
    except AllBackground:
        return np.ones(img.pixels.shape, dtype=bool)


def random_kernel(k: int, rng: np.random.Generator) -> np.ndarray:
    # variance 1/k^2 keeps unit output variance for whitened, uncorrelated input
    return rng.normal(0.0, 1.0 / k, size=(k, k))


def randconv(img: GrayImage, config: RandConvConfig, rng: np.random.Generator, return_float=False):
    """Random-convolution texture perturbation blended with the original.

    The image is whitened over its foreground, filtered with a random
    Gaussian kernel (reflect padding), de-whitened, and blended as
    ``alpha * original + (1 - alpha) * filtered``.
    """
    x = img.pixels.astype(np.float64)
    if rng.random() >= config.apply_probability or config.alpha == 1.0:
        return x if return_float else img
    fg = _foreground(img, config.foreground_rule)
    mu, sigma = x[fg].mean(), x[fg].std()
    if sigma == 0:
        warnings.warn("image has zero variance; RandConv skipped", ZeroVarianceImage, stacklevel=2)
        return x if return_float else img
    z = (x - mu) / sigma
    sizes = np.asarray(config.kernel_sizes)
    k = int(sizes[rng.integers(len(sizes))])
    filtered = ndimage.convolve(z, random_kernel(k, rng), mode="reflect")
    if config.mix > 0:
        k2 = int(sizes[rng.integers(len(sizes))])
        second = ndimage.convolve(z, random_kernel(k2, rng), mode="reflect")
        filtered = (1.0 - config.mix) * filtered + config.mix * second
    out = config.alpha * x + (1.0 - config.alpha) * (filtered * sigma + mu)
    if return_float:
        return out
    return GrayImage.from_float(out, img.bit_depth)


def augment_image(
    img: GrayImage,
    annotations,
    rng: np.random.Generator,
    cutout_config: CutoutConfig | None = None,
    randconv_config: RandConvConfig | None = None,
    flip_h_prob: float = 0.0,
    flip_v_prob: float = 0.0,
):
    """Random flips, then RandConv, then Cutout. Returns ``(image, annotations, transform)``."""
    do_h = rng.random() < flip_h_prob
    do_v = rng.random() < flip_v_prob
    img, annotations, transform = flip(img, do_h, do_v, annotations)
    if randconv_config is not None:
        img = randconv(img, randconv_config, rng)
    if cutout_config is not None:
        img = cutout(img, cutout_config, rng)
    return img, annotations, transform
