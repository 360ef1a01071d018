"""Grayscale images, codecs and annotation-consistent geometry."""

from .codecs import load_image, read_dimensions, read_pgm, read_png, save_image, write_pgm, write_png
from .geometry import (
    GeometricTransform,
    apply_chain,
    bilinear_resize,
    breast_mask,
    crop,
    flip,
    foreground_threshold,
    full_box,
    invert_chain,
    otsu_threshold,
    resize_keep_aspect,
    resize_scale,
    resized_shape,
    segment_breast,
)
from .image import GrayImage

__all__ = [
    "GeometricTransform",
    "GrayImage",
    "apply_chain",
    "bilinear_resize",
    "breast_mask",
    "crop",
    "flip",
    "foreground_threshold",
    "full_box",
    "invert_chain",
    "load_image",
    "otsu_threshold",
    "read_dimensions",
    "read_pgm",
    "read_png",
    "resize_keep_aspect",
    "resize_scale",
    "resized_shape",
    "save_image",
    "segment_breast",
    "write_pgm",
    "write_png",
]
