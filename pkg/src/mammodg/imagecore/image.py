from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyImage

_DTYPES = {8: np.uint8, 16: np.uint16}


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable single-channel image, ``pixels`` shaped ``(height, width)``."""

    pixels: np.ndarray
    bit_depth: int = 16

    def __post_init__(self):
        if self.bit_depth not in _DTYPES:
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D pixel array, got shape {arr.shape}")
        if arr.size == 0:
            raise EmptyImage("image has no pixels")
        dtype = _DTYPES[self.bit_depth]
        if arr.dtype != dtype:
            if arr.size and (arr.min() < 0 or arr.max() > self.max_value):
                raise ValueError(f"pixel values outside [0, {self.max_value}]")
            arr = arr.astype(dtype)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.pixels, other.pixels)

    __hash__ = None

    @classmethod
    def from_float(cls, values, bit_depth=16) -> "GrayImage":
        """Round and clamp a float array into a new image."""
        top = (1 << bit_depth) - 1
        arr = np.clip(np.rint(np.asarray(values, dtype=np.float64)), 0, top)
        return cls(arr.astype(_DTYPES[bit_depth]), bit_depth)

    def promoted(self) -> "GrayImage":
        """16-bit copy; 8-bit data is left-shifted by 8."""
        if self.bit_depth == 16:
            return self
        return GrayImage(self.pixels.astype(np.uint16) << 8, 16)
