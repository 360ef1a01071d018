"""Binary PGM (P5) and grayscale PNG readers and writers."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ImageFormatError
from .image import GrayImage

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _pgm_header(data: bytes):
    if data[:2] != b"P5":
        raise ImageFormatError("not a binary PGM (missing P5 magic)")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated PGM header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise ImageFormatError(f"bad PGM header token {m.group(1)!r}") from None
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    width, height, maxval = fields
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ImageFormatError(f"bad PGM header values {fields}")
    return width, height, maxval, pos + 1


def read_pgm(path) -> GrayImage:
    data = Path(path).read_bytes()
    width, height, maxval, offset = _pgm_header(data)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    raster = data[offset:offset + need]
    if len(raster) != need:
        raise ImageFormatError(f"PGM raster truncated: expected {need} bytes, got {len(raster)}")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    if maxval > 255:
        return GrayImage(arr.astype(np.uint16), 16)
    return GrayImage(arr.astype(np.uint8), 8)


def write_pgm(img: GrayImage, path) -> None:
    maxval = img.max_value
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    if img.bit_depth == 16:
        raster = img.pixels.astype(">u2").tobytes()
    else:
        raster = img.pixels.tobytes()
    Path(path).write_bytes(header + raster)


def read_png(path) -> GrayImage:
    try:
        im = Image.open(path)
    except OSError as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
    with im:
        mode = im.mode
        if mode == "P":
            raise ImageFormatError(f"{path}: palette PNGs are not grayscale")
        if mode in ("L", "1"):
            return GrayImage(np.array(im.convert("L"), dtype=np.uint8), 8)
        if mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.array(im)
            if arr.min() < 0 or arr.max() > 65535:
                raise ImageFormatError(f"{path}: 32-bit integer PNG values outside 16-bit range")
            return GrayImage(arr.astype(np.uint16), 16)
    raise ImageFormatError(f"{path}: unsupported PNG mode {mode!r}; expected 8/16-bit grayscale")


def write_png(img: GrayImage, path) -> None:
    if img.bit_depth == 16:
        im = Image.fromarray(np.ascontiguousarray(img.pixels, dtype=np.uint16))
    else:
        im = Image.fromarray(np.ascontiguousarray(img.pixels, dtype=np.uint8), mode="L")
    im.save(path, format="PNG")


def _kind(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".pgm", ".pnm"):
        return "pgm"
    if suffix == ".png":
        return "png"
    raise ImageFormatError(f"{path}: unsupported image extension {suffix!r} (use .pgm or .png)")


def load_image(path, promote=True) -> GrayImage:
    """Read a PGM or PNG; 8-bit data is promoted to 16 bits unless ``promote`` is off."""
    img = read_pgm(path) if _kind(path) == "pgm" else read_png(path)
    return img.promoted() if promote else img


def save_image(img: GrayImage, path) -> None:
    if _kind(path) == "pgm":
        write_pgm(img, path)
    else:
        write_png(img, path)


def read_dimensions(path) -> tuple[int, int]:
    """``(width, height)`` from the file header without decoding the raster."""
    if _kind(path) == "pgm":
        with open(path, "rb") as fh:
            head = fh.read(512)
        width, height, _, _ = _pgm_header(head)
        return width, height
    try:
        with Image.open(path) as im:
            return im.size
    except OSError as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
