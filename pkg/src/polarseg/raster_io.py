"""Raster file I/O: lossless PNG plus a minimal binary container.

Binary container layout (little-endian):
  8 bytes magic ``PSRAS001``
  uint8   dtype code (0=float32, 1=uint8, 2=uint16, 3=float64)
  uint8   ndim (2 or 3)
  uint32  per-axis sizes
  raw row-major array bytes
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import InvalidArgumentError

_MAGIC = b"PSRAS001"
_DTYPES = {0: np.float32, 1: np.uint8, 2: np.uint16, 3: np.float64}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def save_image_png(path, img: np.ndarray, bit_depth: int = 8):
    """Write a [0, 1] float raster as an 8- or 16-bit PNG (16-bit is grayscale only)."""
    img = np.asarray(img)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise InvalidArgumentError(f"expected (H, W) or (H, W, 3) raster, got {img.shape}")
    if bit_depth == 8:
        arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr, mode="L" if img.ndim == 2 else "RGB").save(path, format="PNG")
    elif bit_depth == 16:
        if img.ndim != 2:
            raise InvalidArgumentError("16-bit PNG output supports grayscale rasters only")
        arr = np.clip(np.round(img * 65535.0), 0, 65535).astype(np.uint16)
        Image.fromarray(arr.astype(np.int32), mode="I").convert("I;16").save(path, format="PNG")
    else:
        raise InvalidArgumentError(f"bit_depth must be 8 or 16, got {bit_depth}")


def load_image_png(path) -> np.ndarray:
    """Read a PNG into a float32 [0, 1] raster, preserving channel count."""
    with Image.open(path) as im:
        if im.mode in ("I", "I;16"):
            arr = np.asarray(im, dtype=np.float32) / 65535.0
        elif im.mode in ("L", "RGB"):
            arr = np.asarray(im, dtype=np.float32) / 255.0
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def save_mask_png(path, values: np.ndarray):
    """Write raw 8-bit grayscale values (mask label conventions preserved exactly)."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise InvalidArgumentError(f"mask must be 2D, got shape {values.shape}")
    Image.fromarray(values.astype(np.uint8), mode="L").save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    """Read raw 8-bit grayscale values without normalization."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_raster(path, arr: np.ndarray):
    arr = np.ascontiguousarray(arr)
    code = _DTYPE_CODES.get(arr.dtype)
    if code is None:
        raise InvalidArgumentError(f"unsupported dtype {arr.dtype}; use "
                                   f"{sorted(str(np.dtype(d)) for d in _DTYPES.values())}")
    if arr.ndim not in (2, 3):
        raise InvalidArgumentError(f"raster must be 2D or 3D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BB", code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_raster(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise InvalidArgumentError(f"{path}: not a raster container (bad magic)")
    code, ndim = struct.unpack_from("<BB", data, 8)
    if code not in _DTYPES or ndim not in (2, 3):
        raise InvalidArgumentError(f"{path}: corrupt raster header")
    shape = struct.unpack_from(f"<{ndim}I", data, 10)
    offset = 10 + 4 * ndim
    arr = np.frombuffer(data, dtype=_DTYPES[code], offset=offset).copy()
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise InvalidArgumentError(f"{path}: payload size {arr.size} != header {expected}")
    return arr.reshape(shape)
