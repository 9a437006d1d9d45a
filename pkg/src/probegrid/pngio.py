"""PNG reading and writing, normalized to float RGB in [0,1].

8-bit inputs only; sRGB bytes are used as-is with no color-space
transform.  Grayscale loads with replicated channels; 16-bit PNGs are
rejected explicitly.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import UnsupportedFormat

_16BIT_MODES = {"I", "I;16", "I;16B", "I;16L", "I;16N", "F"}


def load_image(path) -> np.ndarray:
    """Load a PNG (or other 8-bit raster) as (H, W, 3) float32 in [0,1]."""
    try:
        with Image.open(path) as im:
            if im.mode in _16BIT_MODES:
                raise UnsupportedFormat(
                    f"{path}: {im.mode} pixels unsupported (8-bit only)")
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: not a recognized image") from exc
    return arr.astype(np.float32) / 255.0


def save_image(path, pixels: np.ndarray) -> None:
    """Write (H, W, 3) float values in [0,1] as an 8-bit RGB PNG."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise UnsupportedFormat(f"expected (H, W, 3) pixels, got {pixels.shape}")
    data = np.rint(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")
