"""Minimal binary PGM (P5) / PPM (P6) reader and writer.

Only 8-bit images are supported; that is all the fixture generator emits
and all the labeling pipeline consumes.  Headers may contain '#' comments
and arbitrary whitespace, as the format allows.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import AI4ARError


class PnmError(AI4ARError):
    pass


def _read_header_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Pull `count` whitespace-separated numeric tokens after the magic,
    skipping comments; returns the tokens and the offset of the pixel data."""
    tokens: list[int] = []
    i = 2  # past magic
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] not in (0x0A, 0x0D):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace():
            i += 1
        if start == i:
            raise PnmError("truncated header")
        try:
            tokens.append(int(data[start:i]))
        except ValueError:
            raise PnmError(f"non-numeric header token {data[start:i]!r}") from None
    if i >= n or not data[i:i + 1].isspace():
        raise PnmError("missing whitespace after header")
    return tokens, i + 1


def read_pnm(path: str | Path) -> np.ndarray:
    """Load a P5/P6 file as (H, W) or (H, W, 3) uint8."""
    data = Path(path).read_bytes()
    if len(data) < 2:
        raise PnmError(f"{path}: not a PNM file")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"{path}: unsupported magic {magic!r}")
    (width, height, maxval), off = _read_header_tokens(data, 3)
    if width <= 0 or height <= 0:
        raise PnmError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise PnmError(f"{path}: only 8-bit images supported, maxval={maxval}")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    if len(data) - off < need:
        raise PnmError(f"{path}: pixel data truncated "
                       f"({len(data) - off} of {need} bytes)")
    arr = np.frombuffer(data[off:off + need], dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width).copy()
    return arr.reshape(height, width, 3).copy()


def write_pnm(path: str | Path, image: np.ndarray) -> None:
    """Write (H, W) uint8 as P5 or (H, W, 3) uint8 as P6."""
    arr = np.ascontiguousarray(image)
    if arr.dtype != np.uint8:
        raise PnmError(f"expected uint8 pixels, got {arr.dtype}")
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise PnmError(f"expected (H, W) or (H, W, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    header = magic + b"\n%d %d\n255\n" % (w, h)
    Path(path).write_bytes(header + arr.tobytes())
