"""Seven-segment glyph renderer for synthetic instrument readouts.

Glyphs live on a fixed per-character cell grid and are drawn as binary
masks (255 = lit).  Segment naming is the usual clockwise convention:

        aaaa
       f    b
       f    b
        gggg
       e    c
       e    c
        dddd   (dp)

Supported alphabet: space, '.', '-', and the digits 0-9.
"""
from __future__ import annotations

import numpy as np

from ..errors import AI4ARError
from ..samal import MaskImage

ALPHABET = " .-0123456789"

SEGMENTS = {
    "0": "abcdef",
    "1": "bc",
    "2": "abdeg",
    "3": "abcdg",
    "4": "bcfg",
    "5": "acdfg",
    "6": "acdefg",
    "7": "abc",
    "8": "abcdefg",
    "9": "abcdfg",
    "-": "g",
    " ": "",
}


class SevenSegError(AI4ARError):
    pass


def _cell(ch: str, w: int, h: int, t: int) -> np.ndarray:
    cell = np.zeros((h, w), dtype=np.uint8)
    mid = (h - t) // 2
    if ch == ".":
        x0 = (w - t) // 2
        cell[h - t:h, x0:x0 + t] = 255
        return cell
    for seg in SEGMENTS[ch]:
        if seg == "a":
            cell[0:t, t:w - t] = 255
        elif seg == "b":
            cell[t:mid, w - t:w] = 255
        elif seg == "c":
            cell[mid + t:h - t, w - t:w] = 255
        elif seg == "d":
            cell[h - t:h, t:w - t] = 255
        elif seg == "e":
            cell[mid + t:h - t, 0:t] = 255
        elif seg == "f":
            cell[t:mid, 0:t] = 255
        elif seg == "g":
            cell[mid:mid + t, t:w - t] = 255
    return cell


def render_seven_segment(text: str,
                         cell_size: tuple[int, int] = (10, 18)) -> MaskImage:
    """Render text into a binary mask, one cell per character.

    An empty string renders to a zero-width mask of cell height.
    """
    w, h = int(cell_size[0]), int(cell_size[1])
    t = max(1, min(w, h) // 6)
    if w < 2 * t + 2 or h < 3 * t + 2:
        raise SevenSegError(f"cell {w}x{h} too small for stroke width {t}")
    for ch in text:
        if ch not in ALPHABET:
            raise SevenSegError(f"character {ch!r} not in alphabet "
                                f"{ALPHABET!r}")
    if not text:
        return MaskImage(width=0, height=h, data=b"")
    canvas = np.zeros((h, w * len(text)), dtype=np.uint8)
    for i, ch in enumerate(text):
        canvas[:, i * w:(i + 1) * w] = _cell(ch, w, h, t)
    return MaskImage.from_array(canvas)
