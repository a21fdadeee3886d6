"""Overlay sink: face rectangle plus a ``SMILE 92%`` style label."""

from __future__ import annotations

import math

import numpy as np

from ..image import ImageBuffer
from .types import FaceBox, SmileScore

# 5x7 glyphs, one string per row, '#' = ink
FONT_5X7 = {
    " ": ["....."] * 7,
    "-": [".....", ".....", ".....", "#####", ".....", ".....", "....."],
    "%": ["##...", "##..#", "...#.", "..#..", ".#...", "#..##", "...##"],
    "…": [".....", ".....", ".....", ".....", ".....", ".....", "#.#.#"],
    "0": [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
    "1": ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    "2": [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
    "3": ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."],
    "4": ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
    "5": ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
    "6": ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
    "7": ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
    "8": [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
    "9": [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
    "E": ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
    "I": [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
    "L": ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
    "M": ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
    "N": ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"],
    "O": [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "S": [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
}
GLYPH_W, GLYPH_H, GLYPH_ADVANCE = 5, 7, 6
PLACEHOLDER = "…"

SMILE_COLOR = (0, 255, 0)
NO_SMILE_COLOR = (255, 0, 0)
BOX_COLOR = (255, 255, 0)
TEXT_COLOR = (255, 255, 255)
THICKNESS = 2


def smile_label(score: SmileScore) -> str:
    """Class name plus the confidence of that class, e.g. ``NO-SMILE 95%``."""
    if score.is_smile:
        name, conf = "SMILE", score.p
    else:
        name, conf = "NO-SMILE", 1.0 - score.p
    return f"{name} {int(math.floor(100.0 * conf + 0.5))}%"


def _ink(color, channels):
    if channels == 1:
        return int(round(sum(color) / 3))
    return color


def _fill(px: np.ndarray, x0, y0, x1, y1, color):
    """Fill the half-open rectangle [x0, x1) x [y0, y1), clipped to the image."""
    h, w = px.shape[:2]
    x0, x1 = max(0, x0), min(w, x1)
    y0, y1 = max(0, y0), min(h, y1)
    if x0 < x1 and y0 < y1:
        px[y0:y1, x0:x1] = color


def draw_rect(px: np.ndarray, box: FaceBox, color, thickness: int = THICKNESS):
    x0, y0 = int(math.floor(box.x)), int(math.floor(box.y))
    x1, y1 = int(math.ceil(box.x + box.w)), int(math.ceil(box.y + box.h))
    t = thickness
    _fill(px, x0, y0, x1, y0 + t, color)
    _fill(px, x0, y1 - t, x1, y1, color)
    _fill(px, x0, y0, x0 + t, y1, color)
    _fill(px, x1 - t, y0, x1, y1, color)


def draw_text(px: np.ndarray, x: int, y: int, text: str, color):
    for k, ch in enumerate(text):
        glyph = FONT_5X7.get(ch)
        if glyph is None:
            raise ValueError(f"no glyph for {ch!r}")
        gx = x + k * GLYPH_ADVANCE
        for r, row in enumerate(glyph):
            for c, bit in enumerate(row):
                if bit == "#":
                    _fill(px, gx + c, y + r, gx + c + 1, y + r + 1, color)


def text_width(text: str) -> int:
    return len(text) * GLYPH_ADVANCE - 1 if text else 0


def overlay_renderer(img: ImageBuffer, detect=None, smile: SmileScore | None = None) -> ImageBuffer:
    """Annotate ``img`` with face box(es) and the smile label.

    ``detect`` is a FaceBox, a list of them, or None. The label sits above the
    first box (inside it when there is no room above), or in the top-left
    corner when no box is available. With neither input a single placeholder
    glyph is drawn in the top-left corner.
    """
    boxes = [detect] if isinstance(detect, FaceBox) else list(detect or [])
    px = np.array(img.pixels)
    ch = img.channels
    if not boxes and smile is None:
        draw_text(px, 1, 1, PLACEHOLDER, _ink(TEXT_COLOR, ch))
        return ImageBuffer(px)
    color = _ink(BOX_COLOR, ch)
    if smile is not None:
        color = _ink(SMILE_COLOR if smile.is_smile else NO_SMILE_COLOR, ch)
    for box in boxes:
        draw_rect(px, box, color)
    if smile is not None:
        label = smile_label(smile)
        if boxes:
            lx, ly = int(math.floor(boxes[0].x)), int(math.floor(boxes[0].y)) - GLYPH_H - 2
            if ly < 0:
                ly = int(math.floor(boxes[0].y)) + THICKNESS + 1
        else:
            lx, ly = 1, 1
        draw_text(px, lx, ly, label, color)
    return ImageBuffer(px)
