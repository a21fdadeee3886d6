"""Stand-in smile classifier reading mouth curvature off an aligned face."""

from __future__ import annotations

import math

import numpy as np

from ..image import ImageBuffer
from .synthetic import MOUTH_DEPTH, MOUTH_Y
from .types import SmileScore

# face geometry of the aligned output, as fractions of (size - 1)
FACE_SCALE = 0.4
CENTER_BAND = (0.0, 0.08)
CORNER_BAND = (0.22, 0.30)
ROW_WINDOW = 0.35
DARK_LEVEL = 70.0
# logistic p = 1 / (1 + exp(-(GAIN * feature + BIAS))); a full smile (feature
# about 0.55) maps to p of about 0.9
GAIN = 4.0
BIAS = 0.0


def mouth_curvature_feature(aligned: ImageBuffer) -> float:
    """Normalised vertical offset of the mouth centre below the mouth corners.

    Dark pixels (below ``DARK_LEVEL``) in a window of rows around the template
    mouth are weighted by darkness; the feature is the weighted mean row under
    the centre columns minus that under the corner columns, divided by the
    full-curvature arc depth. About +0.55 for a full smile, 0 for a flat mouth.
    Returns 0 when either band holds no dark pixels.
    """
    g = aligned.gray()
    size = aligned.width
    fs = FACE_SCALE * (size - 1)
    c = (size - 1) / 2.0
    y_mouth = c + MOUTH_Y * fs
    y0 = max(0, int(math.floor(y_mouth - ROW_WINDOW * fs)))
    y1 = min(aligned.height, int(math.ceil(y_mouth + ROW_WINDOW * fs)) + 1)
    cols = np.arange(size)
    off = np.abs(cols - c) / fs
    rows = np.arange(y0, y1, dtype=np.float64)[:, None]
    weight = np.clip(DARK_LEVEL - g[y0:y1], 0.0, None)

    def band_row(lo, hi):
        sel = (off >= lo) & (off <= hi)
        w = weight[:, sel]
        total = w.sum()
        if total == 0:
            return None
        return float((w * rows).sum() / total)

    centre = band_row(*CENTER_BAND)
    corners = band_row(*CORNER_BAND)
    if centre is None or corners is None:
        return 0.0
    return (centre - corners) / (MOUTH_DEPTH * fs)


def stub_smile_classifier(aligned: ImageBuffer) -> SmileScore:
    z = GAIN * mouth_curvature_feature(aligned) + BIAS
    return SmileScore(1.0 / (1.0 + math.exp(-z)))
