"""Built-in stand-in face detector for dark head blobs on a light background."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..image import ImageBuffer
from .types import FaceBox


def heuristic_face_detector(img: ImageBuffer, threshold: float = 170.0, min_area: int = 80,
                            aspect_range=(0.9, 2.2), min_fill: float = 0.55) -> list[FaceBox]:
    """Threshold, label 8-connected components, keep ellipse-like blobs.

    A component survives if its area is at least ``min_area`` pixels, its
    bounding-box height/width ratio lies in ``aspect_range`` and it fills at
    least ``min_fill`` of that box (an upright ellipse fills pi/4). Boxes are
    returned top-to-bottom, left-to-right.
    """
    dark = img.gray() < threshold
    labels, n = ndimage.label(dark, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    boxes = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or areas[idx] < min_area:
            continue
        h = sl[0].stop - sl[0].start
        w = sl[1].stop - sl[1].start
        if not aspect_range[0] <= h / w <= aspect_range[1]:
            continue
        if areas[idx] / (w * h) < min_fill:
            continue
        boxes.append(FaceBox(float(sl[1].start), float(sl[0].start), float(w), float(h)))
    boxes.sort(key=lambda b: (b.y, b.x))
    return boxes
