"""Alignment stage: fit landmarks to the template, warp to the network input size."""

from __future__ import annotations

from ..geometry import BILINEAR, LandmarkSet, fit_similarity, warp_image
from ..image import ImageBuffer
from .types import FaceBox

DEFAULT_SIZE = 224
REDUCED_SIZE = 160


def input_size_for(rho: float) -> int:
    """Network input side for a resolution multiplier: 224 at 1.0, 160 at 0.714."""
    return int(round(DEFAULT_SIZE * rho))


def select_landmarks(box: FaceBox | None, candidates: list[LandmarkSet]) -> LandmarkSet | None:
    """Landmark set whose centroid falls in ``box``; the first one if no box is given."""
    if not candidates:
        return None
    if box is None:
        return candidates[0]
    for lm in candidates:
        cx, cy = lm.points.mean(axis=0)
        if box.contains(cx, cy):
            return lm
    return None


def align_stage(img: ImageBuffer, box: FaceBox | None, landmarks: LandmarkSet,
                template: LandmarkSet, out_size: int = DEFAULT_SIZE,
                interp: str = BILINEAR) -> ImageBuffer:
    """Similarity-align ``img`` so ``landmarks`` land on ``template``.

    ``template`` is expressed in output pixel coordinates of an
    ``out_size`` x ``out_size`` image. ``box`` is only used upstream to pick
    which face's landmarks to pass in.
    """
    t = fit_similarity(landmarks, template)
    return warp_image(img, t, out_size, out_size, interp)
