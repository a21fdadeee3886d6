"""Parametric synthetic faces: a dark head ellipse, two eye dots and a mouth arc.

Faces are drawn in a canonical frame where the head ellipse has semi-axes
0.75 (x) and 1.0 (y) centred at the origin, then placed on the canvas by a
similarity transform (scale = head half-height in pixels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import LandmarkSet, SimilarityTransform
from ..image import ImageBuffer
from .types import FaceBox


class OutOfBounds(ValueError):
    pass


HEAD_AX, HEAD_AY = 0.75, 1.0
EYE_X, EYE_Y, EYE_R = 0.32, -0.25, 0.09
MOUTH_HALF, MOUTH_Y, MOUTH_DEPTH, MOUTH_HALF_THICK = 0.35, 0.45, 0.15, 0.045

BACKGROUND = (226, 226, 226)
SKIN = (150, 112, 88)
FEATURE = (26, 20, 22)
NOISE = 6


@dataclass(frozen=True)
class SyntheticFaceParams:
    center: tuple[float, float]
    scale: float
    rotation: float = 0.0
    kappa: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not -1.0 <= self.kappa <= 1.0:
            raise ValueError("mouth curvature must lie in [-1, 1]")

    @property
    def label(self) -> bool:
        return self.kappa > 0

    @property
    def transform(self) -> SimilarityTransform:
        return SimilarityTransform(self.scale, self.rotation, float(self.center[0]),
                                   float(self.center[1]))


def mouth_arc(u, kappa: float):
    """Canonical y of the mouth centreline at canonical x ``u``; corners fixed."""
    u = np.asarray(u, dtype=np.float64)
    return MOUTH_Y + kappa * MOUTH_DEPTH * (1.0 - (u / MOUTH_HALF) ** 2)


def canonical_landmarks(kappa: float = 0.0) -> np.ndarray:
    """68 landmarks in the canonical face frame.

    Only the head outline, eyes and mouth are drawn; brows and nose points
    are placed at plausible positions relative to them.
    """
    pts = np.zeros((68, 2))
    # jaw: lower half of the head ellipse, subject-right (image left) first
    phi = math.pi - math.pi * np.arange(17) / 16
    pts[0:17, 0] = HEAD_AX * np.cos(phi)
    pts[0:17, 1] = HEAD_AY * np.sin(phi)
    brow_x = np.array([-0.55, -0.45, -0.34, -0.22, -0.10])
    brow_y = np.array([-0.40, -0.46, -0.48, -0.46, -0.42])
    pts[17:22] = np.column_stack([brow_x, brow_y])
    pts[22:27] = np.column_stack([-brow_x[::-1], brow_y[::-1]])
    pts[27:31] = np.column_stack([np.zeros(4), np.linspace(-0.25, 0.10, 4)])
    pts[31:36] = np.column_stack([np.linspace(-0.12, 0.12, 5), [0.17, 0.19, 0.20, 0.19, 0.17]])
    r = EYE_R
    # corner, two upper points, corner, two lower points (clockwise in the image)
    ring = np.array([(-r - 0.01, 0.0), (-0.03, -0.04), (0.03, -0.04),
                     (r + 0.01, 0.0), (0.03, 0.04), (-0.03, 0.04)])
    pts[36:42] = ring + (-EYE_X, EYE_Y)
    pts[42:48] = ring + (EYE_X, EYE_Y)
    # outer lip: 48 left corner, 49-53 upper edge, 54 right corner, 55-59 lower edge
    ux = np.array([-0.35, -0.23, -0.10, 0.0, 0.10, 0.23, 0.35, 0.23, 0.10, 0.0, -0.10, -0.23])
    dy = np.array([0.0, -1, -1, -1, -1, -1, 0.0, 1, 1, 1, 1, 1]) * 0.03
    pts[48:60] = np.column_stack([ux, mouth_arc(ux, kappa) + dy])
    ix = np.array([-0.30, -0.10, 0.0, 0.10, 0.30, 0.10, 0.0, -0.10])
    idy = np.array([0.0, -1, -1, -1, 0.0, 1, 1, 1]) * 0.01
    pts[60:68] = np.column_stack([ix, mouth_arc(ix, kappa) + idy])
    return pts


def face_box(params: SyntheticFaceParams) -> FaceBox:
    """Tight axis-aligned box around the transformed head ellipse."""
    s, r = params.scale, params.rotation
    ex = s * math.hypot(HEAD_AX * math.cos(r), HEAD_AY * math.sin(r))
    ey = s * math.hypot(HEAD_AX * math.sin(r), HEAD_AY * math.cos(r))
    cx, cy = params.center
    return FaceBox(cx - ex, cy - ey, 2 * ex, 2 * ey)


def _face_masks(params: SyntheticFaceParams, w: int, h: int):
    inv = params.transform.inverse()
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    u = inv.a * xs - inv.b * ys + inv.tx
    v = inv.b * xs + inv.a * ys + inv.ty
    head = (u / HEAD_AX) ** 2 + (v / HEAD_AY) ** 2 <= 1.0
    eyes = ((u + EYE_X) ** 2 + (v - EYE_Y) ** 2 <= EYE_R ** 2) | (
        (u - EYE_X) ** 2 + (v - EYE_Y) ** 2 <= EYE_R ** 2)
    mouth = (np.abs(u) <= MOUTH_HALF) & (np.abs(v - mouth_arc(u, params.kappa)) <= MOUTH_HALF_THICK)
    return head, (eyes | mouth) & head


def render_scene(faces, w: int, h: int, seed: int = 0) -> ImageBuffer:
    """Render several faces on one RGB canvas with seeded sensor noise."""
    canvas = np.empty((h, w, 3), dtype=np.int16)
    canvas[:] = BACKGROUND
    for params in faces:
        box = face_box(params)
        if box.x < 0 or box.y < 0 or box.x + box.w > w - 1 or box.y + box.h > h - 1:
            raise OutOfBounds(f"face at {params.center} with scale {params.scale} exits the "
                              f"{w}x{h} canvas")
        head, features = _face_masks(params, w, h)
        canvas[head] = SKIN
        canvas[features] = FEATURE
    # noise depends on the seed only, never on content
    rng = np.random.default_rng(seed)
    canvas += rng.integers(-NOISE, NOISE + 1, size=canvas.shape, dtype=np.int16)
    return ImageBuffer(np.clip(canvas, 0, 255).astype(np.uint8))


def render_synthetic_face(params: SyntheticFaceParams, w: int, h: int):
    """Returns ``(image, landmarks, face_box)`` for one face; deterministic in ``params``."""
    img = render_scene([params], w, h, seed=params.seed)
    lm = LandmarkSet(params.transform.apply(canonical_landmarks(params.kappa)))
    return img, lm, face_box(params)


def sample_face_params(rng: np.random.Generator, w: int, h: int,
                       scale_range=(34.0, 48.0), max_rotation=0.35) -> SyntheticFaceParams:
    """Random pose with curvature uniform on [-1, 1]; always fits the canvas."""
    scale = float(rng.uniform(*scale_range))
    rotation = float(rng.uniform(-max_rotation, max_rotation))
    kappa = float(rng.uniform(-1.0, 1.0))
    seed = int(rng.integers(0, 2 ** 63 - 1))
    probe = face_box(SyntheticFaceParams((0.0, 0.0), scale, rotation, 0.0))
    margin = 2.0
    half_w, half_h = probe.w / 2, probe.h / 2
    lo_x, hi_x = half_w + margin, w - 1 - half_w - margin
    lo_y, hi_y = half_h + margin, h - 1 - half_h - margin
    if lo_x > hi_x or lo_y > hi_y:
        raise OutOfBounds(f"scale {scale} does not fit a {w}x{h} canvas")
    cx = float(rng.uniform(lo_x, hi_x))
    cy = float(rng.uniform(lo_y, hi_y))
    return SyntheticFaceParams((cx, cy), scale, rotation, kappa, seed)
