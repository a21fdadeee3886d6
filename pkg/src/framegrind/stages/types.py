"""Result value types exchanged between stages."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class FaceBox:
    """Axis-aligned face rectangle in pixels (top-left corner plus size)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"face box needs positive size, got {self.w}x{self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def contains(self, x: float, y: float) -> bool:
        return self.x <= x <= self.x + self.w and self.y <= y <= self.y + self.h

    def iou(self, other: "FaceBox") -> float:
        ix = max(0.0, min(self.x + self.w, other.x + other.w) - max(self.x, other.x))
        iy = max(0.0, min(self.y + self.h, other.y + other.h) - max(self.y, other.y))
        inter = ix * iy
        return inter / (self.area + other.area - inter)


@dataclass(frozen=True)
class SmileScore:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"smile probability must lie in [0, 1], got {self.p}")

    @property
    def is_smile(self) -> bool:
        return self.p >= 0.5


@dataclass(frozen=True)
class SourceMeta:
    """What the frame source knows about a grabbed image (all optional)."""

    path: str | None = None
    label: bool | None = None
    landmarks: tuple = ()
