"""Landmark sets, similarity transforms, template symmetrization and warping.

Coordinates are pixel centres: origin at the top-left pixel, x to the right,
y downwards. A horizontal flip of a ``w``-wide image maps ``x`` to
``w - 1 - x``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .image import ImageBuffer

#: Declared landmark counts per convention. ``None`` means any count >= 2.
CONVENTIONS: dict[str, int | None] = {"face-68": 68, "generic": None}

NEAREST = "nearest"
BILINEAR = "bilinear"


class DegenerateInput(ValueError):
    """Point pattern admits no similarity fit with positive scale."""


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    points: np.ndarray
    convention: str = "face-68"

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        if len(pts) < 2:
            raise ValueError("a landmark set needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmark coordinates must be finite")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown landmark convention {self.convention!r}")
        expected = CONVENTIONS[self.convention]
        if expected is not None and len(pts) != expected:
            raise ValueError(
                f"convention {self.convention!r} expects {expected} points, got {len(pts)}"
            )
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return self.convention == other.convention and np.array_equal(self.points, other.points)

    __hash__ = None

    def with_points(self, points) -> "LandmarkSet":
        return LandmarkSet(points, self.convention)


@dataclass(frozen=True)
class MirrorPairs:
    """Involutive index permutation pairing left/right landmarks."""

    perm: tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(i) for i in self.perm)
        n = len(perm)
        if sorted(perm) != list(range(n)):
            raise ValueError("mirror pairs must be a permutation")
        for i, j in enumerate(perm):
            if perm[j] != i:
                raise ValueError(f"mirror pairs not an involution at index {i}")
        object.__setattr__(self, "perm", perm)

    @property
    def midline(self) -> tuple[int, ...]:
        return tuple(i for i, j in enumerate(self.perm) if i == j)

    def __len__(self):
        return len(self.perm)

    @classmethod
    def from_pairs(cls, n: int, pairs, mid=()) -> "MirrorPairs":
        perm = [-1] * n
        for i, j in pairs:
            perm[i], perm[j] = j, i
        for i in mid:
            perm[i] = i
        if -1 in perm:
            raise ValueError(f"index {perm.index(-1)} is neither paired nor midline")
        return cls(tuple(perm))


@dataclass(frozen=True)
class SimilarityTransform:
    """``p -> s * R(theta) @ p + (tx, ty)`` with ``s > 0``."""

    s: float = 1.0
    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ValueError(f"scale must be positive and finite, got {self.s}")

    @property
    def a(self) -> float:
        return self.s * math.cos(self.theta)

    @property
    def b(self) -> float:
        return self.s * math.sin(self.theta)

    @property
    def t(self) -> tuple[float, float]:
        return (self.tx, self.ty)

    @property
    def matrix(self) -> np.ndarray:
        """2x3 matrix ``[[a, -b, tx], [b, a, ty]]``."""
        a, b = self.a, self.b
        return np.array([[a, -b, self.tx], [b, a, self.ty]])

    @property
    def determinant(self) -> float:
        return self.a ** 2 + self.b ** 2

    @classmethod
    def from_ab(cls, a: float, b: float, tx: float, ty: float) -> "SimilarityTransform":
        s = math.hypot(a, b)
        if s == 0.0:
            raise DegenerateInput("zero scale")
        return cls(s, math.atan2(b, a), tx, ty)

    @classmethod
    def from_matrix(cls, m) -> "SimilarityTransform":
        m = np.asarray(m, dtype=np.float64)
        a, b = m[0, 0], m[1, 0]
        if not (np.isclose(m[1, 1], a, rtol=1e-9, atol=1e-12)
                and np.isclose(m[0, 1], -b, rtol=1e-9, atol=1e-12)):
            raise ValueError("matrix is not a proper similarity")
        return cls.from_ab(float(a), float(b), float(m[0, 2]), float(m[1, 2]))

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        a, b = self.a, self.b
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([a * x - b * y + self.tx, b * x + a * y + self.ty], axis=-1)

    def inverse(self) -> "SimilarityTransform":
        s_inv = 1.0 / self.s
        c, sn = math.cos(-self.theta), math.sin(-self.theta)
        tx = -s_inv * (c * self.tx - sn * self.ty)
        ty = -s_inv * (sn * self.tx + c * self.ty)
        return SimilarityTransform(s_inv, -self.theta, tx, ty)

    def __matmul__(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``(self @ other)(p) == self(other(p))``."""
        if not isinstance(other, SimilarityTransform):
            return NotImplemented
        tx, ty = self.apply(np.array([other.tx, other.ty]))
        return SimilarityTransform(self.s * other.s, self.theta + other.theta, float(tx), float(ty))


IDENTITY = SimilarityTransform()


def apply_transform(t: SimilarityTransform, p):
    """Map a point (or an ``(..., 2)`` array of points) through ``t``."""
    out = t.apply(p)
    if out.ndim == 1:
        return (float(out[0]), float(out[1]))
    return out


def _as_points(x) -> np.ndarray:
    if isinstance(x, LandmarkSet):
        return x.points
    return np.asarray(x, dtype=np.float64).reshape(-1, 2)


def similarity_objective(t: SimilarityTransform, src, dst) -> float:
    """Sum of squared residuals of ``t(src)`` against ``dst``."""
    r = t.apply(_as_points(src)) - _as_points(dst)
    return float(np.sum(r * r))


def fit_similarity(src, dst) -> SimilarityTransform:
    """Least-squares similarity (no shear, no reflection) mapping src onto dst.

    Closed form: remove centroids, take the two independent components of the
    cross-covariance, ``theta = atan2(b, a)`` and ``s = hypot(a, b) / |src|^2``.

    Raises DegenerateInput when src points all coincide, or when the optimal
    scale is exactly zero (dst carries no orientation information relative to
    src, so no minimizer with ``s > 0`` exists).
    """
    p, q = _as_points(src), _as_points(dst)
    if p.shape != q.shape:
        raise ValueError(f"point count mismatch: {len(p)} vs {len(q)}")
    if len(p) < 2:
        raise ValueError("need at least two point pairs")
    pm, qm = p.mean(axis=0), q.mean(axis=0)
    pc, qc = p - pm, q - qm
    norm = float(np.sum(pc * pc))
    if norm == 0.0:
        raise DegenerateInput("all source points coincide")
    a = float(np.sum(pc[:, 0] * qc[:, 0] + pc[:, 1] * qc[:, 1]))
    b = float(np.sum(pc[:, 0] * qc[:, 1] - pc[:, 1] * qc[:, 0]))
    h = math.hypot(a, b)
    if h == 0.0:
        raise DegenerateInput("optimal scale is zero")
    s = h / norm
    theta = math.atan2(b, a)
    c, sn = a / h, b / h
    tx = qm[0] - s * (c * pm[0] - sn * pm[1])
    ty = qm[1] - s * (sn * pm[0] + c * pm[1])
    return SimilarityTransform(s, theta, float(tx), float(ty))


def mirror_points(pts, centerline_x: float) -> np.ndarray:
    pts = np.array(_as_points(pts), dtype=np.float64)
    pts[:, 0] = 2.0 * centerline_x - pts[:, 0]
    return pts


def _check_pairs(lm: LandmarkSet, pairs: MirrorPairs):
    if len(pairs) != len(lm):
        raise ValueError(f"mirror table has {len(pairs)} entries, landmark set has {len(lm)}")


def symmetrize_template(lm: LandmarkSet, pairs: MirrorPairs, centerline_x: float) -> LandmarkSet:
    """Average each landmark with the mirrored image of its partner."""
    _check_pairs(lm, pairs)
    perm = np.asarray(pairs.perm)
    mirrored = mirror_points(lm.points[perm], centerline_x)
    out = 0.5 * (lm.points + mirrored)
    # midline points: x lands on the centreline exactly
    out[perm == np.arange(len(perm)), 0] = centerline_x
    return lm.with_points(out)


def flip_landmarks(lm: LandmarkSet, pairs: MirrorPairs, image_width: int) -> LandmarkSet:
    """Landmarks of the left-right flipped image, relabelled via the mirror table."""
    _check_pairs(lm, pairs)
    src = lm.points[np.asarray(pairs.perm)]
    out = np.empty_like(src)
    out[:, 0] = (image_width - 1) - src[:, 0]
    out[:, 1] = src[:, 1]
    return lm.with_points(out)


def flip_image(img: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(np.ascontiguousarray(img.pixels[:, ::-1]))


def warp_image(img: ImageBuffer, t: SimilarityTransform, out_w: int, out_h: int,
               interp: str = BILINEAR) -> ImageBuffer:
    """Inverse-mapping warp: output pixel ``q`` samples ``img`` at ``t^-1(q)``.

    Samples falling outside the source are black. Bilinear interpolation uses
    the convex combination of the four neighbours, each outside neighbour
    contributing 0.
    """
    if interp not in (NEAREST, BILINEAR):
        raise ValueError(f"unknown interpolation {interp!r}")
    inv = t.inverse()
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    a, b = inv.a, inv.b
    sx = a * xs - b * ys + inv.tx
    sy = b * xs + a * ys + inv.ty

    src = img.pixels
    h, w = img.height, img.width
    if src.ndim == 2:
        src = src[:, :, None]
    src = src.astype(np.float64)
    nc = src.shape[2]

    if interp == NEAREST:
        ix = np.floor(sx + 0.5).astype(np.int64)
        iy = np.floor(sy + 0.5).astype(np.int64)
        ok = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        out = np.zeros((out_h, out_w, nc), dtype=np.uint8)
        out[ok] = img.pixels.reshape(h, w, nc)[iy[ok], ix[ok]]
    else:
        x0 = np.floor(sx)
        y0 = np.floor(sy)
        fx = sx - x0
        fy = sy - y0
        x0 = x0.astype(np.int64)
        y0 = y0.astype(np.int64)
        acc = np.zeros((out_h, out_w, nc))
        for dy, wy in ((0, 1.0 - fy), (1, fy)):
            for dx, wx in ((0, 1.0 - fx), (1, fx)):
                xi, yi = x0 + dx, y0 + dy
                wgt = wx * wy
                ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h) & (wgt > 0)
                acc[ok] += wgt[ok, None] * src[yi[ok], xi[ok]]
        out = np.clip(np.floor(acc + 0.5), 0, 255).astype(np.uint8)

    if img.channels == 1:
        out = out[:, :, 0]
    return ImageBuffer(out)


# ---------------------------------------------------------------------------
# file formats


def read_landmarks(path: str | os.PathLike, convention: str = "face-68") -> LandmarkSet:
    """Plain text, one ``x y`` pair per line; blank lines and ``#`` comments ignored."""
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'x y', got {line!r}")
            pts.append((float(fields[0]), float(fields[1])))
    return LandmarkSet(np.array(pts), convention)


def write_landmarks(path: str | os.PathLike, lm: LandmarkSet) -> None:
    with open(path, "w") as fh:
        for x, y in lm.points.tolist():
            fh.write(f"{x!r} {y!r}\n")


def parse_mirror_table(text: str, n: int | None = None) -> MirrorPairs:
    """``i j`` lines declare a pair, ``mid i`` lines a midline landmark."""
    pairs, mid = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) == 2 and fields[0] == "mid":
            mid.append(int(fields[1]))
        elif len(fields) == 2:
            pairs.append((int(fields[0]), int(fields[1])))
        else:
            raise ValueError(f"line {lineno}: cannot parse mirror entry {line!r}")
    if n is None:
        n = 1 + max([i for p in pairs for i in p] + mid)
    return MirrorPairs.from_pairs(n, pairs, mid)


def read_mirror_table(path: str | os.PathLike, n: int | None = None) -> MirrorPairs:
    with open(path) as fh:
        return parse_mirror_table(fh.read(), n)


def face68_mirror_pairs() -> MirrorPairs:
    text = resources.files("framegrind").joinpath("data/face68_mirror.txt").read_text()
    return parse_mirror_table(text, 68)


def default_template(size: int = 224) -> LandmarkSet:
    """Shipped symmetric 68-point template, rescaled to a ``size`` x ``size`` output.

    The file stores coordinates for a 224 x 224 output with centreline at
    x = 111.5.
    """
    path = resources.files("framegrind").joinpath("data/face68_template.txt")
    with resources.as_file(path) as p:
        lm = read_landmarks(p)
    if size == 224:
        return lm
    k = (size - 1) / 223.0
    return lm.with_points(lm.points * k)
