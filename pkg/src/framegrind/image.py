"""8-bit image buffers and binary PGM/PPM (P5/P6) I/O."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np


class ImageFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Immutable row-major 8-bit image, 1 (gray) or 3 (RGB) channels.

    ``pixels`` is always a read-only ``uint8`` array of shape ``(h, w)`` for
    gray or ``(h, w, 3)`` for RGB.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        if px.ndim == 3 and px.shape[2] == 1:
            px = px[:, :, 0]
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise ValueError(f"unsupported pixel array shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be non-empty")
        px = np.ascontiguousarray(px)
        if px.flags.writeable:
            px = px.copy()
            px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_bytes(cls, data: bytes, width: int, height: int, channels: int) -> "ImageBuffer":
        if len(data) != width * height * channels:
            raise ValueError(
                f"expected {width * height * channels} bytes, got {len(data)}"
            )
        arr = np.frombuffer(data, dtype=np.uint8)
        shape = (height, width) if channels == 1 else (height, width, channels)
        return cls(arr.reshape(shape).copy())

    @classmethod
    def blank(cls, width: int, height: int, channels: int = 1, value: int = 0) -> "ImageBuffer":
        shape = (height, width) if channels == 1 else (height, width, channels)
        return cls(np.full(shape, value, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None

    def gray(self) -> np.ndarray:
        """Float64 luminance as the plain channel average."""
        if self.channels == 1:
            return self.pixels.astype(np.float64)
        return self.pixels.astype(np.float64).mean(axis=2)

    def to_gray(self) -> "ImageBuffer":
        if self.channels == 1:
            return self
        return ImageBuffer(np.floor(self.gray() + 0.5).astype(np.uint8))

    def to_rgb(self) -> "ImageBuffer":
        if self.channels == 3:
            return self
        return ImageBuffer(np.repeat(self.pixels[:, :, None], 3, axis=2))


_HEADER_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_pnm(raw: bytes) -> ImageBuffer:
    """Decode a binary P5 (PGM) or P6 (PPM) image with maxval 255."""
    pos = 0
    tokens = []
    for _ in range(4):
        m = _HEADER_TOKEN.match(raw, pos)
        if m is None:
            raise ImageFormatError("truncated PNM header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported PNM magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError("malformed PNM header") from exc
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise ImageFormatError("missing whitespace after PNM header")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    body = raw[pos:pos + n]
    if len(body) != n:
        raise ImageFormatError(f"expected {n} sample bytes, got {len(body)}")
    return ImageBuffer.from_bytes(body, width, height, channels)


def encode_pnm(img: ImageBuffer) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    return magic + b"\n%d %d\n255\n" % (img.width, img.height) + img.data


def read_pnm(path: str | os.PathLike) -> ImageBuffer:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read())


def write_pnm(path: str | os.PathLike, img: ImageBuffer) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pnm(img))
