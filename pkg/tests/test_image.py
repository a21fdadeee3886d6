import numpy as np
import pytest

from framegrind.image import ImageBuffer, ImageFormatError, decode_pnm, encode_pnm, read_pnm, write_pnm


def test_buffer_is_read_only():
    img = ImageBuffer(np.zeros((2, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1
    assert (img.width, img.height, img.channels) == (3, 2, 1)
    assert len(img.data) == 6


def test_buffer_rejects_bad_shapes():
    with pytest.raises(ValueError):
        ImageBuffer(np.zeros((2, 3, 2), dtype=np.uint8))
    with pytest.raises(ValueError):
        ImageBuffer.from_bytes(b"\x00" * 5, 3, 2, 1)


def test_from_bytes_row_major():
    img = ImageBuffer.from_bytes(bytes(range(6)), 3, 2, 1)
    assert img.pixels[1, 0] == 3
    rgb = ImageBuffer.from_bytes(bytes(range(12)), 2, 2, 3)
    assert tuple(rgb.pixels[0, 1]) == (3, 4, 5)


@pytest.mark.parametrize("channels", [1, 3])
def test_pnm_round_trip_bit_exact(tmp_path, rng, channels):
    shape = (7, 5) if channels == 1 else (7, 5, 3)
    img = ImageBuffer(rng.integers(0, 256, size=shape, dtype=np.uint8))
    p = tmp_path / "x.pnm"
    write_pnm(p, img)
    raw = p.read_bytes()
    assert raw.startswith(b"P5" if channels == 1 else b"P6")
    back = read_pnm(p)
    assert back == img
    assert encode_pnm(back) == raw


def test_pnm_header_comments():
    raw = b"P5\n# made by hand\n2 # width\n1\n255\n\x07\x09"
    img = decode_pnm(raw)
    assert img.pixels.tolist() == [[7, 9]]


@pytest.mark.parametrize("raw", [b"P3\n1 1\n255\n0 0 0", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00"])
def test_pnm_rejects(raw):
    with pytest.raises(ImageFormatError):
        decode_pnm(raw)


def test_gray_rgb_conversion():
    rgb = ImageBuffer(np.array([[[30, 60, 90]]], dtype=np.uint8))
    assert rgb.to_gray().pixels.tolist() == [[60]]
    assert rgb.to_gray().to_rgb().pixels.tolist() == [[[60, 60, 60]]]
