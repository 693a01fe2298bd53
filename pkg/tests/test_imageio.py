import numpy as np
import pytest

from affact.imageio import decode_pnm, encode_pnm, from_uint8, read_image, to_uint8, write_image


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
@pytest.mark.parametrize("channels", [1, 3])
def test_round_trip_is_exact_on_8bit_values(tmp_path, rng, suffix, channels):
    if suffix == ".ppm" and channels == 1:
        suffix = ".pgm"
    img = rng.integers(0, 256, (7, 9, channels)) / 255.0
    path = tmp_path / f"x{suffix}"
    write_image(path, img)
    assert np.array_equal(read_image(path), img)


def test_quantization_rounds_and_clamps():
    img = np.array([[[0.0], [0.5], [1.0], [0.999]]])
    assert to_uint8(img).ravel().tolist() == [0, 128, 255, 255]
    assert from_uint8(np.array([[255]]))[0, 0, 0] == 1.0


def test_pnm_header_with_comment():
    data = b"P5\n# comment\n2 1\n255\n" + bytes([0, 255])
    assert decode_pnm(data)[..., 0].tolist() == [[0.0, 1.0]]


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00"])
def test_bad_pnm_rejected(data):
    with pytest.raises(ValueError):
        decode_pnm(data)


def test_corrupt_png_raises(tmp_path):
    path = tmp_path / "bad.png"
    path.write_bytes(b"\x89PNG\r\n\x1a\nnot really")
    with pytest.raises((OSError, ValueError)):
        read_image(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(OSError):
        read_image(tmp_path / "nope.png")


def test_encode_is_deterministic(rng):
    img = rng.random((5, 5, 3))
    assert encode_pnm(img) == encode_pnm(img.copy())
