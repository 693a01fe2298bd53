"""8-bit image files: PNG through Pillow, binary PPM/PGM without dependencies."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .raster import as_image


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(as_image(img) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return as_image(np.asarray(arr, dtype=np.float64) / 255.0)


def _read_token(buf: io.BytesIO) -> bytes:
    token = b""
    while True:
        ch = buf.read(1)
        if not ch:
            break
        if ch == b"#":
            buf.readline()
            continue
        if ch.isspace():
            if token:
                break
            continue
        token += ch
    return token


def decode_pnm(data: bytes) -> np.ndarray:
    buf = io.BytesIO(data)
    magic = _read_token(buf)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"not a binary PGM/PPM file (magic {magic!r})")
    try:
        width, height, maxval = (int(_read_token(buf)) for _ in range(3))
    except ValueError as exc:
        raise ValueError("malformed PNM header") from exc
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    raw = buf.read(width * height * channels)
    if len(raw) != width * height * channels:
        raise ValueError("truncated PNM pixel data")
    return from_uint8(np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels))


def encode_pnm(img: np.ndarray) -> bytes:
    pixels = to_uint8(img)
    h, w, c = pixels.shape
    header = f"{'P5' if c == 1 else 'P6'}\n{w} {h}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def read_image(path) -> np.ndarray:
    """Load an 8-bit PNG/PPM/PGM as a float image in [0, 1].

    Raises ``OSError`` or ``ValueError`` on unreadable files.
    """
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P5", b"P6"):
        return decode_pnm(data)
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if "A" in im.mode or im.mode in ("P", "CMYK") else "L")
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise ValueError(f"cannot decode image {path}") from exc
    return from_uint8(arr)


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pgm", ".pnm"):
        path.write_bytes(encode_pnm(img))
        return
    from PIL import Image

    pixels = to_uint8(img)
    arr = pixels[:, :, 0] if pixels.shape[2] == 1 else pixels
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    path.write_bytes(buf.getvalue())
