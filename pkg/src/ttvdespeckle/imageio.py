"""Grayscale image I/O: binary/ASCII PGM natively, PNG through Pillow.

Pixels are kept as float64 in memory and quantized only when written.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .core import ImageGrid
from .errors import DespeckleError


class ImageFormatError(DespeckleError, ValueError):
    pass


def _pgm_tokens(buf: bytes, count: int):
    """Read ``count`` header tokens, skipping ``#`` comments; return tokens and data offset."""
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from raster data
    return tokens, pos + 1


def read_pgm(data: bytes) -> ImageGrid:
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise ImageFormatError(f"not a PGM file (magic {magic!r})")
    tokens, offset = _pgm_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise ImageFormatError("malformed PGM header") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ImageFormatError(f"invalid PGM geometry {width}x{height}, maxval {maxval}")
    if magic == b"P2":
        values = data[offset - 1:].split()
        if len(values) < width * height:
            raise ImageFormatError("truncated PGM raster")
        arr = np.array([int(v) for v in values[: width * height]], dtype=np.float64)
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        nbytes = width * height * dtype.itemsize
        raster = data[offset:offset + nbytes]
        if len(raster) < nbytes:
            raise ImageFormatError("truncated PGM raster")
        arr = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    return ImageGrid(arr.reshape(height, width), float(maxval))


def quantize(img: ImageGrid, bits: int = 8) -> np.ndarray:
    top = 2**bits - 1
    scaled = img.data * (top / img.max_level)
    out = np.clip(np.rint(scaled), 0, top)
    return out.astype(np.uint8 if bits == 8 else np.uint16)


def encode_pgm(img: ImageGrid) -> bytes:
    pixels = quantize(img, 8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def read_png(data: bytes) -> ImageGrid:
    from PIL import Image

    with Image.open(io.BytesIO(data)) as im:
        if im.mode == "1":
            im = im.convert("L")
        if im.mode == "L":
            return ImageGrid(np.asarray(im, dtype=np.float64), 255.0)
        if im.mode in ("I;16", "I;16B", "I"):
            return ImageGrid(np.asarray(im, dtype=np.float64), 65535.0)
        raise ImageFormatError(f"unsupported PNG mode {im.mode!r}; only grayscale is accepted")


def encode_png(img: ImageGrid) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(quantize(img, 8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def read_image(path: str | Path) -> ImageGrid:
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P5", b"P2"):
        return read_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return read_png(data)
    raise ImageFormatError(f"{path}: unsupported image format (expected PGM or PNG)")


def write_image(path: str | Path, img: ImageGrid) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        path.write_bytes(encode_png(img))
    elif suffix in (".pgm", ".pnm", ""):
        path.write_bytes(encode_pgm(img))
    else:
        raise ImageFormatError(f"{path}: cannot write {suffix!r}; use .pgm or .png")


def ratio_display(ratio: np.ndarray, span: float = 2.0) -> ImageGrid:
    """Map a ratio field to gray levels, ``0 -> black``, ``1 -> mid gray``, ``span -> white``."""
    return ImageGrid(np.clip(ratio, 0.0, span) * (255.0 / span), 255.0)
