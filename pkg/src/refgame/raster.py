"""Minimal PPM/PGM readers and writers.

Supports the ASCII and binary netpbm variants (P2/P3/P5/P6) with
maxval 255. Masks are PGM files whose pixel value is the object id,
0 meaning background.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import RasterFormatError


def _read_header(data: bytes, expected: tuple[bytes, ...]) -> tuple[bytes, int, int, int, int]:
    """Parse magic, width, height, maxval; return them plus the body offset."""
    pos = 0
    fields: list[bytes] = []

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise RasterFormatError("truncated header")
        return data[start:pos]

    magic = next_token()
    if magic not in expected:
        raise RasterFormatError(f"unsupported magic {magic!r}, expected one of {expected}")
    for _ in range(3):
        fields.append(next_token())
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise RasterFormatError(f"non-numeric header field: {exc}") from exc
    if width <= 0 or height <= 0:
        raise RasterFormatError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise RasterFormatError(f"unsupported maxval {maxval}, only 255")
    # Binary formats: exactly one whitespace byte separates header and body.
    if magic in (b"P5", b"P6"):
        pos += 1
    return magic, width, height, maxval, pos


def _read_body(data: bytes, offset: int, magic: bytes, count: int) -> np.ndarray:
    if magic in (b"P5", b"P6"):
        body = data[offset : offset + count]
        if len(body) < count:
            raise RasterFormatError(f"body too short: {len(body)} of {count} bytes")
        return np.frombuffer(body, dtype=np.uint8).astype(np.int64)
    values = data[offset:].split()
    if len(values) < count:
        raise RasterFormatError(f"body too short: {len(values)} of {count} samples")
    try:
        arr = np.array([int(v) for v in values[:count]], dtype=np.int64)
    except ValueError as exc:
        raise RasterFormatError(f"non-numeric sample: {exc}") from exc
    if arr.min() < 0 or arr.max() > 255:
        raise RasterFormatError("sample out of range [0, 255]")
    return arr


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    """Read a P3/P6 PPM into an HxWx3 uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, width, height, _, offset = _read_header(data, (b"P3", b"P6"))
    flat = _read_body(data, offset, magic, width * height * 3)
    return flat.reshape(height, width, 3).astype(np.uint8)


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a P2/P5 PGM label mask into an HxW int array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, width, height, _, offset = _read_header(data, (b"P2", b"P5"))
    flat = _read_body(data, offset, magic, width * height)
    return flat.reshape(height, width)


def write_ppm(path: str | os.PathLike, image: np.ndarray, binary: bool = True) -> None:
    """Write an HxWx3 uint8 array as P6 (or P3 when binary=False)."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("image must be HxWx3")
    h, w = image.shape[:2]
    pixels = np.ascontiguousarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P6\n{w} {h}\n255\n".encode())
            fh.write(pixels.tobytes())
        else:
            fh.write(f"P3\n{w} {h}\n255\n".encode())
            for row in pixels.reshape(h, w * 3):
                fh.write((" ".join(str(v) for v in row) + "\n").encode())


def write_pgm(path: str | os.PathLike, mask: np.ndarray, binary: bool = True) -> None:
    """Write an HxW integer mask (values 0..255) as P5 (or P2)."""
    if mask.ndim != 2:
        raise ValueError("mask must be HxW")
    if mask.min() < 0 or mask.max() > 255:
        raise ValueError("mask values must fit in [0, 255]")
    h, w = mask.shape
    values = np.ascontiguousarray(mask, dtype=np.uint8)
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n255\n".encode())
            fh.write(values.tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n255\n".encode())
            for row in values:
                fh.write((" ".join(str(v) for v in row) + "\n").encode())
