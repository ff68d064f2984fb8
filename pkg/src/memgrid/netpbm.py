"""Minimal binary PGM (P5) / PPM (P6) reading and writing, 8-bit only."""
from __future__ import annotations

import os

import numpy as np


class PGMError(ValueError):
    pass


def _tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out, pos = [], 0
    while len(out) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise PGMError("truncated header")
        if data[pos : pos + 1] == b"#":
            pos = data.find(b"\n", pos)
            if pos < 0:
                raise PGMError("truncated header")
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        out.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return out, pos + 1


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), start = _tokens(data, 4)
    if magic != b"P5":
        raise PGMError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise PGMError(f"{path}: bad header") from exc
    if maxval != 255:
        raise PGMError(f"{path}: only maxval 255 is supported, got {maxval}")
    raster = data[start : start + w * h]
    if len(raster) != w * h:
        raise PGMError(f"{path}: expected {w * h} pixels, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, image) -> None:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM images are 2-D")
    if image.min(initial=0) < 0 or image.max(initial=0) > 255:
        raise ValueError("PGM pixel values must lie in 0..255")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(image.astype(np.uint8).tobytes())


def write_ppm(path, image) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("PPM images are (rows, cols, 3)")
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.clip(image, 0, 255).astype(np.uint8).tobytes())


def numbered_files(prefix) -> list[str]:
    """Files named ``<prefix>NNNN.pgm`` in numeric order.

    ``prefix`` may also be a directory, in which case every ``*.pgm`` in it
    is taken in name order.
    """
    prefix = os.fspath(prefix)
    if os.path.isdir(prefix):
        names = sorted(n for n in os.listdir(prefix) if n.lower().endswith(".pgm"))
        return [os.path.join(prefix, n) for n in names]
    folder, stem = os.path.split(prefix)
    folder = folder or "."
    found = []
    for name in os.listdir(folder):
        if name.startswith(stem) and name.endswith(".pgm"):
            digits = name[len(stem) : -4]
            if digits.isdigit():
                found.append((int(digits), os.path.join(folder, name)))
    return [p for _, p in sorted(found)]
