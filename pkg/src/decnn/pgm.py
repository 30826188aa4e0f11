"""Binary PGM (P5, maxval 255) export for 2-D maps."""

import re

import numpy as np

_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255; a constant map becomes all zeros."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.round((img - lo) / (hi - lo) * 255).astype(np.uint8)


def write_pgm(path, img: np.ndarray) -> None:
    pixels = to_uint8(img)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = open(path, "rb").read()
    m = _HEADER.match(raw)
    if m is None or int(m.group(3)) != 255:
        raise ValueError(f"{path}: not an 8-bit P5 PGM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=m.end()).reshape(h, w)
