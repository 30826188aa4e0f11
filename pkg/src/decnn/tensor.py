"""Rank-4 float32 tensors and a seeded random source.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 and shape
``(n, c, h, w)`` stored C-contiguous (n-major, then c, h, w). The helpers
below validate that contract; everything else in the package operates on
the arrays directly.

The random source is numpy's PCG64 bit generator. Changing it would
invalidate stored checkpoints and frozen test values.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

DTYPE = np.float32

_ELEMENTWISE = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def _check_shape(shape) -> tuple[int, int, int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4:
        raise ShapeError(f"expected a 4-tuple shape, got {shape}")
    if any(s < 1 for s in shape):
        raise ShapeError(f"all extents must be >= 1, got {shape}")
    return shape


def tensor_new(shape, fill: float = 0.0) -> np.ndarray:
    return np.full(_check_shape(shape), fill, dtype=DTYPE)


def as_tensor(a) -> np.ndarray:
    """Validate ``a`` as a rank-4 tensor, returning a contiguous array."""
    a = np.asarray(a)
    if a.ndim != 4:
        raise ShapeError(f"expected rank-4 tensor, got shape {a.shape}")
    _check_shape(a.shape)
    return np.ascontiguousarray(a)


def elementwise(op: str, a: np.ndarray, b) -> np.ndarray:
    if op == "scale":
        if not np.isscalar(b):
            raise ShapeError("scale expects a scalar operand")
        return (a * a.dtype.type(b)).astype(a.dtype, copy=False)
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ParameterError(f"unknown elementwise op {op!r}") from None
    if np.isscalar(b):
        return fn(a, a.dtype.type(b))
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return fn(a, b)


def reduce(op: str, a: np.ndarray) -> float:
    """Reduce over all elements in C order, accumulating in float64."""
    flat = np.ascontiguousarray(a).ravel()
    if op == "sum":
        return float(flat.sum(dtype=np.float64))
    if op == "sum_sq":
        f = flat.astype(np.float64)
        return float((f * f).sum())
    if op == "sum_abs":
        return float(np.abs(flat).sum(dtype=np.float64))
    if op == "max":
        return float(flat.max())
    raise ParameterError(f"unknown reduction {op!r}")


class Rng:
    """Seedable PCG64 stream.

    ``Rng(seed, *stream)`` derives an independent stream from the seed plus
    any extra integer keys, so e.g. per-epoch shuffles can be recreated
    without storing generator state.
    """

    def __init__(self, seed: int, *stream: int):
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        ss = np.random.SeedSequence([self.seed, *self.stream])
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *stream: int) -> "Rng":
        return Rng(self.seed, *self.stream, *stream)

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        if std < 0:
            raise ParameterError(f"std must be >= 0, got {std}")
        draws = self.gen.standard_normal(shape)
        return (mean + std * draws).astype(DTYPE)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)


def rng_normal(rng: Rng, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    return rng.normal(_check_shape(shape), mean, std)
