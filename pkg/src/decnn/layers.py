"""Zero-padded convolution, PReLU and channel concatenation.

Every layer has an explicit ``forward`` and a ``backward`` that accumulates
into the layer's gradient buffers and returns the gradient w.r.t. its input.
Convolution is cross-correlation with "same" zero padding of ``(k-1)//2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError
from .tensor import DTYPE, Rng

PRELU_INIT = 0.25


@dataclass(eq=False)
class Param:
    """A named parameter array with its gradient buffer.

    ``decay`` marks weights that enter the L2 penalty. ``version`` is bumped
    by the optimizer so stale forward traces can be detected.
    """

    name: str
    value: np.ndarray
    grad: np.ndarray
    decay: bool = False
    version: int = 0
    filled: bool = False

    @classmethod
    def zeros(cls, name, shape, decay=False, dtype=DTYPE):
        return cls(name, np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype), decay)

    def zero_grad(self):
        self.grad[...] = 0
        self.filled = False

    def accumulate(self, g):
        self.grad += g
        self.filled = True


class Conv2D:
    def __init__(self, in_c: int, out_c: int, kernel: int = 3, name: str = "conv", dtype=DTYPE):
        if kernel < 1 or kernel % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {kernel}")
        self.name = name
        self.in_c, self.out_c, self.kernel = in_c, out_c, kernel
        self.weight = Param.zeros(f"{name}.weight", (out_c, in_c, kernel, kernel), decay=True, dtype=dtype)
        self.bias = Param.zeros(f"{name}.bias", (out_c,), dtype=dtype)

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def he_init(self, rng: Rng) -> None:
        fan_in = self.in_c * self.kernel * self.kernel
        std = np.sqrt(2.0 / fan_in)
        self.weight.value[...] = rng.normal(self.weight.value.shape, 0.0, std)
        self.bias.value[...] = 0

    def _check(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_c:
            raise ShapeError(f"{self.name}: expected (n, {self.in_c}, h, w) input, got {x.shape}")

    def _cols_weight(self, w):
        # (out, in, kh, kw) -> (out, kh*kw*in), matching im2col's column order
        return w.transpose(0, 2, 3, 1).reshape(w.shape[0], -1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        n, _, h, w = x.shape
        cols = kernels.im2col(np.ascontiguousarray(x), self.kernel)
        out = cols @ self._cols_weight(self.weight.value).T
        out += self.bias.value
        return _to_nchw(out, n, h, w)

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        self._check(x)
        n, _, h, w = x.shape
        if grad_out.shape != (n, self.out_c, h, w):
            raise ShapeError(f"{self.name}: grad_out shape {grad_out.shape} does not match output {(n, self.out_c, h, w)}")
        k = self.kernel
        grad_out = np.ascontiguousarray(grad_out)
        g_rows = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1)).reshape(-1, self.out_c)
        cols = kernels.im2col(np.ascontiguousarray(x), k)
        gw = (cols.T @ g_rows).T.reshape(self.out_c, k, k, self.in_c).transpose(0, 3, 1, 2)
        self.weight.accumulate(gw)
        self.bias.accumulate(g_rows.sum(axis=0, dtype=np.float64).astype(self.bias.grad.dtype))
        # adjoint of a same-padded correlation: correlate with the
        # spatially flipped, in/out-transposed kernel
        flipped = self.weight.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        gcols = kernels.im2col(grad_out, k)
        grad_in = gcols @ self._cols_weight(flipped).T
        return _to_nchw(grad_in, n, h, w)


def _to_nchw(rows: np.ndarray, n: int, h: int, w: int) -> np.ndarray:
    return np.ascontiguousarray(rows.reshape(n, h, w, -1).transpose(0, 3, 1, 2))


class PReLU:
    def __init__(self, channels: int, name: str = "prelu", init: float = PRELU_INIT, dtype=DTYPE):
        self.name = name
        self.channels = channels
        self.alpha = Param.zeros(f"{name}.alpha", (channels,), dtype=dtype)
        self.alpha.value[...] = init

    def params(self) -> list[Param]:
        return [self.alpha]

    def _check(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"{self.name}: expected {self.channels} channels, got shape {x.shape}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        return kernels.prelu_forward(np.ascontiguousarray(x), self.alpha.value)

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        self._check(x)
        if grad_out.shape != x.shape:
            raise ShapeError(f"{self.name}: grad_out shape {grad_out.shape} != input shape {x.shape}")
        grad_in, grad_alpha = kernels.prelu_backward(
            np.ascontiguousarray(x), self.alpha.value, np.ascontiguousarray(grad_out)
        )
        self.alpha.accumulate(grad_alpha.astype(self.alpha.grad.dtype))
        return grad_in


def concat_forward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError("concat expects rank-4 tensors")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(f"concat: batch/spatial mismatch {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=1)


def concat_backward(grad_out: np.ndarray, split: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``grad_out`` at channel ``split`` into the two input gradients."""
    if not 0 < split < grad_out.shape[1]:
        raise ShapeError(f"split {split} outside channel range of {grad_out.shape}")
    return (np.ascontiguousarray(grad_out[:, :split]),
            np.ascontiguousarray(grad_out[:, split:]))


def he_init(layer: Conv2D, rng: Rng) -> None:
    layer.he_init(rng)
