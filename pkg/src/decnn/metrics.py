"""MAE, PSNR and structural mutual information (SMI), plus feature-map
ranking by SMI against a reference image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Volume
from .errors import DegenerateRangeError, InfinitePSNR, ShapeError

BINS = 32


def _arrays(pred, truth):
    a = pred.data if isinstance(pred, Volume) else np.asarray(pred)
    b = truth.data if isinstance(truth, Volume) else np.asarray(truth)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def mae(pred, truth) -> float:
    a, b = _arrays(pred, truth)
    return float(np.abs(a - b).sum() / a.size)


def psnr(pred, truth) -> float:
    """Peak SNR in dB, ``10 log10(N Q^2 / sum (pred - truth)^2)`` with Q the
    largest value found in either input."""
    a, b = _arrays(pred, truth)
    q = max(a.max(), b.max())
    if q <= 0:
        raise DegenerateRangeError(f"peak intensity must be positive, got {q}")
    diff = (a - b).ravel()
    sse = float(diff @ diff)
    if sse == 0:
        raise InfinitePSNR("prediction equals truth")
    return float(10.0 * np.log10(a.size * q * q / sse))


def gradient_magnitude(img: np.ndarray) -> np.ndarray:
    """Central differences inside, one-sided at the border."""
    img = np.asarray(img, dtype=np.float64)
    gy, gx = np.gradient(img, edge_order=1)
    return np.hypot(gy, gx)


def structure_weighted(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img * gradient_magnitude(img)


def bin_indices(values: np.ndarray, bins: int) -> np.ndarray:
    """Equal-width bins over the array's own [min, max]; constant input maps to bin 0."""
    v = values.ravel()
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros(v.size, dtype=np.int64)
    idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def entropy(counts: np.ndarray) -> float:
    """Shannon entropy in nats; counts are sorted first so the result does
    not depend on histogram layout."""
    c = np.sort(counts[counts > 0].ravel()).astype(np.float64)
    p = c / c.sum()
    return float(-(p * np.log(p)).sum())


def histogram2d(a_idx: np.ndarray, b_idx: np.ndarray, bins: int) -> np.ndarray:
    return np.bincount(a_idx * bins + b_idx, minlength=bins * bins).reshape(bins, bins)


def smi(a: np.ndarray, b: np.ndarray, bins: int = BINS) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"smi needs two equal-sized 2-D images, got {a.shape} and {b.shape}")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    ia = bin_indices(structure_weighted(a), bins)
    ib = bin_indices(structure_weighted(b), bins)
    h_a = entropy(np.bincount(ia, minlength=bins))
    h_b = entropy(np.bincount(ib, minlength=bins))
    h_ab = entropy(histogram2d(ia, ib, bins))
    return h_a + h_b - h_ab


@dataclass
class FeatureRanking:
    order: list[int]
    scores: np.ndarray

    def top(self, n: int) -> list[int]:
        return self.order[:n]


def rank_feature_maps(maps: np.ndarray, reference: np.ndarray, bins: int = BINS) -> FeatureRanking:
    maps = np.asarray(maps)
    if maps.ndim == 4:
        if maps.shape[0] != 1:
            raise ShapeError(f"expected a single-sample (1, C, h, w) tensor, got {maps.shape}")
        maps = maps[0]
    if maps.shape[1:] != np.shape(reference):
        raise ShapeError(f"feature maps {maps.shape[1:]} and reference {np.shape(reference)} differ in size")
    scores = np.array([smi(m, reference, bins) for m in maps])
    order = sorted(range(len(scores)), key=lambda c: (-scores[c], c))
    return FeatureRanking(order, scores)
