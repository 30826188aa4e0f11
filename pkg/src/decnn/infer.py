"""Quasi-3D whole-volume synthesis by overlapping axial windows."""

from __future__ import annotations

import numpy as np

from .data import Volume, denormalize, with_norm
from .errors import ConfigError, GeometryError, InfinitePSNR
from .metrics import mae, psnr
from .model import DecnnModel

WINDOW_BATCH = 4


def coverage(d: int, slices: int) -> np.ndarray:
    """Number of stride-1 windows of length ``slices`` covering each slice."""
    if d < slices:
        raise GeometryError(f"depth {d} smaller than slice window {slices}")
    count = np.zeros(d, dtype=np.int64)
    for z in range(d - slices + 1):
        count[z:z + slices] += 1
    return count


class SynthesisAccumulator:
    def __init__(self, dims, slices):
        self.slices = slices
        self.sum = np.zeros(dims, dtype=np.float64)
        self.count = np.zeros(dims[0], dtype=np.int64)

    def add(self, z: int, planes: np.ndarray) -> None:
        self.sum[z:z + self.slices] += planes
        self.count[z:z + self.slices] += 1

    def result(self) -> np.ndarray:
        return self.sum / self.count[:, None, None]


def synthesize(model: DecnnModel, src: Volume, slices: int | None = None,
               window_batch: int = WINDOW_BATCH) -> Volume:
    """Predict every axial window of ``slices`` planes and average per slice.

    The output keeps ``src``'s normalization record.
    """
    s = model.config.in_slices
    if slices is None:
        slices = s
    if slices != s:
        raise ConfigError(f"model expects {s} input slices, asked for {slices}")
    d, h, w = src.dims
    if d < slices:
        raise GeometryError(f"depth {d} smaller than slice window {slices}")
    acc = SynthesisAccumulator(src.dims, slices)
    starts = list(range(d - slices + 1))
    for i in range(0, len(starts), window_batch):
        chunk = starts[i:i + window_batch]
        x = np.stack([src.data[z:z + slices] for z in chunk])
        out = model.forward(x).final
        for z, planes in zip(chunk, out):
            acc.add(z, planes)
    return Volume(acc.result().astype(np.float32), src.spacing, src.norm)


def synthesize_metrics(model: DecnnModel, src: Volume, tgt: Volume, slices: int | None = None) -> dict:
    """MAE and PSNR of the synthesis in the target's original intensity units.

    The prediction lives in the target modality, so both are denormalized
    with the target's record. An exact synthesis reports ``psnr_db = inf``.
    """
    if src.dims != tgt.dims:
        raise GeometryError(f"source dims {src.dims} != target dims {tgt.dims}")
    pred = synthesize(model, src, slices)
    pred_hu = denormalize(with_norm(pred, tgt.norm))
    tgt_hu = denormalize(tgt)
    try:
        peak = psnr(pred_hu, tgt_hu)
    except InfinitePSNR:
        peak = float("inf")
    return {"mae_hu": mae(pred_hu, tgt_hu), "psnr_db": peak}
