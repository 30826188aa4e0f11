"""Training loop: patch batches through Adam, per-epoch validation by full
quasi-3D synthesis, CSV curves and resumable checkpoints."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import TrainConfig
from .data import PatchSet, Volume, batch_iter, normalize
from .errors import ConfigError, DataError, GeometryError
from .infer import synthesize_metrics
from .model import DecnnModel, build
from .optim import Adam
from .tensor import Rng

log = logging.getLogger(__name__)

CSV_COLUMNS = ["epoch", "train_loss", "train_final_l2", "train_aux_l2", "val_psnr", "val_mae", "wall_seconds"]

INIT_STREAM = 0
SHUFFLE_STREAM = 1


def prepare(pairs: list[tuple[Volume, Volume]]) -> list[tuple[Volume, Volume]]:
    """Normalize each volume that does not already carry a record."""
    out = []
    for src, tgt in pairs:
        if src.dims != tgt.dims:
            raise GeometryError(f"source dims {src.dims} != target dims {tgt.dims}")
        out.append((src if src.norm else normalize(src), tgt if tgt.norm else normalize(tgt)))
    return out


def init_model(cfg: TrainConfig) -> DecnnModel:
    return build(cfg.model_config(), Rng(cfg.seed, INIT_STREAM))


def make_optimizer(model: DecnnModel, cfg: TrainConfig) -> Adam:
    return Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


def validate(model: DecnnModel, val: list[tuple[Volume, Volume]]) -> tuple[float, float]:
    """Mean PSNR (dB) and MAE over validation volumes; NaN when there are none."""
    if not val:
        return math.nan, math.nan
    scores = [synthesize_metrics(model, src, tgt) for src, tgt in val]
    return (float(np.mean([s["psnr_db"] for s in scores])),
            float(np.mean([s["mae_hu"] for s in scores])))


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _rewrite_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([row[c] for c in CSV_COLUMNS])


def _resume_key(cfg: TrainConfig) -> dict:
    d = cfg.to_dict()
    d.pop("epochs")
    return d


@dataclass
class TrainResult:
    model: DecnnModel
    epoch: int
    rows: list[dict]


def train(cfg: TrainConfig, train_pairs, val_pairs=(), checkpoint_path=None, csv_path=None,
          resume: bool = False, stop_at: int | None = None) -> TrainResult:
    """Train for ``cfg.epochs`` epochs.

    With ``resume`` and an existing checkpoint, parameters, optimizer state
    and the epoch counter are restored and the CSV is cut back to the
    checkpointed epoch. ``stop_at`` ends the run early after that epoch,
    leaving a resumable checkpoint (used to test interruption).
    """
    if not train_pairs:
        raise DataError("at least one training volume pair is required")
    train_pairs = prepare(list(train_pairs))
    val_pairs = prepare(list(val_pairs))
    model = init_model(cfg)
    adam = make_optimizer(model, cfg)
    start, step, rows = 0, 0, []

    if resume and checkpoint_path and Path(checkpoint_path).exists():
        ck = checkpoint.load(checkpoint_path)
        saved = ck.meta.get("train_config")
        if saved is None or _resume_key(TrainConfig(**saved)) != _resume_key(cfg):
            raise ConfigError("resume configuration does not match the checkpoint")
        for p, q in zip(model.parameters(), ck.model.parameters()):
            p.value[...] = q.value
        if ck.adam is not None:
            adam.load_state_dict(ck.adam)
        start, step = int(ck.meta["epoch"]), ck.step
        if csv_path and Path(csv_path).exists():
            rows = [r for r in read_csv(csv_path) if int(r["epoch"]) <= start]
        log.info("resuming at epoch %d (step %d)", start + 1, step)
    elif checkpoint_path:
        checkpoint.save(checkpoint_path, model, step, adam, {"train_config": cfg.to_dict(), "epoch": 0})
    if csv_path:
        _rewrite_csv(csv_path, rows)

    patches = PatchSet(train_pairs, cfg.patch, cfg.stride, cfg.in_slices, cfg.flip, cfg.axial_stride)
    last = cfg.epochs if stop_at is None else min(cfg.epochs, stop_at)
    epoch = start
    for epoch in range(start + 1, last + 1):
        t0 = time.perf_counter()
        tot = fin = aux = 0.0
        for xb, yb in batch_iter(patches, cfg.batch, Rng(cfg.seed, SHUFFLE_STREAM, epoch)):
            n = len(xb)
            trace = model.forward(xb)
            parts = model.loss(trace, yb, cfg.beta, cfg.alpha, data_scale=1.0 / n)
            model.backward(trace, yb, cfg.beta, cfg.alpha, data_scale=1.0 / n)
            adam.step()
            step += 1
            tot += parts.total * n
            fin += parts.final_l2
            aux += parts.aux_total
        psnr_db, mae_hu = validate(model, val_pairs)
        row = {
            "epoch": str(epoch),
            "train_loss": _fmt(tot / len(patches)),
            "train_final_l2": _fmt(fin / len(patches)),
            "train_aux_l2": _fmt(aux / len(patches)),
            "val_psnr": _fmt(psnr_db),
            "val_mae": _fmt(mae_hu),
            "wall_seconds": f"{time.perf_counter() - t0:.3f}",
        }
        rows.append(row)
        log.info("epoch %d loss %s val_psnr %s val_mae %s", epoch, row["train_loss"], row["val_psnr"], row["val_mae"])
        if csv_path:
            with open(csv_path, "a", newline="") as f:
                csv.writer(f, lineterminator="\n").writerow([row[c] for c in CSV_COLUMNS])
        if checkpoint_path:
            checkpoint.save(checkpoint_path, model, step, adam, {"train_config": cfg.to_dict(), "epoch": epoch})
    return TrainResult(model, epoch, rows)
