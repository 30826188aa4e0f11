"""Embedding-block ablation: DECNN with k blocks against plain CNNs of
matching depth, all trained on the same data with the same seeds."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .train import train

SUMMARY_COLUMNS = ["config", "k", "pre_layers", "transform_layers", "seeds", "final_val_psnr", "final_val_mae"]
CURVE_COLUMNS = ["config", "seed", "epoch", "train_loss", "val_psnr", "val_mae"]


@dataclass(frozen=True)
class Variant:
    label: str
    k: int
    pre_layers: int

    @property
    def transform_layers(self) -> int:
        return self.pre_layers + 3 * self.k


def variants(base: TrainConfig, k_list, plain_depths) -> list[Variant]:
    out = [Variant(f"ebd{k}", k, base.pre_layers) for k in k_list]
    out += [Variant(f"plain{depth}", 0, depth) for depth in plain_depths]
    return out


def run_ablation(base: TrainConfig, k_list, plain_depths, train_pairs, val_pairs, seeds=(0,),
                 out_dir=None) -> tuple[list[dict], list[dict]]:
    summary, curves = [], []
    for v in variants(base, k_list, plain_depths):
        finals = []
        for seed in seeds:
            cfg = base.replace(k=v.k, pre_layers=v.pre_layers, seed=seed)
            result = train(cfg, train_pairs, val_pairs)
            for row in result.rows:
                curves.append({"config": v.label, "seed": str(seed), "epoch": row["epoch"],
                               "train_loss": row["train_loss"], "val_psnr": row["val_psnr"],
                               "val_mae": row["val_mae"]})
            if result.rows:
                finals.append((float(result.rows[-1]["val_psnr"]), float(result.rows[-1]["val_mae"])))
        psnr_mean = float(np.mean([f[0] for f in finals])) if finals else float("nan")
        mae_mean = float(np.mean([f[1] for f in finals])) if finals else float("nan")
        summary.append({"config": v.label, "k": str(v.k), "pre_layers": str(v.pre_layers),
                        "transform_layers": str(v.transform_layers), "seeds": str(len(seeds)),
                        "final_val_psnr": repr(psnr_mean), "final_val_mae": repr(mae_mean)})
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write(out_dir / "ablation.csv", SUMMARY_COLUMNS, summary)
        _write(out_dir / "curves.csv", CURVE_COLUMNS, curves)
    return summary, curves


def _write(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([row[c] for c in columns])
