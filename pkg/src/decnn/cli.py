"""Command line interface.

Exit codes: 0 success, 2 usage, 3 I/O, 4 file format, 5 config or shape.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from . import checkpoint
from .ablation import run_ablation
from .config import FIELD_TYPES, load_config
from .data import (PhantomSpec, Volume, denormalize, normalize, phantom_generate, volume_read,
                   volume_write, with_norm)
from .errors import ConfigError, DecnnError, GeometryError, InfinitePSNR, ShapeError
from .infer import synthesize
from .metrics import mae, psnr, rank_feature_maps
from .pgm import write_pgm
from .train import train

EXIT_USAGE, EXIT_IO = 2, 3


def _dims(text: str) -> tuple[int, int, int]:
    try:
        d, h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected DxHxW, got {text!r}") from None
    return d, h, w


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()] if text else []


def _add_knobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file")
    for name, kind in FIELD_TYPES.items():
        flag = "--" + name.replace("_", "-")
        if kind == "bool":
            p.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
        else:
            p.add_argument(flag, dest=name, type=int if kind == "int" else float, default=None)


def _knob_overrides(args) -> dict:
    return {name: getattr(args, name) for name in FIELD_TYPES}


def _pairs(items) -> list[tuple[Volume, Volume]]:
    return [(volume_read(s), volume_read(t)) for s, t in items or []]


def cmd_phantom(args) -> int:
    try:
        spec = PhantomSpec(dims=args.dims, bones=args.bones, cavities=args.cavities, blobs=args.blobs,
                           texture=args.texture, noise=args.noise, seed=args.seed)
    except GeometryError as e:
        raise GeometryError(f"--dims: {e}") from None
    src, tgt, labels = phantom_generate(spec)
    volume_write(args.out_src, src)
    volume_write(args.out_tgt, tgt)
    if args.out_labels:
        volume_write(args.out_labels, Volume(labels.astype("float32")))
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, _knob_overrides(args))
    train(cfg, _pairs(args.train), _pairs(args.val), args.out, args.csv, resume=args.resume)
    return 0


def cmd_synthesize(args) -> int:
    ck = checkpoint.load(args.checkpoint)
    src = volume_read(args.src)
    if src.norm is None:
        src = normalize(src)
    pred = synthesize(ck.model, src, args.slices)
    if args.norm_from:
        pred = with_norm(pred, volume_read(args.norm_from).norm)
        if pred.norm is None:
            raise ConfigError(f"--norm-from: {args.norm_from} carries no normalization record")
    volume_write(args.out, denormalize(pred))
    return 0


def cmd_evaluate(args) -> int:
    pred, truth = volume_read(args.pred), volume_read(args.truth)
    m = mae(pred, truth)
    try:
        p = psnr(pred, truth)
    except InfinitePSNR:
        p = math.inf
    p_text = "inf" if math.isinf(p) else repr(p)
    print(f"mae {m!r}")
    print(f"psnr {p_text}")
    if args.csv:
        new = not Path(args.csv).exists()
        with open(args.csv, "a", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            if new:
                w.writerow(["pred", "truth", "mae", "psnr"])
            w.writerow([args.pred, args.truth, repr(m), p_text])
    return 0


def cmd_ablate(args) -> int:
    base = load_config(args.config, _knob_overrides(args))
    run_ablation(base, _int_list(args.k_list), _int_list(args.plain_depths), _pairs(args.train),
                 _pairs(args.val), seeds=_int_list(args.seeds) or [base.seed], out_dir=args.out_dir)
    return 0


def cmd_inspect(args) -> int:
    model = checkpoint.load(args.checkpoint).model
    if args.layer not in model.convs:
        raise ConfigError(f"unknown layer {args.layer!r}; valid layers: {', '.join(model.layer_names)}")
    src, truth = volume_read(args.src), volume_read(args.truth)
    if src.dims != truth.dims:
        raise ShapeError(f"source dims {src.dims} != truth dims {truth.dims}")
    src = src if src.norm else normalize(src)
    truth = truth if truth.norm else normalize(truth)
    s = model.config.in_slices
    d = src.dims[0]
    if d < s:
        raise GeometryError(f"depth {d} smaller than slice window {s}")
    z0 = (d - s) // 2
    maps = model.activations(src.data[None, z0:z0 + s], args.layer)
    reference = truth.data[z0 + s // 2]
    ranking = rank_feature_maps(maps, reference, args.bins)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chosen = ranking.top(args.top)
    for rank, ch in enumerate(chosen):
        write_pgm(out / f"{args.layer}_rank{rank:03d}_ch{ch:03d}.pgm", maps[0, ch])
    with open(out / f"{args.layer}_smi.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["channel", "smi"])
        for ch in chosen:
            w.writerow([ch, repr(float(ranking.scores[ch]))])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a paired synthetic source/target volume")
    p.add_argument("--dims", type=_dims, default=(40, 96, 96), help="DxHxW (default 40x96x96)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bones", type=int, default=PhantomSpec.bones)
    p.add_argument("--cavities", type=int, default=PhantomSpec.cavities)
    p.add_argument("--blobs", type=int, default=PhantomSpec.blobs)
    p.add_argument("--texture", type=float, default=PhantomSpec.texture)
    p.add_argument("--noise", type=float, default=PhantomSpec.noise)
    p.add_argument("--out-src", required=True)
    p.add_argument("--out-tgt", required=True)
    p.add_argument("--out-labels")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("train", help="train a model on volume pairs")
    _add_knobs(p)
    p.add_argument("--train", nargs=2, action="append", metavar=("SRC", "TGT"), required=True)
    p.add_argument("--val", nargs=2, action="append", metavar=("SRC", "TGT"))
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--csv", required=True, help="per-epoch metrics CSV")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synthesize", help="synthesize a target volume from a source volume")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--slices", type=int, choices=(1, 3, 5))
    p.add_argument("--norm-from", help="volume whose normalization record maps the output back")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="MAE and PSNR between two volumes")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="embedding-block ablation against equal-depth plain CNNs")
    _add_knobs(p)
    p.add_argument("--k-list", default="0,1,2,3,4")
    p.add_argument("--plain-depths", default="11,17")
    p.add_argument("--seeds", default="")
    p.add_argument("--train", nargs=2, action="append", metavar=("SRC", "TGT"), required=True)
    p.add_argument("--val", nargs=2, action="append", metavar=("SRC", "TGT"))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", help="rank a layer's feature maps by SMI against the truth")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--top", type=int, default=8)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DecnnError as e:
        print(f"decnn {args.command}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"decnn {args.command}: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
