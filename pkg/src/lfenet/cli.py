"""Command-line entry points.

Every subcommand accepts --config (flat key=value file) and --seed (an
override applied after the config). Success exits 0; failures print one
machine-parsable line `error:<category>: <message>` to stderr and exit
nonzero. Tabular output is tab-separated UTF-8.
"""

import argparse
import sys
from dataclasses import replace

from .degrade import build_dataset, load_png, save_png
from .errors import ConfigError, LfenetError
from .filters import SideWindowSpec, side_window_box_filter
from .training import (TrainConfig, ablate, enhance, evaluate_directories,
                       load_train_config, train)


def _config_from_args(args):
    cfg = TrainConfig()
    if args.config:
        cfg = load_train_config(args.config, base=cfg)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _parse_splits(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--splits expects three comma-separated fractions, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--splits: cannot parse {text!r}")


def _fmt(value):
    return f"{value:.6f}"


def _cmd_degrade(args):
    cfg = _config_from_args(args)
    records = build_dataset(args.gt, args.out, seed=cfg.seed,
                            split_spec=_parse_splits(args.splits))
    print(f"samples\t{len(records)}")
    return 0


def _cmd_filter(args):
    _config_from_args(args)
    spec = SideWindowSpec(radius=args.radius, iterations=args.iters)
    save_png(args.output, side_window_box_filter(load_png(args.input), spec))
    return 0


def _cmd_train(args):
    cfg = _config_from_args(args)
    result = train(cfg, args.data, args.out, resume=args.resume)
    print(f"steps\t{result.steps}")
    print(f"checkpoint\t{result.checkpoint_path}")
    return 0


def _cmd_enhance(args):
    _config_from_args(args)
    enhance(args.checkpoint, args.left, args.right, args.out_left, args.out_right)
    print(f"wrote\t{args.out_left}\t{args.out_right}")
    return 0


def _cmd_eval(args):
    _config_from_args(args)
    rows, aggregate = evaluate_directories(args.pred, args.gt,
                                           emit_mse_maps=args.emit_mse_maps)
    print("# fields: id psnr_left psnr_right ssim_left ssim_right")
    for sample_id, psnr_l, psnr_r, ssim_l, ssim_r in rows:
        print(f"{sample_id}\t{_fmt(psnr_l)}\t{_fmt(psnr_r)}\t{_fmt(ssim_l)}\t{_fmt(ssim_r)}")
    print(f"aggregate\t{_fmt(aggregate['psnr_left'])}\t{_fmt(aggregate['psnr_right'])}"
          f"\t{_fmt(aggregate['ssim_left'])}\t{_fmt(aggregate['ssim_right'])}")
    return 0


def _cmd_ablate(args):
    cfg = _config_from_args(args)
    rows = ablate(cfg, args.data, args.out)
    print("# fields: ablation psnr_left psnr_right ssim_left ssim_right")
    for row in rows:
        print(f"{row['ablation']}\t{_fmt(row['psnr_left'])}\t{_fmt(row['psnr_right'])}"
              f"\t{_fmt(row['ssim_left'])}\t{_fmt(row['ssim_right'])}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lfenet",
        description="Low-light stereo enhancement: data factory, filtering, "
                    "training, inference, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="seed override")

    p = sub.add_parser("degrade", help="build a low-light dataset from ground-truth pairs")
    p.add_argument("--gt", required=True, help="directory with left/ and right/ PNGs")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--splits", default="0.8,0.05,0.15",
                   help="train,val,test fractions (default 0.8,0.05,0.15)")
    common(p)
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("filter", help="side-window box filter a PNG")
    p.add_argument("input", help="input PNG")
    p.add_argument("output", help="output PNG")
    p.add_argument("--radius", type=int, default=5)
    p.add_argument("--iters", type=int, default=10)
    common(p)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("train", help="train on a dataset's train split")
    p.add_argument("--data", required=True, help="dataset directory (with manifest.txt)")
    p.add_argument("--out", required=True, help="run directory for log and checkpoint")
    p.add_argument("--resume", action="store_true",
                   help="continue from the run directory's checkpoint")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("enhance", help="enhance one stereo pair with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--left", required=True, help="low-light left PNG")
    p.add_argument("--right", required=True, help="low-light right PNG")
    p.add_argument("--out-left", required=True)
    p.add_argument("--out-right", required=True)
    common(p)
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("eval", help="score prediction PNGs against ground truth")
    p.add_argument("--pred", required=True, help="directory with left/ and right/ PNGs")
    p.add_argument("--gt", required=True, help="directory with left/ and right/ PNGs")
    p.add_argument("--emit-mse-maps", help="directory for binary error-map PNGs")
    common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="train and score the full ablation grid")
    p.add_argument("--data", required=True, help="dataset directory (with manifest.txt)")
    p.add_argument("--out", required=True, help="grid output directory")
    common(p)
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LfenetError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
