"""Command-line front end: train, infer, eval, stats.

Exit codes: 0 success, 1 internal error, 2 configuration or dataset
problem, 3 evaluation-input mismatch (missing predictions).
"""

import argparse
import sys
from pathlib import Path

from . import config as config_mod
from . import data as data_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import training as training_mod
from .errors import (ArgumentError, ConfigError, DatasetError, EvalInputError,
                     LabnetError)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_EVAL = 3


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--preset", choices=sorted(config_mod.PRESETS),
                   help="expand a published training recipe")
    p.add_argument("--root", dest="data_root", help="dataset root directory")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--image-size", dest="image_size", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--limit", type=int,
                   help="train on only the first N triples")
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--eca-mode", dest="eca_mode",
                   choices=("laplacian", "laplacian8", "sobel", "gap", "off"))
    p.add_argument("--lsa-mode", dest="lsa_mode",
                   choices=("local", "whole", "off"))
    p.add_argument("--lsa-m", dest="lsa_m", type=int)
    p.add_argument("--lsa-downsample", dest="lsa_downsample",
                   choices=("on", "off"))
    p.add_argument("--branch-mode", dest="branch_mode",
                   choices=sorted(config_mod.BRANCH_ALIASES) + ["two", "single"])
    p.add_argument("--color-space", dest="color_space", choices=("lab", "rgb"))
    p.add_argument("--stage-channels", dest="stage_channels",
                   help="comma list, e.g. 16,32,48")
    p.add_argument("--rates", help="semicolon-grouped comma lists")


def _resolve(args):
    file_values = (config_mod.load_config_file(args.config)
                   if args.config else None)
    overrides = {}
    for name in ("data_root", "out_dir", "seed", "image_size", "batch_size",
                 "epochs", "lr", "limit", "max_steps", "checkpoint_every",
                 "eca_mode", "lsa_mode", "lsa_m", "eca_ratio",
                 "color_space"):
        if getattr(args, name, None) is not None:
            overrides[name] = getattr(args, name)
    if args.lsa_downsample is not None:
        overrides["lsa_downsample"] = args.lsa_downsample == "on"
    if args.branch_mode is not None:
        alias = config_mod.BRANCH_ALIASES.get(args.branch_mode)
        if alias:
            overrides["branch_mode"], cs = alias
            overrides.setdefault("color_space", cs)
            if args.color_space is not None:
                overrides["color_space"] = args.color_space
        else:
            overrides["branch_mode"] = args.branch_mode
    if args.stage_channels is not None:
        overrides["stage_channels"] = config_mod._parse_value(
            "stage_channels", args.stage_channels)
    if args.rates is not None:
        overrides["rates"] = config_mod._parse_value("rates", args.rates)
    return config_mod.resolve(preset=args.preset, file_values=file_values,
                              overrides=overrides)


def _scan_split(cfg, split):
    if not cfg.data_root:
        raise ConfigError("no dataset root given (use --root or data_root)")
    return data_mod.scan(cfg.data_root, cfg.layout(split))


def cmd_train(args):
    cfg = _resolve(args)
    index = _scan_split(cfg, "train")
    ids = index.ids[:cfg.limit] if cfg.limit else index.ids
    triples = [data_mod.load_triple(index, t, cfg.image_size) for t in ids]
    dataset = [(t.shadow, t.mask, t.free) for t in triples]
    params = model_mod.init_params(cfg.model_config(), seed=cfg.seed)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / "manifest.cfg")
    result = training_mod.train(
        params, dataset, str(out_dir), epochs=cfg.epochs,
        batch_size=cfg.batch_size, seed=cfg.seed, lr=cfg.lr,
        weights=cfg.loss_weights(),
        checkpoint_every=cfg.checkpoint_every,
        max_steps=cfg.max_steps or None,
        log=lambda msg: print(msg, flush=True),
        color_space=cfg.color_space)
    print(f"trained {result.steps} steps on {len(dataset)} triples; "
          f"loss {result.first_loss:.5g} -> {result.last_loss:.5g}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"loss curve: {result.curve_path}")
    return EXIT_OK


def _infer_color_space(args, ckpt_path):
    if args.color_space:
        return args.color_space
    manifest = Path(ckpt_path).parent / "manifest.cfg"
    if manifest.is_file():
        values = config_mod.load_config_file(manifest)
        return values.get("color_space", "lab")
    return "lab"


def cmd_infer(args):
    cfg = _resolve(args)
    params = model_mod.load_checkpoint(args.ckpt)
    color_space = _infer_color_space(args, args.ckpt)
    index = _scan_split(cfg, args.split)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    size = cfg.image_size if args.resize else None
    count = 0
    for triple_id in index.ids:
        triple = data_mod.load_triple(index, triple_id, size)
        pred = training_mod.predict_rgb(params, triple.shadow, triple.mask,
                                        color_space=color_space)
        data_mod.save_image(pred, out_dir / f"{triple_id}.png")
        count += 1
    print(f"wrote {count} prediction(s) to {out_dir}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _resolve(args)
    index = _scan_split(cfg, "test")
    report = metrics_mod.evaluate_dataset(args.pred, index, pooled=args.pooled)
    out_dir = Path(cfg.out_dir) if args.out_dir else Path(args.pred)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(report.to_csv())
    table = report.to_table(args.method)
    (out_dir / "report.txt").write_text(table)
    print(table, end="")
    if report.omissions:
        print(f"missing prediction(s) for {len(report.omissions)} image(s)",
              file=sys.stderr)
        return EXIT_EVAL
    return EXIT_OK


def cmd_stats(args):
    cfg = _resolve(args)
    params = model_mod.init_params(cfg.model_config(), seed=cfg.seed)
    hw = (cfg.image_size, cfg.image_size)
    report = model_mod.count_flops(params, hw)
    print(report.table())
    print(f"params {report.param_count / 1e6:.4f}e6, "
          f"flops {report.flops / 1e9:.4f}e9 at {hw[0]}x{hw[1]}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="labnet",
        description="Two-branch LAB-space shadow removal toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a dataset")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="write PNG predictions for a split")
    _add_config_flags(p)
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--resize", action="store_true",
                   help="resize inputs to the configured image size")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _add_config_flags(p)
    p.add_argument("--pred", required=True, help="directory of predictions")
    p.add_argument("--pooled", action="store_true",
                   help="pool pixels across images instead of averaging "
                        "per-image metrics")
    p.add_argument("--method", default="prediction",
                   help="row label in the report table")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("stats", help="parameter and FLOP breakdown")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except EvalInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except (ConfigError, DatasetError, ArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LabnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:
        import traceback
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
