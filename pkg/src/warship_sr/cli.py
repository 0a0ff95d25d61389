"""Command-line surface: prepare, train, sr, eval.

Every run is deterministic given (arguments, config file, seed); all
randomness flows from the single seed through counter-derived
sub-seeds. Errors print one line to stderr with a stable prefix per
class (usage, config, io, data, training); exit code 0 means the
command's postcondition held, 2 a usage problem, 1 anything else.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import config as C
from .datasets import DatasetError, build_dataset, load_dataset, save_dataset
from .evaluation import EvalResult, EvaluationError, evaluate_set, render_table
from .images import ImageError, load_image, save_image
from .inference import bicubic_sr_fn, model_sr_fn, super_resolve_image
from .model import CheckpointError, build_model, load_checkpoint, save_checkpoint
from .tensor_ops import ConfigurationError
from .trainer import TrainingDivergedError, TrainingError, format_log_line, train

ENV_THREADS = "WARSHIP_SR_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_threads() -> int:
    raw = os.environ.get(ENV_THREADS)
    if raw is None:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise UsageError("%s must be an integer, got %r" % (ENV_THREADS, raw))
    if val < 1:
        raise UsageError("%s must be >= 1" % ENV_THREADS)
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="warship-sr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config; flags override it")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--threads", type=int,
                       help="worker cap, default $%s or 1" % ENV_THREADS)

    p = sub.add_parser("prepare", help="build a patch dataset from HR images")
    p.add_argument("--images", help="directory of source images")
    p.add_argument("--out", help="dataset output directory")
    p.add_argument("--scale", type=int, help="downscale factor (overrides config)")
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None,
                   help="toggle the 40-variant augmentation family")
    common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train on a prepared dataset")
    p.add_argument("--dataset", help="prepared dataset directory")
    p.add_argument("--out", help="output directory for checkpoints and log")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sr", help="super-resolve one image")
    p.add_argument("--model", help="checkpoint file")
    p.add_argument("--input", help="low-resolution input image")
    p.add_argument("--out", help="output image path")
    p.add_argument("--scale", type=int, help="upscale factor (must match checkpoint)")
    common(p)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("eval", help="evaluate over a directory of HR images")
    p.add_argument("--model", help="checkpoint file")
    p.add_argument("--baseline", choices=["bicubic"], help="score a baseline instead")
    p.add_argument("--set", dest="image_set", help="directory of ground-truth images")
    p.add_argument("--scale", type=int, help="degradation scale")
    p.add_argument("--shave", type=int, help="border pixels excluded from PSNR (default: scale)")
    p.add_argument("--out", help="JSON result path (default eval_result.json)")
    common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def _resolve(args, path_flags: dict) -> dict:
    """Config file + flag overrides, flags winning."""
    cfg = C.load_run_config(args.config)
    overrides = {"seed": args.seed}
    if getattr(args, "scale", None) is not None:
        overrides["model.scale"] = args.scale
    if getattr(args, "augment", None) is not None:
        overrides["data.augment"] = args.augment
    for key, value in path_flags.items():
        overrides["paths." + key] = value
    C.apply_overrides(cfg, overrides)
    return cfg


def _need(cfg: dict, key: str, flag: str) -> str:
    value = cfg["paths"][key]
    if value is None:
        raise UsageError("missing required %s" % flag)
    return value


def _threads(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.threads
    return _default_threads()


def _echo_config(cfg: dict, out_dir: str) -> None:
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as fh:
        fh.write(C.resolved_text(cfg))


def cmd_prepare(args) -> int:
    cfg = _resolve(args, {"images": args.images, "out": args.out})
    image_dir = _need(cfg, "images", "--images")
    out_dir = _need(cfg, "out", "--out")
    if not os.path.isdir(image_dir):
        raise DatasetError("image directory not found: %s" % image_dir)
    names = sorted(
        f for f in os.listdir(image_dir)
        if f.lower().endswith((".png", ".pgm", ".ppm"))
    )
    if not names:
        raise DatasetError("no images found in %s" % image_dir)
    ds = build_dataset(
        [os.path.join(image_dir, n) for n in names],
        scale=cfg["model"]["scale"],
        seed=cfg["seed"],
        use_augmentation=cfg["data"]["augment"],
    )
    save_dataset(ds, out_dir)
    _echo_config(cfg, out_dir)
    print("%d patches" % len(ds))
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args, {"dataset": args.dataset, "out": args.out})
    ds_dir = _need(cfg, "dataset", "--dataset")
    out_dir = _need(cfg, "out", "--out")
    if not os.path.isdir(ds_dir):
        raise DatasetError("dataset directory not found: %s" % ds_dir)
    ds = load_dataset(ds_dir)
    mcfg = C.model_config(cfg)
    if ds.manifest.get("scale") != mcfg.scale:
        raise ConfigurationError(
            "dataset was prepared at scale %s but model scale is %d"
            % (ds.manifest.get("scale"), mcfg.scale)
        )
    tcfg = C.train_config(cfg, threads=_threads(args))
    lcfg = C.loss_config(cfg)
    model = build_model(mcfg, seed=cfg["seed"])
    os.makedirs(out_dir, exist_ok=True)
    _echo_config(cfg, out_dir)
    log_path = os.path.join(out_dir, "epoch.log")
    with open(log_path, "w") as log:

        def on_epoch(rec):
            line = format_log_line(rec)
            log.write(line + "\n")
            log.flush()
            print(line)

        try:
            result = train(model, ds, tcfg, lcfg, on_epoch=on_epoch)
        except TrainingDivergedError as exc:
            if exc.best_model is not None:
                save_checkpoint(exc.best_model, os.path.join(out_dir, "best.ckpt"))
            raise
    save_checkpoint(result.best_model, os.path.join(out_dir, "best.ckpt"))
    save_checkpoint(result.final_model, os.path.join(out_dir, "final.ckpt"))
    print("trained %d epochs" % len(result.history))
    return 0


def cmd_sr(args) -> int:
    cfg = _resolve(args, {"model": args.model, "input": args.input, "out": args.out})
    ckpt = _need(cfg, "model", "--model")
    in_path = _need(cfg, "input", "--input")
    out_path = _need(cfg, "out", "--out")
    if not os.path.exists(ckpt):
        raise CheckpointError("checkpoint not found: %s" % ckpt)
    model = load_checkpoint(ckpt)
    scale = args.scale if args.scale is not None else model.config.scale
    if scale != model.config.scale:
        raise UsageError(
            "--scale %d does not match checkpoint scale x%d" % (scale, model.config.scale)
        )
    img = load_image(in_path)
    save_image(super_resolve_image(model, img, scale), out_path)
    print("wrote %s" % out_path)
    return 0


def cmd_eval(args) -> int:
    if args.model is not None and args.baseline is not None:
        raise UsageError("--model and --baseline are mutually exclusive")
    if args.model is None and args.baseline is None:
        raise UsageError("one of --model or --baseline is required")
    cfg = _resolve(args, {"model": args.model, "set": args.image_set})
    set_dir = _need(cfg, "set", "--set")
    if not os.path.isdir(set_dir):
        raise EvaluationError("evaluation directory not found: %s" % set_dir)
    if args.baseline is not None:
        fn, method = bicubic_sr_fn(), "bicubic"
        scale = cfg["model"]["scale"]
    else:
        ckpt = cfg["paths"]["model"]
        if not os.path.exists(ckpt):
            raise CheckpointError("checkpoint not found: %s" % ckpt)
        model = load_checkpoint(ckpt)
        if args.scale is not None and args.scale != model.config.scale:
            raise UsageError(
                "--scale %d does not match checkpoint scale x%d"
                % (args.scale, model.config.scale)
            )
        fn = model_sr_fn(model)
        method = os.path.splitext(os.path.basename(ckpt))[0]
        scale = model.config.scale
    result = evaluate_set(fn, set_dir, scale, shave=args.shave, method=method)
    sys.stdout.write(render_table([result]))
    for entry in result.skipped:
        print("warning: skipped %s (%s)" % (entry["name"], entry["reason"]), file=sys.stderr)
    out_path = args.out if args.out is not None else "eval_result.json"
    with open(out_path, "w") as fh:
        fh.write(result.to_json())
    print("wrote %s" % out_path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print("error: usage: %s" % exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print("error: usage: %s" % exc, file=sys.stderr)
        return 2
    except (C.ConfigError, ConfigurationError) as exc:
        print("error: config: %s" % exc, file=sys.stderr)
        return 1
    except (CheckpointError, ImageError, OSError) as exc:
        print("error: io: %s" % exc, file=sys.stderr)
        return 1
    except (DatasetError, EvaluationError) as exc:
        print("error: data: %s" % exc, file=sys.stderr)
        return 1
    except TrainingError as exc:
        print("error: training: %s" % exc, file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())
