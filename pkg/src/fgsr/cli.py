"""``fgsr`` command line: degrade, train, infer, composite, eval, metrics, synth.

Exit codes: 0 success, 1 I/O failure, 2 invalid arguments, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import DEFAULT_METRICS, emit_report, evaluate_batch
from .imaging import degrade, ensure_parent, load_image, save_image
from .metrics import METRIC_NAMES, SsimParams, compute_metric
from .nn import CheckpointError, checkpoint_load
from .pipeline import DEFAULT_FEATHER_RADIUS, composite, feather_mask, find_masks, load_masks, run_pipeline
from .training import TrainConfig, fit, index_dataset, predict

EXIT_OK, EXIT_IO, EXIT_ARGS, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("fgsr")


class ArgumentError(ValueError):
    pass


def _header(command: str, values: dict) -> None:
    items = " ".join(f"{k}={v}" for k, v in values.items())
    print(f"fgsr {__version__} {command}: {items}", file=sys.stderr)


def _jobs(n: int) -> int:
    if n < 1:
        raise ArgumentError("--jobs must be >= 1")
    return n


def cmd_degrade(args) -> int:
    if not 1 <= args.scale <= 100:
        raise ArgumentError(f"--scale must be in [1, 100], got {args.scale}")
    _header("degrade", {"in": args.input, "out": args.output, "scale": args.scale})
    img = load_image(args.input)
    ensure_parent(args.output)
    save_image(degrade(img, args.scale), args.output)
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    overrides = dict(
        epochs=args.epochs, steps_per_epoch=args.steps_per_epoch, batch_size=args.batch_size,
        scale_percent=args.scale, lr=args.lr, seed=args.seed, image_size=args.image_size,
        dataset_dir=args.dataset, checkpoint_dir=args.checkpoint_dir, loss_log=args.loss_log,
        channels=tuple(args.channels) if args.channels else None,
        dropout_rate=args.dropout, train_on_masked=True if args.train_on_masked else None,
    )
    cfg = TrainConfig.from_sources(args.config, **overrides)
    if cfg.loss_log is None and cfg.checkpoint_dir is not None:
        cfg.loss_log = str(Path(cfg.checkpoint_dir) / "loss_log.csv")
    return cfg


def cmd_train(args) -> int:
    try:
        cfg = _train_config(args)
    except (TypeError, ValueError) as exc:
        raise ArgumentError(str(exc)) from exc
    if cfg.dataset_dir is None:
        raise ArgumentError("a dataset directory is required (--dataset or config)")
    _header("train", cfg.to_dict())
    index = index_dataset(cfg.dataset_dir)
    _, _, loss_log = fit(cfg, index)
    if loss_log.records:
        last = loss_log.records[-1]
        print(f"final epoch {last.epoch}: mean loss {last.mean_loss:.6f}, lr {last.lr:g}")
    return EXIT_OK


def _masks_for(image_path: Path, explicit, shape):
    paths = explicit or find_masks(image_path)
    if not paths:
        return None
    return load_masks(paths, shape=shape)


def cmd_infer(args) -> int:
    if args.feather < 0:
        raise ArgumentError("--feather must be >= 0")
    jobs = _jobs(args.jobs)
    if (args.input is None) == (args.input_dir is None):
        raise ArgumentError("give exactly one of --in or --in-dir")
    _header("infer", {"checkpoint": args.checkpoint, "in": args.input or args.input_dir,
                      "out": args.output, "masks": args.mask, "feather": args.feather,
                      "mode": args.mode, "jobs": jobs})
    model, _ = checkpoint_load(args.checkpoint)

    def one(src: Path, dst: Path):
        lr = load_image(src)
        mask = _masks_for(src, args.mask if args.input else None, lr.shape[:2])
        if mask is None:
            log.warning("%s: no mask found, writing plain full-image SR", src)
            out = np.clip(predict(model, lr), 0, 255)
        else:
            out = run_pipeline(model, lr, mask, args.feather, args.mode)
        ensure_parent(dst)
        save_image(out, dst)

    if args.input:
        one(Path(args.input), Path(args.output))
        return EXIT_OK
    sources = index_dataset(args.input_dir)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        list(pool.map(lambda p: one(p, out_dir / p.name), sources))
    return EXIT_OK


def cmd_composite(args) -> int:
    if args.feather < 0:
        raise ArgumentError("--feather must be >= 0")
    _header("composite", {"sr": args.sr, "lr": args.lr, "masks": args.mask,
                          "feather": args.feather, "out": args.output})
    sr = load_image(args.sr)
    lr = load_image(args.lr)
    if sr.shape != lr.shape:
        raise ArgumentError(f"SR {sr.shape[:2]} and LR {lr.shape[:2]} sizes differ")
    mask = load_masks(args.mask, shape=lr.shape[:2])
    ensure_parent(args.output)
    save_image(composite(sr, lr, feather_mask(mask, args.feather)), args.output)
    return EXIT_OK


def _metric_options(args) -> dict:
    return dict(psnr_variant=args.psnr_variant,
                ssim_params=SsimParams(mode=args.ssim_mode),
                uqi_mode=args.uqi_mode)


def cmd_eval(args) -> int:
    jobs = _jobs(args.jobs)
    metrics = [m.strip().lower() for m in args.metrics.split(",") if m.strip()]
    bad = [m for m in metrics if m not in METRIC_NAMES]
    if bad or not metrics:
        raise ArgumentError(f"unknown metrics {bad}; choose from {METRIC_NAMES}")
    if args.region == "foreground" and args.mask_dir is None:
        raise ArgumentError("--region foreground needs --mask-dir")
    _header("eval", {"lr_dir": args.lr_dir, "hr_dir": args.hr_dir, "out_dir": args.out_dir,
                     "mask_dir": args.mask_dir, "region": args.region, "metrics": ",".join(metrics),
                     "report": args.report, "format": args.format, "jobs": jobs,
                     **{k: v for k, v in vars(args).items() if k.endswith("_mode") or k == "psnr_variant"}})

    hr_paths = index_dataset(args.hr_dir)

    def load(hr_path: Path):
        stem = hr_path.stem
        lr = load_image(Path(args.lr_dir) / hr_path.name)
        out = load_image(Path(args.out_dir) / hr_path.name)
        hr = load_image(hr_path)
        mask = None
        if args.region == "foreground":
            mask_paths = find_masks(Path(args.mask_dir) / hr_path.name)
            if not mask_paths:
                raise FileNotFoundError(f"no mask for {stem} in {args.mask_dir}")
            mask = load_masks(mask_paths, shape=hr.shape[:2])
        return stem, lr, hr, out, mask

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        loaded = list(pool.map(load, hr_paths))
    pairs = [(stem, lr, hr, out) for stem, lr, hr, out, _ in loaded]
    masks = {stem: m for stem, *_, m in loaded} if args.region == "foreground" else None
    summary, records = evaluate_batch(pairs, metrics, args.region, masks, **_metric_options(args))
    emit_report(summary, records, args.report, args.format)
    for name, m in summary.metrics.items():
        print(f"{name}: mean increase {m.mean_percent_increase:.6f}% over {m.count} images"
              f" ({m.skipped} skipped)")
    return EXIT_OK


def cmd_metrics(args) -> int:
    _header("metrics", {"a": args.a, "b": args.b, "metric": args.metric, **_metric_options(args)})
    a = load_image(args.a)
    b = load_image(args.b)
    if a.shape != b.shape:
        raise ArgumentError(f"image sizes differ: {a.shape[:2]} vs {b.shape[:2]}")
    value = compute_metric(args.metric, a, b, **_metric_options(args)).value
    print("%.6f" % value)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import make_desk_dataset

    if args.count < 1 or args.size < 4:
        raise ArgumentError("--count must be >= 1 and --size >= 4")
    _header("synth", {"out_dir": args.out_dir, "count": args.count, "size": args.size, "seed": args.seed})
    make_desk_dataset(args.out_dir, args.count, args.size, args.seed, with_masks=not args.no_masks)
    return EXIT_OK


def _add_metric_flags(p):
    p.add_argument("--psnr-variant", choices=("paper", "standard"), default="paper")
    p.add_argument("--ssim-mode", choices=("windowed", "global"), default="windowed")
    p.add_argument("--uqi-mode", choices=("windowed", "global"), default="windowed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fgsr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fgsr {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="make an LR image (downscale then upscale back)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--scale", type=int, default=50, help="intermediate size in percent")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train the U-Net from scratch")
    p.add_argument("--config", help="JSON file with TrainConfig fields; flags override it")
    p.add_argument("--dataset")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--loss-log")
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps-per-epoch", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--channels", type=int, nargs=2, metavar=("C1", "C2"))
    p.add_argument("--dropout", type=float)
    p.add_argument("--train-on-masked", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="foreground SR of an LR image (or a directory)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input")
    p.add_argument("--in-dir", dest="input_dir")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--mask", action="append", help="mask PNG (repeatable; default: <stem>.mask*.png)")
    p.add_argument("--feather", type=float, default=DEFAULT_FEATHER_RADIUS)
    p.add_argument("--mode", choices=("masked", "full"), default="masked")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("composite", help="blend an SR image over an LR image through masks")
    p.add_argument("--sr", required=True)
    p.add_argument("--lr", required=True)
    p.add_argument("--mask", action="append", required=True)
    p.add_argument("--feather", type=float, default=DEFAULT_FEATHER_RADIUS)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("eval", help="average percent metric increase over a batch")
    p.add_argument("--lr-dir", required=True)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mask-dir")
    p.add_argument("--region", choices=("full", "foreground"), default="full")
    p.add_argument("--metrics", default=",".join(DEFAULT_METRICS))
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=1)
    _add_metric_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="one metric between two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", choices=METRIC_NAMES, required=True)
    _add_metric_flags(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("synth", help="write a procedural desk-scale image set")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-masks", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_ARGS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ArithmeticError as exc:
        print(f"fgsr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CheckpointError) as exc:
        print(f"fgsr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"fgsr: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
