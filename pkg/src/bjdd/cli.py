"""Command-line front end: degrade, train, infer, eval.

Exit codes: 0 success, 1 bad usage, 2 unreadable/invalid data or refused
overwrite, 3 numerical failure during training. Diagnostics go to stderr so
stdout stays clean for scripting.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fileio, metrics
from .cfa import BayerPattern, DegradationSpec, degrade
from .training import ConfigError, NumericalError, load_run_config, train_loop

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fail(message):
    print(f"error: {message}", file=sys.stderr)
    return EXIT_DATA


def _png_files(directory):
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FileNotFoundError(f"no .png files in {directory}")
    return files


def _load_dir(directory):
    return [(p.stem, fileio.load_png(p)) for p in _png_files(directory)]


def cmd_degrade(args):
    pattern = BayerPattern.from_string(args.pattern)
    spec = DegradationSpec(sigma=args.sigma, seed=args.seed, clip=not args.no_clip)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for index, path in enumerate(_png_files(args.input)):
        img = fileio.load_png(path)
        mosaic, packed = degrade(img, spec, pattern=pattern, index=index)
        fileio.save_mosaic_png(out / f"{path.stem}_mosaic.png", np.clip(mosaic, 0.0, 1.0))
        np.save(out / f"{path.stem}_packed.npy", packed)
    return EXIT_OK


def cmd_train(args):
    cfg = load_run_config(args.config)
    out = Path(args.out)
    if not args.force:
        existing = sorted(out.glob("ckpt_*.bjdd"))
        if existing:
            return _fail(f"{existing[0]} already exists; pass --force to overwrite")
    dataset = [img for _, img in _load_dir(args.data)]
    train_loop(dataset, cfg, out)
    return EXIT_OK


def cmd_infer(args):
    gen, meta = fileio.load_generator(args.model)
    pattern = BayerPattern.from_string(meta.get("pattern", "rggb"))
    src = Path(args.input)
    files = _png_files(src) if src.is_dir() else [src]
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for index, path in enumerate(files):
        img = fileio.load_png(path)
        rec = metrics.reconstruct(gen, img, sigma=args.sigma, seed=args.seed,
                                  pattern=pattern, index=index)
        fileio.save_png(out / f"{path.stem}_restored.png", rec)
    return EXIT_OK


def cmd_eval(args):
    gen, meta = fileio.load_generator(args.model)
    pattern = BayerPattern.from_string(meta.get("pattern", "rggb"))
    items = _load_dir(args.data)
    rows, avg = metrics.evaluate_images(gen, items, sigma=args.sigma, seed=args.seed,
                                        pattern=pattern, crop=args.crop)
    report = Path(args.report)
    if report.parent != Path(""):
        report.parent.mkdir(parents=True, exist_ok=True)
    metrics.write_metrics_csv(report, rows, avg)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="bjdd",
                     description="Joint demosaicing and denoising of Bayer raw images.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="mosaic + noise clean RGB images")
    p.add_argument("--input", required=True, help="directory of clean RGB PNGs")
    p.add_argument("--output", required=True, help="destination directory")
    p.add_argument("--sigma", type=float, default=0.0,
                   help="noise std on the 0-255 scale (default 0)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pattern", default="rggb", help="Bayer layout (default rggb)")
    p.add_argument("--no-clip", action="store_true",
                   help="keep noisy values outside [0, 1]")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--data", required=True, help="directory of clean training PNGs")
    p.add_argument("--out", required=True, help="directory for checkpoints and log")
    p.add_argument("--force", action="store_true",
                   help="overwrite checkpoints already present in --out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="restore images with a trained model")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--input", required=True, help="clean RGB PNG or directory of them")
    p.add_argument("--output", required=True, help="destination directory")
    p.add_argument("--sigma", type=float, default=0.0,
                   help="degrade with this noise level first (default 0)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a model on a directory of clean images")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="directory of clean RGB PNGs")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True, help="CSV file to write")
    p.add_argument("--crop", type=int, default=0,
                   help="ignore this many border pixels when scoring")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if e.code is not None else EXIT_OK
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (fileio.ImageFormatError, fileio.CheckpointError, ConfigError,
            OSError, ValueError) as e:
        return _fail(str(e))


if __name__ == "__main__":
    sys.exit(main())
