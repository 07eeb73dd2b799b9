"""``wavesr`` command line: train, sr, eval, wpt, version.

Exit codes: 0 success, 1 operational failure (missing files, bad images,
numeric trouble), 2 usage errors (unknown flags, bad config keys).
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import __version__, checkpoint, metrics, wavelet
from . import data as imgdata
from .errors import ConfigError, WaveSRError
from .network import sr_reconstruct, to_display
from .trainer import TrainConfig, Trainer, load_checkpoint, load_generator

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
MIN_SR_EXTENT = 16

log = logging.getLogger("wavesr")


class UsageError(Exception):
    pass


# flag -> TrainConfig field
TRAIN_FLAGS = (
    ("--data", "data", str),
    ("--iters", "iterations", int),
    ("--epochs", "epochs", int),
    ("--seed", "seed", int),
    ("--lr", "learning_rate", float),
    ("--batch", "batch_size", int),
    ("--crop", "crop_size", int),
    ("--features", "features", int),
    ("--blocks", "blocks", int),
    ("--disc-channels", "disc_channels", int),
    ("--input", "input_mode", str),
    ("--lambda-adv", "lambda_adv", float),
    ("--lambda-wavelet", "lambda_wavelet", float),
    ("--extractor", "extractor", str),
    ("--checkpoint-interval", "checkpoint_interval", int),
    ("--out", "output_dir", str),
)


def build_parser():
    p = argparse.ArgumentParser(prog="wavesr", description="Wavelet-domain 4x super-resolution GAN.")
    sub = p.add_subparsers(dest="command", metavar="{train,sr,eval,wpt,version}")
    sub.required = True

    t = sub.add_parser("train", help="train a generator/discriminator pair")
    t.add_argument("--config", help="key = value config file; flags override it")
    for flag, dest, typ in TRAIN_FLAGS:
        t.add_argument(flag, dest=dest, type=typ, default=None)
    t.add_argument("--no-adv", action="store_true", help="set lambda_adv to 0")
    t.add_argument("--debug", action="store_true", default=None, help="audit parameter ownership every step")
    t.add_argument("--resume", help="continue from a checkpoint file")
    t.add_argument("--quiet", action="store_true", help="no per-iteration log lines")

    s = sub.add_parser("sr", help="super-resolve one image 4x")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="score SR images against ground truth")
    e.add_argument("--sr", required=True, help="directory of SR images")
    e.add_argument("--hr", required=True, help="directory of ground-truth images")
    e.add_argument("--mode", choices=("y", "rgb"), default="y")
    e.add_argument("--border", type=int, default=4, help="border crop in y mode")
    e.add_argument("--csv", help="report path (default: stdout only)")

    w = sub.add_parser("wpt", help="visualise the 16 packet sub-bands")
    w.add_argument("--in", dest="input", required=True)
    w.add_argument("--out", required=True, help="tiled 4x4 band image")
    w.add_argument("--inverse", metavar="DIR", help="also write coefficients and reconstruction to DIR")

    sub.add_parser("version", help="print the package version")
    return p


# -- train -----------------------------------------------------------------------------------


def _train_config(args):
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise WaveSRError(f"cannot read config {args.config}: {exc}") from exc
        try:
            cfg = TrainConfig.from_text(text, source=args.config)
        except ConfigError as exc:
            raise UsageError(str(exc)) from exc
        values = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    elif getattr(args, "resume", None):
        # resuming without a config file continues the stored run configuration
        stored = checkpoint.load(args.resume)
        if "meta.config" not in stored:
            raise WaveSRError(f"{args.resume}: missing 'meta.config' entry")
        cfg = TrainConfig.from_text(checkpoint.decode_text(stored["meta.config"]), source=args.resume)
        values = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    else:
        values = {}
    for _, dest, _ in TRAIN_FLAGS:
        v = getattr(args, dest)
        if v is not None:
            values[dest] = v
    if args.no_adv:
        values["lambda_adv"] = 0.0
    if args.debug:
        values["debug"] = True
    try:
        return TrainConfig(**values)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(args):
    config = _train_config(args)
    if not args.quiet:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    if not config.data:
        raise UsageError("no dataset: pass --data or set 'data' in the config")
    if not os.path.isdir(config.data):
        raise FileNotFoundError(f"dataset directory not found: {config.data}")
    os.makedirs(config.output_dir, exist_ok=True)
    if args.resume:
        trainer = load_checkpoint(args.resume, config=config)
    else:
        trainer = Trainer(config)
    config.save(os.path.join(config.output_dir, "config.txt"))
    entries = trainer.train(
        log_path=os.path.join(config.output_dir, "loss.csv"),
        checkpoint_dir=config.output_dir,
    )
    final = os.path.join(config.output_dir, "final.wsr")
    if entries:
        last = entries[-1]
        print(f"trained {last.iteration} iterations, l_total={last.l_total:.6g}; wrote {final}")
    else:
        print(f"nothing to do (already at iteration {trainer.iteration}); wrote {final}")
    return EXIT_OK


# -- sr --------------------------------------------------------------------------------------


def super_resolve(gen, image):
    """``[3, h, w]`` in [0, 1] -> clamped ``[3, 4h, 4w]``."""
    sr, _ = sr_reconstruct(gen, np.asarray(image, dtype=np.float64)[None])
    return to_display(sr[0])


def cmd_sr(args):
    for path, what in ((args.model, "model"), (args.input, "input image")):
        if not os.path.exists(path):
            raise FileNotFoundError(f"{what} not found: {path}")
    gen = load_generator(args.model)
    img = imgdata.load_image(args.input)
    if min(img.height, img.width) < MIN_SR_EXTENT:
        raise WaveSRError(f"{args.input}: extent {img.height}x{img.width} is below {MIN_SR_EXTENT}")
    out = super_resolve(gen, img.to_array())
    imgdata.save_image(args.out, imgdata.ImageBuffer.from_array(out))
    print(f"{args.input} {img.height}x{img.width} -> {args.out} {out.shape[1]}x{out.shape[2]}")
    return EXIT_OK


# -- eval ------------------------------------------------------------------------------------


def cmd_eval(args):
    for d in (args.sr, args.hr):
        if not os.path.isdir(d):
            raise FileNotFoundError(f"directory not found: {d}")
    report = metrics.evaluate_dataset(args.sr, args.hr, mode=args.mode, border=args.border)
    if not report.rows:
        raise WaveSRError(f"no .png/.ppm images in {args.hr}")
    if args.csv:
        report.write_csv(args.csv)
    print(report.format_table())
    return EXIT_OK


# -- wpt -------------------------------------------------------------------------------------


def normalize_band(band):
    """Min-max to [0, 1]; a zero-range band becomes mid-grey."""
    lo, hi = float(band.min()), float(band.max())
    if hi == lo:
        return np.full(band.shape, 0.5)
    return (band - lo) / (hi - lo)


def tile_bands(bands):
    """``[16, h, w]`` -> ``[4h, 4w]`` grid, band ``b`` at row ``b // 4``, column ``b % 4``."""
    _, h, w = bands.shape
    out = np.empty((4 * h, 4 * w))
    for b in range(wavelet.N_BANDS):
        r, c = divmod(b, 4)
        out[r * h : (r + 1) * h, c * w : (c + 1) * w] = normalize_band(bands[b])
    return out


def cmd_wpt(args):
    img = imgdata.load_image(args.input).to_array()
    bands = wavelet.wpt2(img)  # 3, 16, h, w
    y_bands = wavelet.wpt2(metrics.to_y(img))
    grid = tile_bands(y_bands)
    imgdata.save_image(args.out, imgdata.ImageBuffer.from_array(np.repeat(grid[None], 3, axis=0)))
    print(f"wrote {args.out} ({grid.shape[0]}x{grid.shape[1]}, 16 bands of {y_bands.shape[1]}x{y_bands.shape[2]})")
    if args.inverse:
        os.makedirs(args.inverse, exist_ok=True)
        recon = wavelet.iwpt2(bands)
        err = float(np.max(np.abs(recon - img)))
        checkpoint.save(os.path.join(args.inverse, "coefficients.wsr"), {"bands": bands})
        imgdata.save_image(os.path.join(args.inverse, "reconstruction.png"), imgdata.ImageBuffer.from_array(recon))
        print(f"max reconstruction error {err:.3e}")
    return EXIT_OK


def cmd_version(args):
    print(f"wavesr {__version__}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sr": cmd_sr, "eval": cmd_eval, "wpt": cmd_wpt, "version": cmd_version}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"wavesr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WaveSRError, OSError, ValueError) as exc:
        print(f"wavesr {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
