"""Command-line entry point: ``trimatte {train,eval,infer,attn-viz,synth-data}``.

Exit codes: 0 success, 1 unexpected error, 2 configuration error,
3 data/format/checkpoint error, 4 numerical divergence.
The output directory defaults to ``$TRIMATTE_OUTPUT_DIR`` (else ``./runs``).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import dump_config, load_config
from .data import load_corpus, save_corpus, synth_dataset
from .errors import CheckpointError, ConfigError, DivergenceError, FormatError
from .inference import attn_viz, evaluate, infer, write_report
from .netpbm import read_gray, read_rgb, write_gray
from .train import train
from .trimap import TrimapFormatError, decode_trimap_bytes

OUTPUT_ENV = "TRIMATTE_OUTPUT_DIR"
EXIT_CODES = {ConfigError: 2, FormatError: 3, TrimapFormatError: 3, CheckpointError: 3, DivergenceError: 4}


def _out_dir(arg: str | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUTPUT_ENV, "runs")) / default_name


def _read_pair(image_path: str, trimap_path: str):
    image = read_rgb(image_path)
    try:
        classes = decode_trimap_bytes(read_gray(trimap_path))
    except TrimapFormatError as exc:
        raise FormatError(f"{trimap_path}: {exc}") from exc
    if image.shape[1:] != classes.shape:
        raise FormatError(f"{image_path} is {image.shape[1:]} but {trimap_path} is {classes.shape}")
    return image, classes


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args.out, "train")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    result = train(cfg, out_dir=out)
    print(f"trained {cfg.train.steps} steps; final loss {result.trace[-1]['total'] if result.trace else float('nan'):.6f}")
    print(f"checkpoint: {result.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    model = None if args.oracle else load_checkpoint(args.checkpoint)[0]
    samples = load_corpus(args.manifest, split=args.split, seed=args.seed)
    if not samples:
        raise ConfigError(f"no '{args.split}' samples in {args.manifest}")
    report = evaluate(model, samples, oracle=args.oracle, threshold=args.tt_threshold)
    csv_path, md_path = write_report(report, _out_dir(args.out, "eval"))
    print(report.to_markdown(), end="")
    print(f"wrote {csv_path} and {md_path}")
    return 0


def cmd_infer(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    image, classes = _read_pair(args.image, args.trimap)
    alpha = infer(model, image, classes, clamp_known=args.clamp_known)
    out = Path(args.out) if args.out else _out_dir(None, "infer") / "alpha.pgm"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_gray(out, alpha)
    print(f"wrote {out}")
    return 0


def _point(text: str) -> tuple[int, int]:
    try:
        y, x = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("point must be 'y,x'") from exc
    return y, x


def cmd_attn_viz(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    image, classes = _read_pair(args.image, args.trimap)
    maps = attn_viz(model, image, classes, args.point, args.stage, args.block, args.substitute_class)
    out = _out_dir(args.out, "attn")
    out.mkdir(parents=True, exist_ok=True)
    tag = f"_sub-{args.substitute_class}" if args.substitute_class else ""
    for head, heat in enumerate(maps):
        path = out / f"attn_s{args.stage}b{args.block}_h{head}{tag}.pgm"
        write_gray(path, heat)
        print(f"wrote {path}")
    return 0


def cmd_synth(args) -> int:
    samples = synth_dataset(args.n, args.size, args.seed, args.tt_ratio)
    manifest = save_corpus(samples, _out_dir(args.out, "synth"), split=args.split)
    print(f"wrote {len(samples)} samples; manifest {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trimatte", description="Tri-token guided image matting")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    t.add_argument("--out", help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    e.add_argument("--checkpoint")
    e.add_argument("--manifest", required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--seed", type=int, default=0, help="seed for generated trimaps")
    e.add_argument("--tt-threshold", type=float, default=0.05)
    e.add_argument("--oracle", action="store_true", help="score ground truth against itself")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="predict an alpha matte")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--image", required=True)
    i.add_argument("--trimap", required=True)
    i.add_argument("--out", help="output PGM path")
    i.add_argument("--clamp-known", action="store_true")
    i.set_defaults(func=cmd_infer)

    a = sub.add_parser("attn-viz", help="dump attention heatmaps for one query point")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--image", required=True)
    a.add_argument("--trimap", required=True)
    a.add_argument("--point", type=_point, required=True, help="query pixel as y,x")
    a.add_argument("--stage", type=int, default=1)
    a.add_argument("--block", type=int, default=0)
    a.add_argument("--substitute-class", choices=["background", "unknown", "foreground"])
    a.add_argument("--out")
    a.set_defaults(func=cmd_attn_viz)

    s = sub.add_parser("synth-data", help="write a synthetic corpus")
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tt-ratio", type=float, default=0.3)
    s.add_argument("--split", default="train", choices=["train", "test"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except tuple(EXIT_CODES) as exc:
        code = next(c for k, c in EXIT_CODES.items() if isinstance(exc, k))
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return code
    except ValueError as exc:
        print(f"error (argument): {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
