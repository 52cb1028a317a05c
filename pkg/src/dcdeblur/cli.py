"""Single executable: dataset generation, training, inference, evaluation,
and gradient verification.

    dcdeblur dataset-gen --sharp-dir DIR --out DIR --count N [...]
    dcdeblur train --data DIR --out DIR [--config FILE] [--<key> V ...]
    dcdeblur deblur --checkpoint CKPT --in PATH --out PATH [...]
    dcdeblur eval --checkpoint [LABEL=]CKPT [...] --data DIR [...]
    dcdeblur gradcheck --scope {op,network,loss} [--seed N]

Every accepted config key is exposed as a --key flag on train/deblur/eval
and overrides the config file. Exit codes: 0 success, 1 usage/config,
2 data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import KEY_REGISTRY, build_configs, describe_keys, load_config_file
from .data.generate import generate_dataset
from .data.imageio import load_image, save_image
from .data.pipeline import IMAGE_SUFFIXES
from .checkpoint import load_checkpoint
from .engine import set_float_width
from .errors import ConfigError, DataError, NumericError, ShapeError, StateError
from .metrics import ablation_table, evaluate
from .networks import restore_image
from .training import train_loop
from .verification import run_checks, scope_checks

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code-1 path."""

    def error(self, message):
        raise ConfigError(message)


def _add_config_flags(parser: argparse.ArgumentParser, exclude: tuple = ()) -> None:
    group = parser.add_argument_group(
        "config keys", "override config-file values; see also the key list below")
    for key in KEY_REGISTRY:
        if key in exclude:
            continue
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}",
                           metavar="VALUE", help=argparse.SUPPRESS)


def _collect_overrides(args) -> dict[str, str]:
    return {key: value for key in KEY_REGISTRY
            if (value := getattr(args, f"cfg_{key}", None)) is not None}


def _configs_from_args(args):
    overrides = _collect_overrides(args)
    if getattr(args, "config", None):
        return load_config_file(args.config, overrides)
    return build_configs(overrides)


def _disc_spec(spec, cfg):
    return dataclasses.replace(spec, image_size=cfg.crop)


# ---------------------------------------------------------------------------
# subcommands


def cmd_dataset_gen(args) -> int:
    manifest = generate_dataset(args.sharp_dir, args.out, args.count,
                                kernel_length=args.kernel_length,
                                noise_variance=args.noise_variance, seed=args.seed)
    print(f"wrote {manifest['count']} pairs to {args.out} (manifest.json included)")
    return 0


def cmd_train(args) -> int:
    cfg, spec = _configs_from_args(args)
    set_float_width(args.dtype)
    try:
        final = train_loop(args.data, cfg, spec, args.out,
                           resume_from=args.resume, log_path=args.log)
    except KeyboardInterrupt:
        print("interrupted; final checkpoint flushed", file=sys.stderr)
        return 0
    print(final)
    return 0


def cmd_deblur(args) -> int:
    cfg, spec = _configs_from_args(args)
    set_float_width(args.dtype)
    gen, _, _ = load_checkpoint(args.checkpoint, spec, _disc_spec(spec, cfg))

    source = Path(args.input)
    if source.is_dir():
        inputs = [p for p in sorted(source.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES]
        if not inputs:
            raise DataError(f"{source}: no .png/.ppm images found")
        out_dir = Path(args.out)
        targets = [out_dir / p.name for p in inputs]
    else:
        inputs = [source]
        out = Path(args.out)
        targets = [out / source.name if out.suffix == "" else out]

    failures = 0
    for src, dst in zip(inputs, targets):
        try:
            restored = restore_image(gen, load_image(src))
            save_image(restored, dst)
            print(f"{src} -> {dst}")
        except Exception as exc:
            failures += 1
            logger.error("failed on %s: %s", src, exc)
    if failures == len(inputs):
        raise DataError(f"all {failures} input(s) failed")
    return 0


def cmd_eval(args) -> int:
    cfg, spec = _configs_from_args(args)
    set_float_width(args.dtype)
    variance = cfg.noise_variance if args.noise_variance is None else args.noise_variance

    columns: dict[str, dict] = {}
    for entry in args.checkpoint:
        label, _, path = entry.rpartition("=")
        if not label:
            label = Path(path).stem
        reports = {"Original": evaluate(path, args.data, cfg, spec, noise_variance=0.0)}
        if variance > 0:
            reports["Noisy"] = evaluate(path, args.data, cfg, spec, noise_variance=variance)
        columns[label] = reports

    print(ablation_table(columns))
    if args.report:
        payload = {
            "dataset": str(args.data),
            "noise_variance": variance,
            "columns": {label: {cond: dataclasses.asdict(rep) for cond, rep in reps.items()}
                        for label, reps in columns.items()},
        }
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"report written to {args.report}")
    return 0


def cmd_gradcheck(args) -> int:
    set_float_width("float64")
    checks = scope_checks(args.scope)
    seeds = range(args.seed, args.seed + (args.seeds or (10 if args.scope == "op" else 1)))
    results = run_checks(checks, seeds)
    name_width = max(len(r.name) for r in results) + 2
    print(f"{'op':<{name_width}}{'seed':>5}  {'max rel err':>12}  {'tolerance':>10}  status")
    failed = []
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:<{name_width}}{r.seed:>5}  {r.max_rel_error:>12.3e}  "
              f"{r.tolerance:>10.0e}  {status}")
        if not r.passed:
            failed.append(r)
    if failed:
        worst = max(failed, key=lambda r: r.max_rel_error / max(r.tolerance, 1e-300))
        raise NumericError(f"gradient check failed for {worst.name!r}: {worst.detail}")
    print(f"all {len(results)} checks passed")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dcdeblur", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dataset-gen", help="synthesize a paired blur/sharp dataset",
                       description="Blur sharp images with seeded random motion kernels "
                                   "and optionally add gaussian noise to the blurry member.")
    p.add_argument("--sharp-dir", required=True, help="directory of sharp source images")
    p.add_argument("--out", required=True, help="output dataset root")
    p.add_argument("--count", type=int, required=True, help="number of pairs to write")
    p.add_argument("--kernel-length", type=float, default=9.0, help="motion arc length in px")
    p.add_argument("--noise-variance", type=float, default=0.0,
                   help="gaussian noise variance on the blurry member (0.001 emulates "
                        "the noisy-benchmark condition)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dataset_gen)

    epilog = "accepted config keys:\n" + describe_keys()
    p = sub.add_parser("train", help="train generator and discriminator",
                       description="Train on a paired dataset per the config.",
                       epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--data", required=True, help="dataset root with blur/ and sharp/")
    p.add_argument("--out", required=True, help="checkpoint/log directory")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--log", help="JSON-lines log path (default <out>/train_log.jsonl)")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32",
                   help="arithmetic width (float32 makes checkpoints lossless)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("deblur", help="restore images with a trained generator",
                       epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True, help="input image or directory")
    p.add_argument("--out", required=True, help="output image or directory")
    p.add_argument("--config", help="config file matching the checkpoint's network")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    _add_config_flags(p)
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("eval", help="score checkpoints over a dataset",
                       description="PSNR/SSIM per image and on average; multiple "
                                   "--checkpoint flags build an ablation-style table.",
                       epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--checkpoint", action="append", required=True,
                   metavar="[LABEL=]PATH", help="checkpoint to score (repeatable)")
    p.add_argument("--data", required=True)
    p.add_argument("--noise-variance", type=float, default=None,
                   help="also score with noisy inputs at this variance")
    p.add_argument("--report", help="write the combined JSON report here")
    p.add_argument("--config", help="config file matching the checkpoints' networks")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    _add_config_flags(p, exclude=("noise_variance",))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    p.add_argument("--scope", choices=("op", "network", "loss"), default="op")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=None,
                   help="number of seeds (default: 10 for op scope, else 1)")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, ShapeError, StateError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
