#!/usr/bin/env python3
"""Dark-channel-loss ablation, end to end.

Builds a synthetic paired set, trains the identical network twice (with
the dark-channel term off and on), evaluates both checkpoints on clean and
noisy inputs, and prints the four-column comparison table.

Desk-scale defaults finish in a few minutes; they demonstrate the report
pipeline, not converged image quality.
"""

import argparse
import sys
from pathlib import Path

from dcdeblur.cli import main as cli_main
from dcdeblur.data.generate import generate_dataset
from dcdeblur.data.imageio import save_image
from dcdeblur.data.synth import synthetic_sharp_image
from dcdeblur.rng import SYNTH, derive_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", type=Path, required=True)
    ap.add_argument("--pairs", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--filters", default="16,32")
    ap.add_argument("--crop", type=int, default=32)
    ap.add_argument("--dc-window", type=int, default=5)
    ap.add_argument("--noise-variance", type=float, default=0.001)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    src = args.workdir / "sources"
    src.mkdir(parents=True, exist_ok=True)
    for i in range(args.pairs):
        save_image(synthetic_sharp_image(derive_rng(args.seed, SYNTH, i), 160),
                   src / f"s{i:04d}.png")
    generate_dataset(src, args.workdir / "ds", args.pairs, kernel_length=7.0,
                     seed=args.seed + 1)

    net_args = ["--encoder-filters", args.filters, "--crop", str(args.crop),
                "--dc-window", str(args.dc_window)]
    checkpoints = {}
    for label, lam2 in (("dc0", "0"), ("dc250", "250")):
        out = args.workdir / f"run_{label}"
        code = cli_main(["train", "--data", str(args.workdir / "ds"), "--out", str(out),
                         *net_args, "--lambda2", lam2, "--epochs", str(args.epochs),
                         "--checkpoint-every", "0", "--seed", str(args.seed)])
        if code != 0:
            return code
        checkpoints[label] = out / "final.dgc"
        print(f"trained {label}: {checkpoints[label]}")

    return cli_main(["eval",
                     "--checkpoint", f"dc0={checkpoints['dc0']}",
                     "--checkpoint", f"dc250={checkpoints['dc250']}",
                     "--data", str(args.workdir / "ds"),
                     "--noise-variance", str(args.noise_variance),
                     "--report", str(args.workdir / "ablation_report.json"),
                     *net_args])


if __name__ == "__main__":
    sys.exit(main())
