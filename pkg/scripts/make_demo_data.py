#!/usr/bin/env python3
"""Synthesize a desk-scale paired deblurring dataset from scratch.

Generates seeded synthetic sharp images (gradient backgrounds, colored
rectangles, small dark details), then blurs them with random motion
kernels into a blur//sharp/ tree ready for `dcdeblur train`.
"""

import argparse
from pathlib import Path

from dcdeblur.data.generate import generate_dataset
from dcdeblur.data.imageio import save_image
from dcdeblur.data.synth import synthetic_sharp_image
from dcdeblur.rng import SYNTH, derive_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, required=True, help="dataset root to create")
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--size", type=int, default=160, help="sharp image side length")
    ap.add_argument("--kernel-length", type=float, default=7.0)
    ap.add_argument("--noise-variance", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    src = args.out / "sources"
    src.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        image = synthetic_sharp_image(derive_rng(args.seed, SYNTH, i), args.size)
        save_image(image, src / f"sharp_{i:04d}.png")
    manifest = generate_dataset(src, args.out, args.count,
                                kernel_length=args.kernel_length,
                                noise_variance=args.noise_variance, seed=args.seed)
    print(f"wrote {manifest['count']} pairs under {args.out}")


if __name__ == "__main__":
    main()
