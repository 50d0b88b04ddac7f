#!/usr/bin/env python3
"""Write a synthetic class-structured dataset in the CIFAR-10 binary layout.

The file works with `scfusion train --data ...` exactly like a real CIFAR-10
batch. Useful where the real dataset is unavailable or a deterministic
desk-scale fixture is wanted.
"""

import argparse


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="output batch file")
    ap.add_argument("-n", type=int, default=500, help="number of samples")
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--noise", type=float, default=0.12)
    args = ap.parse_args()

    from scfusion.datagen import class_pattern_dataset
    from scfusion.model_io import write_cifar10_batch

    images, labels = class_pattern_dataset(args.n, num_classes=args.classes,
                                           seed=args.seed, noise=args.noise)
    write_cifar10_batch(args.out, images, labels)
    print(f"wrote {args.n} samples / {args.classes} classes to {args.out}")


if __name__ == "__main__":
    main()
