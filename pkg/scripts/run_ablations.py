#!/usr/bin/env python3
"""Ablation sweep: train configurations A-D and report final accuracies.

A: dense regular base kernels, no addition/inverse;  B: complementary sparse
kernels only;  C: B + addition branch;  D: the full module. All runs share
data, seed and hyperparameters so differences come from the configuration.
"""

import argparse
import dataclasses
import time


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", help="CIFAR-10-format batch (default: synthesize 500 samples)")
    ap.add_argument("--alpha", default="4")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--schedule", default="10:0.005,15:0.002")
    ap.add_argument("--batch-size", type=int, default=50)
    ap.add_argument("--seeds", default="0", help="comma list; results averaged")
    args = ap.parse_args()

    from scfusion import models as M
    from scfusion.datagen import class_pattern_dataset
    from scfusion.model_io import load_cifar10_batch
    from scfusion.train import SGDConfig, train

    if args.data:
        images, labels = load_cifar10_batch(args.data)
    else:
        images, labels = class_pattern_dataset(500, seed=42)

    schedule = tuple((int(e), float(v)) for e, _, v in
                     (p.partition(":") for p in args.schedule.split(",") if p))
    cfg = SGDConfig(lr=args.lr, momentum=0.9, schedule=schedule)
    base = M.substitute_scfusion(M.presets()["tiny-vgg"], args.alpha)
    flags = {"A": dict(sc=False, add=False, inv=False),
             "B": dict(sc=True, add=False, inv=False),
             "C": dict(sc=True, add=True, inv=False),
             "D": dict(sc=True, add=True, inv=True)}
    seeds = [int(s) for s in args.seeds.split(",")]

    print(f"{'conf':<5} {'mean acc':>9} {'runs':>24}")
    for label, f in flags.items():
        spec = dataclasses.replace(base, layers=[
            dataclasses.replace(d, **f) if isinstance(d, M.SCFusionD) else d
            for d in base.layers])
        accs = []
        for seed in seeds:
            model = M.build(spec, seed=seed)
            logs = train(model, images, labels, cfg, epochs=args.epochs,
                         seed=seed, batch_size=args.batch_size)
            accs.append(logs[-1].eval_acc)
        mean = sum(accs) / len(accs)
        print(f"{label:<5} {mean:>9.3f} {str([f'{a:.3f}' for a in accs]):>24}")


if __name__ == "__main__":
    main()
