#!/usr/bin/env python3
"""Desk-scale comparison: dense host vs its fusion substitutions.

Trains tiny-vgg and its scfusion variants on one dataset with identical
hyperparameters, then prints final accuracies next to the analytic MAC and
parameter reductions.
"""

import argparse
import time


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", help="CIFAR-10-format batch (default: synthesize 500 samples)")
    ap.add_argument("--alphas", default="2,4,8")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--schedule", default="10:0.005,15:0.002")
    ap.add_argument("--batch-size", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    from scfusion import complexity as X
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
    names = ["tiny-vgg"] + [f"tiny-vgg-scfusion-{a}" for a in args.alphas.split(",")]

    rows = []
    for name in names:
        spec = M.presets()[name]
        _, totals = X.model_cost(spec)
        model = M.build(spec, seed=args.seed)
        t0 = time.time()
        logs = train(model, images, labels, cfg, epochs=args.epochs,
                     seed=args.seed, batch_size=args.batch_size)
        rows.append((name, logs[-1].eval_acc, float(totals.rho_conv_macs_bound),
                     totals.model_scfusion_params, time.time() - t0))
        print(f"  .. {name}: eval {rows[-1][1]:.3f} in {rows[-1][4]:.0f}s", flush=True)

    print(f"\n{'model':<24} {'eval acc':>9} {'conv rho':>9} {'params':>9} {'time':>7}")
    for name, acc, rho, params, took in rows:
        print(f"{name:<24} {acc:>9.3f} {rho:>8.2f}x {params:>9} {took:>6.0f}s")


if __name__ == "__main__":
    main()
