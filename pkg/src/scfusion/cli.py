"""Command-line entry point: analyze / train / eval / bench.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error. The
SCFUSE_THREADS environment variable caps BLAS worker threads; it is applied
before numpy is imported, which is why this module defers all heavy imports
into the command handlers.
"""

import argparse
import os
import sys
import time


class UsageError(Exception):
    """Bad input (missing file, unparseable spec): exit code 2."""


def _apply_thread_cap():
    cap = os.environ.get("SCFUSE_THREADS")
    if not cap:
        return
    for var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _load_spec(args):
    from . import models as M

    if getattr(args, "preset", None):
        specs = M.presets()
        if args.preset not in specs:
            raise UsageError(
                f"unknown preset {args.preset!r}; available: {', '.join(sorted(specs))}"
            )
        return specs[args.preset]
    path = args.spec
    if not os.path.isfile(path):
        raise UsageError(f"spec file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return M.parse_spec(f.read(), name=os.path.basename(path))
    except ValueError as e:
        raise UsageError(f"cannot parse spec {path}: {e}") from None


def _load_dataset(path):
    from .model_io import load_cifar10_batch

    if not os.path.isfile(path):
        raise UsageError(f"dataset file not found: {path}")
    try:
        return load_cifar10_batch(path)
    except ValueError as e:
        raise UsageError(str(e)) from None


_MAC_NOTE = "costs are MACs (1 multiply-accumulate = 1); elementwise ops are free"


def cmd_analyze(args):
    from fractions import Fraction

    from . import complexity as X
    from . import models as M

    if args.table2:
        cells = X.table2()
        print("reduction ratio rho (MACs, closed-form bound, k=3)")
        print(f"# {_MAC_NOTE}")
        alphas = (2, 4, 8)
        print("ratio      " + "".join(f"alpha={a:<6}" for a in alphas))
        for ratio in (1, 2):
            row = "".join(f"{float(cells[(a, ratio)]):<12.2f}" for a in alphas)
            print(f"c_out/c_in={ratio}  {row}")
        return 0

    spec = _load_spec(args)
    if args.alpha is not None:
        spec = M.substitute_scfusion(spec, Fraction(args.alpha))
    reports, totals = X.model_cost(spec)

    cols = ("layer", "kind", "h*w", "base MACs", "exact MACs", "bound MACs",
            "rho", "rho(bound)", "base params", "exact params")
    rows = []
    for r in reports:
        rows.append((r.layer_name, r.kind, f"{r.h_out}x{r.w_out}",
                     str(r.baseline_macs), str(r.scfusion_macs),
                     str(r.scfusion_macs_bound),
                     f"{float(r.rho_macs):.2f}", f"{float(r.rho_macs_bound):.2f}",
                     str(r.baseline_params), str(r.scfusion_params)))
    widths = [max(len(c), *(len(row[i]) for row in rows)) if rows else len(c)
              for i, c in enumerate(cols)]
    print(f"# {_MAC_NOTE}")
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for row in rows:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    print(f"conv totals: baseline {totals.conv_baseline_macs} MACs, "
          f"exact {totals.conv_scfusion_macs}, bound {totals.conv_scfusion_macs_bound}; "
          f"rho {float(totals.rho_conv_macs):.2f} "
          f"(bound {float(totals.rho_conv_macs_bound):.2f})")
    print(f"conv params: baseline {totals.conv_baseline_params}, "
          f"exact {totals.conv_scfusion_params}; "
          f"rho {float(totals.rho_conv_params):.2f} "
          f"(bound {float(totals.rho_conv_params_bound):.2f})")
    print(f"model totals (fc uncompressed): {totals.model_baseline_macs} -> "
          f"{totals.model_scfusion_macs} MACs, "
          f"{totals.model_baseline_params} -> {totals.model_scfusion_params} params")

    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write(f"# {_MAC_NOTE}\n")
            f.write("layer,kind,compressed,h_out,w_out,baseline_macs,"
                    "scfusion_macs,scfusion_macs_bound,baseline_params,"
                    "scfusion_params,scfusion_params_bound,rho_macs,rho_macs_bound\n")
            for r in reports:
                f.write(f"{r.layer_name},{r.kind},{int(r.compressed)},"
                        f"{r.h_out},{r.w_out},{r.baseline_macs},"
                        f"{r.scfusion_macs},{r.scfusion_macs_bound},"
                        f"{r.baseline_params},{r.scfusion_params},"
                        f"{r.scfusion_params_bound},"
                        f"{float(r.rho_macs):.6f},{float(r.rho_macs_bound):.6f}\n")
        print(f"wrote {args.csv}")
    return 0


def _parse_schedule(text):
    if not text:
        return ()
    out = []
    for part in text.split(","):
        epoch, _, lr = part.partition(":")
        out.append((int(epoch), float(lr)))
    return tuple(out)


def cmd_train(args):
    from fractions import Fraction

    from . import model_io, models as M
    from . import train as TR
    from .models import ResBlockD, SCFusionD

    spec = _load_spec(args)
    if args.alpha is not None:
        spec = M.substitute_scfusion(spec, Fraction(args.alpha))
    if args.ablate:
        flags = {"A": dict(sc=False, add=False, inv=False),
                 "B": dict(sc=True, add=False, inv=False),
                 "C": dict(sc=True, add=True, inv=False),
                 "D": dict(sc=True, add=True, inv=True)}[args.ablate]
        import dataclasses
        new_layers = []
        for d in spec.layers:
            if isinstance(d, SCFusionD) or (isinstance(d, ResBlockD) and d.alpha is not None):
                new_layers.append(dataclasses.replace(d, **flags))
            else:
                new_layers.append(d)
        spec = dataclasses.replace(spec, layers=new_layers)

    images, labels = _load_dataset(args.data)
    eval_images = eval_labels = None
    if args.eval_data:
        eval_images, eval_labels = _load_dataset(args.eval_data)

    model = M.build(spec, seed=args.seed)
    cfg = TR.SGDConfig(lr=args.lr, momentum=args.momentum,
                       schedule=_parse_schedule(args.schedule),
                       weight_decay=args.weight_decay)

    log_lines = [TR.LOG_HEADER]
    print(TR.LOG_HEADER)

    def on_epoch(row):
        line = row.csv_row()
        log_lines.append(line)
        print(line, flush=True)

    TR.train(model, images, labels, cfg, epochs=args.epochs, seed=args.seed,
             batch_size=args.batch_size, augment=not args.no_augment,
             eval_images=eval_images, eval_labels=eval_labels, on_epoch=on_epoch)

    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            f.write("\n".join(log_lines) + "\n")
    if args.out:
        model_io.save(model, args.out)
        print(f"saved weights to {args.out}")
    return 0


def cmd_eval(args):
    from . import model_io
    from .train import evaluate

    if not os.path.isfile(args.archive):
        raise UsageError(f"archive not found: {args.archive}")
    model = model_io.load(args.archive)
    images, labels = _load_dataset(args.data)
    acc = evaluate(model, images, labels)
    print(f"accuracy {acc:.6f} ({int(round(acc * len(images)))}/{len(images)})")
    return 0


def _median(xs):
    xs = sorted(xs)
    mid = len(xs) // 2
    return xs[mid] if len(xs) % 2 else 0.5 * (xs[mid - 1] + xs[mid])


def cmd_bench(args):
    import platform

    import numpy as np
    from threadpoolctl import threadpool_limits

    from . import conv as C
    from .kernels import apply_mask, make_mask_pair

    k = args.k
    geom = C.ConvGeometry(k, 1, k // 2)
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((args.batch, args.c_in, args.h, args.w)).astype(np.float32)
    w = rng.standard_normal((args.c_out, args.c_in, k, k)).astype(np.float32)
    pair = make_mask_pair(k)
    ho, wo = geom.out_hw(args.h, args.w)

    def time_path(fn, analytic):
        counter = C.MacCounter()
        fn(counter)  # counted run, also first warmup
        measured = counter.macs
        for _ in range(max(0, args.warmup - 1)):
            fn(None)
        times = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            fn(None)
            times.append(time.perf_counter() - t0)
        return _median(times), measured, measured == analytic

    with threadpool_limits(limits=1):  # timing mode is single-threaded
        dense_t, dense_macs, dense_ok = time_path(
            lambda c: C.conv2d_dense(x, w, geom, c),
            args.batch * args.c_out * args.c_in * k * k * ho * wo)
        results = [("dense", dense_t, dense_macs, dense_ok, k * k)]
        for label, grid in (("even", pair.even), ("odd", pair.odd)):
            wm = apply_mask(w, grid)
            nnz = int(grid.sum())
            t, macs, ok = time_path(
                lambda c, wm=wm, grid=grid: C.conv2d_sparse(x, wm, grid, geom, c),
                args.batch * args.c_out * args.c_in * nnz * ho * wo)
            results.append((label, t, macs, ok, nnz))

    print("zero-skipping convolution benchmark (single-threaded timing)")
    print(f"machine: {platform.platform()} | python {platform.python_version()} "
          f"| numpy {np.__version__}")
    print(f"case: batch={args.batch} c_in={args.c_in} c_out={args.c_out} "
          f"k={k} map={args.h}x{args.w} stride=1 pad={k // 2} "
          f"warmup={args.warmup} repeats={args.repeats}")
    all_ok = True
    for label, t, macs, ok, taps in results:
        line = (f"{label:<6} median {t * 1e3:8.3f} ms  taps {taps:>2}  "
                f"MACs {macs:>12}  analytic match: {'yes' if ok else 'NO'}")
        if label != "dense":
            line += (f"  time ratio {t / dense_t:.3f}x"
                     f"  speedup {dense_t / t:.2f}x")
        print(line)
        all_ok = all_ok and ok
    if not all_ok:
        print("error: executed MACs disagree with the analytic count", file=sys.stderr)
        return 1
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="scfusion",
        description="Sparse-complementary fusion: cost analyzer, trainer, "
                    "evaluator and zero-skipping benchmark.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="analytic MAC/parameter report for a model spec")
    src = pa.add_mutually_exclusive_group()
    src.add_argument("--spec", help="model spec file (line format, see README)")
    src.add_argument("--preset", help="built-in spec name, e.g. tiny-vgg")
    pa.add_argument("--alpha", help="substitute convs (except the first) at this "
                                    "compression level, e.g. 4 or 8/3")
    pa.add_argument("--table2", action="store_true",
                    help="print the k=3 reduction-ratio grid for alpha in "
                         "{2,4,8} and c_out/c_in in {1,2}")
    pa.add_argument("--csv", help="also write the per-layer report as CSV")
    pa.set_defaults(func=cmd_analyze)

    pt = sub.add_parser("train", help="train a model on a CIFAR-10-format batch file")
    src = pt.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="model spec file")
    src.add_argument("--preset", help="built-in spec name, e.g. tiny-vgg-scfusion-4")
    pt.add_argument("--data", required=True, help="CIFAR-10 binary batch file")
    pt.add_argument("--eval-data", help="separate eval batch (default: train set)")
    pt.add_argument("--epochs", type=int, default=20)
    pt.add_argument("--lr", type=float, default=0.05)
    pt.add_argument("--momentum", type=float, default=0.9)
    pt.add_argument("--weight-decay", type=float, default=0.0)
    pt.add_argument("--schedule", default="",
                    help="lr step drops as epoch:lr[,epoch:lr...]")
    pt.add_argument("--batch-size", type=int, default=50)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--alpha", help="substitute convs before training")
    pt.add_argument("--ablate", choices=("A", "B", "C", "D"),
                    help="apply an ablation configuration to all fusion layers")
    pt.add_argument("--no-augment", action="store_true",
                    help="disable pad/crop/flip augmentation")
    pt.add_argument("--out", help="write trained weights to this archive")
    pt.add_argument("--log", help="write the per-epoch CSV log to this file")
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("eval", help="top-1 accuracy of an archive on a batch file")
    pe.add_argument("--archive", required=True)
    pe.add_argument("--data", required=True)
    pe.set_defaults(func=cmd_eval)

    pb = sub.add_parser("bench", help="dense vs zero-skipping wall-time comparison")
    pb.add_argument("--k", type=int, default=3)
    pb.add_argument("--c-in", type=int, default=64)
    pb.add_argument("--c-out", type=int, default=64)
    pb.add_argument("--h", type=int, default=32)
    pb.add_argument("--w", type=int, default=32)
    pb.add_argument("--batch", type=int, default=1)
    pb.add_argument("--warmup", type=int, default=3)
    pb.add_argument("--repeats", type=int, default=15)
    pb.add_argument("--seed", type=int, default=0)
    pb.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze" and not (args.table2 or args.spec or args.preset):
        parser.error("analyze needs --spec, --preset or --table2")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
