"""Command line interface.

Subcommands:

    train      fit a quantized or binarized classifier and save it
    eval-ber   sweep bit error rates against a saved model
    margins    per-sample logit margins of a saved model
    flip-demo  show the value effect of single stored-bit flips
    plot       combine sweep tables into one figure

Every report path writes its delimited table and renders a PNG next to
it. Exit codes: 0 success, 1 runtime or numeric failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .datasets import DATA_DIR_ENV, Dataset, blobs_split, data_dir, load_fashion
from .errors import McelqError, UsageError
from .faults import DEFAULT_BERS, DEFAULT_TRIALS, ber_sweep, single_flip_delta
from .losses import LossSpec
from .metrics import accuracy, margin_records, mlm
from .modelio import load_model, save_model
from .network import TrainConfig, build_mlp, train_model
from .quantization import SUPPORTED_BITS, QuantScheme
from .results import (emit_plot_script, fmt, read_sweep_csv, write_sweep_csv,
                      write_training_csv)

HIDDEN = (256, 128)


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=("fashion", "blobs"), default="blobs",
                   help="fashion needs IDX files on disk; blobs is synthetic")
    p.add_argument("--data-dir", default=None,
                   help="directory holding dataset files (default: $%s or .)" % DATA_DIR_ENV)


def _load_split(args, split: str, seed: int) -> Dataset:
    if args.dataset == "fashion":
        return load_fashion(data_dir(args.data_dir), split)
    return blobs_split(seed, split)


def _resolve_margin(loss: str, margin: float | None) -> float:
    if margin is not None:
        if margin < 0.0:
            raise UsageError("--m must be >= 0, got %g" % margin)
        return margin
    return 1.0 if loss == "hinge" else 0.0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcelq",
        description="Train small quantized classifiers with margin losses "
                    "and measure their tolerance to weight bit errors.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a classifier and save it")
    _add_dataset_flags(train)
    train.add_argument("--bits", type=int, choices=SUPPORTED_BITS, default=4,
                       help="weight bit width; 1 selects the binarized variant")
    train.add_argument("--loss", choices=("cel", "celm", "mcel", "hinge"), default="cel")
    train.add_argument("--m", type=float, default=None,
                       help="logit margin (default 0; hinge defaults to 1)")
    train.add_argument("--L", type=float, default=100.0, help="logit bound for mcel")
    train.add_argument("--logit-scale", type=float, default=1.0)
    train.add_argument("--epochs", type=int, default=100)
    train.add_argument("--batch-size", type=int, default=256)
    train.add_argument("--lr", type=float, default=1e-3)
    train.add_argument("--step-size", type=int, default=10)
    train.add_argument("--gamma", type=float, default=0.5)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", default="mcelq-out", help="output directory")

    evb = sub.add_parser("eval-ber", help="accuracy under stochastic weight bit flips")
    _add_dataset_flags(evb)
    evb.add_argument("--model", required=True, help="model file from train")
    evb.add_argument("--bers", default=",".join(str(b) for b in DEFAULT_BERS),
                     help="comma separated bit error rates")
    evb.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    evb.add_argument("--seed", type=int, default=0, help="master seed of the sweep")
    evb.add_argument("--out", default="mcelq-out")

    marg = sub.add_parser("margins", help="per-sample logit margins of a saved model")
    _add_dataset_flags(marg)
    marg.add_argument("--model", required=True)
    marg.add_argument("--out", default="mcelq-out")

    demo = sub.add_parser("flip-demo", help="value effect of single stored-bit flips")
    demo.add_argument("--bits", type=int, choices=SUPPORTED_BITS, default=4)
    demo.add_argument("--code", type=int, default=None,
                      help="single code to flip; omit to sweep all codes")
    demo.add_argument("--position", type=int, default=None,
                      help="single bit position; omit to sweep all positions")
    demo.add_argument("--v-min", type=float, default=-1.0)
    demo.add_argument("--v-max", type=float, default=1.0)

    plot = sub.add_parser("plot", help="combine sweep tables into one figure")
    plot.add_argument("--csv", action="append", required=True,
                      help="sweep table; repeat for several curves")
    plot.add_argument("--labels", default=None, help="comma separated curve labels")
    plot.add_argument("--out", default="mcelq-out")
    return parser


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    margin = _resolve_margin(args.loss, args.m)
    if args.L <= 0:
        raise UsageError("--L must be > 0, got %g" % args.L)
    if args.logit_scale <= 0:
        raise UsageError("--logit-scale must be > 0, got %g" % args.logit_scale)
    if not 0.0 < args.gamma <= 1.0:
        raise UsageError("--gamma must lie in (0, 1], got %g" % args.gamma)
    for flag, value in (("--epochs", args.epochs), ("--batch-size", args.batch_size),
                        ("--step-size", args.step_size)):
        if value < 1:
            raise UsageError("%s must be >= 1, got %d" % (flag, value))
    if args.lr <= 0:
        raise UsageError("--lr must be > 0, got %g" % args.lr)
    spec = LossSpec(kind=args.loss, margin=margin, bound=args.L,
                    logit_scale=args.logit_scale)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                      step_size=args.step_size, gamma=args.gamma, seed=args.seed,
                      loss=spec)
    train_set = _load_split(args, "train", args.seed)
    test_set = _load_split(args, "test", args.seed)
    model = build_mlp(train_set.dim, train_set.num_classes, args.bits,
                      hidden=HIDDEN, logit_scale=args.logit_scale, seed=args.seed)
    print("training %s on %s: %d samples, %d-bit weights, loss %s (m=%g, L=%g)"
          % (model.arch, train_set.name, train_set.num_samples, args.bits,
             spec.display_name, spec.margin, spec.bound))

    def progress(stats):
        print("epoch %3d  loss %s  acc %s  mlm %s  lr %s"
              % (stats.epoch, fmt(stats.loss), fmt(stats.accuracy),
                 fmt(stats.mlm), fmt(stats.lr)))

    log = train_model(model, train_set, cfg, progress=progress)
    out = _out_dir(args)
    save_model(model, out / "model.bin")
    write_training_csv(log, out / "training_log.csv")
    from .plots import save_training_plot
    save_training_plot(log, out / "training_curves.png")
    test_acc = accuracy(model, test_set)
    print("final clean test accuracy %s" % fmt(test_acc))
    print("wrote %s, %s, %s" % (out / "model.bin", out / "training_log.csv",
                                out / "training_curves.png"))
    return 0


def _parse_bers(text: str) -> list[float]:
    try:
        bers = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as err:
        raise UsageError("--bers must be comma separated numbers: %s" % err) from None
    if not bers:
        raise UsageError("--bers needs at least one rate")
    for b in bers:
        if not 0.0 <= b <= 1.0:
            raise UsageError("bit error rates must lie in [0, 1], got %g" % b)
    return bers


def cmd_eval_ber(args) -> int:
    bers = _parse_bers(args.bers)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1, got %d" % args.trials)
    model = load_model(args.model)
    test_set = _load_split(args, "test", model.seed)
    result = ber_sweep(model, test_set, bers=bers, trials=args.trials,
                       master_seed=args.seed)
    out = _out_dir(args)
    write_sweep_csv(result, out / "ber_sweep.csv")
    from .plots import save_ber_plot
    save_ber_plot([(Path(args.model).stem, result.rows)], out / "ber_sweep.png")
    for ber in result.bers:
        print("ber %-8s mean accuracy %s" % (fmt(ber), fmt(result.mean_accuracy(ber))))
    print("wrote %s and %s" % (out / "ber_sweep.csv", out / "ber_sweep.png"))
    return 0


def cmd_margins(args) -> int:
    model = load_model(args.model)
    test_set = _load_split(args, "test", model.seed)
    records = []
    for lo in range(0, test_set.num_samples, 2048):
        logits = model.forward(test_set.inputs[lo:lo + 2048])
        records.extend(margin_records(logits, start_id=lo))
    out = _out_dir(args)
    margins_path = out / "margins.csv"
    with open(margins_path, "w", newline="") as f:
        f.write("sample,predicted,margin\n")
        for r in records:
            f.write("%d,%d,%s\n" % (r.sample_id, r.predicted, fmt(r.margin)))
    mean = mlm(records)
    lows = min(r.margin for r in records)
    highs = max(r.margin for r in records)
    summary_path = out / "margins_summary.csv"
    with open(summary_path, "w", newline="") as f:
        f.write("count,mlm,min,max\n")
        f.write("%d,%s,%s,%s\n" % (len(records), fmt(mean), fmt(lows), fmt(highs)))
    from .plots import save_margin_hist
    save_margin_hist([r.margin for r in records], out / "margins_hist.png")
    print("samples %d  mlm %s  min %s  max %s"
          % (len(records), fmt(mean), fmt(lows), fmt(highs)))
    print("wrote %s, %s, %s" % (margins_path, summary_path, out / "margins_hist.png"))
    return 0


def cmd_flip_demo(args) -> int:
    if args.v_min >= args.v_max:
        raise UsageError("need --v-min < --v-max")
    scheme = QuantScheme(args.bits, args.v_min, args.v_max)
    codes = range(scheme.levels) if args.code is None else [args.code]
    positions = range(scheme.bits) if args.position is None else [args.position]
    for code in codes:
        if not 0 <= code <= scheme.code_max:
            raise UsageError("--code must lie in [0, %d], got %d" % (scheme.code_max, code))
    for pos in positions:
        if not 0 <= pos < scheme.bits:
            raise UsageError("--position must lie in [0, %d], got %d" % (scheme.bits - 1, pos))
    print("%d-bit codes over [%g, %g], step %s" % (scheme.bits, scheme.v_min,
                                                   scheme.v_max, fmt(scheme.delta)))
    print("%6s %10s %12s %12s %12s" % ("code", "flip bit", "value", "new value", "|delta|"))
    worst = 0.0
    from .quantization import dequantize
    for code in codes:
        for pos in positions:
            delta = single_flip_delta(code, pos, scheme)
            expected = (1 << pos) * scheme.delta
            worst = max(worst, abs(delta - expected) / expected)
            print("%6d %10d %12s %12s %12s"
                  % (code, pos, fmt(dequantize(code, scheme)),
                     fmt(dequantize(code ^ (1 << pos), scheme)), fmt(delta)))
    bound = (1 << (scheme.bits - 1)) * scheme.delta
    print("per-flip change is 2^i * step, at most %s; worst relative deviation %.3g"
          % (fmt(bound), worst))
    if worst > 1e-9:
        print("flip law violated beyond float rounding", file=sys.stderr)
        return 1
    return 0


def cmd_plot(args) -> int:
    labels = args.labels.split(",") if args.labels else None
    if labels is not None and len(labels) != len(args.csv):
        raise UsageError("got %d labels for %d tables" % (len(labels), len(args.csv)))
    sweeps = []
    for i, path in enumerate(args.csv):
        rows = read_sweep_csv(path)
        sweeps.append((labels[i] if labels else Path(path).stem, rows))
    out = _out_dir(args)
    from .plots import save_ber_plot
    save_ber_plot(sweeps, out / "ber_compare.png")
    emit_plot_script(args.csv, out / "plot_script.py",
                     labels=[label for label, _ in sweeps])
    print("wrote %s and %s" % (out / "ber_compare.png", out / "plot_script.py"))
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval-ber": cmd_eval_ber,
    "margins": cmd_margins,
    "flip-demo": cmd_flip_demo,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        print("error: %s" % err, file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print("error: %s" % err, file=sys.stderr)
        return 1
    except McelqError as err:
        print("error: %s" % err, file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
