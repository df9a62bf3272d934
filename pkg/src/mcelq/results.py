"""Delimited result tables and the standalone plotting script.

Tables are comma-separated with a header row and LF line endings.
Decimal values carry 6 significant digits, which round-trips: parsing
a written table and writing it again reproduces the same bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .errors import ContractError, DataFormatError
from .faults import BerSweepResult, SweepRow
from .network import EpochStats

SWEEP_HEADER = ("ber", "trial", "accuracy", "mean_margin")
TRAINING_HEADER = ("epoch", "loss", "accuracy", "mlm", "lr")


def fmt(value: float) -> str:
    """6 significant digits, plain decimal or exponent as %g chooses."""
    return "%.6g" % value


def _write_rows(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_sweep_csv(result: BerSweepResult, path) -> None:
    _write_rows(path, SWEEP_HEADER,
                ((fmt(r.ber), r.trial, fmt(r.accuracy), fmt(r.mean_margin))
                 for r in result.rows))


def write_training_csv(log: list[EpochStats], path) -> None:
    _write_rows(path, TRAINING_HEADER,
                ((r.epoch, fmt(r.loss), fmt(r.accuracy), fmt(r.mlm), fmt(r.lr))
                 for r in log))


def write_results_csv(result, path) -> None:
    """Write either result table; the type picks the layout."""
    if isinstance(result, BerSweepResult):
        write_sweep_csv(result, path)
        return
    if isinstance(result, list) and all(isinstance(r, EpochStats) for r in result):
        write_training_csv(result, path)
        return
    raise ContractError("no table layout for %r" % type(result))


def _read_table(path, header) -> list[list[str]]:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        rows = list(reader)
    if not rows or tuple(rows[0]) != header:
        raise DataFormatError("%s: expected header %s" % (path, ",".join(header)))
    width = len(header)
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataFormatError("%s: line %d has %d fields, expected %d"
                                  % (path, i, len(row), width))
    return rows[1:]


def read_sweep_csv(path) -> list[SweepRow]:
    rows = _read_table(path, SWEEP_HEADER)
    return [SweepRow(ber=float(r[0]), trial=int(r[1]), accuracy=float(r[2]),
                     mean_margin=float(r[3])) for r in rows]


def read_training_csv(path) -> list[EpochStats]:
    rows = _read_table(path, TRAINING_HEADER)
    return [EpochStats(epoch=int(r[0]), loss=float(r[1]), accuracy=float(r[2]),
                       mlm=float(r[3]), lr=float(r[4])) for r in rows]


PLOT_SCRIPT_TEMPLATE = '''#!/usr/bin/env python3
"""Mean accuracy over bit error rate, one curve per input table."""
import csv
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

INPUTS = {inputs}
OUTPUT = {output!r}

fig, ax = plt.subplots(figsize=(6.0, 4.0))
for label, path in INPUTS:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    acc = defaultdict(list)
    for row in rows:
        acc[float(row["ber"])].append(float(row["accuracy"]))
    bers = sorted(acc)
    means = [sum(acc[b]) / len(acc[b]) for b in bers]
    ax.plot(bers, means, marker="o", label=label)
ax.set_xscale("symlog", linthresh={linthresh!r})
ax.set_xlabel("bit error rate")
ax.set_ylabel("mean accuracy")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(OUTPUT, dpi=150)
print("wrote", OUTPUT)
'''


def emit_plot_script(csv_paths, script_path, labels=None,
                     linthresh: float = 1e-3) -> str:
    """Write a standalone script that plots the given sweep tables.

    The script references the paths exactly as given and draws mean
    accuracy against bit error rate on a symmetric log axis (so a zero
    rate still has a place on the axis). Returns the script text.
    """
    csv_paths = [str(p) for p in csv_paths]
    if not csv_paths:
        raise ContractError("need at least one table to plot")
    if labels is None:
        labels = [Path(p).stem for p in csv_paths]
    if len(labels) != len(csv_paths):
        raise ContractError("got %d labels for %d tables" % (len(labels), len(csv_paths)))
    script_path = Path(script_path)
    output = script_path.stem + ".png"
    inputs = "[" + ", ".join("(%r, %r)" % (l, p) for l, p in zip(labels, csv_paths)) + "]"
    text = PLOT_SCRIPT_TEMPLATE.format(inputs=inputs, output=output, linthresh=linthresh)
    script_path.parent.mkdir(parents=True, exist_ok=True)
    with open(script_path, "w", newline="") as f:
        f.write(text)
    return text
