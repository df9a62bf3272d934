"""Margin and accuracy measurements on raw logits.

The top-2 margin of a logit vector is the gap between its largest and
second largest entries; a weight perturbation changes the prediction
exactly when it pushes that gap to or below zero in favor of another
class. All margins here are measured on raw logits, after the model's
logit scale but before any clamp or training margin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import Tensor


@dataclass
class MarginRecord:
    """Per-sample prediction and top-2 margin, optionally all class gaps."""

    sample_id: int
    predicted: int
    margin: float
    class_margins: np.ndarray | None = None


def _as_logit_array(logits) -> np.ndarray:
    if isinstance(logits, Tensor):
        return logits.data
    return np.asarray(logits, dtype=np.float64)


def top2_margin(logits) -> float:
    """Largest minus second largest logit; exactly zero on a tie."""
    v = _as_logit_array(logits).reshape(-1)
    if v.shape[0] < 2:
        raise DimensionError("top2_margin needs at least 2 classes, got %d" % v.shape[0])
    top_pair = np.partition(v, v.shape[0] - 2)[-2:]
    return float(top_pair[1] - top_pair[0]) if top_pair[1] >= top_pair[0] \
        else float(top_pair[0] - top_pair[1])


def top2_margins(logits) -> np.ndarray:
    """Row-wise top-2 margins of a [batch x classes] logit block."""
    block = _as_logit_array(logits)
    if block.ndim != 2 or block.shape[1] < 2:
        raise DimensionError("top2_margins needs a 2-d block with >= 2 classes")
    k = block.shape[1]
    part = np.partition(block, k - 2, axis=1)
    return part[:, k - 1] - part[:, k - 2]


def class_margins(logits) -> np.ndarray:
    """Gaps from the predicted logit to every other class, in index order."""
    v = _as_logit_array(logits).reshape(-1)
    if v.shape[0] < 2:
        raise DimensionError("class_margins needs at least 2 classes, got %d" % v.shape[0])
    pred = int(np.argmax(v))
    return np.delete(v[pred] - v, pred)


def predict(logits) -> int:
    """Index of the largest logit; ties resolve to the lowest index."""
    v = _as_logit_array(logits).reshape(-1)
    if v.shape[0] < 1:
        raise DimensionError("predict needs a non-empty logit vector")
    return int(np.argmax(v))


def predict_batch(logits) -> np.ndarray:
    block = _as_logit_array(logits)
    if block.ndim != 2:
        raise DimensionError("predict_batch needs a 2-d block")
    return np.argmax(block, axis=1)


def margin_records(logits_block, start_id: int = 0, with_class_margins: bool = False) -> list[MarginRecord]:
    """Build per-sample records from a [batch x classes] logit block."""
    block = _as_logit_array(logits_block)
    margins = top2_margins(block)
    preds = predict_batch(block)
    out = []
    for i in range(block.shape[0]):
        cm = class_margins(block[i]) if with_class_margins else None
        out.append(MarginRecord(start_id + i, int(preds[i]), float(margins[i]), cm))
    return out


def mlm(records: Iterable[MarginRecord]) -> float:
    """Mean logit margin: the arithmetic mean of per-sample top-2 margins."""
    margins = [r.margin for r in records]
    if not margins:
        raise ContractError("mlm of an empty record list")
    return float(np.mean(margins))


def neuron_margin(preactivation, threshold):
    """Distance |s - t| between a binary neuron's sum and its threshold."""
    s = np.asarray(preactivation, dtype=np.float64)
    t = np.asarray(threshold, dtype=np.float64)
    out = np.abs(s - t)
    if out.ndim == 0:
        return float(out)
    return out


def accuracy_from_logits(logits_block, labels: Sequence[int]) -> float:
    preds = predict_batch(logits_block)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != preds.shape[0]:
        raise DimensionError("got %d labels for %d rows" % (y.shape[0], preds.shape[0]))
    if y.shape[0] == 0:
        raise ContractError("accuracy of an empty batch")
    return float(np.mean(preds == y))


def accuracy(model, dataset, batch_size: int = 1024) -> float:
    """Fraction of dataset samples the model classifies correctly."""
    labels = dataset.labels
    if labels.size and (labels.min() < 0 or labels.max() >= dataset.num_classes):
        raise ContractError("dataset labels fall outside [0, num_classes)")
    correct = 0
    n = dataset.inputs.shape[0]
    for lo in range(0, n, batch_size):
        chunk = dataset.inputs[lo:lo + batch_size]
        preds = predict_batch(model.forward(chunk))
        correct += int(np.sum(preds == labels[lo:lo + batch_size]))
    if n == 0:
        raise ContractError("accuracy of an empty dataset")
    return correct / n
