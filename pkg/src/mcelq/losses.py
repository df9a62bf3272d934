"""Cross-entropy losses with logit margins, plus a multiclass hinge baseline.

The margin variants all reduce to one move: subtract the margin m from
the target logit, then take ordinary cross entropy. Applied to raw
logits that recovers the naive margin loss (celm), which is degenerate
because softmax ignores uniform logit shifts, so the network can satisfy
any margin by scaling instead of separating. Bounding logits first with
a scaled tanh removes that escape: the margin is then demanded inside a
fixed interval [-L, L], which is what MCEL does.

Everything is computed through log-sum-exp, so margins in the hundreds
stay finite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor
from .errors import ContractError, DimensionError
from .tensor import Tensor

LOSS_KINDS = ("cel", "celm", "mcel", "hinge")

# display label for the hinge baseline in reports and logs
HINGE_LABEL = "hinge (artifact variant)"


@dataclass(frozen=True)
class LossSpec:
    """Which loss to train with, plus margin m, bound L, and logit scale."""

    kind: str = "cel"
    margin: float = 0.0
    bound: float = 100.0
    logit_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ContractError("loss kind must be one of %r, got %r" % (LOSS_KINDS, self.kind))
        if not self.margin >= 0.0:
            raise ContractError("margin must be >= 0, got %r" % (self.margin,))
        if not self.bound > 0.0:
            raise ContractError("bound L must be > 0, got %r" % (self.bound,))
        if not self.logit_scale > 0.0:
            raise ContractError("logit scale must be > 0, got %r" % (self.logit_scale,))
        if self.kind == "mcel" and rls(self.margin, self.bound) > 1.0:
            warnings.warn(
                "relative logit separation m/(2L) = %.3f exceeds 1; the margin "
                "target is unreachable and training will saturate the bound"
                % rls(self.margin, self.bound), stacklevel=2)

    @property
    def display_name(self) -> str:
        return HINGE_LABEL if self.kind == "hinge" else self.kind


def _prep(logits, target) -> tuple[Tensor, np.ndarray]:
    """Promote logits to 2-d [batch x classes] and targets to an index array."""
    z = tensor.as_tensor(logits)
    if z.data.ndim == 1:
        z = tensor.reshape(z, (1, z.data.shape[0]))
    elif z.data.ndim != 2:
        raise DimensionError("logits must be 1-d or 2-d, got shape %r" % (z.shape,))
    classes = z.data.shape[1]
    if classes < 2:
        raise DimensionError("need at least 2 classes, got %d" % classes)
    idx = np.asarray(target, dtype=np.int64).reshape(-1)
    if idx.shape[0] != z.data.shape[0]:
        raise DimensionError(
            "got %d targets for %d logit rows" % (idx.shape[0], z.data.shape[0]))
    if np.any(idx < 0) or np.any(idx >= classes):
        raise ContractError("target index out of range for %d classes" % classes)
    return z, idx


def _margin_onehot(shape: tuple[int, ...], idx: np.ndarray, m: float) -> np.ndarray:
    hot = np.zeros(shape, dtype=np.float64)
    hot[np.arange(shape[0]), idx] = m
    return hot


def cel(logits, target) -> Tensor:
    """Cross-entropy of softmax(logits) against the target class.

    Accepts a single logit vector or a [batch x classes] tensor; batches
    reduce by arithmetic mean.
    """
    z, idx = _prep(logits, target)
    per_row = tensor.sub(tensor.logsumexp(z, axis=1), tensor.take_targets(z, idx))
    return tensor.mean(per_row)


def apply_margin(logits, target, m: float) -> Tensor:
    """Subtract m from the target logit only; all other entries unchanged."""
    if not m >= 0.0:
        raise ContractError("margin must be >= 0, got %r" % (m,))
    z, idx = _prep(logits, target)
    return tensor.sub(z, Tensor(_margin_onehot(z.data.shape, idx, m)))


def celm(logits, target, m: float) -> Tensor:
    """Cross entropy with a raw-logit margin: cel after apply_margin.

    Degenerate as a training loss: a uniform shift or rescale of the
    logits absorbs any m without changing class separation.
    """
    z, idx = _prep(logits, target)
    return cel(apply_margin(z, idx, m), idx)


def tanh_clamp(logits, bound: float) -> Tensor:
    """Smoothly bound logits into (-L, L) via L * tanh(logits / L)."""
    if not bound > 0.0:
        raise ContractError("bound L must be > 0, got %r" % (bound,))
    z = tensor.as_tensor(logits)
    return tensor.mul(tensor.tanh(tensor.div(z, bound)), bound)


def rls(m: float, bound: float) -> float:
    """Relative logit separation m / (2L): the fraction of the usable
    logit interval a trained sample must clear."""
    if not m >= 0.0:
        raise ContractError("margin must be >= 0, got %r" % (m,))
    if not bound > 0.0:
        raise ContractError("bound L must be > 0, got %r" % (bound,))
    return m / (2.0 * bound)


def mcel(logits, target, m: float, bound: float = 100.0) -> Tensor:
    """Margin cross-entropy: clamp logits to [-L, L], then margin + cel.

    The clamp makes the margin binding: inside a bounded interval the
    only way to beat m is genuine separation between the target logit
    and the rest, which is what bit-error tolerance needs.
    """
    z, idx = _prep(logits, target)
    clamped = tanh_clamp(z, bound)
    return cel(apply_margin(clamped, idx, m), idx)


def hinge_multiclass(logits, target, margin: float = 1.0) -> Tensor:
    """Sum of per-class hinges max(0, margin - (y_t - y_j)) over j != t.

    One of several multiclass hinge generalizations; this sum-over-
    violations form is the variant used throughout this package.
    """
    if not margin >= 0.0:
        raise ContractError("margin must be >= 0, got %r" % (margin,))
    z, idx = _prep(logits, target)
    rows = z.data.shape[0]
    target_col = tensor.reshape(tensor.take_targets(z, idx), (rows, 1))
    viol = tensor.relu(tensor.add(tensor.sub(z, target_col), margin))
    keep = np.ones_like(z.data)
    keep[np.arange(rows), idx] = 0.0
    per_row = tensor.tsum(tensor.mul(viol, Tensor(keep)), axis=1)
    return tensor.mean(per_row)


def make_loss(spec: LossSpec):
    """Bind a LossSpec to a callable(logits, targets) -> scalar tensor."""
    if spec.kind == "cel":
        return lambda logits, target: cel(logits, target)
    if spec.kind == "celm":
        return lambda logits, target: celm(logits, target, spec.margin)
    if spec.kind == "mcel":
        return lambda logits, target: mcel(logits, target, spec.margin, spec.bound)
    return lambda logits, target: hinge_multiclass(logits, target, spec.margin)
