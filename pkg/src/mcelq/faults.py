"""Stochastic bit flips on stored weight codes.

Weights are quantized to their code grid, each code bit is flipped
independently with probability p (0->1 and 1->0 equally likely), and
the damaged codes are dequantized into a frozen copy of the model.
Activations, biases, and thresholds stay clean, and nothing is flipped
during training; this models faulty weight memory read at inference
time.

Every (bit error rate, trial) pair draws from its own counter-derived
random stream, so sweeps are reproducible row by row regardless of
execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, EncodingError
from .metrics import accuracy_from_logits, top2_margins
from .network import BinFcLayer, Model, QuantFcLayer
from .quantization import (CodeTensor, QuantScheme, dequantize, dequantize_tensor,
                           quantize_tensor)

# a binary weight is one stored bit; code 0 reads back -1, code 1 reads +1
BINARY_SCHEME = QuantScheme(1, -1.0, 1.0)


@dataclass(frozen=True)
class ErrorModel:
    """Independent symmetric flips at rate p on stored weight bits."""

    p: float
    scope: str = "weights"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ContractError("bit error rate must lie in [0, 1], got %r" % (self.p,))
        if self.scope != "weights":
            raise ContractError("only weight memory is subject to errors")


@dataclass(frozen=True)
class RngStream:
    """Counter-derived generators: one independent stream per (ber, trial)."""

    master_seed: int

    def generator(self, ber_index: int, trial_index: int) -> np.random.Generator:
        if ber_index < 0 or trial_index < 0:
            raise ContractError("stream indices must be >= 0")
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(ber_index, trial_index))
        return np.random.Generator(np.random.PCG64(seq))


def flip_bits(block: CodeTensor, p: float, rng: np.random.Generator) -> CodeTensor:
    """Flip each stored bit independently with probability p.

    Returns a new code block; the input is never touched. At p = 1 the
    result is the bitwise complement within the scheme's width.
    """
    if not 0.0 <= p <= 1.0:
        raise ContractError("bit error rate must lie in [0, 1], got %r" % (p,))
    out = block.codes.copy()
    for bit in range(block.scheme.bits):
        hits = rng.random(out.shape) < p
        out ^= hits.astype(np.uint8) << bit
    return CodeTensor(out, block.scheme)


def single_flip_delta(code: int, bit_position: int, scheme: QuantScheme) -> float:
    """Magnitude of the value change from flipping one bit of one code."""
    if not 0 <= bit_position < scheme.bits:
        raise EncodingError("bit position %d out of range for %d bits"
                            % (bit_position, scheme.bits))
    if not 0 <= code <= scheme.code_max:
        raise EncodingError("code %d out of range for %d bits" % (code, scheme.bits))
    flipped = code ^ (1 << bit_position)
    return abs(dequantize(flipped, scheme) - dequantize(code, scheme))


def _perturb_quant_layer(layer: QuantFcLayer, p: float,
                         rng: np.random.Generator) -> QuantFcLayer:
    scheme = layer.weight_scheme()
    codes = quantize_tensor(layer.weights.data, scheme)
    damaged = flip_bits(codes, p, rng)
    return layer.with_weights(dequantize_tensor(damaged))


def _perturb_bin_layer(layer: BinFcLayer, p: float,
                       rng: np.random.Generator) -> BinFcLayer:
    codes = CodeTensor((layer.signed_weights() > 0.0).astype(np.uint8), BINARY_SCHEME)
    damaged = flip_bits(codes, p, rng)
    return layer.with_weights(dequantize_tensor(damaged))


def perturb_model(model: Model, p: float, rng: np.random.Generator) -> Model:
    """Frozen copy of the model with bit errors injected into its weights.

    At p = 0 the copy carries exactly the dequantized clean codes, so
    its forward pass reproduces the unperturbed quantized forward bit
    for bit. Layers are processed in model order and bits in position
    order, so a given generator state maps to one flip pattern.
    """
    if not 0.0 <= p <= 1.0:
        raise ContractError("bit error rate must lie in [0, 1], got %r" % (p,))
    layers = []
    for layer in model.layers:
        if layer.kind == "quant":
            layers.append(_perturb_quant_layer(layer, p, rng))
        else:
            layers.append(_perturb_bin_layer(layer, p, rng))
    return Model(layers, bits=model.bits, logit_scale=model.logit_scale,
                 arch=model.arch, seed=model.seed)


DEFAULT_BERS = (0.0, 0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1)
DEFAULT_TRIALS = 20


@dataclass
class SweepRow:
    ber: float
    trial: int
    accuracy: float
    mean_margin: float


@dataclass
class BerSweepResult:
    """All sweep rows plus enough metadata to reproduce them."""

    rows: list[SweepRow]
    master_seed: int
    bers: tuple[float, ...]
    trials: int
    model_info: dict = field(default_factory=dict)

    def mean_accuracy(self, ber: float) -> float:
        accs = [r.accuracy for r in self.rows if r.ber == ber]
        if not accs:
            raise ContractError("no rows recorded for ber %r" % (ber,))
        return float(np.mean(accs))


def _evaluate(model: Model, dataset, batch_size: int = 2048) -> tuple[float, float]:
    """One pass over the dataset: accuracy and mean top-2 margin."""
    n = dataset.inputs.shape[0]
    acc_sum = 0.0
    margin_sum = 0.0
    for lo in range(0, n, batch_size):
        chunk = dataset.inputs[lo:lo + batch_size]
        logits = model.forward(chunk)
        labels = dataset.labels[lo:lo + batch_size]
        acc_sum += accuracy_from_logits(logits, labels) * chunk.shape[0]
        margin_sum += float(top2_margins(logits).sum())
    return acc_sum / n, margin_sum / n


def ber_sweep(model: Model, dataset, bers=DEFAULT_BERS, trials: int = DEFAULT_TRIALS,
              master_seed: int = 0) -> BerSweepResult:
    """Measure accuracy and margins across bit error rates.

    Each (ber, trial) pair perturbs a fresh copy of the model with its
    own derived stream and evaluates the whole dataset. Rows come back
    sorted by (ber, trial).
    """
    bers = tuple(float(b) for b in bers)
    for b in bers:
        if not 0.0 <= b <= 1.0:
            raise ContractError("bit error rate must lie in [0, 1], got %r" % (b,))
    if trials < 1:
        raise ContractError("need at least one trial, got %r" % (trials,))
    stream = RngStream(master_seed)
    rows: list[SweepRow] = []
    for bi, ber in enumerate(bers):
        for trial in range(trials):
            damaged = perturb_model(model, ber, stream.generator(bi, trial))
            acc, margin = _evaluate(damaged, dataset)
            rows.append(SweepRow(ber=ber, trial=trial, accuracy=acc, mean_margin=margin))
    rows.sort(key=lambda r: (r.ber, r.trial))
    info = {"bits": model.bits, "arch": model.arch,
            "logit_scale": model.logit_scale, "seed": model.seed}
    return BerSweepResult(rows=rows, master_seed=master_seed, bers=bers,
                          trials=trials, model_info=info)
