"""Fully connected classifiers built from quantized and binarized layers.

The stock architecture is a three-layer MLP: two hidden layers of 256
and 128 relu units and a linear output layer, all with fake-quantized
weights. The binarized variant swaps the hidden layers for sign-
activation layers with learnable per-neuron thresholds and keeps a
1-bit output layer producing real-valued logits, so logit margins stay
well defined.

Training is plain Adam over mini-batches with a stepped learning rate.
Inference never needs gradients; perturbed copies produced by the fault
injector carry frozen weight arrays and skip re-quantization entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import ContractError, DimensionError, NumericError
from .losses import LossSpec, make_loss
from .metrics import top2_margins
from .quantization import (QuantScheme, binarize, binarize_array, fake_quantize,
                           range_from_tensor)
from .tensor import Tensor

ACTIVATIONS = ("relu", "none")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# inputs live in [0, 1]; binarized models split them at the midpoint
INPUT_BINARIZE_THRESHOLD = 0.5


def _kaiming_uniform(rng: np.random.Generator, out_features: int, in_features: int) -> np.ndarray:
    bound = math.sqrt(6.0 / in_features)
    return rng.uniform(-bound, bound, size=(out_features, in_features))


class QuantFcLayer:
    """Fully connected layer with fake-quantized weights and a real bias.

    The quantization range is re-derived from the live weights on every
    forward pass, so it tracks their growth during training. A frozen
    layer (the product of fault injection or any other weight override)
    uses its stored weight array exactly as given.
    """

    kind = "quant"

    def __init__(self, weights: np.ndarray, bias: np.ndarray, bits: int,
                 activation: str = "relu", frozen: bool = False, name: str = "fc"):
        if activation not in ACTIVATIONS:
            raise ContractError("activation must be one of %r, got %r" % (ACTIVATIONS, activation))
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.ndim != 2:
            raise DimensionError("weights must be 2-d, got shape %r" % (weights.shape,))
        if bias.shape != (weights.shape[0],):
            raise DimensionError("bias shape %r does not match %d output units"
                                 % (bias.shape, weights.shape[0]))
        self.weights = Tensor(weights, requires_grad=not frozen, name=name + ".weights")
        self.bias = Tensor(bias, requires_grad=not frozen, name=name + ".bias")
        self.bits = bits
        self.activation = activation
        self.frozen = frozen
        self.name = name

    @classmethod
    def create(cls, in_features: int, out_features: int, bits: int,
               activation: str, rng: np.random.Generator, name: str = "fc") -> "QuantFcLayer":
        weights = _kaiming_uniform(rng, out_features, in_features)
        return cls(weights, np.zeros(out_features), bits, activation, name=name)

    @property
    def in_features(self) -> int:
        return self.weights.data.shape[1]

    @property
    def out_features(self) -> int:
        return self.weights.data.shape[0]

    def weight_scheme(self) -> QuantScheme:
        return range_from_tensor(self.weights.data, self.bits)

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(self.weights.name, self.weights), (self.bias.name, self.bias)]

    def effective_weights(self) -> Tensor:
        if self.frozen:
            return self.weights
        return fake_quantize(self.weights, self.weight_scheme())

    def forward(self, x: Tensor) -> Tensor:
        pre = tensor.add(tensor.matmul(x, tensor.transpose(self.effective_weights())),
                         self.bias)
        if self.activation == "relu":
            return tensor.relu(pre)
        return pre

    def with_weights(self, weights: np.ndarray) -> "QuantFcLayer":
        """Frozen inference copy carrying an externally supplied weight array."""
        return QuantFcLayer(weights, self.bias.data.copy(), self.bits,
                            self.activation, frozen=True, name=self.name)


def qfc_forward(layer: QuantFcLayer, x: Tensor) -> Tensor:
    return layer.forward(x)


def binary_step(x: Tensor, ste_width: float) -> Tensor:
    """+1 where x > 0, else -1; gradient passes where |x| <= ste_width.

    The strict comparison puts x == 0 on the -1 side, matching the
    threshold rule of binary layers. The pass window is matched to the
    spread of the incoming sums, which for a fan-in of n is about
    sqrt(n); a unit window would starve nearly every neuron of gradient.
    """
    if not ste_width > 0.0:
        raise ContractError("ste_width must be > 0, got %r" % (ste_width,))
    data = np.where(x.data > 0.0, 1.0, -1.0)
    inside = np.abs(x.data) <= ste_width

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * inside)

    return tensor.from_op(data, (x,), "binary_step", backward)


class BinFcLayer:
    """Binary layer: sign weights, +-1 activations, learnable thresholds.

    Output unit j fires +1 exactly when the signed sum of its inputs
    exceeds its threshold. Latent real weights carry the training
    signal; the forward pass only ever sees their signs.
    """

    kind = "bin"

    def __init__(self, weights: np.ndarray, thresholds: np.ndarray,
                 frozen: bool = False, name: str = "bfc"):
        weights = np.asarray(weights, dtype=np.float64)
        thresholds = np.asarray(thresholds, dtype=np.float64)
        if weights.ndim != 2:
            raise DimensionError("weights must be 2-d, got shape %r" % (weights.shape,))
        if thresholds.shape != (weights.shape[0],):
            raise DimensionError("threshold shape %r does not match %d output units"
                                 % (thresholds.shape, weights.shape[0]))
        if frozen and not np.all(np.abs(weights) == 1.0):
            raise ContractError("frozen binary layers need +-1 weights")
        self.weights = Tensor(weights, requires_grad=not frozen, name=name + ".weights")
        self.thresholds = Tensor(thresholds, requires_grad=not frozen, name=name + ".thresholds")
        self.frozen = frozen
        self.name = name

    @classmethod
    def create(cls, in_features: int, out_features: int,
               rng: np.random.Generator, name: str = "bfc") -> "BinFcLayer":
        weights = _kaiming_uniform(rng, out_features, in_features)
        return cls(weights, np.zeros(out_features), name=name)

    @property
    def in_features(self) -> int:
        return self.weights.data.shape[1]

    @property
    def out_features(self) -> int:
        return self.weights.data.shape[0]

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(self.weights.name, self.weights),
                (self.thresholds.name, self.thresholds)]

    def signed_weights(self) -> np.ndarray:
        if self.frozen:
            return self.weights.data
        return binarize_array(self.weights.data)

    def forward(self, a: Tensor) -> Tensor:
        w = self.weights if self.frozen else binarize(self.weights)
        sums = tensor.matmul(a, tensor.transpose(w))
        pre = tensor.sub(sums, self.thresholds)
        return binary_step(pre, ste_width=math.sqrt(self.in_features))

    def with_weights(self, weights: np.ndarray) -> "BinFcLayer":
        return BinFcLayer(weights, self.thresholds.data.copy(), frozen=True, name=self.name)


def _pack_signs(signs: np.ndarray) -> np.ndarray:
    return np.packbits(signs > 0.0, axis=-1)


def xnor_preactivations(weight_signs: np.ndarray, activations: np.ndarray,
                        chunk: int = 512) -> np.ndarray:
    """Signed sums via packed XNOR and popcount.

    weight_signs is [units x fan_in] of +-1, activations [batch x fan_in]
    of +-1. Agreement between a weight row and an input row is counted
    on packed bits; the signed sum is 2 * popcount(xnor) - fan_in. Padding
    bits inside the last byte cancel out of the XOR and are subtracted
    as a constant.
    """
    w = np.asarray(weight_signs, dtype=np.float64)
    a = np.asarray(activations, dtype=np.float64)
    if w.ndim != 2 or a.ndim != 2 or w.shape[1] != a.shape[1]:
        raise DimensionError("weight block %r and activation block %r do not align"
                             % (w.shape, a.shape))
    if not (np.all(np.abs(w) == 1.0) and np.all(np.abs(a) == 1.0)):
        raise ContractError("xnor path needs strictly +-1 inputs")
    fan_in = w.shape[1]
    w_bits = _pack_signs(w)
    a_bits = _pack_signs(a)
    pad = 8 * w_bits.shape[1] - fan_in
    out = np.empty((a.shape[0], w.shape[0]), dtype=np.int64)
    for lo in range(0, a.shape[0], chunk):
        hi = min(lo + chunk, a.shape[0])
        xnor = ~(a_bits[lo:hi, None, :] ^ w_bits[None, :, :])
        agree = np.bitwise_count(xnor).sum(axis=-1, dtype=np.int64) - pad
        out[lo:hi] = 2 * agree - fan_in
    return out


def bin_fc_forward(layer: BinFcLayer, activations: np.ndarray) -> np.ndarray:
    """Integer inference path of a binary layer.

    Matches the dense +-1 arithmetic of ``BinFcLayer.forward`` exactly:
    unit j emits +1 when its signed sum strictly exceeds its threshold.
    """
    sums = xnor_preactivations(layer.signed_weights(), activations)
    return np.where(sums > layer.thresholds.data[None, :], 1.0, -1.0)


class Model:
    """An ordered stack of layers plus the constant output logit scale."""

    def __init__(self, layers: list, bits: int, logit_scale: float = 1.0,
                 arch: str = "", seed: int = 0):
        if not layers:
            raise ContractError("a model needs at least one layer")
        if not logit_scale > 0.0:
            raise ContractError("logit scale must be > 0, got %r" % (logit_scale,))
        self.layers = layers
        self.bits = bits
        self.logit_scale = logit_scale
        self.arch = arch or "-".join(
            [str(layers[0].in_features)] + [str(l.out_features) for l in layers])
        self.seed = seed

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_features

    @property
    def in_features(self) -> int:
        return self.layers[0].in_features

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def prepare_inputs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise DimensionError("expected inputs [batch x %d], got %r"
                                 % (self.in_features, x.shape))
        if self.bits == 1:
            return np.where(x > INPUT_BINARIZE_THRESHOLD, 1.0, -1.0)
        return x

    def forward_tensor(self, x: np.ndarray) -> Tensor:
        """Graph-building forward pass; returns scaled raw logits."""
        h: Tensor = Tensor(self.prepare_inputs(x))
        for layer in self.layers:
            h = layer.forward(h)
        return tensor.mul(h, self.logit_scale)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Inference forward pass; returns a plain logit array."""
        return self.forward_tensor(x).data


def model_forward(model: Model, x: np.ndarray) -> np.ndarray:
    return model.forward(x)


def build_mlp(in_features: int, num_classes: int, bits: int,
              hidden: tuple[int, ...] = (256, 128), logit_scale: float = 1.0,
              seed: int = 0) -> Model:
    """Stock three-layer classifier; bits == 1 selects the binarized variant."""
    if num_classes < 2:
        raise ContractError("need at least 2 classes, got %d" % num_classes)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    layers: list = []
    prev = in_features
    for i, width in enumerate(hidden):
        if bits == 1:
            layers.append(BinFcLayer.create(prev, width, rng, name="bfc%d" % i))
        else:
            layers.append(QuantFcLayer.create(prev, width, bits, "relu", rng, name="fc%d" % i))
        prev = width
    layers.append(QuantFcLayer.create(prev, num_classes, bits, "none", rng, name="out"))
    arch = "-".join(str(d) for d in (in_features, *hidden, num_classes))
    return Model(layers, bits=bits, logit_scale=logit_scale, arch=arch, seed=seed)


@dataclass
class TrainConfig:
    """Optimization schedule; defaults match the stock small-image recipe."""

    epochs: int = 100
    batch_size: int = 256
    lr: float = 1e-3
    step_size: int = 10
    gamma: float = 0.5
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1, got %r" % (self.epochs,))
        if self.batch_size < 1:
            raise ContractError("batch size must be >= 1, got %r" % (self.batch_size,))
        if not self.lr > 0.0:
            raise ContractError("learning rate must be > 0, got %r" % (self.lr,))
        if self.step_size < 1:
            raise ContractError("step size must be >= 1, got %r" % (self.step_size,))
        if not 0.0 < self.gamma <= 1.0:
            raise ContractError("gamma must lie in (0, 1], got %r" % (self.gamma,))


def step_lr(base_lr: float, epoch: int, step_size: int, gamma: float) -> float:
    """Stepped decay: base_lr * gamma ** (epoch // step_size)."""
    if epoch < 0:
        raise ContractError("epoch must be >= 0, got %r" % (epoch,))
    if step_size < 1:
        raise ContractError("step size must be >= 1, got %r" % (step_size,))
    return base_lr * gamma ** (epoch // step_size)


@dataclass
class AdamState:
    """First and second moment buffers keyed by parameter name."""

    step_count: int = 0
    moments: dict = field(default_factory=dict)


def adam_step(params: list[tuple[str, Tensor]], grads: list[np.ndarray | None],
              state: AdamState, lr: float) -> None:
    """One Adam update over named parameters; missing grads count as zero."""
    if len(params) != len(grads):
        raise DimensionError("got %d grads for %d params" % (len(grads), len(params)))
    state.step_count += 1
    t = state.step_count
    scale1 = 1.0 - ADAM_BETA1 ** t
    scale2 = 1.0 - ADAM_BETA2 ** t
    for (name, p), g in zip(params, grads):
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient for parameter %r" % name)
        if name not in state.moments:
            state.moments[name] = (np.zeros_like(p.data), np.zeros_like(p.data))
        m, v = state.moments[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p.data -= lr * (m / scale1) / (np.sqrt(v / scale2) + ADAM_EPS)


@dataclass
class EpochStats:
    """Aggregates over one training epoch, measured on the training forward."""

    epoch: int
    loss: float
    accuracy: float
    mlm: float
    lr: float


def train_epoch(model: Model, data, cfg: TrainConfig, loss_spec: LossSpec | None = None,
                *, epoch: int = 0, state: AdamState | None = None,
                rng: np.random.Generator | None = None) -> EpochStats:
    """One full pass over the data in seeded shuffled order.

    Loss, accuracy, and mean logit margin are accumulated from each
    batch forward pass before its update, so they describe the epoch as
    the optimizer saw it.
    """
    spec = loss_spec or cfg.loss
    loss_fn = make_loss(spec)
    state = state if state is not None else AdamState()
    rng = rng if rng is not None else np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(1,))))
    lr = step_lr(cfg.lr, epoch, cfg.step_size, cfg.gamma)
    params = model.parameters()
    n = data.inputs.shape[0]
    order = rng.permutation(n)
    loss_total = 0.0
    correct = 0
    margin_total = 0.0
    for lo in range(0, n, cfg.batch_size):
        idx = order[lo:lo + cfg.batch_size]
        xb = data.inputs[idx]
        yb = data.labels[idx]
        logits = model.forward_tensor(xb)
        loss = loss_fn(logits, yb)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericError("training loss became non-finite at epoch %d" % epoch)
        tensor.zero_grads([p for _, p in params])
        tensor.backward(loss)
        adam_step(params, [p.grad for _, p in params], state, lr)
        loss_total += value * idx.shape[0]
        correct += int(np.sum(np.argmax(logits.data, axis=1) == yb))
        margin_total += float(top2_margins(logits.data).sum())
    return EpochStats(epoch=epoch, loss=loss_total / n, accuracy=correct / n,
                      mlm=margin_total / n, lr=lr)


def train_model(model: Model, data, cfg: TrainConfig, progress=None) -> list[EpochStats]:
    """Run the full schedule; returns one stats row per epoch."""
    state = AdamState()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(1,))))
    log: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        stats = train_epoch(model, data, cfg, epoch=epoch, state=state, rng=rng)
        log.append(stats)
        if progress is not None:
            progress(stats)
    return log
