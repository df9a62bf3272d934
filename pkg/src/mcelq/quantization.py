"""Uniform n-bit weight quantization with unsigned offset-binary codes.

Values are clamped to the scheme range, scaled onto the code grid, and
rounded half away from zero. Codes are plain unsigned integers, so a
hardware-style bit flip on a stored weight is just an XOR on its code.
Training uses ``fake_quantize``: quantize-dequantize in the forward
pass, straight-through gradients inside the representable range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .errors import ContractError, EncodingError
from .tensor import Tensor

SUPPORTED_BITS = (1, 2, 4, 8)

# symmetric ranges never collapse below this half-width
MIN_HALF_RANGE = 1e-8


@dataclass(frozen=True)
class QuantScheme:
    """Bit width plus the real-valued range the codes cover."""

    bits: int
    v_min: float
    v_max: float

    def __post_init__(self) -> None:
        if self.bits not in SUPPORTED_BITS:
            raise ContractError("bit width must be one of %r, got %r" % (SUPPORTED_BITS, self.bits))
        if not (np.isfinite(self.v_min) and np.isfinite(self.v_max)):
            raise ContractError("quantization range must be finite")
        if not self.v_min < self.v_max:
            raise ContractError("need v_min < v_max, got [%r, %r]" % (self.v_min, self.v_max))

    @property
    def levels(self) -> int:
        return 1 << self.bits

    @property
    def code_max(self) -> int:
        return self.levels - 1

    @property
    def delta(self) -> float:
        return (self.v_max - self.v_min) / (self.levels - 1)


@dataclass
class CodeTensor:
    """A shaped block of quantization codes together with their scheme."""

    codes: np.ndarray
    scheme: QuantScheme

    def __post_init__(self) -> None:
        arr = np.asarray(self.codes)
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise EncodingError("codes do not fit in a byte")
            arr = arr.astype(np.uint8)
        if arr.size and int(arr.max()) > self.scheme.code_max:
            raise EncodingError(
                "code %d exceeds maximum %d for %d bits"
                % (int(arr.max()), self.scheme.code_max, self.scheme.bits))
        self.codes = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.codes.shape


def quantize(values, scheme: QuantScheme):
    """Map real values to codes: clamp, scale, round half away from zero.

    Returns an int for scalar input, else a uint8 array of the same shape.
    """
    v = np.asarray(values, dtype=np.float64)
    clamped = np.clip(v, scheme.v_min, scheme.v_max)
    scale = (scheme.levels - 1) / (scheme.v_max - scheme.v_min)
    scaled = (clamped - scheme.v_min) * scale
    # scaled is nonnegative, so floor(x + 0.5) rounds half away from zero
    codes = np.floor(scaled + 0.5)
    codes = np.clip(codes, 0, scheme.code_max).astype(np.uint8)
    if np.ndim(values) == 0:
        return int(codes)
    return codes


def dequantize(codes, scheme: QuantScheme):
    """Map codes back to reals: v_min + code * delta, clamped to the range.

    The final clamp only absorbs float rounding at the extreme codes.
    """
    arr = np.asarray(codes)
    if arr.size and (np.any(arr < 0) or np.any(arr > scheme.code_max)):
        raise EncodingError(
            "code out of range for %d bits (max %d)" % (scheme.bits, scheme.code_max))
    values = scheme.v_min + arr.astype(np.float64) * scheme.delta
    values = np.clip(values, scheme.v_min, scheme.v_max)
    if np.ndim(codes) == 0:
        return float(values)
    return values


def quantize_tensor(values: np.ndarray, scheme: QuantScheme) -> CodeTensor:
    return CodeTensor(quantize(np.asarray(values), scheme), scheme)


def dequantize_tensor(block: CodeTensor) -> np.ndarray:
    return dequantize(block.codes, block.scheme)


def range_from_tensor(values, bits: int) -> QuantScheme:
    """Symmetric per-tensor range from the largest absolute weight."""
    data = values.data if isinstance(values, Tensor) else np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ContractError("cannot derive a range from an empty tensor")
    half = max(float(np.max(np.abs(data))), MIN_HALF_RANGE)
    return QuantScheme(bits, -half, half)


def fake_quantize(w: Tensor, scheme: QuantScheme) -> Tensor:
    """Quantize-dequantize forward; straight-through gradient in range.

    The gradient passes unchanged where v_min <= w <= v_max and is zero
    outside, so weights pushed past the range stop drifting further.
    """
    data = dequantize(quantize(w.data, scheme), scheme)
    inside = (w.data >= scheme.v_min) & (w.data <= scheme.v_max)

    def backward(g: np.ndarray) -> None:
        if w.requires_grad:
            w.accumulate_grad(g * inside)

    return tensor.from_op(data, (w,), "fake_quantize", backward)


def binarize_array(values: np.ndarray) -> np.ndarray:
    """Sign with the zero convention sign(0) = +1."""
    return np.where(np.asarray(values, dtype=np.float64) < 0.0, -1.0, 1.0)


def binarize(w: Tensor) -> Tensor:
    """Binarize to {-1, +1}; hard-tanh straight-through gradient.

    The gradient passes where |w| <= 1 and is zero outside, keeping
    latent weights from growing without bound.
    """
    data = binarize_array(w.data)
    inside = np.abs(w.data) <= 1.0

    def backward(g: np.ndarray) -> None:
        if w.requires_grad:
            w.accumulate_grad(g * inside)

    return tensor.from_op(data, (w,), "binarize", backward)
