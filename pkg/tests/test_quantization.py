import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from mcelq import tensor
from mcelq.errors import ContractError, EncodingError
from mcelq.quantization import (CodeTensor, QuantScheme, binarize,
                                binarize_array, dequantize, dequantize_tensor,
                                fake_quantize, quantize, quantize_tensor,
                                range_from_tensor)
from mcelq.tensor import Tensor, backward


def dyadic_scheme(bits):
    # all code values are multiples of 1/8 at small magnitude, so every
    # dequantized value and every difference is float-exact
    return QuantScheme(bits, -8.0, -8.0 + (2 ** bits - 1) / 8.0)


def test_scheme_validation():
    with pytest.raises(ContractError):
        QuantScheme(3, -1.0, 1.0)
    with pytest.raises(ContractError):
        QuantScheme(4, 1.0, 1.0)
    with pytest.raises(ContractError):
        QuantScheme(4, 2.0, -2.0)


def test_integer_grid_examples():
    s = QuantScheme(4, 0.0, 15.0)
    assert s.delta == 1.0
    assert quantize(7.4, s) == 7
    assert quantize(7.5, s) == 8  # round half away from zero
    assert dequantize(8, s) == 8.0
    assert quantize(-3.0, s) == 0 and quantize(99.0, s) == 15


def test_two_bit_symmetric_levels():
    s = QuantScheme(2, -1.0, 1.0)
    assert_allclose([dequantize(c, s) for c in range(4)],
                    [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0], rtol=1e-15)
    assert quantize(0.0, s) == 2  # half rounds away from zero, toward +1/3


def test_codes_are_unsigned_offset_binary(rng):
    s = QuantScheme(8, -0.7, 0.7)
    codes = quantize(rng.normal(size=500), s)
    assert codes.dtype == np.uint8
    assert codes.min() >= 0 and codes.max() <= 255


def test_dequantize_rejects_out_of_range_codes():
    s = QuantScheme(2, -1.0, 1.0)
    with pytest.raises(EncodingError):
        dequantize(np.array([0, 4], dtype=np.uint8), s)
    with pytest.raises(EncodingError):
        CodeTensor(np.array([7], dtype=np.uint8), s)


def test_code_set_closure():
    for bits in (1, 2, 4, 8):
        s = QuantScheme(bits, -0.37, 0.61)
        values = dequantize(np.arange(s.levels, dtype=np.uint8), s)
        assert values.min() >= s.v_min and values.max() <= s.v_max


def test_extreme_codes_hit_range_ends():
    for bits in (1, 2, 4, 8):
        s = QuantScheme(bits, -1.3, 2.7)
        assert dequantize(0, s) == s.v_min
        assert dequantize(s.code_max, s) == pytest.approx(s.v_max, rel=1e-12)
        exact = dyadic_scheme(bits)
        assert dequantize(exact.code_max, exact) == exact.v_max


@given(v=st.floats(-10, 10), w=st.floats(-10, 10),
       bits=st.sampled_from([1, 2, 4, 8]))
@settings(max_examples=200, deadline=None)
def test_quantize_monotone(v, w, bits):
    s = QuantScheme(bits, -2.0, 3.0)
    lo, hi = min(v, w), max(v, w)
    assert quantize(lo, s) <= quantize(hi, s)


@given(v=st.floats(-4, 4), bits=st.sampled_from([2, 4, 8]))
@settings(max_examples=200, deadline=None)
def test_round_trip_error_bounded_by_half_step(v, bits):
    s = QuantScheme(bits, -1.5, 1.5)
    back = dequantize(quantize(v, s), s)
    clamped = min(max(v, s.v_min), s.v_max)
    assert abs(back - clamped) <= s.delta / 2 + 1e-12


def test_adjacent_codes_differ_by_delta():
    s = QuantScheme(4, 0.0, 15.0)
    values = dequantize(np.arange(16, dtype=np.uint8), s)
    assert np.all(np.diff(values) == 1.0)
    d = dyadic_scheme(8)
    values = dequantize(np.arange(256, dtype=np.uint8), d)
    assert np.all(np.diff(values) == d.delta)


def test_bit_position_law_exact_on_dyadic_ranges():
    for bits in (2, 4, 8):
        s = dyadic_scheme(bits)
        for code in range(s.levels):
            for pos in range(bits):
                flipped = code ^ (1 << pos)
                change = abs(dequantize(flipped, s) - dequantize(code, s))
                assert change == (1 << pos) * s.delta
                assert change <= (1 << (bits - 1)) * s.delta


@given(vmin=st.floats(-5, 0.99), span=st.floats(0.01, 10),
       code=st.integers(0, 255), pos=st.integers(0, 7))
@settings(max_examples=300, deadline=None)
def test_bit_position_law_within_rounding_on_any_range(vmin, span, code, pos):
    s = QuantScheme(8, vmin, vmin + span)
    change = abs(dequantize(code ^ (1 << pos), s) - dequantize(code, s))
    expected = (1 << pos) * s.delta
    assert change == pytest.approx(expected, rel=1e-11)


def test_range_from_tensor_symmetric_max_abs(rng):
    w = rng.normal(size=(30, 20)) * 0.3
    s = range_from_tensor(w, 4)
    peak = float(np.abs(w).max())
    assert s.v_min == -peak and s.v_max == peak
    tiny = range_from_tensor(np.zeros(5), 4)
    assert tiny.v_max == 1e-8  # degenerate all-zero tensor keeps a usable range
    with pytest.raises(ContractError):
        range_from_tensor(np.zeros((0,)), 4)


def test_fake_quantize_forward_equals_quantize_dequantize(rng):
    w = rng.normal(size=(6, 5))
    s = range_from_tensor(w, 4)
    out = fake_quantize(Tensor(w), s)
    assert_allclose(out.data, dequantize(quantize(w, s), s))


def test_fake_quantize_straight_through_gradient():
    w = Tensor(np.array([-2.0, -0.5, 0.0, 0.7, 3.0]), requires_grad=True)
    s = QuantScheme(4, -1.0, 1.0)
    backward(tensor.tsum(fake_quantize(w, s)))
    assert_allclose(w.grad, [0.0, 1.0, 1.0, 1.0, 0.0])


def test_quantize_tensor_round_trip_shape(rng):
    w = rng.normal(size=(7, 3))
    s = range_from_tensor(w, 8)
    block = quantize_tensor(w, s)
    assert block.shape == w.shape
    back = dequantize_tensor(block)
    assert np.all(np.abs(back - w) <= s.delta / 2 + 1e-12)


def test_binarize_sign_convention_and_idempotence():
    w = np.array([-0.2, 0.0, 0.4, -5.0])
    signs = binarize_array(w)
    assert_allclose(signs, [-1.0, 1.0, 1.0, -1.0])  # sign(0) = +1
    assert_allclose(binarize_array(signs), signs)


def test_binarize_hard_tanh_gradient_window():
    w = Tensor(np.array([-3.0, -1.0, -0.2, 0.0, 1.0, 2.5]), requires_grad=True)
    backward(tensor.tsum(binarize(w)))
    assert_allclose(w.grad, [0.0, 1.0, 1.0, 1.0, 1.0, 0.0])


def test_quantize_dequantize_deterministic(rng):
    w = rng.normal(size=200)
    s = QuantScheme(8, -1.0, 1.0)
    a = dequantize(quantize(w, s), s)
    b = dequantize(quantize(w, s), s)
    assert np.array_equal(a, b)
