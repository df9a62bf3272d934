import numpy as np
import pytest

from mcelq.datasets import synthetic_blobs
from mcelq.errors import ContractError, EncodingError
from mcelq.faults import (BINARY_SCHEME, ErrorModel, RngStream, ber_sweep,
                          flip_bits, perturb_model, single_flip_delta)
from mcelq.losses import LossSpec
from mcelq.metrics import accuracy
from mcelq.network import TrainConfig, build_mlp, train_model
from mcelq.quantization import CodeTensor, QuantScheme, dequantize


def _gen(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def test_error_model_validation():
    ErrorModel(0.0)
    ErrorModel(1.0)
    with pytest.raises(ContractError):
        ErrorModel(1.5)
    with pytest.raises(ContractError):
        ErrorModel(0.1, scope="activations")


def test_flip_bits_p_zero_is_identity(rng):
    for bits in (1, 2, 4, 8):
        scheme = QuantScheme(bits, -1.0, 1.0)
        codes = rng.integers(0, scheme.levels, size=(40, 30)).astype(np.uint8)
        block = CodeTensor(codes, scheme)
        out = flip_bits(block, 0.0, _gen())
        assert np.array_equal(out.codes, codes)


def test_flip_bits_p_one_is_bitwise_complement(rng):
    for bits in (1, 2, 4, 8):
        scheme = QuantScheme(bits, -1.0, 1.0)
        codes = rng.integers(0, scheme.levels, size=200).astype(np.uint8)
        block = CodeTensor(codes, scheme)
        out = flip_bits(block, 1.0, _gen())
        assert np.array_equal(out.codes, scheme.code_max - codes)


def test_flip_bits_never_mutates_the_input(rng):
    scheme = QuantScheme(4, -1.0, 1.0)
    codes = rng.integers(0, 16, size=100).astype(np.uint8)
    block = CodeTensor(codes.copy(), scheme)
    flip_bits(block, 0.7, _gen())
    assert np.array_equal(block.codes, codes)


def test_flip_bits_rate_statistics():
    # one million stored bits at p = 0.01: flips within 4 sigma of binomial
    p = 0.01
    n_bits = 1_000_000
    scheme = QuantScheme(8, -1.0, 1.0)
    block = CodeTensor(np.zeros(n_bits // 8, dtype=np.uint8), scheme)
    out = flip_bits(block, p, _gen(7))
    flipped = int(np.bitwise_count(out.codes ^ block.codes).sum())
    sigma = np.sqrt(n_bits * p * (1 - p))
    assert abs(flipped - n_bits * p) <= 4 * sigma


def test_flip_bits_results_stay_in_code_range(rng):
    scheme = QuantScheme(2, -1.0, 1.0)
    codes = rng.integers(0, 4, size=500).astype(np.uint8)
    out = flip_bits(CodeTensor(codes, scheme), 0.5, _gen(3))
    assert out.codes.max() <= scheme.code_max


def test_single_flip_delta_integer_grid():
    scheme = QuantScheme(4, 0.0, 15.0)
    # code 5 = 0101: flipping the top bit moves the value by 8 = 2^3 * delta
    assert single_flip_delta(5, 3, scheme) == 8.0
    assert single_flip_delta(5, 0, scheme) == 1.0
    with pytest.raises(EncodingError):
        single_flip_delta(5, 4, scheme)
    with pytest.raises(EncodingError):
        single_flip_delta(16, 0, scheme)


def test_single_flip_delta_law_exhaustive():
    for bits in (2, 4, 8):
        # dyadic range keeps every dequantized value float-exact
        scheme = QuantScheme(bits, -8.0, -8.0 + (2 ** bits - 1) / 8.0)
        bound = (1 << (bits - 1)) * scheme.delta
        for code in range(scheme.levels):
            for pos in range(bits):
                delta = single_flip_delta(code, pos, scheme)
                assert delta == (1 << pos) * scheme.delta
                assert delta <= bound


def test_rng_streams_are_reproducible_and_independent():
    stream = RngStream(42)
    a = stream.generator(1, 3).random(8)
    b = RngStream(42).generator(1, 3).random(8)
    assert np.array_equal(a, b)
    c = stream.generator(1, 4).random(8)
    d = stream.generator(2, 3).random(8)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    with pytest.raises(ContractError):
        stream.generator(-1, 0)


def test_binary_scheme_round_trip_is_exact():
    assert dequantize(0, BINARY_SCHEME) == -1.0
    assert dequantize(1, BINARY_SCHEME) == 1.0


@pytest.fixture(scope="module")
def trained_model():
    data = synthetic_blobs(num_classes=10, per_class=40, dim=20, spread=0.3, seed=11)
    model = build_mlp(data.dim, data.num_classes, bits=4, hidden=(24, 12), seed=11)
    cfg = TrainConfig(epochs=12, batch_size=32, lr=5e-3, seed=11, loss=LossSpec("cel"))
    train_model(model, data, cfg)
    return model, data


def test_perturb_at_zero_rate_reproduces_quantized_forward(trained_model):
    model, data = trained_model
    clean = model.forward(data.inputs[:64])
    damaged = perturb_model(model, 0.0, _gen(1))
    assert np.array_equal(damaged.forward(data.inputs[:64]), clean)


def test_perturb_leaves_the_original_untouched(trained_model):
    model, data = trained_model
    before = [p.data.copy() for _, p in model.parameters()]
    perturb_model(model, 0.5, _gen(2))
    for (_, p), prev in zip(model.parameters(), before):
        assert np.array_equal(p.data, prev)


def test_perturb_keeps_biases_clean(trained_model):
    model, _ = trained_model
    damaged = perturb_model(model, 1.0, _gen(3))
    for lo, ld in zip(model.layers, damaged.layers):
        assert np.array_equal(lo.bias.data, ld.bias.data)
        assert ld.frozen


def test_perturb_is_deterministic_per_generator_state(trained_model):
    model, data = trained_model
    a = perturb_model(model, 0.05, _gen(9)).forward(data.inputs[:32])
    b = perturb_model(model, 0.05, _gen(9)).forward(data.inputs[:32])
    assert np.array_equal(a, b)


def test_perturbed_binary_model_keeps_sign_weights():
    data = synthetic_blobs(num_classes=4, per_class=20, dim=8, spread=0.3, seed=3)
    model = build_mlp(data.dim, data.num_classes, bits=1, hidden=(8, 4), seed=3)
    clean = model.forward(data.inputs[:16])
    damaged = perturb_model(model, 0.0, _gen(0))
    assert np.array_equal(damaged.forward(data.inputs[:16]), clean)
    heavy = perturb_model(model, 0.3, _gen(1))
    for layer in heavy.layers[:-1]:
        assert set(np.unique(layer.weights.data)) <= {-1.0, 1.0}


def test_full_corruption_of_binary_weights_flips_all_signs():
    data = synthetic_blobs(num_classes=4, per_class=10, dim=8, spread=0.3, seed=3)
    model = build_mlp(data.dim, data.num_classes, bits=1, hidden=(8, 4), seed=3)
    damaged = perturb_model(model, 1.0, _gen(5))
    for lo, ld in zip(model.layers[:-1], damaged.layers[:-1]):
        assert np.array_equal(ld.weights.data, -lo.signed_weights())


def test_accuracy_degrades_monotonically_in_expectation(trained_model):
    model, data = trained_model
    bers = (0.0, 0.01, 0.05, 0.1, 0.25, 0.5)
    result = ber_sweep(model, data, bers=bers, trials=20, master_seed=0)
    means = [result.mean_accuracy(b) for b in bers]
    for earlier, later in zip(means, means[1:]):
        assert later <= earlier + 0.02
    assert means[0] > 0.9


def test_half_rate_reaches_chance_level(trained_model):
    model, data = trained_model
    result = ber_sweep(model, data, bers=(0.5,), trials=20, master_seed=1)
    assert result.mean_accuracy(0.5) == pytest.approx(0.1, abs=0.05)


def test_sweep_rows_sorted_and_reproducible(trained_model):
    model, data = trained_model
    first = ber_sweep(model, data, bers=(0.05, 0.0), trials=3, master_seed=4)
    again = ber_sweep(model, data, bers=(0.05, 0.0), trials=3, master_seed=4)
    keys = [(r.ber, r.trial) for r in first.rows]
    assert keys == sorted(keys)
    assert [(r.accuracy, r.mean_margin) for r in first.rows] == \
           [(r.accuracy, r.mean_margin) for r in again.rows]
    assert first.rows[0].ber == 0.0
    with pytest.raises(ContractError):
        ber_sweep(model, data, bers=(0.0,), trials=0)
    with pytest.raises(ContractError):
        ber_sweep(model, data, bers=(1.5,), trials=1)


def test_zero_rate_sweep_rows_all_match_clean_accuracy(trained_model):
    model, data = trained_model
    clean = accuracy(model, data)
    result = ber_sweep(model, data, bers=(0.0,), trials=4, master_seed=2)
    for row in result.rows:
        assert row.accuracy == pytest.approx(clean, abs=1e-12)
