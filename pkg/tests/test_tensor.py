import numpy as np
import pytest
from numpy.testing import assert_allclose

from mcelq import tensor
from mcelq.errors import ContractError, DimensionError, NumericError
from mcelq.tensor import Tensor, backward, grad_check


def test_matmul_against_triple_loop(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 5))
    want = np.zeros((3, 5))
    for i in range(3):
        for j in range(5):
            for k in range(4):
                want[i, j] += a[i, k] * b[k, j]
    got = tensor.matmul(Tensor(a), Tensor(b)).data
    assert_allclose(got, want, rtol=1e-12)


def test_matmul_shape_errors():
    with pytest.raises(DimensionError):
        tensor.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(DimensionError):
        tensor.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


def test_add_broadcasts_bias_rows(rng):
    x = rng.normal(size=(5, 3))
    b = rng.normal(size=3)
    out = tensor.add(Tensor(x), Tensor(b))
    assert_allclose(out.data, x + b)


def test_bias_gradient_sums_over_batch(rng):
    x = Tensor(rng.normal(size=(5, 3)))
    b = Tensor(rng.normal(size=3), requires_grad=True)
    out = tensor.tsum(tensor.add(x, b))
    backward(out)
    assert_allclose(b.grad, np.full(3, 5.0))


def test_relu_derivative_is_zero_at_zero():
    w = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    out = tensor.tsum(tensor.relu(w))
    backward(out)
    assert_allclose(w.grad, [0.0, 0.0, 1.0])


def test_sum_of_leaf_gives_all_ones(rng):
    w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    backward(tensor.tsum(w))
    assert_allclose(w.grad, np.ones((3, 4)))


def test_backward_requires_scalar_root(rng):
    w = Tensor(rng.normal(size=4), requires_grad=True)
    with pytest.raises(ContractError):
        backward(tensor.relu(w))


def test_backward_accumulates_until_reset(rng):
    w = Tensor(rng.normal(size=4), requires_grad=True)
    backward(tensor.tsum(w))
    backward(tensor.tsum(w))
    assert_allclose(w.grad, np.full(4, 2.0))
    w.grad = None
    backward(tensor.tsum(w))
    assert_allclose(w.grad, np.ones(4))


def test_diamond_graph_accumulates_once_per_path():
    # f(w) = sum(w * w) through two references to the same node
    w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    backward(tensor.tsum(tensor.mul(w, w)))
    assert_allclose(w.grad, 2.0 * w.data)


def test_softmax_rows_are_distributions(rng):
    z = rng.normal(size=(4, 7)) * 5
    s = tensor.softmax(Tensor(z), axis=1).data
    assert np.all(s > 0) and np.all(s < 1)
    assert_allclose(s.sum(axis=1), np.ones(4), rtol=1e-12)


def test_softmax_handles_huge_logits_without_overflow():
    s = tensor.softmax(Tensor(np.array([1000.0, 0.0]))).data
    assert np.isfinite(s).all()
    assert s[0] == pytest.approx(1.0)
    assert s[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_shift_invariance(rng):
    z = rng.normal(size=9)
    for shift in (-1000.0, -3.5, 0.0, 7.25, 1000.0):
        a = tensor.softmax(Tensor(z)).data
        b = tensor.softmax(Tensor(z + shift)).data
        assert_allclose(a, b, atol=1e-12)


def test_logsumexp_matches_direct_formula(rng):
    z = rng.normal(size=(3, 5))
    got = tensor.logsumexp(Tensor(z), axis=1).data
    want = np.log(np.exp(z).sum(axis=1))
    assert_allclose(got, want, rtol=1e-12)
    stable = tensor.logsumexp(Tensor(np.array([[2000.0, 1999.0]])), axis=1).data
    assert np.isfinite(stable).all()


def test_take_targets_gathers_and_scatters(rng):
    z = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    idx = np.array([2, 0, 1, 1])
    picked = tensor.take_targets(z, idx)
    assert_allclose(picked.data, z.data[np.arange(4), idx])
    backward(tensor.tsum(picked))
    want = np.zeros((4, 3))
    want[np.arange(4), idx] = 1.0
    assert_allclose(z.grad, want)
    with pytest.raises(ContractError):
        tensor.take_targets(z, np.array([0, 1, 2, 3]))


def test_log_rejects_non_positive():
    with pytest.raises(NumericError):
        tensor.log(Tensor(np.array([1.0, 0.0])))


def test_division_by_zero_raises():
    with pytest.raises(NumericError):
        tensor.div(Tensor(np.ones(2)), Tensor(np.zeros(2)))


def test_two_layer_net_gradients_match_central_differences(rng):
    # independent oracle: central finite differences through grad_check
    w1 = Tensor(rng.normal(size=(4, 3)) * 0.5, requires_grad=True)
    b1 = Tensor(rng.normal(size=4) * 0.1, requires_grad=True)
    w2 = Tensor(rng.normal(size=(2, 4)) * 0.5, requires_grad=True)
    x = Tensor(rng.normal(size=(5, 3)) + 0.7)

    def f():
        h = tensor.relu(tensor.add(tensor.matmul(x, tensor.transpose(w1)), b1))
        out = tensor.matmul(h, tensor.transpose(w2))
        return tensor.mean(tensor.mul(out, out))

    assert grad_check(f, [w1, b1, w2]) < 1e-6


@pytest.mark.parametrize("op", [tensor.tanh, tensor.exp,
                                lambda t: tensor.logsumexp(t, axis=0),
                                lambda t: tensor.mean(tensor.softmax(t)),
                                lambda t: tensor.mean(tensor.mul(t, t))])
def test_elementwise_op_gradients(rng, op):
    w = Tensor(rng.normal(size=6), requires_grad=True)

    def f():
        out = op(w)
        return out if out.data.size == 1 else tensor.tsum(out)

    assert grad_check(f, [w]) < 1e-6


def test_softmax_backward_matches_finite_differences(rng):
    w = Tensor(rng.normal(size=5), requires_grad=True)
    coeff = Tensor(rng.normal(size=5))

    def f():
        return tensor.tsum(tensor.mul(tensor.softmax(w), coeff))

    assert grad_check(f, [w]) < 1e-6


def test_grad_check_flags_a_wrong_gradient():
    w = Tensor(np.array([0.3, -0.7]), requires_grad=True)

    def wrong_double(t):
        def bad_backward(g):
            t.accumulate_grad(g * 3.0)  # truth is 2.0
        return tensor.from_op(t.data * 2.0, (t,), "wrong", bad_backward)

    assert grad_check(lambda: tensor.tsum(wrong_double(w)), [w]) > 0.1


def test_grad_check_validates_eps():
    w = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ContractError):
        grad_check(lambda: tensor.tsum(w), [w], eps=0.5)


def test_forward_is_deterministic(rng):
    x = rng.normal(size=(8, 6))
    w = rng.normal(size=(4, 6))

    def run():
        return tensor.relu(tensor.matmul(Tensor(x), tensor.transpose(Tensor(w)))).data

    first, second = run(), run()
    assert np.array_equal(first, second)


def test_inference_builds_no_graph(rng):
    x = Tensor(rng.normal(size=(2, 3)))
    w = Tensor(rng.normal(size=(3, 3)))
    out = tensor.relu(tensor.matmul(x, w))
    assert out._parents == () and out._backward is None and not out.requires_grad


def test_finite_forward_on_finite_inputs(rng):
    z = rng.normal(size=(16, 8)) * 100
    chained = tensor.logsumexp(tensor.tanh(Tensor(z)), axis=1)
    assert np.isfinite(chained.data).all()
