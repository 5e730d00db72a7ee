import math

import numpy as np
import pytest

from ctqwalk import tensor as T
from ctqwalk.errors import ContractViolation, NumericError
from ctqwalk.tensor import CounterRng, Tensor, backward

from conftest import assert_grads_close, numeric_grad

RNG = np.random.default_rng(1234)


def leaf(shape, scale=1.0):
    return Tensor(RNG.normal(size=shape) * scale, requires_grad=True)


def check_op(build, *leaves, min_pass=1.0):
    """FD-check gradients of scalar build(*leaves) w.r.t. every leaf."""
    out = build(*leaves)
    backward(out)
    for x in leaves:
        ad = x.grad

        def f(x=x):
            T.reset_tape()
            return build(*leaves).item()

        fd = numeric_grad(f, x.data)
        assert_grads_close(ad, fd, min_pass=min_pass)
        x.zero_grad()


# ---------------------------------------------------------------------------
# finite-difference agreement for every primitive

def test_grad_add_broadcast():
    w = Tensor(RNG.normal(size=(3, 4)))
    check_op(lambda a, b: T.tsum(T.mul(T.add(a, b), w)), leaf((3, 4)), leaf((4,)))


def test_grad_sub():
    check_op(lambda a, b: T.tsum(T.sub(a, b)), leaf((2, 3)), leaf((2, 3)))


def test_grad_mul_broadcast():
    check_op(lambda a, b: T.tsum(T.mul(a, b)), leaf((3, 4)), leaf((4,)))


def test_grad_div():
    b = leaf((3, 3))
    b.data[...] = np.abs(b.data) + 1.0
    check_op(lambda a, b: T.tsum(T.div(a, b)), leaf((3, 3)), b)


def test_grad_matmul():
    check_op(lambda a, b: T.tsum(T.matmul(a, b)), leaf((3, 4)), leaf((4, 2)))


def test_grad_linear():
    check_op(lambda x, w, b: T.tsum(T.linear(x, w, b)),
             leaf((5, 3)), leaf((3, 4)), leaf((4,)))


def test_grad_transpose():
    w = Tensor(RNG.normal(size=(4, 3)))
    check_op(lambda a: T.tsum(T.mul(T.transpose(a), w)), leaf((3, 4)))


def test_grad_relu():
    # keep values away from the kink so the FD is clean
    a = leaf((4, 4))
    a.data[np.abs(a.data) < 0.1] += 0.5
    check_op(lambda a: T.tsum(T.relu(a)), a)


def test_grad_sigmoid_tanh_exp_log():
    check_op(lambda a: T.tsum(T.sigmoid(a)), leaf((3, 5)))
    check_op(lambda a: T.tsum(T.tanh(a)), leaf((3, 5)))
    check_op(lambda a: T.tsum(T.exp(a)), leaf((3, 3), scale=0.5))
    a = leaf((3, 3))
    a.data[...] = np.abs(a.data) + 0.5
    check_op(lambda a: T.tsum(T.log(a)), a)


def test_grad_concat_slice_reshape():
    w = Tensor(RNG.normal(size=(5, 4)))
    check_op(lambda a, b: T.tsum(T.mul(T.concat([a, b], axis=0), w)),
             leaf((2, 4)), leaf((3, 4)))
    check_op(lambda a: T.tsum(T.slice_axis(a, 1, 1, 3)), leaf((4, 5)))
    check_op(lambda a: T.tsum(T.mul(T.reshape(a, (2, 6)), 2.0)), leaf((3, 4)))


def test_grad_take_and_take_rows():
    idx = np.array([0, 5, 5, 7])
    check_op(lambda a: T.tsum(T.take(a, idx)), leaf((3, 3)))
    rows = np.array([0, 2, 2, 1])
    w = Tensor(RNG.normal(size=(4, 4)))
    check_op(lambda a: T.tsum(T.mul(T.take_rows(a, rows), w)), leaf((3, 4)))


def test_grad_scatter_and_diag():
    rows = np.array([0, 1, 2, 0])
    cols = np.array([1, 2, 0, 2])
    w3 = Tensor(RNG.normal(size=(3, 3)))
    w4 = Tensor(RNG.normal(size=(4, 4)))
    check_op(lambda v: T.tsum(T.mul(T.scatter_matrix(v, rows, cols, 3), w3)),
             leaf((4,)))
    check_op(lambda v: T.tsum(T.mul(T.diag_matrix(v), w4)), leaf((4,)))


def test_grad_reductions():
    check_op(lambda a: T.mul(T.tsum(a), 1.0), leaf((3, 4)))
    check_op(lambda a: T.tsum(T.tsum(a, axis=0)), leaf((3, 4)))
    check_op(lambda a: T.tsum(T.tmean(a, axis=1, keepdims=True)), leaf((3, 4)))
    check_op(lambda a: T.tmean(a), leaf((5,)))


def test_grad_softmax():
    w = Tensor(RNG.normal(size=(4, 6)))
    check_op(lambda a: T.tsum(T.mul(T.softmax(a), w)), leaf((4, 6)))


def test_grad_layer_norm():
    w = Tensor(RNG.normal(size=(4, 6)))
    check_op(lambda x, g, b: T.tsum(T.mul(T.layer_norm(x, g, b), w)),
             leaf((4, 6)), leaf((6,), scale=0.3), leaf((6,)))


def test_grad_dropout_fixed_mask():
    # identical seeds replay identical masks, making the FD well defined
    def build(a):
        rng = CounterRng(99)
        return T.tsum(T.dropout(a, 0.4, True, rng))
    check_op(build, leaf((6, 6)))


def test_grad_cross_entropy():
    check_op(lambda a: T.cross_entropy(a, 2), leaf((1, 5)))


# ---------------------------------------------------------------------------
# stated examples and contracts

def test_softmax_symmetry():
    out = T.softmax(Tensor([0.0, 0.0]))
    np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-15)


def test_softmax_rows_sum_to_one_and_positive():
    x = Tensor(RNG.normal(size=(8, 7)) * 20)
    out = T.softmax(x)
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)
    assert (out.data > 0).all()


def test_cross_entropy_uniform_logits():
    for c in (2, 5, 9):
        loss = T.cross_entropy(Tensor(np.zeros(c)), c - 1)
        assert loss.item() == pytest.approx(math.log(c), abs=1e-12)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ContractViolation):
        T.cross_entropy(Tensor(np.zeros(3)), 3)


def test_square_derivative_at_three():
    x = Tensor(3.0, requires_grad=True)
    backward(T.mul(x, x))
    assert x.grad == pytest.approx(6.0, abs=1e-12)


def test_unused_parameter_gets_zero_grad():
    x = Tensor(2.0, requires_grad=True)
    w = Tensor(5.0, requires_grad=True)
    backward(T.mul(x, x))
    assert w.grad == 0.0


def test_sum_of_elementwise_product_grad_is_other_factor():
    a = leaf((3, 4))
    b = Tensor(RNG.normal(size=(3, 4)))
    backward(T.tsum(T.mul(a, b)))
    np.testing.assert_allclose(a.grad, b.data, atol=1e-15)


def test_grad_accumulates_over_multiple_uses():
    x = Tensor(2.0, requires_grad=True)
    backward(T.add(T.mul(x, x), T.mul(x, 3.0)))  # x^2 + 3x -> 2x + 3 = 7
    assert x.grad == pytest.approx(7.0, abs=1e-12)


def test_backward_requires_scalar():
    a = leaf((2, 2))
    with pytest.raises(ContractViolation):
        backward(T.mul(a, 2.0))


def test_backward_twice_rejected():
    x = Tensor(1.5, requires_grad=True)
    y = T.mul(x, x)
    backward(y)
    with pytest.raises(ContractViolation):
        backward(y)


def test_backward_off_tape_rejected():
    x = Tensor(1.5, requires_grad=True)
    y = T.mul(x, x)
    T.reset_tape()
    with pytest.raises(ContractViolation):
        backward(y)


def test_shape_mismatch_mentions_both_shapes():
    with pytest.raises(ContractViolation) as err:
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    assert "(2, 3)" in str(err.value)


def test_log_domain_error():
    with pytest.raises(ContractViolation):
        T.log(Tensor([1.0, 0.0]))


def test_dropout_contracts():
    x = Tensor(np.ones((100, 100)), requires_grad=True)
    rng = CounterRng(5)
    out = T.dropout(x, 0.3, True, rng)
    survivors = out.data[out.data != 0]
    np.testing.assert_allclose(survivors, 1.0 / 0.7, atol=1e-12)
    drop_rate = (out.data == 0).mean()
    assert 0.25 < drop_rate < 0.35
    assert T.dropout(x, 0.3, False, rng) is x      # identity in eval mode
    assert T.dropout(x, 0.0, True, rng) is x       # identity at rate zero
    with pytest.raises(ContractViolation):
        T.dropout(x, 1.0, True, rng)


def test_counter_rng_replay_and_independence():
    a = CounterRng(7)
    first = a.uniform((4, 5))
    second = a.uniform((4, 5))
    assert not np.array_equal(first, second)
    a.reset()
    np.testing.assert_array_equal(a.uniform((4, 5)), first)
    assert not np.array_equal(CounterRng(8).uniform((4, 5)), first)
    flat = CounterRng(7).uniform((20,))
    np.testing.assert_array_equal(flat[:5], CounterRng(7).uniform((5,)))


def test_layer_norm_statistics():
    x = Tensor(RNG.normal(size=(6, 32)) * 3 + 1)
    out = T.layer_norm(x, Tensor(np.ones(32)), Tensor(np.zeros(32)))
    mean = out.data.mean(axis=-1)
    var = out.data.var(axis=-1)
    assert np.abs(mean).max() <= 1e-9
    assert np.abs(var - 1.0).max() <= 1e-6


def test_tape_determinism_bit_identical():
    def run():
        T.reset_tape()
        rng = CounterRng(3)
        x = Tensor(np.linspace(-1, 1, 24).reshape(4, 6), requires_grad=True)
        w = Tensor(np.linspace(0.5, 1.5, 36).reshape(6, 6), requires_grad=True)
        h = T.dropout(T.relu(T.matmul(x, w)), 0.25, True, rng)
        loss = T.tsum(T.softmax(h))
        backward(loss)
        return loss.data.copy(), x.grad.copy(), w.grad.copy()

    l1, gx1, gw1 = run()
    l2, gx2, gw2 = run()
    assert np.array_equal(l1, l2)
    assert np.array_equal(gx1, gx2)
    assert np.array_equal(gw1, gw2)


def test_debug_checks_flag_nan():
    T.set_debug_checks(True)
    try:
        with pytest.raises(NumericError):
            Tensor([1.0, float("nan")])
    finally:
        T.set_debug_checks(False)


def test_no_grad_disables_recording():
    x = Tensor(1.0, requires_grad=True)
    with T.no_grad():
        y = T.mul(x, x)
    assert y._tape is None
    with pytest.raises(ContractViolation):
        backward(y)
