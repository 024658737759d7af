"""Tape, tensor ops, and their backward rules against independent oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discat.autodiff import (PROB_FLOOR, Tape, Tensor, add, average, backward,
                             concat, cross_entropy, default_dtype, dot,
                             dropout_mask, lstm_cell, matvec, mul, pick, scale,
                             set_default_dtype, sigmoid, softmax,
                             stack_scalars, take_row, tanh, vsum)
from discat.rng import SeededRng

from helpers import fd_grad, rel_err


def scalar(x):
    return Tensor(np.asarray(float(x)))


# ----- forward values against math-library or hand oracles --------------


def test_tanh_known_value():
    t = tanh(None, scalar(1.0))
    assert t.data == pytest.approx(0.7615941559557649, abs=1e-15)
    assert float(t.data) == math.tanh(1.0)


def test_tanh_is_odd_and_bounded():
    x = Tensor(np.array([-5.0, -0.3, 0.0, 0.3, 5.0]))
    y = tanh(None, x).data
    assert np.all(np.abs(y) < 1.0)
    assert np.allclose(y, -tanh(None, Tensor(-x.data)).data)
    assert y[2] == 0.0


def test_sigmoid_known_values():
    assert float(sigmoid(None, scalar(0.0)).data) == 0.5
    assert float(sigmoid(None, scalar(2.0)).data) == pytest.approx(
        0.8807970779778823, abs=1e-15)
    assert float(sigmoid(None, scalar(2.0)).data) == 1.0 / (1.0 + math.exp(-2.0))
    small = float(sigmoid(None, scalar(-30.0)).data)
    assert 0.0 < small < 1e-13


def test_sigmoid_extremes_stay_finite():
    with np.errstate(over="raise"):
        y = sigmoid(None, Tensor(np.array([-1000.0, 1000.0]))).data
    assert np.all(np.isfinite(y))
    assert 0.0 <= y[0] <= y[1] <= 1.0


def test_softmax_two_elements():
    y = softmax(None, Tensor(np.array([1.0, 0.0]))).data
    e = math.e
    assert y[0] == pytest.approx(e / (1.0 + e), abs=1e-15)
    assert y[1] == pytest.approx(1.0 / (1.0 + e), abs=1e-15)
    assert y[0] == pytest.approx(0.7310585786300049, abs=1e-15)


def test_softmax_large_inputs_no_overflow():
    with np.errstate(over="raise"):
        y = softmax(None, Tensor(np.array([1000.0, 1000.0]))).data
    assert np.allclose(y, [0.5, 0.5])


def test_softmax_single_element():
    assert softmax(None, Tensor(np.array([3.7]))).data == pytest.approx([1.0])


def test_softmax_sums_to_one():
    y = softmax(None, Tensor(np.array([0.3, -2.0, 5.0, 0.0]))).data
    assert float(np.sum(y)) == pytest.approx(1.0, abs=1e-12)
    assert np.all(y > 0.0)


def test_matvec_hand_example():
    w = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    x = Tensor(np.array([1.0, 1.0]))
    assert matvec(None, w, x).data.tolist() == [3.0, 7.0]


def test_matvec_zero_matrix():
    w = Tensor(np.zeros((2, 2)))
    x = Tensor(np.array([5.0, 7.0]))
    assert matvec(None, w, x).data.tolist() == [0.0, 0.0]


def test_matvec_shape_mismatch():
    with pytest.raises(ValueError):
        matvec(None, Tensor(np.zeros((2, 3))), Tensor(np.zeros(2)))


def test_cross_entropy_quarter():
    loss = cross_entropy(None, Tensor(np.array([0.25, 0.75])), 0)
    assert float(loss.data) == pytest.approx(math.log(4.0), abs=1e-15)
    assert float(loss.data) == pytest.approx(1.3862943611198906, abs=1e-15)


def test_cross_entropy_certain():
    loss = cross_entropy(None, Tensor(np.array([1.0, 0.0])), 0)
    assert float(loss.data) == 0.0


def test_cross_entropy_floor():
    loss = cross_entropy(None, Tensor(np.array([0.0, 1.0])), 0)
    assert float(loss.data) == pytest.approx(-math.log(PROB_FLOOR), abs=1e-12)
    assert math.isfinite(float(loss.data))


def test_cross_entropy_bad_gold():
    with pytest.raises(ValueError):
        cross_entropy(None, Tensor(np.array([0.5, 0.5])), 2)
    with pytest.raises(ValueError):
        cross_entropy(None, Tensor(np.array([0.5, 0.5])), -1)


def test_concat_with_empty_side():
    left = Tensor(np.zeros(0))
    right = Tensor(np.array([4.0, 5.0]))
    assert concat(None, left, right).data.tolist() == [4.0, 5.0]


def test_average_hand_example():
    a = Tensor(np.array([1.0, 3.0]))
    b = Tensor(np.array([3.0, 5.0]))
    assert average(None, [a, b]).data.tolist() == [2.0, 4.0]
    with pytest.raises(ValueError):
        average(None, [])


def test_lstm_cell_zero_fixed_point():
    h = 3
    w = Tensor(np.zeros((4 * h, 2)))
    u = Tensor(np.zeros((4 * h, h)))
    b = Tensor(np.zeros(4 * h))
    x = Tensor(np.zeros(2))
    h0 = Tensor(np.zeros(h))
    c0 = Tensor(np.zeros(h))
    h1, c1 = lstm_cell(None, w, u, b, x, h0, c0)
    assert np.all(h1.data == 0.0)
    assert np.all(c1.data == 0.0)


def test_lstm_cell_shape_checks():
    h = 2
    good = dict(w=Tensor(np.zeros((8, 3))), u=Tensor(np.zeros((8, 2))),
                b=Tensor(np.zeros(8)), x=Tensor(np.zeros(3)),
                h_prev=Tensor(np.zeros(2)), c_prev=Tensor(np.zeros(2)))
    lstm_cell(None, **good)
    bad = dict(good)
    bad["w"] = Tensor(np.zeros((8, 4)))
    with pytest.raises(ValueError):
        lstm_cell(None, **bad)
    bad = dict(good)
    bad["c_prev"] = Tensor(np.zeros(3))
    with pytest.raises(ValueError):
        lstm_cell(None, **bad)


# ----- backward rules against central differences -----------------------


def loss_value(build):
    tape = Tape()
    return float(build(tape).data)


def analytic_grads(build, leaves):
    tape = Tape()
    loss = build(tape)
    backward(tape, loss)
    return [np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy()
            for leaf in leaves]


def assert_matches_fd(build, leaves, tol=1e-6):
    got = analytic_grads(build, leaves)
    for leaf, g in zip(leaves, got):
        want = fd_grad(lambda: loss_value(build), leaf.data)
        assert rel_err(g, want) < tol


def test_grad_add_mul_chain():
    rng = SeededRng(7)
    a = Tensor(rng.uniform(-1, 1, 4))
    b = Tensor(rng.uniform(-1, 1, 4))

    def build(tape):
        return vsum(tape, mul(tape, add(tape, a, b), b))

    assert_matches_fd(build, [a, b])


def test_grad_same_tensor_used_twice():
    x = Tensor(np.array([0.3, -0.7, 1.1]))

    def build(tape):
        return vsum(tape, add(tape, x, x))

    (g,) = analytic_grads(build, [x])
    assert np.allclose(g, 2.0)


def test_grad_scale_and_dot():
    rng = SeededRng(8)
    s = Tensor(np.asarray(0.37))
    v = Tensor(rng.uniform(-1, 1, 3))
    w = Tensor(rng.uniform(-1, 1, 3))

    def build(tape):
        return dot(tape, scale(tape, s, v), w)

    assert_matches_fd(build, [s, v, w])


def test_grad_matvec():
    rng = SeededRng(9)
    w = Tensor(rng.uniform(-1, 1, (3, 4)))
    x = Tensor(rng.uniform(-1, 1, 4))

    def build(tape):
        return vsum(tape, tanh(tape, matvec(tape, w, x)))

    assert_matches_fd(build, [w, x])


def test_grad_average_concat_pick():
    rng = SeededRng(10)
    a = Tensor(rng.uniform(-1, 1, 3))
    b = Tensor(rng.uniform(-1, 1, 3))
    c = Tensor(rng.uniform(-1, 1, 2))

    def build(tape):
        merged = concat(tape, average(tape, [a, b]), c)
        return add(tape, pick(tape, merged, 0), pick(tape, merged, 4))

    assert_matches_fd(build, [a, b, c])


def test_grad_stack_scalars_softmax():
    rng = SeededRng(11)
    xs = [Tensor(np.asarray(v)) for v in rng.uniform(-2, 2, 3)]

    def build(tape):
        probs = softmax(tape, stack_scalars(tape, xs))
        return pick(tape, probs, 1)

    assert_matches_fd(build, xs)


def test_grad_take_row():
    rng = SeededRng(12)
    m = Tensor(rng.uniform(-1, 1, (4, 3)))

    def build(tape):
        # the same row twice plus another row, so scatter accumulation shows
        first = take_row(tape, m, 1)
        again = take_row(tape, m, 1)
        other = take_row(tape, m, 3)
        return vsum(tape, mul(tape, add(tape, first, again), other))

    assert_matches_fd(build, [m])


def test_grad_sigmoid_tanh():
    x = Tensor(np.array([-1.5, 0.0, 0.8]))

    def build(tape):
        return vsum(tape, mul(tape, sigmoid(tape, x), tanh(tape, x)))

    assert_matches_fd(build, [x])


def test_grad_softmax_cross_entropy():
    logits = Tensor(np.array([0.2, -1.3, 0.9, 0.0]))

    def build(tape):
        return cross_entropy(tape, softmax(tape, logits), 2)

    assert_matches_fd(build, [logits])


def test_grad_tanh_at_one_closed_form():
    x = Tensor(np.asarray(1.0))

    def build(tape):
        return tanh(tape, x)

    (g,) = analytic_grads(build, [x])
    assert float(g) == pytest.approx(1.0 - math.tanh(1.0) ** 2, abs=1e-15)


def test_grad_lstm_cell_all_inputs():
    rng = SeededRng(13)
    h = 3
    d = 2
    w = Tensor(rng.uniform(-0.5, 0.5, (4 * h, d)))
    u = Tensor(rng.uniform(-0.5, 0.5, (4 * h, h)))
    b = Tensor(rng.uniform(-0.5, 0.5, 4 * h))
    x = Tensor(rng.uniform(-1, 1, d))
    h0 = Tensor(rng.uniform(-1, 1, h))
    c0 = Tensor(rng.uniform(-1, 1, h))

    def build(tape):
        h1, c1 = lstm_cell(tape, w, u, b, x, h0, c0)
        h2, _ = lstm_cell(tape, w, u, b, x, h1, c1)
        return vsum(tape, h2)

    assert_matches_fd(build, [w, u, b, x, h0, c0])


def test_grad_lstm_cell_loss_on_cell_state_only():
    rng = SeededRng(14)
    h = 2
    w = Tensor(rng.uniform(-0.5, 0.5, (4 * h, 2)))
    u = Tensor(rng.uniform(-0.5, 0.5, (4 * h, h)))
    b = Tensor(rng.uniform(-0.5, 0.5, 4 * h))
    x = Tensor(rng.uniform(-1, 1, 2))
    h0 = Tensor(rng.uniform(-1, 1, h))
    c0 = Tensor(rng.uniform(-1, 1, h))

    def build(tape):
        _, c1 = lstm_cell(tape, w, u, b, x, h0, c0)
        return vsum(tape, c1)

    assert_matches_fd(build, [w, u, b, x, h0, c0])


def test_grad_cross_entropy_closed_form():
    probs = Tensor(np.array([0.25, 0.75]))

    def build(tape):
        return cross_entropy(tape, probs, 0)

    (g,) = analytic_grads(build, [probs])
    assert g.tolist() == [-4.0, 0.0]


# ----- tape mechanics ---------------------------------------------------


def test_backward_rejects_vector_loss():
    tape = Tape()
    x = Tensor(np.array([1.0, 2.0]))
    y = add(tape, x, x)
    with pytest.raises(ValueError):
        backward(tape, y)


def test_backward_rejects_foreign_loss():
    tape = Tape()
    other = Tape()
    x = Tensor(np.asarray(2.0))
    y = tanh(other, x)
    with pytest.raises(ValueError):
        backward(tape, y)


def test_backward_skips_unrelated_subgraph():
    tape = Tape()
    x = Tensor(np.array([1.0, 2.0]))
    unused = Tensor(np.array([3.0, 4.0]))
    tanh(tape, unused)  # on the tape but not feeding the loss
    loss = vsum(tape, mul(tape, x, x))
    backward(tape, loss)
    assert unused.grad is None
    assert np.allclose(x.grad, 2.0 * x.data)


def test_eval_mode_matches_taped_values():
    rng = SeededRng(15)
    x = Tensor(rng.uniform(-1, 1, 5))
    tape = Tape()
    taped = softmax(tape, tanh(tape, x))
    plain = softmax(None, tanh(None, x))
    assert taped.data.tolist() == plain.data.tolist()
    assert len(tape) == 2


def test_eval_mode_records_nothing():
    x = Tensor(np.array([1.0, -1.0]))
    out = sigmoid(None, x)
    assert out.tape is None


# ----- dropout masks ----------------------------------------------------


def test_dropout_mask_values_and_mean():
    rng = SeededRng(21).derive("dropout")
    p = 0.3
    mask = dropout_mask(rng, 100_000, p).data
    keep_value = 1.0 / (1.0 - p)
    assert set(np.unique(mask)).issubset({0.0, keep_value})
    # inverted scaling keeps the expectation near one
    assert abs(float(np.mean(mask)) - 1.0) < 0.02


def test_dropout_mask_zero_rate_is_identity():
    rng = SeededRng(22)
    mask = dropout_mask(rng, 50, 0.0).data
    assert np.all(mask == 1.0)


def test_dropout_mask_invalid_rate():
    rng = SeededRng(23)
    for bad in (-0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            dropout_mask(rng, 4, bad)


def test_dropout_mask_seeded_reproducibility():
    a = dropout_mask(SeededRng(5).derive("x"), 200, 0.5).data
    b = dropout_mask(SeededRng(5).derive("x"), 200, 0.5).data
    assert np.array_equal(a, b)


# ----- dtype switch -----------------------------------------------------


def test_float32_mode():
    set_default_dtype("float32")
    try:
        x = Tensor(np.array([0.5, -0.5]))
        assert x.data.dtype == np.float32
        y = tanh(None, x)
        assert y.data.dtype == np.float32
    finally:
        set_default_dtype("float64")
    assert default_dtype() is np.float64


def test_bad_dtype_rejected():
    with pytest.raises(ValueError):
        set_default_dtype("int32")


# ----- property tests ---------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=8))
def test_softmax_always_a_distribution(values):
    y = softmax(None, Tensor(np.array(values))).data
    assert float(np.sum(y)) == pytest.approx(1.0, abs=1e-9)
    assert np.all(y >= 0.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=-700, max_value=700))
def test_sigmoid_complement(v):
    a = float(sigmoid(None, scalar(v)).data)
    b = float(sigmoid(None, scalar(-v)).data)
    assert 0.0 <= a <= 1.0
    assert a + b == pytest.approx(1.0, abs=1e-12)
