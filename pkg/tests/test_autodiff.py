import numpy as np
import pytest

from pillartrack import oracles
from pillartrack.autodiff import (MissingGradientError, Parameter, ShapeError,
                                  Tensor, adam_step, batchnorm, conv2d_3x3,
                                  elu_plus_one, gather_cell, grad_check, linear,
                                  maxpool_set, relu, sigmoid)


def test_linear_identity_and_zero_weight():
    x = Tensor([[1.0, 2.0]])
    w_id = Tensor([[1.0, 0.0], [0.0, 1.0]])
    b0 = Tensor([0.0, 0.0])
    np.testing.assert_array_equal(linear(x, w_id, b0).data, [[1.0, 2.0]])

    w0 = Tensor([[0.0, 0.0], [0.0, 0.0]])
    b = Tensor([3.0, 4.0])
    np.testing.assert_array_equal(linear(x, w0, b).data, [[3.0, 4.0]])


def test_linear_matches_naive_matmul():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 3))
    w = rng.normal(size=(3, 2))
    b = rng.normal(size=2)
    out = linear(Tensor(x), Tensor(w), Tensor(b)).data
    ref = oracles.naive_matmul(x, w) + b
    assert np.max(np.abs(out - ref)) < 1e-12


def test_linear_shape_mismatch():
    with pytest.raises(ShapeError):
        linear(Tensor([[1.0, 2.0]]), Tensor([[1.0], [1.0], [1.0]]), Tensor([0.0]))


def test_activations_pointwise_values():
    assert relu(Tensor([-1.0])).data[0] == 0.0
    assert relu(Tensor([2.0])).data[0] == 2.0
    assert elu_plus_one(Tensor([0.0])).data[0] == 1.0
    assert elu_plus_one(Tensor([-50.0])).data[0] > 0.0
    assert 0.0 < sigmoid(Tensor([-30.0])).data[0] < 1.0


def test_activation_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    for op in (relu, elu_plus_one, sigmoid):
        data = rng.normal(size=20)
        data += np.sign(data) * 0.05
        x = Parameter("x", data)
        r = rng.normal(size=20)
        err = grad_check(lambda: (op(x) * r).sum(), [x], probes_per_param=20,
                         rng=np.random.default_rng(2))
        assert err < 1e-6


def test_batchnorm_normalized_input_passthrough():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(64, 3))
    x = (x - x.mean(axis=0)) / x.std(axis=0)
    gamma = Tensor(np.ones(3))
    beta = Tensor(np.zeros(3))
    out = batchnorm(Tensor(x), gamma, beta, np.zeros(3), np.ones(3), training=True)
    assert np.max(np.abs(out.data - x)) < 1e-4   # eps-stabilized variance


def test_batchnorm_zero_gamma_gives_beta():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(8, 4))
    beta = np.array([1.0, -2.0, 0.5, 3.0])
    out = batchnorm(Tensor(x), Tensor(np.zeros(4)), Tensor(beta),
                    np.zeros(4), np.ones(4), training=True)
    np.testing.assert_allclose(out.data, np.broadcast_to(beta, (8, 4)))


def test_batchnorm_matches_two_pass_oracle():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(8, 4))
    gamma = rng.uniform(0.5, 1.5, 4)
    beta = rng.normal(size=4)
    out = batchnorm(Tensor(x), Tensor(gamma), Tensor(beta), np.zeros(4),
                    np.ones(4), training=True).data
    ref = oracles.two_pass_batchnorm(x, gamma, beta)
    assert np.max(np.abs(out - ref)) < 1e-10


def test_batchnorm_eval_uses_running_stats():
    x = Tensor(np.array([[10.0, 20.0]]))
    rm = np.array([10.0, 20.0])
    rv = np.array([4.0, 9.0])
    out = batchnorm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), rm, rv,
                    training=False)
    np.testing.assert_allclose(out.data, [[0.0, 0.0]], atol=1e-12)
    # eval must not touch the buffers
    np.testing.assert_array_equal(rm, [10.0, 20.0])


def test_batchnorm_single_row_uses_epsilon():
    out = batchnorm(Tensor([[5.0, -3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)),
                    np.zeros(2), np.ones(2), training=True)
    np.testing.assert_allclose(out.data, [[0.0, 0.0]], atol=1e-12)


def test_maxpool_singletons_and_pairs():
    x = Tensor(np.array([[1.0, 5.0], [3.0, 2.0]]))
    out = maxpool_set(x, np.array([0, 1]), 2)
    np.testing.assert_array_equal(out.data, [[1.0, 5.0], [3.0, 2.0]])

    out = maxpool_set(x, np.array([0, 0]), 1)
    np.testing.assert_array_equal(out.data, [[3.0, 5.0]])


def test_maxpool_matches_bruteforce():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(50, 8))
    groups = rng.integers(0, 7, size=50)
    groups[:7] = np.arange(7)
    out = maxpool_set(Tensor(x), groups, 7).data
    ref = oracles.group_maxpool(x, groups, 7)
    np.testing.assert_array_equal(out, ref)


def test_maxpool_empty_group_rejected():
    with pytest.raises(ValueError):
        maxpool_set(Tensor(np.ones((3, 2))), np.array([0, 0, 1]), 3)


def test_maxpool_backward_routes_to_lowest_argmax_row():
    # rows 0 and 2 tie in group 0; gradient must hit row 0 only
    x = Parameter("x", np.array([[2.0, 1.0], [0.0, 5.0], [2.0, 1.0]]))
    out = maxpool_set(x, np.array([0, 0, 0]), 1)
    out.sum().backward()
    np.testing.assert_array_equal(x.grad, [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])


def test_maxpool_backward_sparsity_bound():
    rng = np.random.default_rng(6)
    x = Parameter("x", rng.normal(size=(40, 5)))
    groups = rng.integers(0, 4, size=40)
    groups[:4] = np.arange(4)
    maxpool_set(x, groups, 4).sum().backward()
    for g in range(4):
        rows = x.grad[groups == g]
        assert np.count_nonzero(rows) <= 5


def test_conv_identity_kernel():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(1, 5, 5))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    out = conv2d_3x3(Tensor(x), Tensor(w), Tensor(np.zeros(1)))
    np.testing.assert_allclose(out.data, x)


def test_conv_ones_kernel_on_one_hot():
    x = np.zeros((1, 5, 5))
    x[0, 2, 2] = 1.0
    w = np.ones((1, 1, 3, 3))
    out = conv2d_3x3(Tensor(x), Tensor(w), Tensor(np.zeros(1))).data
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = 1.0
    np.testing.assert_array_equal(out[0], expected)


def test_conv_matches_naive_conv():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(2, 6, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = conv2d_3x3(Tensor(x), Tensor(w), Tensor(b)).data
    ref = oracles.naive_conv2d_3x3(x, w, b)
    assert np.max(np.abs(out - ref)) < 1e-12


def test_gather_cell_forward_backward():
    x = Parameter("x", np.arange(24, dtype=np.float64).reshape(2, 3, 4))
    out = gather_cell(x, 1, 2)
    np.testing.assert_array_equal(out.data, [x.data[0, 1, 2], x.data[1, 1, 2]])
    out.sum().backward()
    assert x.grad.sum() == 2.0
    assert x.grad[0, 1, 2] == 1.0 and x.grad[1, 1, 2] == 1.0


def test_adam_zero_gradient_keeps_parameter():
    p = Parameter("p", np.array([1.0, -2.0]))
    p.grad = np.zeros(2)
    adam_step([p])
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_moves_by_lr():
    p = Parameter("p", np.array(1.0))
    p.grad = np.array(1.0)
    adam_step([p], lr=0.1)
    # bias-corrected first step: m_hat = g, v_hat = g^2
    assert abs(float(p.data) - (1.0 - 0.1 * 1.0 / (1.0 + 1e-8))) < 1e-12
    assert p.grad is None and p.step_count == 1


def test_adam_converges_on_quadratic():
    p = Parameter("p", np.array(1.0))
    for _ in range(200):
        loss = ((p - 3.0) ** 2).sum()
        loss.backward()
        adam_step([p], lr=0.1)
    assert abs(float(p.data) - 3.0) < 0.05


def test_adam_missing_gradient_names_parameter():
    p = Parameter("stage0.sa_q", np.ones(3))
    with pytest.raises(MissingGradientError, match="stage0.sa_q"):
        adam_step([p])


def test_grad_check_on_linear_sum():
    rng = np.random.default_rng(9)
    x = Parameter("x", rng.normal(size=(4, 3)))
    w = Parameter("w", rng.normal(size=(3, 2)))
    b = Parameter("b", rng.normal(size=2))
    err = grad_check(lambda: linear(x, w, b).sum(), [x, w, b],
                     rng=np.random.default_rng(10))
    assert err < 1e-7


def test_grad_check_rejects_float32():
    p = Parameter("p", np.ones(2), dtype=np.float32)
    with pytest.raises(ValueError):
        grad_check(lambda: p.sum(), [p])


def test_two_layer_composition_against_hand_derivation():
    # f = sum(relu(x @ w1 + b1) @ w2 + b2) on a 2x2 instance
    x_val = np.array([[1.0, -2.0], [0.5, 3.0]])
    w1_val = np.array([[0.7, -0.3], [0.2, 0.9]])
    b1_val = np.array([0.1, -0.2])
    w2_val = np.array([[1.5, 0.4], [-0.6, 1.1]])
    b2_val = np.array([0.0, 0.3])

    x = Parameter("x", x_val)
    w1 = Parameter("w1", w1_val)
    b1 = Parameter("b1", b1_val)
    w2 = Parameter("w2", w2_val)
    b2 = Parameter("b2", b2_val)
    loss = linear(relu(linear(x, w1, b1)), w2, b2).sum()
    loss.backward()

    h_pre = x_val @ w1_val + b1_val
    mask = (h_pre > 0).astype(float)
    dh = (np.ones((2, 2)) @ w2_val.T) * mask      # dL/dh through the relu
    np.testing.assert_allclose(w2.grad, np.maximum(h_pre, 0).T @ np.ones((2, 2)), atol=1e-10)
    np.testing.assert_allclose(b2.grad, [2.0, 2.0], atol=1e-10)
    np.testing.assert_allclose(w1.grad, x_val.T @ dh, atol=1e-10)
    np.testing.assert_allclose(b1.grad, dh.sum(axis=0), atol=1e-10)
    np.testing.assert_allclose(x.grad, dh @ w1_val.T, atol=1e-10)


def test_forward_determinism_bitwise():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(16, 8))
    w = rng.normal(size=(8, 8))
    outs = [(sigmoid(Tensor(x) @ Tensor(w))).data for _ in range(2)]
    assert np.array_equal(outs[0], outs[1])


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3), requires_grad=True).backward()


def test_gradient_accumulates_across_backward_calls():
    p = Parameter("p", np.array(2.0))
    (p * 3.0).sum().backward()
    (p * 3.0).sum().backward()
    assert float(p.grad) == 6.0
