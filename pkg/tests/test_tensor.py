"""Finite-difference checks for every autodiff op.

Each op builds a scalar loss through a random projection so the check
exercises the full output, then compares the analytic gradient against
central differences for every input.
"""

import numpy as np
import pytest

from vizretrieve.errors import ShapeMismatch
from vizretrieve.nn import tensor as T
from vizretrieve.nn.tensor import Tensor

from conftest import assert_grads_close, fd_gradient


def fd_check(build, arrays, tol=1e-4):
    """Backprop ``build(*tensors)`` and fd-check the grad of every input."""
    tens = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build(*tens)
    loss.backward()

    def scalar(arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    for i, t in enumerate(tens):
        numeric = fd_gradient(scalar, [a.copy() for a in arrays], i)
        assert t.grad is not None
        assert_grads_close(t.grad, numeric, tol=tol)


def project(out, rng):
    """Contract any-shaped output to a scalar with a fixed random weighting."""
    w = Tensor(rng.standard_normal(out.shape))
    return T.sum_(T.mul(out, w))


# ---------------------------------------------------------------------------
# Pointwise and arithmetic


def test_add_sub_mul_div_grads(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((3, 4)) + 3.0  # keep the divisor away from 0
    p = rng.standard_normal((3, 4))
    fd_check(lambda x, y: project(x + y, np.random.default_rng(0)), [a, b])
    fd_check(lambda x, y: project(x - y, np.random.default_rng(1)), [a, b])
    fd_check(lambda x, y: project(x * y, np.random.default_rng(2)), [a, b])
    fd_check(lambda x, y: project(x / y, np.random.default_rng(3)), [a, b])
    fd_check(lambda x: project(-x, np.random.default_rng(4)), [p])


def test_broadcast_grads(rng):
    a = rng.standard_normal((2, 3, 4))
    row = rng.standard_normal((4,))
    col = rng.standard_normal((3, 1))
    fd_check(lambda x, y: project(x + y, np.random.default_rng(5)), [a, row])
    fd_check(lambda x, y: project(x * y, np.random.default_rng(6)), [a, col])


def test_scalar_operand_broadcast(rng):
    a = rng.standard_normal((3, 3))
    fd_check(lambda x: project(2.5 * x + 1.0, np.random.default_rng(7)), [a])
    fd_check(lambda x: project(1.0 - x, np.random.default_rng(8)), [a])


def test_unary_nonlinearities(rng):
    x = rng.standard_normal((4, 5))
    # relu is non-differentiable at 0; push values away from the kink.
    x = np.where(np.abs(x) < 0.1, 0.5, x)
    pos = np.abs(rng.standard_normal((4, 5))) + 0.5
    fd_check(lambda t: project(T.relu(t), np.random.default_rng(9)), [x])
    fd_check(lambda t: project(T.softplus(t), np.random.default_rng(10)), [x])
    fd_check(lambda t: project(T.exp(t), np.random.default_rng(11)), [x])
    fd_check(lambda t: project(T.log(t), np.random.default_rng(12)), [pos])
    fd_check(lambda t: project(T.sqrt(t), np.random.default_rng(13)), [pos])


# ---------------------------------------------------------------------------
# Reductions and shape ops


def test_reduction_grads(rng):
    x = rng.standard_normal((3, 5))
    fd_check(lambda t: T.sum_(t), [x])
    fd_check(lambda t: project(T.sum_(t, axis=0), np.random.default_rng(14)), [x])
    fd_check(
        lambda t: project(T.sum_(t, axis=1, keepdims=True), np.random.default_rng(15)),
        [x],
    )
    fd_check(lambda t: T.mean_(t), [x])
    fd_check(lambda t: project(T.mean_(t, axis=0), np.random.default_rng(16)), [x])


def test_batch_stats_grads(rng):
    x = rng.standard_normal((6, 4))
    fd_check(lambda t: project(T.batch_mean(t), np.random.default_rng(17)), [x])
    fd_check(lambda t: project(T.batch_var(t), np.random.default_rng(18)), [x])


def test_batch_var_is_population_variance(rng):
    x = rng.standard_normal((8, 3))
    got = T.batch_var(Tensor(x)).data
    np.testing.assert_allclose(got, x.var(axis=0, keepdims=True), rtol=1e-12)


def test_shape_op_grads(rng):
    x = rng.standard_normal((2, 3, 4))
    fd_check(lambda t: project(T.reshape(t, (6, 4)), np.random.default_rng(19)), [x])
    fd_check(
        lambda t: project(T.transpose(t, (2, 0, 1)), np.random.default_rng(20)), [x]
    )
    m = rng.standard_normal((3, 4))
    fd_check(lambda t: project(t.T, np.random.default_rng(21)), [m])


def test_concat_grads(rng):
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((4, 3))
    c = rng.standard_normal((1, 3))
    fd_check(
        lambda x, y, z: project(T.concat([x, y, z], axis=0), np.random.default_rng(22)),
        [a, b, c],
    )
    d = rng.standard_normal((2, 5))
    fd_check(
        lambda x, y: project(T.concat([x, y], axis=1), np.random.default_rng(23)),
        [a, d],
    )


# ---------------------------------------------------------------------------
# Linear algebra and graph ops


def test_matmul_grads(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    fd_check(lambda x, y: project(x @ y, np.random.default_rng(24)), [a, b])


def test_matmul_shape_errors(rng):
    with pytest.raises(ShapeMismatch):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    with pytest.raises(ShapeMismatch):
        T.matmul(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((4, 2))))
    with pytest.raises(ShapeMismatch):
        T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))


def test_gather_rows_grads_with_repeats(rng):
    x = rng.standard_normal((5, 3))
    idx = np.array([0, 2, 2, 4, 0, 0])
    fd_check(
        lambda t: project(T.gather_rows(t, idx), np.random.default_rng(25)), [x]
    )
    # Repeated rows must scatter-add: row 0 is picked three times.
    t = Tensor(x, requires_grad=True)
    T.sum_(T.gather_rows(t, idx)).backward()
    np.testing.assert_allclose(t.grad[0], 3.0)
    np.testing.assert_allclose(t.grad[1], 0.0)
    np.testing.assert_allclose(t.grad[2], 2.0)


def test_segment_sum_grads(rng):
    x = rng.standard_normal((7, 3))
    seg = np.array([0, 1, 1, 0, 2, 2, 2])
    fd_check(
        lambda t: project(T.segment_sum(t, seg, 3), np.random.default_rng(26)), [x]
    )
    with pytest.raises(ShapeMismatch):
        T.segment_sum(Tensor(x), np.array([0, 1]), 2)


def test_l2_normalize_grads(rng):
    x = rng.standard_normal((4, 6))
    fd_check(lambda t: project(T.l2_normalize(t), np.random.default_rng(27)), [x])
    rows = T.l2_normalize(Tensor(x)).data
    np.testing.assert_allclose(np.linalg.norm(rows, axis=1), 1.0, rtol=1e-9)


def test_l2_normalize_zero_row_is_finite():
    x = np.zeros((2, 3))
    x[1] = [3.0, 4.0, 0.0]
    t = Tensor(x, requires_grad=True)
    out = T.l2_normalize(t)
    assert np.all(np.isfinite(out.data))
    T.sum_(out).backward()
    assert np.all(np.isfinite(t.grad))


def test_cosine_similarity_grads(rng):
    a = rng.standard_normal((3, 5))
    b = rng.standard_normal((3, 5))
    fd_check(
        lambda x, y: project(T.cosine_similarity(x, y), np.random.default_rng(28)),
        [a, b],
    )
    same = T.cosine_similarity(Tensor(a), Tensor(a)).data
    np.testing.assert_allclose(same, 1.0, rtol=1e-9)


# ---------------------------------------------------------------------------
# Convolution and pooling


def test_conv2d_grads(rng):
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal((4,))
    for stride, pad in [(1, 0), (1, 1), (2, 1)]:
        fd_check(
            lambda xi, wi, bi: project(
                T.conv2d(xi, wi, bi, stride=stride, pad=pad),
                np.random.default_rng(29),
            ),
            [x, w, b],
            tol=2e-4,
        )


def test_conv2d_without_bias_and_channel_check(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    fd_check(
        lambda xi, wi: project(T.conv2d(xi, wi, None), np.random.default_rng(30)),
        [x, w],
    )
    with pytest.raises(ShapeMismatch):
        T.conv2d(Tensor(x), Tensor(np.zeros((3, 5, 3, 3))), None)


def test_conv2d_matches_direct_convolution(rng):
    # Cross-check the im2col path against an explicit sliding dot product.
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 2, 2))
    out = T.conv2d(Tensor(x), Tensor(w), None, stride=1, pad=0).data
    for f in range(3):
        for oy in range(4):
            for ox in range(4):
                ref = float(np.sum(x[0, :, oy : oy + 2, ox : ox + 2] * w[f]))
                assert abs(out[0, f, oy, ox] - ref) < 1e-10


def test_maxpool2d_grads(rng):
    x = rng.standard_normal((2, 2, 6, 6))
    # Keep window maxima unique so fd does not straddle a tie.
    x += np.arange(x.size).reshape(x.shape) * 1e-3
    fd_check(lambda t: project(T.maxpool2d(t, 2), np.random.default_rng(31)), [x])


def test_avgpool2d_grads(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    fd_check(lambda t: project(T.avgpool2d(t, 2), np.random.default_rng(32)), [x])


# ---------------------------------------------------------------------------
# Graph mechanics


def test_stop_gradient_blocks_backward(rng):
    x = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    y = T.sum_(T.mul(T.stop_gradient(x), x))
    y.backward()
    # d/dx of sg(x)*x is sg(x), not 2x.
    np.testing.assert_allclose(x.grad, x.data)


def test_backward_requires_scalar(rng):
    x = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    with pytest.raises(ShapeMismatch):
        (x * 2.0).backward()


def test_reused_tensor_accumulates(rng):
    x = Tensor(rng.standard_normal((3,)), requires_grad=True)
    T.sum_(x + x).backward()
    np.testing.assert_allclose(x.grad, 2.0)


def test_zero_grad_resets():
    x = Tensor(np.ones(3), requires_grad=True)
    T.sum_(x).backward()
    np.testing.assert_allclose(x.grad, 1.0)
    x.zero_grad()
    assert x.grad is None
    T.sum_(x * 3.0).backward()
    np.testing.assert_allclose(x.grad, 3.0)


def test_grad_not_tracked_without_flag(rng):
    x = Tensor(rng.standard_normal((3,)))
    y = Tensor(rng.standard_normal((3,)), requires_grad=True)
    T.sum_(x * y).backward()
    assert x.grad is None
    np.testing.assert_allclose(y.grad, x.data)


def test_diamond_graph_backward_once(rng):
    # x feeds two branches that rejoin; each node's backward must fire once.
    x = Tensor(np.array([2.0]), requires_grad=True)
    h = x * 3.0
    y = T.sum_(h * h)
    y.backward()
    np.testing.assert_allclose(x.grad, [36.0])


def test_composite_network_gradient(rng):
    # A small dense net end to end: the kind of graph training actually builds.
    x = rng.standard_normal((4, 6))
    w1 = rng.standard_normal((6, 8)) * 0.5
    w2 = rng.standard_normal((8, 3)) * 0.5

    def net(xi, a, b):
        h = T.relu(xi @ a)
        z = T.l2_normalize(h @ b)
        return T.sum_(T.mul(z, z * 0.5))

    fd_check(net, [x, w1, w2])
