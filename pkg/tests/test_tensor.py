"""Motor diferenciable: operaciones, errores de shape y gradientes"""

import numpy as np
import pytest

from src.core.functional import conv2d, interpolation_matrix, max_pool2d, upsample2d
from src.core.gradcheck import grad_check
from src.core.optim import Adam
from src.core.tensor import (
    ShapeError,
    Tensor,
    concat,
    is_grad_enabled,
    no_grad,
    parameter,
    scatter_rows,
    stack,
    straight_through,
)


def _param(rng, *shape, name="x"):
    return parameter(rng.uniform(-2.0, 2.0, shape), name=name)


class TestForward:
    def test_broadcast_add(self):
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.arange(3.0))
        np.testing.assert_array_equal((a + b).data, np.ones((2, 3)) + np.arange(3.0))

    def test_incompatible_shapes_name_both(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4,\)"):
            Tensor(np.ones((2, 3))) + Tensor(np.ones(4))

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))

    def test_softmax_rows_sum_to_one(self, rng):
        x = Tensor(rng.normal(0.0, 50.0, (20, 7)))
        probs = x.softmax(axis=-1).data
        assert np.all(probs > 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_softmax_shift_invariant(self, rng):
        x = rng.normal(size=(4, 5))
        np.testing.assert_allclose(Tensor(x).softmax().data, Tensor(x + 100.0).softmax().data, atol=1e-12)

    def test_log_softmax_matches_log_of_softmax(self, rng):
        x = Tensor(rng.normal(size=(3, 6)))
        np.testing.assert_allclose(x.log_softmax().data, np.log(x.softmax().data), atol=1e-12)

    def test_sigmoid_extremes_are_finite(self):
        out = Tensor(np.array([-800.0, 0.0, 800.0])).sigmoid().data
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])
        assert np.all(np.isfinite(out))

    def test_transpose_default_swaps_last_axes(self):
        x = Tensor(np.zeros((2, 3, 4)))
        assert x.transpose().shape == (2, 4, 3)
        assert x.transpose(2, 0, 1).shape == (4, 2, 3)

    def test_reshape_error(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros(6)).reshape(4, 2)

    def test_stack_and_concat(self):
        a, b = Tensor(np.ones((2, 2))), Tensor(np.zeros((2, 2)))
        assert concat([a, b], axis=1).shape == (2, 4)
        assert stack([a, b]).shape == (2, 2, 2)
        with pytest.raises(ShapeError):
            stack([a, Tensor(np.ones(3))])

    def test_scatter_rows(self):
        out = scatter_rows(Tensor(np.array([[1.0], [2.0]])), np.array([3, 0]), 4)
        np.testing.assert_array_equal(out.data[:, 0], [2.0, 0.0, 0.0, 1.0])
        with pytest.raises(IndexError):
            scatter_rows(Tensor(np.ones((1, 1))), np.array([5]), 4)

    def test_no_grad_builds_no_graph(self):
        x = parameter(np.ones(3))
        with no_grad():
            assert not is_grad_enabled()
            y = (x * 2.0).sum()
        assert is_grad_enabled()
        assert not y.requires_grad

    def test_backward_requires_scalar(self):
        x = parameter(np.ones(3))
        with pytest.raises(ShapeError):
            (x * 2.0).backward()


class TestBackward:
    def test_leaf_accumulates(self):
        x = parameter(np.array([1.0, 2.0]))
        (x * x).sum().backward()
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, [4.0, 8.0])

    def test_leaf_off_the_path_has_zero_gradient(self):
        used = parameter(np.array([1.0, 2.0]), name="used")
        unused = parameter(np.ones((2, 3)), name="unused")
        np.testing.assert_array_equal(unused.grad, np.zeros((2, 3)))
        (used * used).sum().backward()
        np.testing.assert_array_equal(unused.grad, np.zeros((2, 3)))
        np.testing.assert_allclose(used.grad, [2.0, 4.0])

    def test_plain_tensor_has_no_gradient_buffer(self):
        assert Tensor(np.ones(2)).grad is None

    def test_shared_subexpression(self):
        x = parameter(np.array(3.0))
        y = x * x
        (y + y).backward()
        np.testing.assert_allclose(x.grad, 12.0)

    def test_relu_gradient_zero_at_zero(self):
        x = parameter(np.array([-1.0, 0.0, 1.0]))
        x.relu().sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])

    def test_max_ties_share_gradient(self):
        x = parameter(np.array([2.0, 2.0, 1.0]))
        x.max().backward()
        np.testing.assert_allclose(x.grad, [0.5, 0.5, 0.0])

    def test_straight_through(self):
        soft = parameter(np.array([0.2, 0.7]))
        out = straight_through(np.array([0.0, 1.0]), soft * 3.0)
        np.testing.assert_array_equal(out.data, [0.0, 1.0])
        out.sum().backward()
        np.testing.assert_allclose(soft.grad, [3.0, 3.0])


class TestOperationGradients:
    """Cada operación contra diferencias centrales con entradas en [-2, 2]"""

    @pytest.mark.parametrize(
        "fn",
        [
            lambda x, y: (x + y).sum(),
            lambda x, y: (x - y * 2.0).sum(),
            lambda x, y: (x * y).sum(),
            lambda x, y: (x / (y * y + 1.0)).sum(),
            lambda x, y: (x @ y.T).sum(),
            lambda x, y: (x.exp() * y).sum(),
            lambda x, y: ((x * x + 1.0).log() * y).sum(),
            lambda x, y: (x.sigmoid() * y).sum(),
            lambda x, y: (x.softmax(axis=1) * y).sum(),
            lambda x, y: (x.log_softmax(axis=0) * y).sum(),
            lambda x, y: ((x * x + 1.0) ** 1.5).mean() + y.sum(),
            lambda x, y: (x.transpose() @ y).sum(),
            lambda x, y: (x.reshape(12) * y.reshape(12)).sum(),
            lambda x, y: (x[1:, ::2] * y[:2, 1:3]).sum(),
            lambda x, y: concat([x, y], axis=0).softmax(axis=0)[0].sum(),
            lambda x, y: (x.mean(axis=0) * y.sum(axis=0)).sum(),
        ],
    )
    def test_matches_finite_differences(self, rng, fn):
        x = _param(rng, 3, 4, name="x")
        y = _param(rng, 3, 4, name="y")
        report = grad_check(lambda: fn(x, y), [x, y], eps=1e-6)
        assert report.passed(1e-5), report

    def test_broadcast_gradient(self, rng):
        x = _param(rng, 3, 4, name="x")
        b = _param(rng, 4, name="b")
        report = grad_check(lambda: ((x + b) * (x - b)).sum(), [x, b], eps=1e-6)
        assert report.passed(1e-5)


class TestSpatialOps:
    def test_conv2d_matches_direct_sum(self, rng):
        x = rng.normal(size=(1, 2, 4, 4))
        w = rng.normal(size=(3, 2, 3, 3))
        out = conv2d(Tensor(x), Tensor(w)).data
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        expected = np.einsum("cij,ocij->o", padded[0, :, 1:4, 2:5], w)
        np.testing.assert_allclose(out[0, :, 1, 2], expected, atol=1e-12)

    def test_conv2d_gradient(self, rng):
        x = _param(rng, 2, 2, 4, 4, name="x")
        w = _param(rng, 3, 2, 3, 3, name="w")
        b = _param(rng, 3, name="b")
        report = grad_check(lambda: (conv2d(x, w, b) ** 2).mean(), [x, w, b], eps=1e-6)
        assert report.passed(1e-5)

    def test_max_pool_gradient_routes_to_winner(self):
        x = parameter(np.arange(16.0).reshape(1, 1, 4, 4))
        out = max_pool2d(x)
        np.testing.assert_array_equal(out.data[0, 0], [[5.0, 7.0], [13.0, 15.0]])
        out.sum().backward()
        assert x.grad.sum() == 4.0
        assert x.grad[0, 0, 1, 1] == 1.0

    def test_bilinear_rows_sum_to_one(self):
        matrix = interpolation_matrix(4, 8, "bilinear")
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0)

    def test_nearest_duplicates(self):
        x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
        out = upsample2d(x, (4, 4), "nearest").data[0, 0]
        np.testing.assert_array_equal(out[:2, :2], np.zeros((2, 2)))
        np.testing.assert_array_equal(out[2:, 2:], np.full((2, 2), 3.0))

    def test_upsample_gradient(self, rng):
        x = _param(rng, 1, 2, 3, 3, name="x")
        report = grad_check(lambda: (upsample2d(x, (6, 6)) ** 2).sum(), [x], eps=1e-6)
        assert report.passed(1e-5)


class TestAdam:
    def test_frozen_parameter_not_updated(self):
        a = parameter(np.array([1.0]), name="a")
        g = parameter(np.array(-2.0), name="g")
        optimizer = Adam({"a": a, "g": g}, lr=0.1)
        optimizer.zero_grad()
        (a * g).sum().backward()
        optimizer.step(frozen=["g"])
        assert g.data == -2.0
        assert a.data[0] != 1.0

    def test_first_step_moves_by_lr(self):
        a = parameter(np.array([1.0, -1.0]), name="a")
        optimizer = Adam({"a": a}, lr=0.01)
        optimizer.zero_grad()
        (a * np.array([3.0, -5.0])).sum().backward()
        optimizer.step()
        np.testing.assert_allclose(a.data, [0.99, -0.99], atol=1e-8)
