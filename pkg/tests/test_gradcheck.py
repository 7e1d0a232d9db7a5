import numpy as np
import pytest

from funcnet import tensor as T
from funcnet.gradcheck import grad_check, layer_suite
from funcnet.tensor import Tensor

SUITE = layer_suite(seed=0)


@pytest.mark.parametrize("name", sorted(SUITE))
def test_layer_suite_case_passes(name):
    report = SUITE[name]
    assert report.failure is None
    assert report.worst < 1e-4, report.max_rel_error


def test_suite_covers_required_ops():
    for needed in ("dense", "conv1d_k3_same_s1", "batch_norm_train", "avg_pool1d", "elu", "relu", "mse",
                   "func_conv1d_fourier", "func_dense_pointwise", "func_dense_pool"):
        assert needed in SUITE


def test_detects_wrong_gradient():
    x = Tensor(np.random.default_rng(0).normal(size=4), requires_grad=True)

    def broken():
        # forward is x**2 summed, backward claims 3x
        return T._node(np.asarray((x.data ** 2).sum()), (x,), lambda g: (3.0 * g * x.data,))

    report = grad_check(broken, {"x": x})
    assert not report.passed and report.worst > 0.1


def test_non_finite_forward_is_failure():
    x = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    report = grad_check(lambda: T.total(T.multiply(x, Tensor(np.array([np.inf, 1.0])))), {"x": x})
    assert not report.passed and "non-finite" in report.failure


def test_requires_float64():
    x = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
    assert grad_check(lambda: T.total(x), {"x": x}).failure


def test_inputs_restored_after_check():
    x = Tensor(np.random.default_rng(1).normal(size=(3, 2)), requires_grad=True)
    before = x.data.copy()
    grad_check(lambda: T.mse_loss(x, np.zeros((3, 2))), {"x": x})
    assert np.array_equal(x.data, before) and x.grad is None
