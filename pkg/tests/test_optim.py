import numpy as np
import pytest

from funcnet.exceptions import MissingGradientError
from funcnet.layers import Parameter
from funcnet.optim import Adam


def param(value):
    return Parameter(np.asarray(value, dtype=np.float64), name="p")


def test_first_step_hand_value():
    p = param([0.0])
    opt = Adam({"p": p}, learning_rate=0.1)
    p.grad = np.array([1.0])
    opt.step()
    # m_hat = 1, v_hat = 1 at t = 1
    assert p.data[0] == pytest.approx(-0.1 / (1.0 + 1e-7), abs=1e-15)
    assert opt.state.step_count == 1
    assert p.grad is None


def test_zero_gradient_leaves_params_and_counts_step():
    p = param([1.5, -2.0])
    opt = Adam({"p": p})
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.5, -2.0])
    assert opt.state.step_count == 1


def test_two_steps_move_against_gradient():
    p = param([0.0])
    opt = Adam({"p": p}, learning_rate=0.01)
    trace = [p.data[0]]
    for _ in range(2):
        p.grad = np.array([2.0])
        opt.step()
        trace.append(p.data[0])
    assert trace[0] > trace[1] > trace[2]


def test_lr_zero_is_bitwise_noop():
    rng = np.random.default_rng(0)
    p = param(rng.normal(size=(3, 4)))
    before = p.data.copy()
    opt = Adam({"p": p}, learning_rate=0.0)
    for _ in range(3):
        p.grad = rng.normal(size=(3, 4))
        opt.step()
    assert np.array_equal(p.data, before)


def test_matches_reference_recursion():
    rng = np.random.default_rng(1)
    p = param(rng.normal(size=5))
    theta = p.data.copy()
    m = np.zeros(5)
    v = np.zeros(5)
    opt = Adam({"p": p}, learning_rate=0.05, beta1=0.8, beta2=0.99, epsilon=1e-6)
    for t in range(1, 6):
        g = rng.normal(size=5)
        p.grad = g.copy()
        opt.step()
        m = 0.8 * m + 0.2 * g
        v = 0.99 * v + 0.01 * g * g
        theta = theta - 0.05 * (m / (1 - 0.8 ** t)) / (np.sqrt(v / (1 - 0.99 ** t)) + 1e-6)
    np.testing.assert_allclose(p.data, theta, atol=1e-12)
    assert opt.state.first_moment["p"].shape == p.shape


def test_step_before_backward_raises():
    opt = Adam({"p": param([1.0])})
    with pytest.raises(MissingGradientError):
        opt.step()


def test_non_trainable_skipped():
    frozen = Parameter(np.ones(2), name="f", trainable=False)
    opt = Adam([("f", frozen), ("p", param([0.0]))])
    assert [n for n, _ in opt.params] == ["p"]
