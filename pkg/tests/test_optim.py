"""Adam against a hand-stepped reference implementation."""
import numpy as np
import pytest

from camattn.optim import Adam
from camattn.tensor import Tensor


def _reference_adam(param, grads, lr, b1, b2, eps, wd):
    """Textbook update sequence, one parameter."""
    p = param.astype(np.float64).copy()
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, start=1):
        g = g + wd * p
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p = p - lr * mhat / (np.sqrt(vhat) + eps)
    return p


def test_adam_matches_reference_over_ten_steps():
    rng = np.random.default_rng(3)
    p0 = rng.standard_normal((4, 3))
    grads = [rng.standard_normal((4, 3)) for _ in range(10)]

    t = Tensor(p0.copy(), requires_grad=True)
    opt = Adam([t], lr=0.01, weight_decay=0.005)
    for g in grads:
        t.grad = g.copy()
        opt.step()

    ref = _reference_adam(p0, grads, lr=0.01, b1=0.9, b2=0.999, eps=1e-8, wd=0.005)
    np.testing.assert_allclose(t.data, ref, rtol=1e-12)


def test_adam_without_weight_decay():
    p0 = np.array([1.0, -2.0])
    grads = [np.array([0.5, 0.5])] * 3
    t = Tensor(p0.copy(), requires_grad=True)
    opt = Adam([t], lr=0.1, weight_decay=0.0)
    for g in grads:
        t.grad = g.copy()
        opt.step()
    ref = _reference_adam(p0, grads, 0.1, 0.9, 0.999, 1e-8, 0.0)
    np.testing.assert_allclose(t.data, ref, rtol=1e-12)


def test_first_step_direction_is_signed_gradient():
    # bias correction makes step 1 equal lr * sign(g) up to eps
    t = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([t], lr=0.001, weight_decay=0.0)
    t.grad = np.array([0.2, -0.7, 1.4])
    opt.step()
    np.testing.assert_allclose(t.data, -0.001 * np.sign(t.grad), rtol=1e-6)


def test_none_grad_means_zero_but_decay_still_applies():
    t = Tensor(np.array([10.0]), requires_grad=True)
    opt = Adam([t], lr=0.001, weight_decay=0.01)
    opt.step()
    # decay term alone: g = 0.01*10 = 0.1, first step = -lr * sign
    assert t.data[0] < 10.0


def test_none_grad_no_decay_is_a_noop_on_values():
    t = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    opt = Adam([t], weight_decay=0.0)
    opt.step()
    np.testing.assert_array_equal(t.data, [1.0, 2.0])


def test_zero_grad_clears():
    t = Tensor(np.ones(3), requires_grad=True)
    t.grad = np.ones(3)
    Adam([t]).zero_grad()
    assert t.grad is None


def test_shape_mismatch_rejected():
    t = Tensor(np.ones(3), requires_grad=True)
    opt = Adam([t])
    t.grad = np.ones(4)
    with pytest.raises(ValueError, match="gradient shape"):
        opt.step()


def test_converges_on_quadratic():
    # minimize (p - 3)^2; Adam should land near 3
    t = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([t], lr=0.1, weight_decay=0.0)
    for _ in range(300):
        opt.zero_grad()
        loss = (t + (-3.0)) * (t + (-3.0))
        loss.sum().backward()
        opt.step()
    assert abs(t.data[0] - 3.0) < 1e-3
