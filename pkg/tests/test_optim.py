import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hefitlab.autodiff import Tensor
from hefitlab.errors import NumericError, ShapeError
from hefitlab.optim import Adam, AdamState, optimizer_step


def reference_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam written out step by step."""
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return p


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_matches_reference(steps, seed):
    rng = np.random.default_rng(seed)
    p0 = rng.normal(size=(3, 2))
    grads = [rng.normal(size=(3, 2)) for _ in range(steps)]
    params = {"w": Tensor(p0.copy(), requires_grad=True)}
    state = AdamState()
    for g in grads:
        optimizer_step(params, {"w": g}, 1e-2, state)
    np.testing.assert_allclose(params["w"].data, reference_adam(p0, grads, 1e-2), rtol=0, atol=1e-14)


def test_first_step_moves_by_lr():
    params = {"w": Tensor([1.0, -1.0], requires_grad=True)}
    optimizer_step(params, {"w": np.array([0.5, -3.0])}, 0.1, AdamState())
    np.testing.assert_allclose(params["w"].data, [0.9, -0.9], atol=1e-7)


def test_params_without_grads_are_untouched():
    params = {"a": Tensor([1.0], requires_grad=True), "b": Tensor([2.0], requires_grad=True)}
    before = params["b"].data.copy()
    optimizer_step(params, {"a": np.array([1.0])}, 0.1, AdamState())
    assert params["b"].data.tobytes() == before.tobytes()


def test_bad_gradients_leave_everything_unchanged():
    params = {"a": Tensor([1.0], requires_grad=True), "b": Tensor([2.0], requires_grad=True)}
    with pytest.raises(NumericError):
        optimizer_step(params, {"a": np.array([1.0]), "b": np.array([np.inf])}, 0.1, AdamState())
    assert params["a"].data[0] == 1.0
    with pytest.raises(ShapeError):
        optimizer_step(params, {"a": np.array([1.0, 2.0])}, 0.1, AdamState())


def test_wrapper_skips_frozen_params():
    a = Tensor([1.0], requires_grad=True)
    b = Tensor([1.0], requires_grad=False)
    a.grad = np.array([1.0])
    b.grad = np.array([1.0])
    opt = Adam({"a": a, "b": b}, lr=0.5)
    opt.step()
    assert a.data[0] != 1.0 and b.data[0] == 1.0
    opt.zero_grad()
    assert a.grad is None
