import numpy as np
import pytest

from uasam.engine import Adam, ParamStore, Tensor, backward, mean, sum_
from uasam.errors import TrackingError


def _quadratic_store(target):
    store = ParamStore()
    store.add("x", np.zeros_like(target))
    return store


def test_quadratic_convergence():
    target = np.array([1.5, -2.0, 0.75])
    store = _quadratic_store(target)
    opt = Adam(store, lr=0.05)
    for _ in range(400):
        store.zero_grad()
        diff = store["x"] - Tensor(target)
        backward(sum_(diff * diff))
        opt.step()
    assert np.allclose(store["x"].data, target, atol=1e-3)


def test_lr_decay_schedule():
    store = ParamStore()
    store.add("x", np.zeros(2))
    opt = Adam(store, lr=1e-4, decay_every=2, decay_factor=0.5)
    for i in range(5):
        store.zero_grad()
        backward(sum_(store["x"] * store["x"] + 1.0))
        opt.step()
        # decay applies after steps 2 and 4
        expected = 1e-4 * (0.5 ** ((i + 1) // 2))
        assert opt.lr == pytest.approx(expected, rel=1e-12)
    assert opt.step_count == 5


def test_no_decay_when_zero():
    store = ParamStore()
    store.add("x", np.zeros(2))
    opt = Adam(store, lr=1e-3, decay_every=0)
    for _ in range(3):
        store.zero_grad()
        backward(sum_(store["x"] * store["x"] + 1.0))
        opt.step()
    assert opt.lr == 1e-3


def test_frozen_params_not_updated():
    store = ParamStore()
    store.add("a", np.ones(3))
    store.add("b", np.ones(3), trainable=False)
    opt = Adam(store, lr=0.1)
    store.zero_grad()
    backward(sum_(store["a"] * Tensor(np.ones(3)) * 2.0))
    before = store["b"].data.copy()
    opt.step()
    assert np.array_equal(store["b"].data, before)
    assert not np.array_equal(store["a"].data, np.ones(3))


def test_missing_grad_raises():
    store = ParamStore()
    store.add("a", np.ones(3))
    store.add("unused", np.ones(2))
    opt = Adam(store, lr=0.1)
    store.zero_grad()
    backward(sum_(store["a"] * 2.0))
    with pytest.raises(TrackingError):
        opt.step()


def test_state_roundtrip():
    store = ParamStore()
    store.add("x", np.ones(4))
    opt = Adam(store, lr=2e-3, decay_every=7, decay_factor=0.3)
    for _ in range(3):
        store.zero_grad()
        backward(mean(store["x"] * store["x"]))
        opt.step()
    state = opt.state()

    store2 = ParamStore()
    store2.add("x", store["x"].data.copy())
    opt2 = Adam(store2, lr=9.0)
    opt2.load_state(state)
    assert opt2.lr == opt.lr
    assert opt2.step_count == 3
    # both must take the identical next step
    for s, o in ((store, opt), (store2, opt2)):
        s.zero_grad()
        backward(mean(s["x"] * s["x"]))
        o.step()
    assert np.array_equal(store["x"].data, store2["x"].data)


def test_moments_keyed_per_param():
    store = ParamStore()
    store.add("a", np.ones(2))
    store.add("b", np.ones(3))
    opt = Adam(store, lr=0.01)
    store.zero_grad()
    backward(sum_(store["a"]) + sum_(store["b"] * 2.0))
    opt.step()
    st = opt.state()
    assert set(st["m"]) == {"a", "b"}
    assert st["m"]["a"].shape == (2,)
    assert st["m"]["b"].shape == (3,)
