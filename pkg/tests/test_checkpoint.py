import numpy as np
import pytest

from uasam.engine import Adam, ParamStore, backward, save_checkpoint, sum_
from uasam.engine.checkpoint import MAGIC, load_checkpoint, read_header
from uasam.errors import CheckpointError


def _store(seed=0):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    store.add("enc.w", rng.standard_normal((4, 3)))
    store.add("enc.b", rng.standard_normal(3))
    store.add("dec.w", rng.standard_normal((3, 2)), trainable=False)
    return store


def test_roundtrip_bit_exact(tmp_path):
    store = _store()
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, store, config={"seed": 5})
    other = _store(seed=99)
    cfg = load_checkpoint(path, other)
    assert cfg == {"seed": 5}
    for name, t in store.items():
        assert np.array_equal(t.data, other[name].data)
        assert t.requires_grad == other[name].requires_grad


def test_optimizer_roundtrip(tmp_path):
    store = _store()
    opt = Adam(store, lr=1e-3, decay_every=4, decay_factor=0.5)
    for _ in range(2):
        store.zero_grad()
        backward(sum_(store["enc.w"]) + sum_(store["enc.b"] * 2.0))
        opt.step()
    path = tmp_path / "o.ckpt"
    save_checkpoint(path, store, optimizer=opt)

    other = _store(seed=1)
    opt2 = Adam(other, lr=99.0)
    load_checkpoint(path, other, optimizer=opt2)
    assert opt2.step_count == 2
    assert opt2.lr == opt.lr
    for key in opt.state()["m"]:
        assert np.array_equal(opt.state()["m"][key], opt2.state()["m"][key])
        assert np.array_equal(opt.state()["v"][key], opt2.state()["v"][key])


def test_header_readable_without_full_load(tmp_path):
    store = _store()
    path = tmp_path / "h.ckpt"
    save_checkpoint(path, store, config={"note": "hi"})
    header = read_header(path)
    assert header["config"] == {"note": "hi"}
    names = [p["name"] for p in header["params"]]
    assert names == list(store.names())


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTMAG" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        read_header(path)


def test_truncated_payload(tmp_path):
    store = _store()
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, store)
    raw = path.read_bytes()
    path.write_bytes(raw[:-9])
    with pytest.raises(CheckpointError):
        load_checkpoint(path, _store(seed=2))


def test_truncated_header(tmp_path):
    path = tmp_path / "th.ckpt"
    path.write_bytes(MAGIC + (123456).to_bytes(4, "little") + b"{}")
    with pytest.raises(CheckpointError):
        read_header(path)


def test_unknown_param_rejected(tmp_path):
    store = _store()
    path = tmp_path / "u.ckpt"
    save_checkpoint(path, store)
    partial = ParamStore()
    partial.add("enc.w", np.zeros((4, 3)))
    with pytest.raises(CheckpointError):
        load_checkpoint(path, partial)


def test_shape_mismatch_rejected(tmp_path):
    store = _store()
    path = tmp_path / "s.ckpt"
    save_checkpoint(path, store)
    other = ParamStore()
    other.add("enc.w", np.zeros((4, 3)))
    other.add("enc.b", np.zeros(5))  # wrong shape
    other.add("dec.w", np.zeros((3, 2)))
    with pytest.raises(CheckpointError):
        load_checkpoint(path, other)


def test_optimizer_state_required_when_requested(tmp_path):
    store = _store()
    path = tmp_path / "noopt.ckpt"
    save_checkpoint(path, store)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, _store(seed=3), optimizer=Adam(_store(seed=3)))


def test_save_is_deterministic(tmp_path):
    store = _store()
    p1, p2 = tmp_path / "d1.ckpt", tmp_path / "d2.ckpt"
    save_checkpoint(p1, store, config={"b": 1, "a": 2})
    save_checkpoint(p2, store, config={"a": 2, "b": 1})
    assert p1.read_bytes() == p2.read_bytes()
