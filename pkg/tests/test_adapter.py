import numpy as np
import pytest

from uasam.adapter import MODES, Adapter, AdapterChain, AdapterConfig
from uasam.backbone import BackboneConfig
from uasam.engine import (ParamStore, Rng, Tensor, grad_check, mean, no_grad)
from uasam.errors import ConfigError

BB = BackboneConfig(image_size=32, patch_size=4, embed_dim=32, num_blocks=4,
                    num_heads=4)


def _chain(mode="cmsm", latent_dim=6, bb=BB, merge_last=True):
    store = ParamStore()
    chain = AdapterChain(store, bb, latent_dim,
                         AdapterConfig(mode=mode, merge_last=merge_last),
                         Rng(0))
    return chain, store


def test_config_rejects_unknown_mode():
    with pytest.raises(ConfigError):
        AdapterConfig(mode="bogus").validate()


def test_documented_shape_example():
    # B=2, L=4, C=6, H=W=8, ratio=0.25, D=32 -> f_i 2x8x8x8, p_next 1x4
    chain, _ = _chain()
    ad = chain.adapters[0]
    z = Tensor(np.random.default_rng(0).standard_normal((2, 6)))
    with no_grad():
        f_i, p_next = ad.cmsm(chain.initial_p(), z, 8, 8)
    assert f_i.shape == (2, 8, 8, 8)
    assert p_next.shape == (1, 4)


def test_zero_z_propagates_to_bias():
    chain, _ = _chain()
    ad = chain.adapters[0]
    z = Tensor(np.zeros((3, 6)))
    with no_grad():
        f_i, _ = ad.cmsm(chain.initial_p(), z, 4, 4)
    # score=0 -> z'=0 -> f=0 -> f_i is mlp_b evaluated at 0, identical
    # for every batch element and position
    first = f_i.data[0, 0, 0]
    assert np.allclose(f_i.data, first[None, None, None, :], atol=1e-14)


def test_spatially_constant_feature():
    chain, _ = _chain()
    ad = chain.adapters[1]
    z = Tensor(np.random.default_rng(1).standard_normal((2, 6)))
    with no_grad():
        f_i, _ = ad.cmsm(chain.initial_p(), z, 5, 7)
    for b in range(2):
        ref = f_i.data[b, 0, 0]
        assert np.allclose(f_i.data[b], ref[None, None, :], atol=1e-14)


def test_identity_at_init():
    chain, _ = _chain()
    x = Tensor(np.random.default_rng(2).standard_normal((2, 8, 8, 32)))
    z = Tensor(np.random.default_rng(3).standard_normal((2, 6)))
    p = chain.initial_p()
    with no_grad():
        out = x
        for i in range(len(chain.adapters)):
            out, p = chain.apply(i, out, p, z)
        out = chain.merge(out, z)
    assert np.array_equal(out.data, x.data)  # bit-identical


def test_two_z_draws_differ_after_training_nudge():
    chain, store = _chain()
    # nudge the zero-init up projections so the latent path is live
    for name, t in store.items():
        if name.endswith(".up.w") or name == "adapter.recon.w":
            t.data = t.data + 0.01
    rng = np.random.default_rng(4)
    x = Tensor(rng.standard_normal((2, 8, 8, 32)))
    p = chain.initial_p()
    with no_grad():
        a, _ = chain.apply(0, x, p, Tensor(rng.standard_normal((2, 6))))
        b, _ = chain.apply(0, x, p, Tensor(rng.standard_normal((2, 6))))
    assert not np.allclose(a.data, b.data)


def test_p_next_independent_of_z():
    chain, _ = _chain()
    ad = chain.adapters[0]
    rng = np.random.default_rng(5)
    with no_grad():
        _, p1 = ad.cmsm(chain.initial_p(), Tensor(rng.standard_normal((2, 6))),
                        4, 4)
        _, p2 = ad.cmsm(chain.initial_p(), Tensor(rng.standard_normal((2, 6))),
                        4, 4)
    assert np.array_equal(p1.data, p2.data)


def test_chain_threads_p_per_adapter():
    chain, _ = _chain()
    assert len(chain.adapters) == BB.num_blocks
    # only adapter 0 owns the learnable p; others receive p_next
    assert chain.adapters[0].p0 is not None
    for ad in chain.adapters[1:]:
        assert ad.p0 is None
    # last adapter has no threading head
    assert chain.adapters[-1].mlp_c is None
    for ad in chain.adapters[:-1]:
        assert ad.mlp_c is not None


def test_plain_mode_is_deterministic_zero_feature():
    chain, _ = _chain(mode="plain")
    assert not chain.uses_z
    x = Tensor(np.random.default_rng(6).standard_normal((2, 4, 4, 32)))
    with no_grad():
        out, p = chain.apply(0, x, None, None)
    assert np.array_equal(out.data, x.data)  # zero-init up
    with pytest.raises(ConfigError):
        chain.adapters[0].cmsm(None, None, 4, 4, batch=2)


def test_mode_parameter_registration():
    _, s_plain = _chain(mode="plain")
    _, s_z = _chain(mode="z_only")
    _, s_p = _chain(mode="p_only")
    _, s_wms = _chain(mode="wms")
    _, s_full = _chain(mode="cmsm")

    def names(store):
        return set(store.names())

    assert not any(".mlp_a" in n or ".w1" in n or ".w2" in n or ".p" == n[-2:]
                   for n in names(s_plain))
    assert not any(".mlp_b" in n for n in names(s_plain))
    assert any(".mlp_b" in n for n in names(s_z))
    assert not any(".mlp_a" in n for n in names(s_z))
    assert any(".mlp_a" in n for n in names(s_p))
    assert not any(".w11" in n or ".w21" in n or ".w22" in n
                   for n in names(s_p))
    assert any(".w11" in n for n in names(s_full))
    # wms keeps the thread but frozen
    wms_p_names = [n for n in names(s_wms)
                   if ".mlp_a" in n or ".mlp_c" in n or ".w12" in n
                   or n == "adapter.0.p"]
    assert wms_p_names
    for n in wms_p_names:
        assert not s_wms[n].requires_grad, n
    # merge head exists only for z modes
    assert "adapter.recon.w" in names(s_full)
    assert "adapter.recon.w" in names(s_z)
    assert "adapter.recon.w" not in names(s_p)
    assert "adapter.recon.w" not in names(s_plain)


def test_wms_ignores_gating():
    chain, store = _chain(mode="wms")
    for name, t in store.items():
        if name.endswith(".up.w"):
            t.data = t.data + 0.01
    rng = np.random.default_rng(7)
    x = Tensor(rng.standard_normal((2, 4, 4, 32)))
    z = Tensor(rng.standard_normal((2, 6)))
    p = chain.initial_p()
    with no_grad():
        out1, p1 = chain.apply(0, x, p, z)
        out2, p2 = chain.apply(0, x, p, z)
    assert np.array_equal(out1.data, out2.data)
    assert np.array_equal(p1.data, p2.data)


def test_adapter_gradcheck_through_forward():
    bb = BackboneConfig(image_size=8, patch_size=4, embed_dim=8, num_blocks=2,
                        num_heads=2)
    store = ParamStore()
    chain = AdapterChain(store, bb, 3, AdapterConfig(mode="cmsm"), Rng(1))
    # lift the zero-init ups so their inputs get gradients, and push every
    # relu pre-activation away from its kink (zero biases put finite
    # differences exactly on the kink, where the estimate is meaningless)
    rng = np.random.default_rng(8)
    for name, t in store.items():
        if name.endswith(".up.w"):
            t.data = t.data + rng.standard_normal(t.shape) * 0.05
        if name.endswith(".b"):
            t.data = t.data + rng.standard_normal(t.shape) * 0.15
    p0 = store["adapter.0.p"]
    p0.data = np.random.default_rng(12).standard_normal(p0.shape) * 0.8
    x = Tensor(np.random.default_rng(9).standard_normal((2, 2, 2, 8)))
    z = Tensor(np.random.default_rng(10).standard_normal((2, 3)) + 0.7)
    w = Tensor(np.random.default_rng(11).standard_normal((2, 2, 2, 8)))

    def loss_fn():
        out = x
        p = chain.initial_p()
        for i in range(len(chain.adapters)):
            out, p = chain.apply(i, out, p, z)
        out = chain.merge(out, z)
        return mean(out * w)

    res = grad_check(loss_fn, store, eps=1e-6)
    assert res.max_rel_error < 1e-4, res.per_param
    assert "adapter.0.p" in res.per_param
