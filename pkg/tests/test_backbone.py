import numpy as np
import pytest

from uasam.backbone import (BackboneConfig, MiniSam, PromptPoint,
                            freeze_backbone, interp_matrix, point_encoding)
from uasam.engine import ParamStore, Rng, Tensor, no_grad
from uasam.errors import ConfigError, ShapeError

CFG = BackboneConfig(image_size=16, patch_size=4, embed_dim=16, num_blocks=2,
                     num_heads=2)


def _sam(cfg=CFG, seed=0):
    store = ParamStore()
    return MiniSam(store, cfg, Rng(seed)), store


def test_config_validation():
    with pytest.raises(ConfigError):
        BackboneConfig(image_size=30, patch_size=4).validate()
    with pytest.raises(ConfigError):
        BackboneConfig(embed_dim=30, num_heads=4).validate()
    CFG.validate()


def test_interp_matrix_row_stochastic():
    for dst, src in ((32, 8), (16, 4), (8, 8)):
        a = interp_matrix(dst, src)
        assert a.shape == (dst, src)
        assert np.allclose(a.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(a >= 0.0)


def test_interp_matrix_identity_when_same():
    assert np.allclose(interp_matrix(6, 6), np.eye(6), atol=1e-12)


def test_interp_matrix_upsample_recovers_linear_ramp():
    # a linear ramp is reproduced exactly by bilinear interpolation away
    # from the edge-clamped ends
    src = np.arange(8.0)
    a = interp_matrix(32, 8)
    out = a @ src
    inner = out[4:-4]
    diffs = np.diff(inner)
    assert np.allclose(diffs, diffs[0], atol=1e-9)


def test_point_encoding_shape_and_range():
    enc = point_encoding(5.0, 9.0, 16, 16)
    assert enc.shape == (16,)
    assert np.all(np.abs(enc) <= 1.0 + 1e-12)
    assert not np.allclose(point_encoding(1.0, 1.0, 16, 16),
                           point_encoding(9.0, 3.0, 16, 16))


def test_point_encoding_deterministic():
    assert np.array_equal(point_encoding(2.0, 3.0, 32, 16),
                          point_encoding(2.0, 3.0, 32, 16))


def test_patchify_shapes_and_content():
    sam, _ = _sam()
    img = Tensor(np.arange(2 * 1 * 16 * 16, dtype=np.float64)
                 .reshape(2, 1, 16, 16))
    with no_grad():
        patches = sam._patchify(img)
    assert patches.shape == (2, 16, 16)  # B, grid^2, patch^2
    # first patch of first image must be the top-left 4x4 block row-major
    want = img.data[0, 0, :4, :4].reshape(-1)
    assert np.array_equal(patches.data[0, 0], want)


def test_encode_image_shapes():
    sam, _ = _sam()
    img = Tensor(np.random.default_rng(0).random((3, 1, 16, 16)))
    with no_grad():
        emb = sam.encode_image(img)
    assert emb.shape == (3, 4, 4, 16)  # B, grid, grid, D
    assert np.all(np.isfinite(emb.data))


def test_encode_image_shape_errors():
    sam, _ = _sam()
    with pytest.raises(ShapeError):
        sam.encode_image(Tensor(np.zeros((2, 1, 8, 8))))
    with pytest.raises(ShapeError):
        sam.encode_image(Tensor(np.zeros((2, 16, 16))))


def test_encode_image_rejects_z_without_adapters():
    sam, _ = _sam()
    img = Tensor(np.zeros((1, 1, 16, 16)))
    with pytest.raises(ConfigError):
        sam.encode_image(img, adapters=None, z=Tensor(np.zeros((1, 3))))


def test_prompt_encoding_batch():
    sam, _ = _sam()
    with no_grad():
        out = sam.encode_prompts([PromptPoint(3, 4), PromptPoint(8, 2)])
    assert out.shape == (2, 16)
    assert not np.allclose(out.data[0], out.data[1])


def test_prompt_bounds_checked():
    sam, _ = _sam()
    with pytest.raises(ShapeError):
        sam.encode_prompts([PromptPoint(16, 0)])
    with pytest.raises(ShapeError):
        sam.encode_prompts([PromptPoint(0, -1)])


def test_decode_mask_shapes_and_broadcast():
    sam, _ = _sam()
    rng = np.random.default_rng(1)
    img = Tensor(rng.random((2, 1, 16, 16)))
    with no_grad():
        emb = sam.encode_image(img)
        single = sam.decode_mask(emb, sam.encode_prompt(PromptPoint(4, 4)))
        batch = sam.decode_mask(
            emb, sam.encode_prompts([PromptPoint(4, 4), PromptPoint(4, 4)]))
    assert single.shape == (2, 16, 16)
    assert batch.shape == (2, 16, 16)
    assert np.allclose(single.data, batch.data, atol=1e-12)


def test_same_image_same_logits():
    sam, _ = _sam()
    img = Tensor(np.random.default_rng(2).random((1, 1, 16, 16)))
    p = [PromptPoint(8, 8)]
    with no_grad():
        a = sam.decode_mask(sam.encode_image(img), sam.encode_prompts(p))
        b = sam.decode_mask(sam.encode_image(img), sam.encode_prompts(p))
    assert np.array_equal(a.data, b.data)


def test_freeze_backbone_covers_all_three_parts():
    sam, store = _sam()
    freeze_backbone(store)
    for name, tensor in store.items():
        assert not tensor.requires_grad, name
    prefixes = {n.split(".")[0] for n in store.names()}
    assert prefixes == {"encoder", "prompt", "decoder"}
