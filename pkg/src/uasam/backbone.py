"""Promptable segmentation backbone: ViT image encoder, point prompt encoder,
and a one-round two-way cross-attention mask decoder.

The encoder patch scale is 1/patch_size (8x8 token grid at the 32 px
default).  The backbone is trained once on fused ground truth and then
frozen; adapters hook in between blocks via ``encode_image``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .engine import Tensor, broadcast_to, matmul
from .errors import ConfigError, ShapeError
from .nn import LayerNorm, Linear, Mlp, MultiHeadAttention


@dataclass
class BackboneConfig:
    image_size: int = 32
    patch_size: int = 4
    embed_dim: int = 32
    num_blocks: int = 4
    num_heads: int = 4
    mlp_ratio: float = 2.0

    def validate(self):
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by "
                f"patch_size {self.patch_size}")
        if self.embed_dim % self.num_heads:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by "
                f"num_heads {self.num_heads}")
        if self.embed_dim % 4:
            raise ConfigError(
                f"embed_dim {self.embed_dim} must be divisible by 4 "
                "(sinusoidal point encoding uses 4 values per band)")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size


@dataclass
class PromptPoint:
    row: int
    col: int
    label: int = 1
    fallback: bool = False


def interp_matrix(dst: int, src: int) -> np.ndarray:
    """Row-stochastic 1-d bilinear interpolation matrix (dst x src)."""
    a = np.zeros((dst, src))
    scale = src / dst
    for o in range(dst):
        c = (o + 0.5) * scale - 0.5
        c = min(max(c, 0.0), src - 1.0)
        i0 = min(int(math.floor(c)), src - 1)
        w = c - i0
        a[o, i0] += 1.0 - w
        a[o, min(i0 + 1, src - 1)] += w
    return a


def point_encoding(row: float, col: float, size: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal encoding of pixel coordinates normalized to [0,1]."""
    r = row / (size - 1)
    c = col / (size - 1)
    bands = dim // 4
    out = np.empty(dim)
    for k in range(bands):
        w = math.pi * (2.0**k)
        out[4 * k + 0] = math.sin(w * r)
        out[4 * k + 1] = math.cos(w * r)
        out[4 * k + 2] = math.sin(w * c)
        out[4 * k + 3] = math.cos(w * c)
    return out


class MiniSam:
    """The frozen-after-pretraining backbone; parameters live under the
    'encoder', 'prompt', and 'decoder' prefixes of the shared store."""

    def __init__(self, store, cfg: BackboneConfig, rng):
        cfg.validate()
        self.cfg = cfg
        self.store = store
        d = cfg.embed_dim
        n = cfg.grid * cfg.grid
        p2 = cfg.patch_size * cfg.patch_size
        hidden = int(d * cfg.mlp_ratio)

        self.patch = Linear(store, "encoder.patch", p2, d, rng)
        self.pos = store.add("encoder.pos", 0.02 * rng.normal((1, n, d)))
        self.blocks = []
        for i in range(cfg.num_blocks):
            pfx = f"encoder.block{i}"
            self.blocks.append({
                "ln1": LayerNorm(store, pfx + ".ln1", d),
                "attn": MultiHeadAttention(store, pfx + ".attn", d,
                                           cfg.num_heads, rng),
                "ln2": LayerNorm(store, pfx + ".ln2", d),
                "mlp": Mlp(store, pfx + ".mlp", d, hidden, d, rng, act="gelu"),
            })

        self.fg_token = store.add("prompt.fg", 0.02 * rng.normal((1, d)))

        self.p2i = MultiHeadAttention(store, "decoder.p2i", d, cfg.num_heads, rng)
        self.i2p = MultiHeadAttention(store, "decoder.i2p", d, cfg.num_heads, rng)
        self.ln_p = LayerNorm(store, "decoder.lnp", d)
        self.ln_i = LayerNorm(store, "decoder.lni", d)
        self.mlp = Mlp(store, "decoder.mlp", d, hidden, d, rng, act="gelu")

        # fixed bilinear upsample operator, not a parameter
        self._up = Tensor(interp_matrix(cfg.image_size, cfg.grid))
        self._up_t = Tensor(self._up.data.T.copy())

    # -- image path --------------------------------------------------------

    def _patchify(self, image: Tensor) -> Tensor:
        s, p, g = self.cfg.image_size, self.cfg.patch_size, self.cfg.grid
        b = image.shape[0]
        x = image.reshape(b, g, p, g, p).transpose(0, 1, 3, 2, 4)
        return x.reshape(b, g * g, p * p)

    def encode_image(self, image: Tensor, adapters=None, z=None) -> Tensor:
        """Run the ViT; with an adapter chain, each block's output is adapted
        and the position variant threads through the chain."""
        s = self.cfg.image_size
        if image.ndim != 4 or image.shape[1] != 1 or image.shape[2:] != (s, s):
            raise ShapeError(
                f"encode_image: expected Bx1x{s}x{s} image, got {image.shape}")
        if adapters is not None and adapters.uses_z and z is None:
            raise ConfigError("encode_image: adapter chain needs a latent sample z")
        if z is not None and (adapters is None or not adapters.uses_z):
            raise ConfigError("encode_image: z supplied but no adapter consumes it")

        b, g, d = image.shape[0], self.cfg.grid, self.cfg.embed_dim
        x = self.patch(self._patchify(image)) + self.pos
        p = adapters.initial_p() if adapters is not None else None
        for i, blk in enumerate(self.blocks):
            h = blk["ln1"](x)
            x = x + blk["attn"](h, h)
            x = x + blk["mlp"](blk["ln2"](x))
            if adapters is not None:
                grid = x.reshape(b, g, g, d)
                grid, p = adapters.apply(i, grid, p, z)
                x = grid.reshape(b, g * g, d)
        out = x.reshape(b, g, g, d)
        if adapters is not None:
            out = adapters.merge(out, z)
        return out

    # -- prompt path -------------------------------------------------------

    def encode_prompts(self, points) -> Tensor:
        """Batch of point prompts -> BxD embeddings (learned token + fixed
        positional encoding)."""
        s, d = self.cfg.image_size, self.cfg.embed_dim
        rows = []
        for pt in points:
            if not (0 <= pt.row < s and 0 <= pt.col < s):
                raise ShapeError(
                    f"encode_prompts: point ({pt.row},{pt.col}) outside "
                    f"{s}x{s} image")
            rows.append(point_encoding(pt.row, pt.col, s, d))
        pe = Tensor(np.stack(rows))
        return broadcast_to(self.fg_token, (len(rows), d)) + pe

    def encode_prompt(self, point: PromptPoint) -> Tensor:
        return self.encode_prompts([point])

    # -- decoder -----------------------------------------------------------

    def decode_mask(self, embeddings: Tensor, prompt: Tensor) -> Tensor:
        """One two-way attention round then per-pixel dot product; returns
        raw logits upsampled to image resolution."""
        if embeddings.ndim != 4:
            raise ShapeError(
                f"decode_mask: expected BxHxWxD embeddings, got {embeddings.shape}")
        b, g, g2, d = embeddings.shape
        if g != g2 or d != self.cfg.embed_dim:
            raise ShapeError(
                f"decode_mask: embeddings {embeddings.shape} do not match "
                f"config grid {self.cfg.grid}, dim {self.cfg.embed_dim}")
        if prompt.ndim != 2 or prompt.shape[1] != d:
            raise ShapeError(
                f"decode_mask: prompt must be Bx{d} or 1x{d}, got {prompt.shape}")
        if prompt.shape[0] == 1 and b > 1:
            prompt = broadcast_to(prompt, (b, d))
        elif prompt.shape[0] != b:
            raise ShapeError(
                f"decode_mask: prompt batch {prompt.shape[0]} != image batch {b}")

        tokens = embeddings.reshape(b, g * g, d)
        ptok = prompt.reshape(b, 1, d)
        ptok = self.ln_p(ptok + self.p2i(ptok, tokens))
        tokens = self.ln_i(tokens + self.i2p(tokens, ptok))
        mask_tok = ptok + self.mlp(ptok)
        low = matmul(tokens, mask_tok.transpose(0, 2, 1)).reshape(b, g, g)
        return matmul(matmul(self._up, low), self._up_t)


def freeze_backbone(store):
    """Freeze every backbone path; adapter and latent paths stay trainable."""
    for prefix in ("encoder", "prompt", "decoder"):
        store.freeze(prefix)
