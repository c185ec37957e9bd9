"""Uncertainty-aware adapters: bottleneck residual modules that inject a
latent sample z into the encoder stream, gated by a learnable position
variant p that threads through the chain.

Per adapter, the gating path computes
    p' = reshape(mlp_a(p))                 # 1xC condition
    score = relu(w21(z) @ w11(p')^T)       # Bx1 query/key score
    z'    = w22(z) * score                 # row-scaled sample
    f     = relu(z') * w12(p')             # gated feature, BxC
    f_i   = mlp_b(tile(f))                 # BxHxWxdim, spatially constant
    p_next = mlp_c(w12(p'))                # 1xL for the next adapter
and the residual update is x + up(concat(relu(down(x)), f_i)).

Modes select ablations of this path: 'plain' drops the latent entirely
(deterministic bottleneck control), 'z_only' injects z without p,
'p_only' injects p without z, 'wms' injects unmodified z while p threads
through a frozen chain (the thread cannot receive gradient because it
never touches the output), and 'cmsm' is the full mechanism.
"""

from dataclasses import dataclass

import numpy as np

from .engine import Tensor, broadcast_to, concat
from .errors import ConfigError, ShapeError
from .nn import Linear, Mlp

MODES = ("plain", "z_only", "p_only", "wms", "cmsm")
Z_MODES = ("z_only", "wms", "cmsm")


@dataclass
class AdapterConfig:
    ratio: float = 0.25
    d_down: int = 0  # 0 -> embed_dim // 4
    mode: str = "cmsm"
    merge_last: bool = True

    def validate(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError(f"adapter ratio must be in (0,1], got {self.ratio}")
        if self.mode not in MODES:
            raise ConfigError(
                f"unknown adapter mode {self.mode!r}; choose from {MODES}")


def _mlp(store, name, d_in, d_out, rng):
    return Mlp(store, name, d_in, max(d_in, d_out), d_out, rng, act="relu")


class Adapter:
    """One adapter; registers only the parameters its mode uses."""

    def __init__(self, store, index: int, embed_dim: int, num_blocks: int,
                 latent_dim: int, cfg: AdapterConfig, rng, has_next=True):
        d, l, c = embed_dim, num_blocks, latent_dim
        self.dim = max(1, round(cfg.ratio * d))
        self.d_down = cfg.d_down if cfg.d_down else d // 4
        self.mode = cfg.mode
        pfx = f"adapter.{index}"

        # The threading head mlp_c exists only when a next adapter consumes
        # p_next; in wms mode p feeds nothing but the thread, so the whole
        # p path drops off the last adapter.
        feeds_f = self.mode in ("p_only", "cmsm")
        threads_p = self.mode in ("p_only", "wms", "cmsm") \
            and (feeds_f or has_next)
        self.p0 = self.mlp_a = self.w12 = self.mlp_c = None
        if threads_p:
            if index == 0:
                self.p0 = store.add(pfx + ".p",
                                    rng.uniform((1, l)) * 0.04 - 0.02)
            self.mlp_a = _mlp(store, pfx + ".mlp_a", l, c, rng)
            self.w12 = Linear(store, pfx + ".w12", c, c, rng)
            if has_next:
                self.mlp_c = _mlp(store, pfx + ".mlp_c", c, l, rng)
            if not feeds_f:
                # wms: the thread never touches the output, so no gradient
                # can reach it; keep the structure but freeze it.
                store.freeze(pfx + ".mlp_a")
                store.freeze(pfx + ".w12")
                if self.mlp_c is not None:
                    store.freeze(pfx + ".mlp_c")
                if self.p0 is not None:
                    store.freeze(pfx + ".p")
        if self.mode == "cmsm":
            self.w11 = Linear(store, pfx + ".w11", c, c, rng)
            self.w21 = Linear(store, pfx + ".w21", c, c, rng)
            self.w22 = Linear(store, pfx + ".w22", c, c, rng)
        if self.mode != "plain":
            self.mlp_b = _mlp(store, pfx + ".mlp_b", c, self.dim, rng)
        self.down = Linear(store, pfx + ".down", d, self.d_down, rng)
        self.up = Linear(store, pfx + ".up", self.d_down + self.dim, d,
                         zero_init=True)

    def _feature(self, p, z, b):
        """(f BxC or None, p_next) per mode; None means a zero feature."""
        if self.mode == "plain":
            return None, p
        if self.mode == "z_only":
            return z, p
        if self.mode == "wms" and self.mlp_a is None:
            return z, None
        p1 = self.mlp_a(p).reshape(1, -1)
        w12p = self.w12(p1)
        p_next = None
        if self.mlp_c is not None:
            p_next = self.mlp_c(w12p).reshape(1, -1)
        if self.mode == "p_only":
            return broadcast_to(w12p, (b, w12p.shape[1])), p_next
        if self.mode == "wms":
            return z, p_next
        score = (self.w21(z) @ self.w11(p1).transpose()).relu()
        z2 = self.w22(z) * score
        return z2.relu() * w12p, p_next

    def cmsm(self, p: Tensor, z, h: int, w: int, batch: int = 0):
        """Conditioning path -> (f_i BxHxWxdim, p_next 1xL)."""
        if self.mode == "plain":
            raise ConfigError("cmsm: plain-mode adapter has no conditioning path")
        if z is not None:
            if z.ndim != 2:
                raise ShapeError(f"cmsm: z must be BxC, got {z.shape}")
            batch = z.shape[0]
        elif not batch:
            raise ShapeError("cmsm: batch size required when z is absent")
        f, p_next = self._feature(p, z, batch)
        b = batch
        f_i = self.mlp_b(broadcast_to(f.reshape(b, 1, 1, -1),
                                      (b, h, w, f.shape[-1])))
        return f_i, p_next

    def forward(self, x: Tensor, p, z):
        """Residual bottleneck update -> (x_out, p_next)."""
        if x.ndim != 4:
            raise ShapeError(f"adapter: expected BxHxWxD stream, got {x.shape}")
        b, h, w, _ = x.shape
        hid = self.down(x).relu()
        if self.mode == "plain":
            f_i = Tensor(np.zeros((b, h, w, self.dim)))
            p_next = p
        else:
            f_i, p_next = self.cmsm(p, z, h, w, batch=b)
        return x + self.up(concat([hid, f_i], axis=-1)), p_next


class AdapterChain:
    """L adapters plus the optional final z-reconstruction merge."""

    def __init__(self, store, backbone_cfg, latent_dim: int,
                 cfg: AdapterConfig, rng):
        cfg.validate()
        self.cfg = cfg
        self.mode = cfg.mode
        self.latent_dim = latent_dim
        l = backbone_cfg.num_blocks
        self.adapters = [
            Adapter(store, i, backbone_cfg.embed_dim, l, latent_dim, cfg,
                    rng.spawn(i), has_next=i < l - 1)
            for i in range(l)
        ]
        self.merge_last = cfg.merge_last and self.uses_z
        if self.merge_last:
            self.recon = Linear(store, "adapter.recon", latent_dim,
                                backbone_cfg.embed_dim, zero_init=True)

    @property
    def uses_z(self) -> bool:
        return self.mode in Z_MODES

    def initial_p(self):
        return self.adapters[0].p0

    def apply(self, index: int, x: Tensor, p, z):
        return self.adapters[index].forward(x, p, z)

    def merge(self, x: Tensor, z) -> Tensor:
        """Add the reconstruction of z to the final stream (last-adapter rule)."""
        if not self.merge_last:
            return x
        b, h, w, _ = x.shape
        tiled = broadcast_to(z.reshape(b, 1, 1, self.latent_dim),
                             (b, h, w, self.latent_dim))
        return x + self.recon(tiled)
