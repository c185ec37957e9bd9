"""Conditional Gaussian latent model: prior P(z|image), posterior
Q(z|image, mask), reparameterized sampling, and closed-form KL."""

from dataclasses import dataclass

import numpy as np

from .engine import Tensor, concat, exp, mean, sum_
from .errors import ConfigError, DataError, ShapeError
from .nn import Conv2d, Linear

_TOWER = (4, 8, 12)


@dataclass
class LatentConfig:
    dim: int = 6
    clamp_lo: float = -6.0
    clamp_hi: float = 4.0

    def validate(self):
        if self.dim < 1:
            raise ConfigError("latent dim must be >= 1")
        if self.clamp_lo >= self.clamp_hi:
            raise ConfigError("latent clamp_lo must be < clamp_hi")


@dataclass
class LatentGaussian:
    """Diagonal Gaussian over the latent space; log_sigma is pre-clamped."""

    mu: Tensor
    log_sigma: Tensor

    @property
    def shape(self):
        return self.mu.shape

    def sigma(self) -> Tensor:
        return exp(self.log_sigma)

    def sample(self, rng) -> Tensor:
        """z = mu + sigma * eps, differentiable w.r.t. mu and log_sigma."""
        eps = Tensor(rng.normal(self.mu.shape))
        return self.sample_with_eps(eps)

    def sample_with_eps(self, eps: Tensor) -> Tensor:
        return self.mu + self.sigma() * eps


class GaussianEncoder:
    """Strided conv tower + global average pool + (mu, log_sigma) heads."""

    def __init__(self, store, prefix: str, in_channels: int,
                 cfg: LatentConfig, rng):
        self.cfg = cfg
        self.in_channels = in_channels
        self.convs = []
        c_prev = in_channels
        for i, c in enumerate(_TOWER):
            self.convs.append(Conv2d(store, f"{prefix}.conv{i}", c_prev, c, 3,
                                     rng, stride=2, padding=1))
            c_prev = c
        self.head_mu = Linear(store, prefix + ".mu", c_prev, cfg.dim, rng)
        self.head_ls = Linear(store, prefix + ".log_sigma", c_prev, cfg.dim, rng)

    def __call__(self, x: Tensor) -> LatentGaussian:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"latent encoder: expected Bx{self.in_channels}xSxS input, "
                f"got {x.shape}")
        h = x
        for conv in self.convs:
            h = conv(h).relu()
        pooled = mean(h, axis=(2, 3))
        return LatentGaussian(
            mu=self.head_mu(pooled),
            log_sigma=self.head_ls(pooled).clamp(self.cfg.clamp_lo,
                                                 self.cfg.clamp_hi))


def posterior_input(image: Tensor, mask: Tensor) -> Tensor:
    """Channel-concatenate image and binary mask for the posterior tower."""
    if mask.shape != image.shape:
        raise ShapeError(
            f"posterior: mask {mask.shape} does not match image {image.shape}")
    vals = mask.data
    if not np.isin(vals, (0.0, 1.0)).all():
        raise DataError("posterior: mask must be binary {0,1}")
    return concat([image, mask], axis=1)


def kl_divergence(q: LatentGaussian, p: LatentGaussian) -> Tensor:
    """KL(q || p) for diagonal Gaussians, summed over the latent dimension
    and averaged over the batch."""
    if q.shape != p.shape:
        raise ShapeError(f"kl_divergence: shapes {q.shape} vs {p.shape}")
    var_q = exp(2.0 * q.log_sigma)
    var_p = exp(2.0 * p.log_sigma)
    term = (p.log_sigma - q.log_sigma) \
        + (var_q + (q.mu - p.mu) ** 2.0) / (2.0 * var_p) - 0.5
    return mean(sum_(term, axis=-1))
