"""Model assembly: backbone plus optional adapter chain and latent nets."""

from .adapter import AdapterChain, AdapterConfig
from .backbone import BackboneConfig, MiniSam, freeze_backbone
from .engine import ParamStore, Rng, Tensor
from .latent import GaussianEncoder, LatentConfig, posterior_input


class UaSamModel:
    """Backbone-only when adapter_cfg is None (stage-1 pretraining target);
    otherwise the adapted model in the configured ablation mode."""

    def __init__(self, backbone_cfg: BackboneConfig,
                 adapter_cfg: AdapterConfig = None,
                 latent_cfg: LatentConfig = None, seed: int = 0):
        self.backbone_cfg = backbone_cfg
        self.adapter_cfg = adapter_cfg
        self.latent_cfg = latent_cfg or LatentConfig()
        self.seed = int(seed)
        self.store = ParamStore()
        rng = Rng(self.seed).spawn("init")
        self.sam = MiniSam(self.store, backbone_cfg, rng.spawn("backbone"))
        self.chain = None
        self.prior = None
        self.posterior = None
        if adapter_cfg is not None:
            self.chain = AdapterChain(self.store, backbone_cfg,
                                      self.latent_cfg.dim, adapter_cfg,
                                      rng.spawn("adapter"))
            if self.chain.uses_z:
                self.prior = GaussianEncoder(self.store, "latent.prior", 1,
                                             self.latent_cfg, rng.spawn("prior"))
                self.posterior = GaussianEncoder(self.store, "latent.posterior",
                                                 2, self.latent_cfg,
                                                 rng.spawn("posterior"))

    @property
    def uses_z(self) -> bool:
        return self.chain is not None and self.chain.uses_z

    @property
    def has_adapters(self) -> bool:
        return self.chain is not None

    def freeze_backbone(self):
        freeze_backbone(self.store)

    def encode_image(self, image: Tensor, z=None) -> Tensor:
        return self.sam.encode_image(image, self.chain,
                                     z if self.uses_z else None)

    def prior_dist(self, image: Tensor):
        return self.prior(image)

    def posterior_dist(self, image: Tensor, mask: Tensor):
        return self.posterior(posterior_input(image, mask))

    def forward_logits(self, image: Tensor, prompt: Tensor, z=None) -> Tensor:
        """image Bx1xSxS + prompt embeddings (+ optional latent) -> logits BxSxS."""
        emb = self.encode_image(image, z)
        return self.sam.decode_mask(emb, prompt)

    def config_echo(self) -> dict:
        """Plain-dict summary sufficient to rebuild the model skeleton."""
        echo = {
            "backbone": vars(self.backbone_cfg).copy(),
            "latent": vars(self.latent_cfg).copy(),
            "seed": self.seed,
        }
        echo["adapter"] = (vars(self.adapter_cfg).copy()
                           if self.adapter_cfg is not None else None)
        return echo


def model_from_echo(echo: dict) -> UaSamModel:
    """Rebuild a model skeleton from a checkpoint's config echo."""
    bcfg = BackboneConfig(**echo["backbone"])
    acfg = AdapterConfig(**echo["adapter"]) if echo.get("adapter") else None
    lcfg = LatentConfig(**echo["latent"]) if echo.get("latent") else None
    return UaSamModel(bcfg, acfg, lcfg, seed=echo.get("seed", 0))
