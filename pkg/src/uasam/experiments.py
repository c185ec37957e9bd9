"""Experiment drivers: adapter-mode ablation grid and latent-width sweep.

Both reuse a single stage-1 checkpoint per run so every variant starts from
the same backbone weights, then fine-tune and score on the held-out split.
"""

import copy
import os

from .engine.checkpoint import load_checkpoint
from .errors import ConfigError
from .metrics import evaluate
from .model import UaSamModel
from .training import run_stage

ABLATION_MODES = ("z_only", "p_only", "wms", "cmsm")
SWEEP_DIMS = (2, 4, 6, 8)


def _echo(cfg, model, stage: str) -> dict:
    from .config import resolved_dict

    out = resolved_dict(cfg)
    out.update(model.config_echo())
    out["stage"] = stage
    return out


def train_stage1(train, val, cfg, out_dir):
    """Pretrain the deterministic backbone; returns the run state."""
    model = UaSamModel(cfg.backbone, None, None, seed=cfg.seed)
    return run_stage("pretrain", model, train, val, cfg.loss, cfg.train,
                     cfg.seed, out_dir, config_echo=_echo(cfg, model, "pretrain"))


def train_stage2(train, val, cfg, stage1_ckpt, out_dir):
    """Fine-tune adapters (and latent model if the mode uses z) from a
    stage-1 checkpoint; returns (model, state)."""
    model = UaSamModel(cfg.backbone, cfg.adapter, cfg.latent, seed=cfg.seed)
    load_checkpoint(stage1_ckpt, model.store)
    state = run_stage("finetune", model, train, val, cfg.loss, cfg.train,
                      cfg.seed, out_dir, config_echo=_echo(cfg, model, "finetune"))
    return model, state


def _variant_cfg(cfg, mode=None, latent_dim=None):
    out = copy.deepcopy(cfg)
    if mode is not None:
        out.adapter.mode = mode
    if latent_dim is not None:
        out.latent.dim = int(latent_dim)
    return out


def run_ablation_grid(train, val, test, cfg, out_dir, modes=ABLATION_MODES):
    """Fine-tune one model per adapter mode from a shared stage-1 checkpoint
    and write mode,dice,diversity rows to ablation.csv."""
    for mode in modes:
        if mode == "plain":
            raise ConfigError("ablation grid covers conditioned modes only")
    os.makedirs(out_dir, exist_ok=True)
    st1 = train_stage1(train, val, cfg, os.path.join(out_dir, "stage1"))
    rows = []
    for mode in modes:
        vcfg = _variant_cfg(cfg, mode=mode)
        model, _ = train_stage2(train, val, vcfg, st1.best_checkpoint,
                                os.path.join(out_dir, mode))
        rep = evaluate(model, test, cfg.train.k_samples, cfg.seed)
        rows.append((mode, rep.mean_dice, rep.diversity))
    path = os.path.join(out_dir, "ablation.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("mode,dice,diversity\n")
        for mode, dice, div in rows:
            f.write(f"{mode},{dice:.10g},{div:.10g}\n")
    return rows


def latent_dim_sweep(train, val, test, cfg, out_dir, dims=SWEEP_DIMS):
    """Fine-tune one model per latent width from a shared stage-1 checkpoint
    and write latent_dim,dice rows to sweep.csv."""
    for dim in dims:
        if int(dim) < 1:
            raise ConfigError(f"latent width must be >= 1, got {dim}")
    os.makedirs(out_dir, exist_ok=True)
    st1 = train_stage1(train, val, cfg, os.path.join(out_dir, "stage1"))
    rows = []
    for dim in dims:
        vcfg = _variant_cfg(cfg, latent_dim=dim)
        model, _ = train_stage2(train, val, vcfg, st1.best_checkpoint,
                                os.path.join(out_dir, f"dim{int(dim)}"))
        rep = evaluate(model, test, cfg.train.k_samples, cfg.seed)
        rows.append((int(dim), rep.mean_dice))
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("latent_dim,dice\n")
        for dim, dice in rows:
            f.write(f"{dim},{dice:.10g}\n")
    return rows
