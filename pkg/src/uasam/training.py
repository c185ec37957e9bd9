"""Objectives and the two-stage protocol: stage 1 trains the whole backbone
on fused ground truth; stage 2 freezes it and optimizes the adapted model
on per-step annotator samples with the reconstruction + beta * KL objective.

Metrics CSV convention: the first row (epoch 0) and the last row are
evaluation-only rows (loss fields empty) showing the validation Dice of the
initial and the restored-best model; rows in between are training epochs.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .data import sample_annotator, sample_prompt_point, union_mask
from .engine import Adam, Rng, Tensor, backward, save_checkpoint
from .errors import ConfigError, DataError, NonFiniteError, ShapeError
from .latent import kl_divergence
from .metrics import evaluate, majority_vote

STAGES = ("pretrain", "finetune")


def snapshot_params(store) -> dict:
    return {name: t.data.copy() for name, t in store.items()}


def restore_params(store, snap: dict):
    for name, arr in snap.items():
        store[name].data = arr.copy()
        store[name].grad = None


@dataclass
class LossConfig:
    beta: float = 1.0
    dice_weight: float = 1.0
    ce_weight: float = 1.0
    epsilon_dice: float = 1e-6

    def validate(self):
        for name in ("beta", "dice_weight", "ce_weight", "epsilon_dice"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"loss.{name} must be finite and >= 0, got {v}")


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 200
    lr: float = 1e-4
    decay_every: int = 10  # epochs between LR decays
    decay_factor: float = 0.5
    patience: int = 10
    k_samples: int = 4

    def validate(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("train: batch_size and epochs must be >= 1")
        if self.lr <= 0 or not 0 < self.decay_factor <= 1:
            raise ConfigError("train: lr > 0 and decay_factor in (0,1] required")
        if self.patience < 1 or self.k_samples < 1:
            raise ConfigError("train: patience and k_samples must be >= 1")


@dataclass
class TrainState:
    stage: str
    epoch: int = 0
    step: int = 0
    best_val_dice: float = 0.0
    bad_epochs: int = 0
    stopped_early: bool = False
    csv_path: str = ""
    best_checkpoint: str = ""
    last_checkpoint: str = ""


def _check_binary(t: Tensor, what: str):
    if not np.isin(t.data, (0.0, 1.0)).all():
        raise DataError(f"{what}: target must be binary {{0,1}}")


def dice_ce_loss(logits: Tensor, target: Tensor, cfg: LossConfig) -> Tensor:
    """dice_weight * (1 - soft Dice) + ce_weight * BCE-with-logits, batch mean."""
    if not isinstance(target, Tensor):
        target = Tensor(target)
    if logits.shape != target.shape or logits.ndim != 3:
        raise ShapeError(
            f"dice_ce_loss: logits {logits.shape} vs target {target.shape}; "
            "expected matching BxSxS")
    _check_binary(target, "dice_ce_loss")
    eps = cfg.epsilon_dice
    probs = logits.sigmoid()
    inter = (probs * target).sum(axis=(1, 2))
    sums = probs.sum(axis=(1, 2)) + target.sum(axis=(1, 2))
    soft_dice = (2.0 * inter + eps) / (sums + eps)
    dice_term = (1.0 - soft_dice).mean()
    # softplus(x) - x*y is BCE-with-logits for y in {0,1}
    ce_term = (logits.softplus() - logits * target).mean()
    return cfg.dice_weight * dice_term + cfg.ce_weight * ce_term


def elbo_loss(image: Tensor, chosen_mask: Tensor, prompt: Tensor, model,
              cfg: LossConfig, rng, eps=None):
    """Reconstruction + beta * KL(Q(z|X,Y) || P(z|X)); returns (loss, parts).
    Pass `eps` to freeze the reparameterization draw (gradient checking)."""
    if model.uses_z:
        b = image.shape[0]
        mask4 = chosen_mask.reshape(b, 1, *chosen_mask.shape[1:])
        q = model.posterior_dist(image, mask4)
        p = model.prior_dist(image)
        z = q.sample_with_eps(eps) if eps is not None else q.sample(rng)
        logits = model.forward_logits(image, prompt, z)
        recon = dice_ce_loss(logits, chosen_mask, cfg)
        kl = kl_divergence(q, p)
        loss = recon + cfg.beta * kl if cfg.beta != 0.0 else recon
        return loss, {"recon": recon.item(), "kl": kl.item()}
    logits = model.forward_logits(image, prompt)
    recon = dice_ce_loss(logits, chosen_mask, cfg)
    return recon, {"recon": recon.item(), "kl": 0.0}


def _batch(examples):
    images = Tensor(np.stack([ex.image.data for ex in examples]))
    return images


def _format(v) -> str:
    return "" if v is None else f"{v:.10g}"


def run_stage(stage: str, model, train_set, val_set, loss_cfg: LossConfig,
              train_cfg: TrainConfig, seed: int, out_dir,
              config_echo: dict = None) -> TrainState:
    """Train one stage with per-epoch validation, early stopping, and
    best-snapshot restoration; writes metrics CSV and checkpoints."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; choose from {STAGES}")
    if not train_set or not val_set:
        raise DataError("run_stage: empty train or validation set")
    if stage == "finetune":
        if not model.has_adapters:
            raise ConfigError("finetune requires a model with adapters")
        model.freeze_backbone()
    loss_cfg.validate()
    train_cfg.validate()
    os.makedirs(out_dir, exist_ok=True)

    n = len(train_set)
    steps_per_epoch = -(-n // train_cfg.batch_size)
    opt = Adam(model.store, lr=train_cfg.lr,
               decay_every=train_cfg.decay_every * steps_per_epoch,
               decay_factor=train_cfg.decay_factor)
    rng = Rng(seed).spawn("train", stage)
    val_k = train_cfg.k_samples if model.uses_z else 1
    echo = dict(config_echo or model.config_echo())
    echo["stage"] = stage

    state = TrainState(stage=stage)
    rows = []

    report = evaluate(model, val_set, val_k, seed)
    best = report.mean_dice
    best_snap = snapshot_params(model.store)
    rows.append((0, stage, None, None, None, report.mean_dice, opt.lr))

    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(n)
        ep_loss, ep_recon, ep_kl = [], [], []
        for start in range(0, n, train_cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + train_cfg.batch_size]]
            images = _batch(batch)
            points = [sample_prompt_point(union_mask(ex), rng) for ex in batch]
            if stage == "pretrain":
                target = Tensor(np.stack(
                    [majority_vote(ex.masks) for ex in batch]))
            else:
                target = Tensor(np.stack(
                    [sample_annotator(ex, rng).data for ex in batch]))
            prompt = model.sam.encode_prompts(points)
            try:
                if stage == "pretrain":
                    logits = model.forward_logits(images, prompt)
                    loss = dice_ce_loss(logits, target, loss_cfg)
                    parts = {"recon": loss.item(), "kl": 0.0}
                else:
                    loss, parts = elbo_loss(images, target, prompt, model,
                                            loss_cfg, rng)
                opt.zero_grad()
                backward(loss)
                opt.step()
            except NonFiniteError as e:
                raise NonFiniteError(
                    f"{stage} epoch {epoch} step {state.step}: {e}") from e
            state.step += 1
            ep_loss.append(loss.item())
            ep_recon.append(parts["recon"])
            ep_kl.append(parts["kl"])

        state.epoch = epoch
        report = evaluate(model, val_set, val_k, seed)
        rows.append((epoch, stage, float(np.mean(ep_loss)),
                     float(np.mean(ep_recon)), float(np.mean(ep_kl)),
                     report.mean_dice, opt.lr))
        if report.mean_dice > best:
            best = report.mean_dice
            best_snap = snapshot_params(model.store)
            state.bad_epochs = 0
        else:
            state.bad_epochs += 1
            if state.bad_epochs >= train_cfg.patience:
                state.stopped_early = True
                break

    state.last_checkpoint = os.path.join(out_dir, f"{stage}_last.ckpt")
    save_checkpoint(state.last_checkpoint, model.store, optimizer=opt,
                    config=echo)
    restore_params(model.store, best_snap)
    state.best_val_dice = best
    rows.append((state.epoch + 1, stage, None, None, None, best, opt.lr))
    state.best_checkpoint = os.path.join(out_dir, f"{stage}_best.ckpt")
    save_checkpoint(state.best_checkpoint, model.store, config=echo)

    state.csv_path = os.path.join(out_dir, f"metrics_{stage}.csv")
    with open(state.csv_path, "w", encoding="utf-8") as f:
        f.write("epoch,stage,loss,recon,kl,val_dice,lr\n")
        for epoch, stg, lo, rec, kl, vd, lr in rows:
            f.write(f"{epoch},{stg},{_format(lo)},{_format(rec)},"
                    f"{_format(kl)},{_format(vd)},{_format(lr)}\n")
    return state
