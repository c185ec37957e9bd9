"""Dice scoring, majority-vote fusion, the sampling evaluation protocol,
diversity statistics, and parameter accounting."""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .data import sample_prompt_point, union_mask
from .engine import Rng, Tensor, no_grad, sigmoid
from .errors import DataError, ShapeError


def _arr(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def dice(a, b) -> float:
    """2|a n b| / (|a| + |b|); both-empty convention -> 1.0."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ShapeError(f"dice: shapes {a.shape} vs {b.shape}")
    denom = a.sum() + b.sum()
    if denom == 0.0:
        return 1.0
    return float(2.0 * (a * b).sum() / denom)


def majority_vote(masks, tie_foreground: bool = False) -> np.ndarray:
    """Per-pixel fusion: foreground iff count >= ceil((n+1)/2). Even-count
    ties resolve to background (over-segmentation costs more) unless
    tie_foreground is set."""
    if not masks:
        raise DataError("majority_vote: empty mask list")
    arrs = [_arr(m) for m in masks]
    shape = arrs[0].shape
    for m in arrs[1:]:
        if m.shape != shape:
            raise ShapeError(f"majority_vote: shapes {shape} vs {m.shape}")
    counts = np.sum(arrs, axis=0)
    n = len(arrs)
    need = -(-n // 2) if tie_foreground else n // 2 + 1
    return (counts >= need).astype(np.float64)


def diversity(samples) -> float:
    """Mean pairwise (1 - dice) among prediction samples; 0 for K=1."""
    k = len(samples)
    if k < 2:
        return 0.0
    total = 0.0
    pairs = 0
    for i in range(k):
        for j in range(i + 1, k):
            total += 1.0 - dice(samples[i], samples[j])
            pairs += 1
    return total / pairs


@dataclass
class SampleSet:
    samples: list
    fused: np.ndarray
    k: int


@dataclass
class EvalReport:
    mean_dice: float
    diversity: float
    k: int
    per_example: list = field(default_factory=list)  # (id, dice, diversity)
    fingerprint: str = ""


def predict_samples(model, example, k: int, rng: Rng) -> SampleSet:
    """K prior-sampled binary predictions for one example, majority-fused.
    The prompt is drawn from the annotator union before any latent draw."""
    point = sample_prompt_point(union_mask(example), rng)
    with no_grad():
        prompt = model.sam.encode_prompts([point])
        image = example.image.reshape(1, *example.image.shape)
        if model.uses_z:
            prior = model.prior_dist(image)
            eps = Tensor(rng.normal((k, prior.mu.shape[1])))
            z = prior.mu + prior.sigma() * eps
            rep = Tensor(np.broadcast_to(image.data,
                                         (k,) + image.shape[1:]).copy())
            logits = model.forward_logits(rep, prompt, z)
            probs = sigmoid(logits).data
            samples = [(probs[i] > 0.5).astype(np.float64) for i in range(k)]
        else:
            logits = model.forward_logits(image, prompt)
            pred = (sigmoid(logits).data[0] > 0.5).astype(np.float64)
            samples = [pred] * k
    return SampleSet(samples=samples, fused=majority_vote(samples), k=k)


def evaluate(model, dataset, k: int, seed: int) -> EvalReport:
    """Score majority-fused prior samples against majority-fused annotator
    ground truth; deterministic given (model, dataset, k, seed)."""
    if not dataset:
        raise DataError("evaluate: empty dataset")
    base = Rng(seed)
    rows = []
    for example in dataset:
        rng = base.spawn(example.id, "eval")
        ss = predict_samples(model, example, k, rng)
        gt = majority_vote(example.masks)
        rows.append((example.id, dice(ss.fused, gt), diversity(ss.samples)))
    fp = hashlib.sha256(json.dumps(
        {"echo": model.config_echo(), "k": k, "seed": seed},
        sort_keys=True).encode()).hexdigest()[:16]
    return EvalReport(
        mean_dice=float(np.mean([r[1] for r in rows])),
        diversity=float(np.mean([r[2] for r in rows])),
        k=k, per_example=rows, fingerprint=fp)


def count_parameters(store) -> dict:
    """Exact scalar counts, total and per top-level prefix."""
    by_prefix = {}
    total = trainable = 0
    for name, t in store.items():
        n = t.size
        total += n
        head = name.split(".", 1)[0]
        bucket = by_prefix.setdefault(head, {"total": 0, "trainable": 0})
        bucket["total"] += n
        if t.requires_grad:
            trainable += n
            bucket["trainable"] += n
    return {"total": total, "trainable": trainable,
            "frozen": total - trainable, "by_prefix": by_prefix}


def write_eval_csv(report: EvalReport, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("example_id,dice,diversity\n")
        for ex_id, d, dv in report.per_example:
            f.write(f"{ex_id},{d:.10g},{dv:.10g}\n")
