"""Synthetic multi-annotator segmentation data and manifest-based loading.

Each example is a wobbled ellipse core with an attached secondary lobe that
is always visible in the image but included in each annotator's mask only
with probability ambiguity_rate; annotator boundaries are additionally
displaced by smooth per-annotator fields of scale boundary_jitter pixels.
Disagreement is therefore structured (a shared lobe mode plus boundary
wobble), not i.i.d. pixel noise.

Grid file format: int32 LE rows, int32 LE cols, then rows*cols float64 LE
values row-major.  The manifest is JSON: {"examples": [{id, image_path,
mask_paths}]} with paths relative to the manifest location.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .backbone import PromptPoint, interp_matrix
from .engine import Rng, Tensor
from .errors import (
    ConfigError,
    DataError,
    MalformedHeaderError,
    MissingFileError,
    ShapeMismatchError,
)

_UP_CACHE = {}
_COARSE = 4  # control-grid resolution of all smooth noise fields


@dataclass
class SynthConfig:
    num_examples: int = 1000
    image_size: int = 32
    num_annotators: int = 4
    boundary_jitter: float = 1.5
    ambiguity_rate: float = 0.5
    noise: float = 0.05
    seed: int = 0

    def validate(self):
        if self.num_examples < 1 or self.num_annotators < 1:
            raise ConfigError("synth: need at least one example and one annotator")
        if self.boundary_jitter < 0:
            raise ConfigError("synth: boundary_jitter must be >= 0")
        if not 0.0 <= self.ambiguity_rate <= 1.0:
            raise ConfigError("synth: ambiguity_rate must be in [0,1]")


@dataclass
class AnnotatedExample:
    image: Tensor  # 1xSxS in [0,1]
    masks: list  # M binary SxS Tensors
    id: str


def _smooth_field(rng, size: int) -> np.ndarray:
    """Bilinear upsample of a coarse standard-normal grid (RMS ~= 1)."""
    key = (size, _COARSE)
    if key not in _UP_CACHE:
        _UP_CACHE[key] = interp_matrix(size, _COARSE)
    u = _UP_CACHE[key]
    return u @ rng.normal((_COARSE, _COARSE)) @ u.T


def _ellipse_field(xx, yy, cx, cy, ra, rb, theta) -> np.ndarray:
    """(u/a)^2 + (v/b)^2 in the rotated frame; 1.0 on the ellipse boundary."""
    ct, st = math.cos(theta), math.sin(theta)
    u = (xx - cx) * ct + (yy - cy) * st
    v = -(xx - cx) * st + (yy - cy) * ct
    return (u / ra) ** 2 + (v / rb) ** 2


def _keep_core_component(mask: np.ndarray, ci: int, cj: int) -> np.ndarray:
    """Drop pixels not connected to the core; empty input stays empty."""
    lab, n = ndimage.label(mask)
    if n <= 1:
        return mask
    keep = lab[ci, cj]
    if keep == 0:
        sizes = ndimage.sum_labels(mask, lab, index=range(1, n + 1))
        keep = 1 + int(np.argmax(sizes))
    return (lab == keep).astype(np.float64)


def _generate_one(rng: Rng, cfg: SynthConfig, idx: int) -> AnnotatedExample:
    s = cfg.image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)

    cx, cy = s / 2 + (rng.uniform(2) * 2 - 1) * s / 10
    ra = s * (0.18 + 0.10 * rng.uniform())
    rb = s * (0.18 + 0.10 * rng.uniform())
    theta = rng.uniform() * 2 * math.pi
    wobble = 0.18 * _smooth_field(rng, s)
    t_core = _ellipse_field(xx, yy, cx, cy, ra, rb, theta) - 1.0 - wobble

    # attached lobe, centered just outside the core boundary
    phi = rng.uniform() * 2 * math.pi
    bu, bv = ra * math.cos(phi), rb * math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    lx = cx + 1.05 * (bu * ct - bv * st)
    ly = cy + 1.05 * (bu * st + bv * ct)
    lra = ra * (0.50 + 0.15 * rng.uniform())
    lrb = rb * (0.50 + 0.15 * rng.uniform())
    ltheta = rng.uniform() * 2 * math.pi
    t_lobe = _ellipse_field(xx, yy, lx, ly, lra, lrb, ltheta) - 1.0 - wobble
    t_union = np.minimum(t_core, t_lobe)

    # image shows both structures regardless of annotation
    core_soft = np.clip(0.5 - t_core / 0.35, 0.0, 1.0)
    lobe_soft = np.clip(0.5 - t_lobe / 0.35, 0.0, 1.0)
    image = 0.20 + 0.55 * np.maximum(core_soft, 0.85 * lobe_soft)
    image = image + 0.08 * _smooth_field(rng, s)
    image = image + cfg.noise * rng.normal((s, s))
    image = np.clip(image, 0.0, 1.0)

    ci = min(max(int(round(cy)), 0), s - 1)
    cj = min(max(int(round(cx)), 0), s - 1)
    masks = []
    for _ in range(cfg.num_annotators):
        include_lobe = rng.uniform() < cfg.ambiguity_rate
        # unit fields are always drawn so streams align across jitter values
        dx = _smooth_field(rng, s)
        dy = _smooth_field(rng, s)
        t = t_union if include_lobe else t_core
        if cfg.boundary_jitter > 0:
            coords = [yy + cfg.boundary_jitter * dy, xx + cfg.boundary_jitter * dx]
            t = ndimage.map_coordinates(t, coords, order=1, mode="nearest")
        mask = (t <= 0.0).astype(np.float64)
        mask = _keep_core_component(mask, ci, cj)
        if not mask.any():
            mask = (t_core <= 0.0).astype(np.float64)
        masks.append(Tensor(mask))

    return AnnotatedExample(image=Tensor(image[None]), masks=masks,
                            id=f"ex{idx:05d}")


def generate(cfg: SynthConfig):
    """Deterministic dataset from (seed, config); replayable per example."""
    cfg.validate()
    base = Rng(cfg.seed)
    return [_generate_one(base.spawn(i, "gen"), cfg, i)
            for i in range(cfg.num_examples)]


def split(dataset, ratio: float, seed: int = 0):
    """Seeded shuffle then disjoint, exhaustive (train, test) split."""
    if not 0.0 < ratio < 1.0:
        raise DataError(f"split: ratio must be in (0,1), got {ratio}")
    n = len(dataset)
    n_train = int(round(n * ratio))
    if n_train == 0 or n_train == n:
        raise DataError(f"split: ratio {ratio} leaves an empty side for n={n}")
    order = Rng(seed).spawn("split").permutation(n)
    train = [dataset[i] for i in order[:n_train]]
    test = [dataset[i] for i in order[n_train:]]
    return train, test


# -- grid / manifest IO ------------------------------------------------------


def write_grid(path, arr: np.ndarray):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"write_grid: expected a 2-d array, got {arr.shape}")
    with open(path, "wb") as f:
        f.write(np.array(arr.shape, dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_grid(path) -> np.ndarray:
    if not os.path.isfile(path):
        raise MissingFileError(f"grid file not found: {path}")
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise MalformedHeaderError(f"{path}: header shorter than 8 bytes")
    rows, cols = (int(v) for v in np.frombuffer(raw[:8], dtype="<i4"))
    if rows <= 0 or cols <= 0:
        raise MalformedHeaderError(f"{path}: non-positive dims ({rows}, {cols})")
    if len(raw) != 8 + rows * cols * 8:
        raise MalformedHeaderError(
            f"{path}: payload size {len(raw) - 8} does not match "
            f"{rows}x{cols} float64 grid")
    return np.frombuffer(raw[8:], dtype="<f8").reshape(rows, cols).copy()


def save_dataset(examples, out_dir) -> str:
    """Write grids plus manifest.json under out_dir; returns manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for ex in examples:
        image_name = f"{ex.id}_image.grid"
        write_grid(os.path.join(out_dir, image_name), ex.image.data[0])
        mask_names = []
        for m, mask in enumerate(ex.masks):
            name = f"{ex.id}_mask{m}.grid"
            write_grid(os.path.join(out_dir, name), mask.data)
            mask_names.append(name)
        records.append({"id": ex.id, "image_path": image_name,
                        "mask_paths": mask_names})
    manifest = os.path.join(out_dir, "manifest.json")
    with open(manifest, "w", encoding="utf-8") as f:
        json.dump({"examples": records}, f, indent=1, sort_keys=True)
        f.write("\n")
    return manifest


def load_manifest(path):
    """Read a manifest back into AnnotatedExamples; masks binarized at 0.5."""
    if not os.path.isfile(path):
        raise MissingFileError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: manifest is not valid JSON ({e})") from None
    base = os.path.dirname(os.path.abspath(path))
    examples = []
    for rec in doc.get("examples", []):
        ex_id = rec["id"]
        image = read_grid(os.path.join(base, rec["image_path"]))
        masks = []
        for rel in rec["mask_paths"]:
            m = read_grid(os.path.join(base, rel))
            if m.shape != image.shape:
                raise ShapeMismatchError(
                    f"example {ex_id}: mask shape {m.shape} does not match "
                    f"image shape {image.shape}")
            masks.append(Tensor((m >= 0.5).astype(np.float64)))
        examples.append(AnnotatedExample(image=Tensor(image[None]),
                                         masks=masks, id=ex_id))
    return examples


# -- per-step sampling -------------------------------------------------------


def union_mask(example: AnnotatedExample) -> np.ndarray:
    out = example.masks[0].data
    for m in example.masks[1:]:
        out = np.maximum(out, m.data)
    return out


def sample_annotator(example: AnnotatedExample, rng: Rng) -> Tensor:
    """Uniform choice among the example's annotator masks."""
    if not example.masks:
        raise DataError(f"example {example.id}: no annotator masks")
    idx = int(rng.integers(1, len(example.masks))[0])
    return example.masks[idx]


def sample_prompt_point(mask, rng: Rng) -> PromptPoint:
    """Uniform foreground pixel of `mask` (pass the annotator union so the
    prompt never reveals the chosen annotator); center fallback if empty."""
    arr = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    fg = np.argwhere(arr > 0.5)
    if len(fg) == 0:
        s = arr.shape[0]
        return PromptPoint(row=s // 2, col=arr.shape[1] // 2, fallback=True)
    row, col = fg[int(rng.integers(1, len(fg))[0])]
    return PromptPoint(row=int(row), col=int(col))
