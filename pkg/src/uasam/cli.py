"""Command-line entry point.

Subcommands: generate, train, eval, ablate, sweep, inspect.
Exit codes: 0 success, 1 usage or configuration error, 2 data or checkpoint
error, 3 numerical failure during training.
"""

import argparse
import math
import os
import sys

from .config import (apply_overrides, load_config, validate_config,
                     write_echo)
from .data import generate, load_manifest, save_dataset, split
from .engine.checkpoint import load_checkpoint, read_header
from .errors import (CheckpointError, ConfigError, DataError, NonFiniteError)
from .experiments import (SWEEP_DIMS, latent_dim_sweep, run_ablation_grid,
                          train_stage1, train_stage2)
from .metrics import evaluate, write_eval_csv
from .model import model_from_echo
from .training import STAGES


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via ConfigError (exit code 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(p):
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int, help="run seed (overrides UASAM_SEED)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, e.g. train.lr=3e-4")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="uasam", description=__doc__)
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[], help="write a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("train", help="run one training stage")
    _add_common(p)
    p.add_argument("--manifest", required=True, help="dataset manifest.json")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--stage", required=True, choices=STAGES)
    p.add_argument("--from", dest="from_ckpt",
                   help="checkpoint to start from (required for finetune)")
    p.add_argument("--mode", help="adapter mode override")
    p.add_argument("--k-samples", type=int, dest="k_samples",
                   help="validation samples per example")

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory for eval.csv")
    p.add_argument("--from", dest="from_ckpt", required=True)
    p.add_argument("--k-samples", type=int, dest="k_samples")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")

    p = sub.add_parser("ablate", help="adapter-mode ablation grid")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="latent-width sweep")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dims", default=",".join(str(d) for d in SWEEP_DIMS),
                   help="comma-separated latent widths")

    p = sub.add_parser("inspect", help="print a checkpoint summary")
    p.add_argument("--from", dest="from_ckpt", required=True)
    return root


def _load_cfg(args):
    cfg = load_config(getattr(args, "config", None))
    apply_overrides(cfg, getattr(args, "set", []))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    elif os.environ.get("UASAM_SEED"):
        raw = os.environ["UASAM_SEED"]
        try:
            cfg.seed = int(raw)
        except ValueError:
            raise ConfigError(f"UASAM_SEED must be an integer, got {raw!r}")
    if getattr(args, "k_samples", None) is not None:
        if args.k_samples < 1:
            raise ConfigError("--k-samples must be >= 1")
        cfg.train.k_samples = args.k_samples
    if getattr(args, "mode", None) is not None:
        cfg.adapter.mode = args.mode
    validate_config(cfg)
    return cfg


def _splits(cfg, manifest_path):
    """(train, val, test) per the config's split settings."""
    examples = load_manifest(manifest_path)
    train_all, test = split(examples, cfg.data.split_ratio, cfg.data.split_seed)
    n_val = max(1, round(len(train_all) * cfg.data.val_fraction))
    if n_val >= len(train_all):
        raise DataError("dataset too small to carve a validation slice")
    return train_all[:-n_val], train_all[-n_val:], test


def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    if args.seed is not None or os.environ.get("UASAM_SEED"):
        cfg.synth.seed = cfg.seed
    dataset = generate(cfg.synth)
    manifest = save_dataset(dataset, args.out)
    write_echo(cfg, args.out)
    print(f"wrote {len(dataset)} examples to {manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    train, val, test = _splits(cfg, args.manifest)
    write_echo(cfg, args.out)
    if args.stage == "pretrain":
        state = train_stage1(train, val, cfg, args.out)
    else:
        if not args.from_ckpt:
            raise ConfigError("finetune requires --from <stage-1 checkpoint>")
        _, state = train_stage2(train, val, cfg, args.from_ckpt, args.out)
    print(f"stage={args.stage} epochs={state.epoch} "
          f"best_val_dice={state.best_val_dice:.10g} "
          f"stopped_early={state.stopped_early}")
    print(f"best={state.best_checkpoint}")
    return 0


def cmd_eval(args) -> int:
    header = read_header(args.from_ckpt)
    echo = header.get("config") or {}
    if "backbone" not in echo:
        raise CheckpointError(
            f"{args.from_ckpt}: checkpoint lacks a model config echo")
    model = model_from_echo(echo)
    load_checkpoint(args.from_ckpt, model.store)

    cfg = _load_cfg(args)
    for key, value in (echo.get("data") or {}).items():
        if hasattr(cfg.data, key):
            setattr(cfg.data, key, value)
    if args.seed is None and not os.environ.get("UASAM_SEED") \
            and "seed" in echo:
        cfg.seed = int(echo["seed"])
    k = args.k_samples or int(
        (echo.get("train") or {}).get("k_samples", cfg.train.k_samples))

    train, val, test = _splits(cfg, args.manifest)
    subset = {"train": train + val, "test": test,
              "all": train + val + test}[args.split]
    report = evaluate(model, subset, k, cfg.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "eval.csv")
    write_eval_csv(report, path)
    print(f"split={args.split} n={len(subset)} k={k} "
          f"mean_dice={report.mean_dice:.10g} "
          f"diversity={report.diversity:.10g}")
    print(f"csv={path}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    train, val, test = _splits(cfg, args.manifest)
    write_echo(cfg, args.out)
    rows = run_ablation_grid(train, val, test, cfg, args.out)
    for mode, dice, div in rows:
        print(f"mode={mode} dice={dice:.10g} diversity={div:.10g}")
    print(f"csv={os.path.join(args.out, 'ablation.csv')}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    try:
        dims = tuple(int(part) for part in args.dims.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"--dims must be comma-separated integers, "
                          f"got {args.dims!r}")
    if not dims:
        raise ConfigError("--dims must name at least one latent width")
    train, val, test = _splits(cfg, args.manifest)
    write_echo(cfg, args.out)
    rows = latent_dim_sweep(train, val, test, cfg, args.out, dims)
    for dim, dice in rows:
        print(f"latent_dim={dim} dice={dice:.10g}")
    print(f"csv={os.path.join(args.out, 'sweep.csv')}")
    return 0


def cmd_inspect(args) -> int:
    header = read_header(args.from_ckpt)
    params = header.get("params", [])
    total = sum(math.prod(p["shape"]) for p in params)
    trainable = sum(math.prod(p["shape"]) for p in params if p["trainable"])
    echo = header.get("config") or {}
    print(f"checkpoint={args.from_ckpt}")
    print(f"params={len(params)} total={total} trainable={trainable}")
    print(f"optimizer={'yes' if 'optimizer' in header else 'no'}")
    if echo:
        adapter = echo.get("adapter")
        mode = adapter.get("mode") if isinstance(adapter, dict) else None
        print(f"stage={echo.get('stage', '?')} seed={echo.get('seed', '?')} "
              f"mode={mode or 'none'}")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DataError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NonFiniteError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
