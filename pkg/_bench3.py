import time

import numpy as np

from uasam.adapter import AdapterConfig
from uasam.backbone import BackboneConfig
from uasam.data import SynthConfig, generate, split
from uasam.engine.checkpoint import load_checkpoint
from uasam.latent import LatentConfig
from uasam.metrics import evaluate
from uasam.model import UaSamModel
from uasam.training import LossConfig, TrainConfig, run_stage

T1 = dict(batch_size=16, epochs=10, lr=3e-4, decay_every=20, patience=5,
          k_samples=4)
T2 = dict(batch_size=16, epochs=40, lr=2e-3, decay_every=20, patience=10,
          k_samples=4)
BETA = 2.5e-4

t0 = time.monotonic()
data = generate(SynthConfig(num_examples=1250, seed=42))
train_pool, test = split(data, 0.8, seed=0)
val, train = train_pool[-100:], train_pool[:-100]
lcfg = LossConfig(beta=BETA)
reports = {m: [] for m in ("cmsm", "wms", "plain")}
for seed in (42, 43, 44):
    m1 = UaSamModel(BackboneConfig(), None, None, seed=seed)
    st1 = run_stage("pretrain", m1, train, val, lcfg, TrainConfig(**T1),
                    seed, f"/tmp/bench3/s{seed}-1")
    print(f"[{time.monotonic()-t0:6.0f}s] seed {seed} stage1 "
          f"best={st1.best_val_dice:.4f}", flush=True)
    for mode in ("cmsm", "wms", "plain"):
        m2 = UaSamModel(BackboneConfig(), AdapterConfig(mode=mode),
                        LatentConfig(), seed=seed)
        load_checkpoint(st1.best_checkpoint, m2.store)
        st2 = run_stage("finetune", m2, train, val, lcfg, TrainConfig(**T2),
                        seed, f"/tmp/bench3/s{seed}-{mode}")
        rep = evaluate(m2, test, 4, seed)
        reports[mode].append(rep)
        print(f"[{time.monotonic()-t0:6.0f}s] seed {seed} {mode:6s} "
              f"val={st2.best_val_dice:.4f} ep={st2.epoch} "
              f"early={st2.stopped_early} test={rep.mean_dice:.4f} "
              f"div={rep.diversity:.4f}", flush=True)

wall = time.monotonic() - t0
means = {m: float(np.mean([r.mean_dice for r in reps]))
         for m, reps in reports.items()}
divs = {m: float(np.mean([r.diversity for r in reps]))
        for m, reps in reports.items()}
print(f"\nwall {wall:.0f}s")
print("means:", {m: f"{v:.4f}" for m, v in means.items()})
print("divs:", {m: f"{v:.4f}" for m, v in divs.items()})
print(f"c6 cmsm>=plain: {means['cmsm'] >= means['plain']}")
print(f"c7 cmsm>=wms:   {means['cmsm'] >= means['wms']}")
print(f"c8 div: {divs['cmsm'] > 0.02 and divs['plain'] < 0.01}")
