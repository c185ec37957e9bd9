"""Benchmark the compiled kernel core against the numpy reference backend.

Times each hot kernel on training-shaped inputs, checks both backends agree
to tight tolerance, and times a full model train step under each backend.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--quick]
"""

import argparse
import os
import time

import numpy as np

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

from uasam.engine.kernels import reference  # noqa: E402

try:
    from uasam.engine.kernels import _ckernels as compiled
except ImportError:
    compiled = None


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeats: int):
    rng = np.random.default_rng(0)
    # shapes mirror a batch-16 train step at image size 32, embed dim 32
    x2 = np.ascontiguousarray(rng.standard_normal((1024, 64)))
    g2 = np.ascontiguousarray(rng.standard_normal(x2.shape))
    x1 = np.ascontiguousarray(x2.ravel())
    g1 = np.ascontiguousarray(g2.ravel())
    att = np.ascontiguousarray(rng.standard_normal((64 * 4 * 64, 64)))
    gat = np.ascontiguousarray(rng.standard_normal(att.shape))
    gamma = np.ascontiguousarray(rng.standard_normal(64))
    beta = np.ascontiguousarray(rng.standard_normal(64))

    cases = [
        ("gelu_fwd", lambda m: m.gelu_fwd(x1)),
        ("gelu_bwd", lambda m: m.gelu_bwd(x1, g1)),
        ("softmax_fwd", lambda m: m.softmax_fwd(att)),
        ("softmax_bwd", lambda m: (lambda s: m.softmax_bwd(s, gat))(
            m.softmax_fwd(att))),
        ("layernorm_fwd", lambda m: m.layernorm_fwd(x2, gamma, beta, 1e-5)),
        ("layernorm_bwd", lambda m: (lambda y, mu, rstd: m.layernorm_bwd(
            x2, mu, rstd, gamma, g2))(*m.layernorm_fwd(x2, gamma, beta, 1e-5))),
    ]

    print(f"{'kernel':<16} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for name, call in cases:
        ref_out = call(reference)
        t_py = _time(lambda: call(reference), repeats)
        if compiled is None:
            print(f"{name:<16} {t_py * 1e3:>9.2f}ms {'n/a':>10}")
            continue
        c_out = call(compiled)
        ref_flat = ref_out if isinstance(ref_out, tuple) else (ref_out,)
        c_flat = c_out if isinstance(c_out, tuple) else (c_out,)
        for a, b in zip(ref_flat, c_flat):
            err = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
            if err > 1e-10:
                raise AssertionError(f"{name}: backends disagree ({err:.2e})")
        t_c = _time(lambda: call(compiled), repeats)
        print(f"{name:<16} {t_py * 1e3:>9.2f}ms {t_c * 1e3:>8.2f}ms "
              f"{t_py / t_c:>7.1f}x")


def bench_train_step(repeats: int):
    """Full forward+backward+step wall time under each backend; the engine
    looks kernels up through the package namespace, so swapping its
    attributes switches the backend in place."""
    import uasam.engine.kernels as kern
    from uasam.adapter import AdapterConfig
    from uasam.backbone import BackboneConfig, PromptPoint
    from uasam.engine import Adam, Tensor, backward, reset_tape
    from uasam.latent import LatentConfig
    from uasam.model import UaSamModel
    from uasam.training import LossConfig, elbo_loss

    results = {}
    for label, impl in (("python", reference), ("compiled", compiled)):
        if impl is None:
            continue
        for name in ("gelu_fwd", "gelu_bwd", "softmax_fwd", "softmax_bwd",
                     "layernorm_fwd", "layernorm_bwd", "adam_update"):
            setattr(kern, name, getattr(impl, name))

        model = UaSamModel(BackboneConfig(), AdapterConfig(), LatentConfig(),
                           seed=0)
        opt = Adam(model.store, lr=1e-4)
        rng = np.random.default_rng(0)
        image = Tensor(rng.random((16, 1, 32, 32)))
        mask = Tensor((rng.random((16, 32, 32)) > 0.5).astype(np.float64))
        points = [PromptPoint(16, 16)] * 16

        def step():
            reset_tape()
            model.store.zero_grad()
            prompt = model.sam.encode_prompts(points)
            loss, _ = elbo_loss(image, mask, prompt, model, LossConfig(),
                                rng=None,
                                eps=Tensor(np.zeros((16, LatentConfig().dim))))
            backward(loss)
            opt.step()

        step()  # warm up
        results[label] = _time(step, repeats)

    for label, t in results.items():
        print(f"train_step[{label}] {t * 1e3:.1f}ms")
    if len(results) == 2:
        print(f"train_step speedup {results['python'] / results['compiled']:.2f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--quick", action="store_true",
                    help="kernel microbenchmarks only")
    args = ap.parse_args()
    if compiled is None:
        print("compiled backend unavailable; timing reference only")
    bench_kernels(args.repeats)
    if not args.quick:
        bench_train_step(max(2, args.repeats // 2))


if __name__ == "__main__":
    main()
