"""Gradient verification against central finite differences."""

from dataclasses import dataclass, field

from ..errors import TrackingError
from .tensor import backward, no_grad


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_param: dict = field(default_factory=dict)
    checked: int = 0
    skipped_frozen: list = field(default_factory=list)

    def __float__(self):
        return self.max_rel_error


def _eval(loss_fn) -> float:
    with no_grad():
        out = loss_fn()
    return out.item()


def grad_check(loss_fn, params, eps: float = 1e-5, sample: int = 0,
               rng=None) -> GradCheckResult:
    """Compare analytic gradients of `loss_fn()` with finite differences.

    `loss_fn` must be a deterministic closure over the tensors in `params`
    (a ParamStore or name->Tensor mapping) returning a scalar tensor.  When
    `sample` > 0, at most that many entries per parameter are probed, chosen
    by `rng.integers`.  Frozen parameters are skipped and reported.
    """
    items = list(params.items())

    # forward determinism probe: two evaluations must agree bit for bit
    a, b = _eval(loss_fn), _eval(loss_fn)
    if a != b:
        raise TrackingError(
            f"grad_check: forward is not deterministic ({a!r} vs {b!r})")

    for _, p in items:
        p.grad = None
    loss = loss_fn()
    backward(loss)

    result = GradCheckResult(max_rel_error=0.0)
    for name, p in items:
        if not p.requires_grad:
            result.skipped_frozen.append(name)
            continue
        if p.grad is None:
            raise TrackingError(f"grad_check: no gradient reached {name!r}")
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        n = flat.size
        if sample and sample < n:
            if rng is None:
                raise TrackingError("grad_check: sampling requires an rng")
            idxs = sorted({int(rng.integers(n)) for _ in range(sample)})
        else:
            idxs = range(n)
        worst = 0.0
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            hi = _eval(loss_fn)
            flat[i] = orig - eps
            lo = _eval(loss_fn)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            analytic = float(gflat[i])
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
            result.checked += 1
        result.per_param[name] = worst
        result.max_rel_error = max(result.max_rel_error, worst)
    return result
