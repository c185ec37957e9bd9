"""Adam optimizer with optional stepwise learning-rate decay."""

import numpy as np

from ..errors import TrackingError
from . import kernels
from .params import ParamStore


class Adam:
    """Adam with bias correction and step-count LR decay.

    After every `decay_every` completed steps the learning rate is multiplied
    by `decay_factor`.  Moment buffers are kept per parameter name, so a
    parameter keeps its history across freeze/unfreeze toggles.
    """

    def __init__(self, store: ParamStore, lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 decay_every: int = 0, decay_factor: float = 1.0):
        self.store = store
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.decay_every = int(decay_every)
        self.decay_factor = float(decay_factor)
        self.step_count = 0
        self._m = {}
        self._v = {}

    def _moments(self, name: str, shape):
        if name not in self._m:
            self._m[name] = np.zeros(shape)
            self._v[name] = np.zeros(shape)
        return self._m[name], self._v[name]

    def step(self):
        """Apply one update to every trainable parameter, then decay the LR."""
        self.step_count += 1
        t = self.step_count
        for name, p in self.store.items():
            if not p.requires_grad:
                continue
            if p.grad is None:
                raise TrackingError(
                    f"step: trainable parameter {name!r} has no gradient")
            m, v = self._moments(name, p.shape)
            kernels.adam_update(
                p.data.reshape(-1), np.ascontiguousarray(p.grad).reshape(-1),
                m.reshape(-1), v.reshape(-1),
                self.lr, self.beta1, self.beta2, self.eps, t)
        if self.decay_every > 0 and t % self.decay_every == 0:
            self.lr *= self.decay_factor

    def zero_grad(self):
        self.store.zero_grad()

    def state(self) -> dict:
        """Scalar state plus per-parameter moments, for checkpointing."""
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "decay_every": self.decay_every,
            "decay_factor": self.decay_factor,
            "step_count": self.step_count,
            "m": {k: v.copy() for k, v in self._m.items()},
            "v": {k: v.copy() for k, v in self._v.items()},
        }

    def load_state(self, state: dict):
        self.lr = float(state["lr"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.eps = float(state["eps"])
        self.decay_every = int(state["decay_every"])
        self.decay_factor = float(state["decay_factor"])
        self.step_count = int(state["step_count"])
        self._m = {k: np.array(v, dtype=np.float64)
                   for k, v in state["m"].items()}
        self._v = {k: np.array(v, dtype=np.float64)
                   for k, v in state["v"].items()}
