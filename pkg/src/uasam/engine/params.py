"""Named parameter store with prefix freezing and checksums."""

import hashlib

import numpy as np

from ..errors import TrackingError
from .tensor import Tensor


class ParamStore:
    """Ordered mapping of dotted names to parameter tensors.

    A parameter is trainable iff its ``requires_grad`` flag is set; freezing
    a prefix clears the flag on every matching parameter so the tape skips it.
    """

    def __init__(self):
        self._params = {}

    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise TrackingError(f"parameter {name!r} already registered")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = trainable
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def trainable(self):
        return {n: t for n, t in self._params.items() if t.requires_grad}

    def _matches(self, name: str, prefix: str) -> bool:
        return name == prefix or name.startswith(prefix + ".")

    def freeze(self, prefix: str):
        """Mark every parameter under `prefix` as non-trainable."""
        hit = False
        for name, t in self._params.items():
            if self._matches(name, prefix):
                t.requires_grad = False
                hit = True
        if not hit:
            raise TrackingError(f"freeze: no parameters match prefix {prefix!r}")

    def unfreeze(self, prefix: str):
        hit = False
        for name, t in self._params.items():
            if self._matches(name, prefix):
                t.requires_grad = True
                hit = True
        if not hit:
            raise TrackingError(f"unfreeze: no parameters match prefix {prefix!r}")

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def checksum(self, prefix: str = "") -> str:
        """SHA-256 over the raw bytes of every parameter under `prefix`."""
        h = hashlib.sha256()
        for name, t in self._params.items():
            if prefix and not self._matches(name, prefix):
                continue
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()
