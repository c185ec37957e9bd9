"""Seeded xorshift128+ random stream.

All stochastic behaviour in the package draws from this generator so that a
run is replayable from its seed alone.  The generator keeps 8 parallel
xorshift128+ lanes and interleaves their outputs, which lets bulk generation
run as vectorised uint64 numpy ops while staying a fixed, documented stream.
Child streams derived with ``spawn`` are independent of draw order, so data
generation can be keyed by (seed, example index).
"""

import numpy as np

_LANES = 256
_BLOCK = 16  # minimum refill granularity, in steps (values = steps * lanes)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_U64 = np.uint64
_INV_2_53 = float(2.0**-53)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finaliser; used for seeding and stream derivation only."""
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        return z ^ (z >> _U64(31))


def _mix_key(state: int, key) -> int:
    """Fold one spawn key (int or str) into a 64-bit state."""
    if isinstance(key, str):
        h = np.uint64(state)
        for b in key.encode("utf-8"):
            h = _splitmix64(h ^ _U64(b))
        return int(h)
    return int(_splitmix64(_U64((state ^ (key & 0xFFFFFFFFFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF)))


class Rng:
    """Deterministic random stream with numpy-vectorised bulk generation."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        s = _U64(self.seed & 0xFFFFFFFFFFFFFFFF)
        with np.errstate(over="ignore"):
            states = s + _GOLDEN * np.arange(1, 2 * _LANES + 1, dtype=np.uint64)
        raw = _splitmix64(states)
        # xorshift128+ requires a nonzero state per lane
        raw[raw == 0] = _GOLDEN
        self._s0 = raw[:_LANES].copy()
        self._s1 = raw[_LANES:].copy()
        self._buf = np.empty(0, dtype=np.uint64)
        self._pos = 0

    def spawn(self, *keys) -> "Rng":
        """Derive an independent child stream from (seed, *keys)."""
        h = _mix_key(self.seed, 0x5AFE)
        for k in keys:
            h = _mix_key(h, k)
        return Rng(h)

    # -- raw stream ------------------------------------------------------

    def _refill(self, at_least: int):
        steps = max(_BLOCK, -(-at_least // _LANES))
        out = np.empty((steps, _LANES), dtype=np.uint64)
        s0, s1 = self._s0, self._s1
        with np.errstate(over="ignore"):
            for i in range(steps):
                x = s0.copy()
                y = s1
                x ^= x << _U64(23)
                x ^= x >> _U64(17)
                x = x ^ y ^ (y >> _U64(26))
                s0, s1 = y, x
                out[i] = x + y
        self._s0, self._s1 = s0.copy(), s1.copy()
        leftover = self._buf[self._pos:]
        self._buf = np.concatenate([leftover, out.reshape(-1)])
        self._pos = 0

    def u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit values."""
        if len(self._buf) - self._pos < n:
            self._refill(n - (len(self._buf) - self._pos))
        out = self._buf[self._pos:self._pos + n].copy()
        self._pos += n
        return out

    # -- distributions ----------------------------------------------------

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform float64 in [0, 1) with 53-bit resolution."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        vals = (self.u64(n) >> _U64(11)).astype(np.float64) * _INV_2_53
        return vals.reshape(shape) if shape else vals[0]

    def normal(self, shape=()) -> np.ndarray:
        """Standard normal draws via Box-Muller (pairs; odd tails discarded)."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        half = -(-n // 2)
        u1 = 1.0 - self.uniform(half)  # (0, 1]: keeps log finite
        u2 = self.uniform(half)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        vals = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return vals.reshape(shape) if shape else vals[0]

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n independent ints uniform in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return np.minimum((self.uniform(n) * bound).astype(np.int64), bound - 1)

    def choice(self, seq):
        return seq[int(self.integers(1, len(seq))[0])]

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        order = np.arange(n)
        if n > 1:
            js = self.uniform(n - 1)
            for i in range(n - 1, 0, -1):
                j = int(js[n - 1 - i] * (i + 1))
                order[i], order[j] = order[j], order[i]
        return order
