"""Reproducible random-access noise field xi_t^x.

Uniforms are produced by a counter-based pseudorandom function: a chain of
SplitMix64 finalizers keyed on (seed, coupling domain, t, x, component).
There is no generator state, so ``noise.at(t, x)`` can be queried in any
order, from any process, and always yields the same value.  The scalar path
uses Python integers and the array path uses ``numpy.uint64``; both follow
the same arithmetic modulo 2**64 and agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import UsageError

MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)

# SplitMix64 finalizer constants and per-coordinate multipliers
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_GOLDEN = 0x9E3779B97F4A7C15
_KT = 0xD1B54A32D192ED03
_KX = 0xABC98388FB8FAC03
_KC = 0x8CB92BA72F3D8DD7


class Coupling(str, Enum):
    TOTALLY_INDEPENDENT = "totally_independent"
    COMMON = "common"
    MAXIMAL_SHIFT = "maximal_shift"

    @classmethod
    def parse(cls, value: "Coupling | str") -> "Coupling":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"independent": "totally_independent", "maximal": "maximal_shift"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise UsageError(f"unknown coupling mode {value!r}") from None


_DOMAIN = {
    Coupling.TOTALLY_INDEPENDENT: 0x1,
    Coupling.COMMON: 0x2,
    Coupling.MAXIMAL_SHIFT: 0x2,  # same uniforms as common; only the wiring differs
}


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def _key(seed: int, domain: int) -> int:
    return _mix(((seed & MASK64) + _GOLDEN * (domain + 1)) & MASK64)


def hash_uniform(key: int, t: int, x: int, k: int) -> float:
    """Uniform in [0, 1) for the 64-bit key and the coordinates (t, x, k)."""
    z = _mix((key + (int(t) & MASK64) * _KT) & MASK64)
    z = _mix((z + (int(x) & MASK64) * _KX) & MASK64)
    z = _mix((z + (int(k) & MASK64) * _KC) & MASK64)
    return (z >> 11) * _INV_2_53


def hash_uniform_array(key: int, t, x, k) -> np.ndarray:
    """Vectorized ``hash_uniform``; t, x, k broadcast against each other."""
    t = np.asarray(t, dtype=np.int64).astype(np.uint64)
    x = np.asarray(x, dtype=np.int64).astype(np.uint64)
    k = np.asarray(k, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        z = _mix_array(np.uint64(key) + t * np.uint64(_KT))
        z = _mix_array(z + x * np.uint64(_KX))
        z = _mix_array(z + k * np.uint64(_KC))
    return (z >> np.uint64(11)).astype(np.float64) * _INV_2_53


def derive_seed(seed: int, *labels: int) -> int:
    """Child seed for replication ``labels``; used for seed-per-replication schemes."""
    z = _key(seed, 0x5EED)
    for label in labels:
        z = _mix((z + (label & MASK64) * _KT) & MASK64)
    return z


@dataclass(frozen=True)
class NoiseField:
    """Deterministic map (t, x) -> uniform vector of length ``width``.

    In ``common`` and ``maximal_shift`` mode the state argument is ignored,
    so all states share the uniforms of their time column.
    """

    seed: int
    mode: Coupling = Coupling.TOTALLY_INDEPENDENT
    width: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Coupling.parse(self.mode))
        if self.width < 1:
            raise UsageError("noise width must be at least 1")
        object.__setattr__(self, "_k", _key(int(self.seed), _DOMAIN[self.mode]))

    @property
    def shares_columns(self) -> bool:
        return self.mode is not Coupling.TOTALLY_INDEPENDENT

    def _x(self, x: int) -> int:
        return 0 if self.shares_columns else x

    def at(self, t: int, x: int = 0) -> tuple[float, ...]:
        xx = self._x(x)
        return tuple(hash_uniform(self._k, t, xx, c) for c in range(self.width))

    def component(self, t: int, x: int, c: int) -> float:
        return hash_uniform(self._k, t, self._x(x), c)

    def block(self, t, x=0, width: "int | None" = None) -> np.ndarray:
        """Uniforms for broadcast arrays t and x, shape ``broadcast + (width,)``."""
        t = np.asarray(t, dtype=np.int64)
        x = np.zeros_like(t) if self.shares_columns else np.asarray(x, dtype=np.int64)
        t, x = np.broadcast_arrays(t, x)
        c = np.arange(self.width if width is None else width, dtype=np.int64)
        return hash_uniform_array(self._k, t[..., None], x[..., None], c)

    def with_mode(self, mode) -> "NoiseField":
        return NoiseField(self.seed, mode, self.width)

    def with_width(self, width: int) -> "NoiseField":
        return NoiseField(self.seed, self.mode, width)

    def child(self, *labels: int) -> "NoiseField":
        """Independent field for a replication or attempt index."""
        return NoiseField(derive_seed(self.seed, *labels), self.mode, self.width)
